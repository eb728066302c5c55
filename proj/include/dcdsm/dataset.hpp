#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dcdsm/rng.hpp"
#include "dcdsm/tensor.hpp"

namespace dcdsm {

enum class SourceKind { StripesBlobs, RainToy, SnowToy };
const char* source_kind_name(SourceKind k);
/// Accepts "stripes-blobs", "rain-toy", "snow-toy".
SourceKind parse_source_kind(const std::string& name);

enum class Split : std::uint64_t { Train = 0, Test = 1, Validation = 2 };
const char* split_name(Split s);

struct DatasetSpec {
  SourceKind kind = SourceKind::StripesBlobs;
  std::size_t train_count = 500;
  std::size_t test_count = 50;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  /// Linear mixing coefficient range.
  double a_min = 0.3;
  double a_max = 0.7;
  /// Overlay opacity of the mask kinds.
  double tau = 0.5;

  /// Throws InvalidArgument on any out-of-range field.
  void validate() const;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

enum class MixKind { Linear, Mask };

struct MixDescriptor {
  MixKind kind = MixKind::Linear;
  /// a for linear mixing, tau for mask mixing.
  double coefficient = 0.5;
  /// Binary [H,W] mask (mask kind only).
  Tensor mask;
};

struct MixtureSample {
  Tensor source1, source2, mixture;
  MixDescriptor mix;
};

/// Two sources of the spec's kind. For stripes-blobs these are oriented
/// sinusoid stripes and Gaussian blobs. For the mask kinds source1 is a smooth
/// background and source2 the overlay layer (streaks or dots, -1 elsewhere).
std::pair<Tensor, Tensor> synth_sources(RngStream& rng, const DatasetSpec& spec);

/// a s1 + (1 - a) s2.
Tensor mix_linear(const Tensor& s1, const Tensor& s2, double a);
/// (1 - tau m) background + tau m overlay with a binary [H,W] or full-shape mask.
Tensor mix_mask(const Tensor& background, const Tensor& overlay, const Tensor& mask, double tau);

/// Sample `index` of a split; a pure function of (spec, split, index).
MixtureSample make_sample(const DatasetSpec& spec, Split split, std::size_t index);
std::vector<MixtureSample> make_split(const DatasetSpec& spec, Split split, std::size_t count);

/// Binary PPM (P6, maxval 255). Values in [-1,1] map to round(127.5 (v + 1)).
std::string encode_ppm(const Tensor& image);
/// Throws ParseError with the byte offset of the first malformed field.
Tensor decode_ppm(const std::string& bytes);
void save_image(const std::filesystem::path& path, const Tensor& image);
Tensor load_image(const std::filesystem::path& path);

/// One manifest line per sample, whitespace separated, no header:
///   id split source1_path source2_path mixture_path kind coefficient
struct ManifestEntry {
  std::string id;
  std::string split;
  std::string source1, source2, mixture;
  std::string kind;
  double coefficient = 0.0;
};

std::vector<ManifestEntry> write_corpus(const DatasetSpec& spec, const std::filesystem::path& dir);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace dcdsm
