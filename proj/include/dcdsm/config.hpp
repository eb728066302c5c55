#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcdsm/dataset.hpp"

namespace dcdsm {

/// Flat `key = value` text. Blank lines and '#' comments are ignored.
/// Throws ParseError (byte offset of the offending line) on malformed lines
/// or repeated keys.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

enum class WfenInput { Forward, Reverse };

struct TrainConfig {
  DatasetSpec dataset;
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::size_t base_width = 16;
  std::size_t depth = 2;
  std::size_t convs_per_level = 1;
  std::size_t time_embed_dim = 32;
  std::size_t wfen_features = 16;
  std::size_t wfen_width = 16;
  std::size_t wfca_grid_h = 4;
  std::size_t wfca_grid_w = 4;
  std::size_t wfca_hidden = 0;
  double gamma = 3.0;
  int alpha_index = 5;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t max_iterations = 2000;
  /// Validation rounds without improvement before stopping.
  std::size_t patience = 20;
  std::size_t val_interval = 200;
  std::size_t val_count = 16;
  std::uint64_t seed = 0;
  bool wsm_enabled = true;
  /// Use the clean sources instead of the branch conditions as suppression targets.
  bool clean_reference = false;
  bool alpha_bar_mean = false;
  /// States the suppression loss is evaluated on: forward-diffused sources, or
  /// one reverse step taken from them with the current (detached) denoisers.
  WfenInput wfen_input = WfenInput::Reverse;

  /// Throws InvalidArgument on any out-of-range field.
  void validate() const;
  /// Every key in a fixed order, full precision; parse(to_text()) == *this.
  std::string to_text() const;
  std::uint64_t hash() const;

  /// Unknown keys are rejected with InvalidArgument.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  /// Documented keys with their defaults.
  static std::vector<std::pair<std::string, std::string>> defaults();

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Dataset keys only (dataset.*), as used by make-dataset.
DatasetSpec parse_dataset_spec(const std::string& text);

/// Canonical dataset.* lines of a spec.
std::string dataset_spec_text(const DatasetSpec& spec);

}  // namespace dcdsm
