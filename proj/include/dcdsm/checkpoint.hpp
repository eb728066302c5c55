#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dcdsm/config.hpp"
#include "dcdsm/denoiser.hpp"
#include "dcdsm/diffusion.hpp"
#include "dcdsm/optim.hpp"
#include "dcdsm/rng.hpp"
#include "dcdsm/suppression.hpp"

namespace dcdsm {

/// The four trainable networks.
struct Models {
  UNetParams eps1, eps2;
  WfenParams wfen1, wfen2;

  /// Fresh networks for `cfg`, initialized from named children of `rng` and
  /// rounded to float32.
  static Models init(const TrainConfig& cfg, const RngStream& rng);

  friend bool operator==(const Models& a, const Models& b) {
    return a.eps1.params == b.eps1.params && a.eps2.params == b.eps2.params && a.wfen1.params == b.wfen1.params &&
           a.wfen2.params == b.wfen2.params;
  }
};

struct OptStates {
  AdamState eps1, eps2, wfen1, wfen2;

  static OptStates init(const Models& m, const TrainConfig& cfg);
  friend bool operator==(const OptStates&, const OptStates&) = default;
};

UNetConfig denoiser_config(const TrainConfig& cfg);
WfenConfig wfen_config(const TrainConfig& cfg);
NoiseSchedule make_schedule(const TrainConfig& cfg);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, little endian:
///   "DCDSMCKP" | u32 version | u64 config hash | u32 len + config text
///   | u64 iteration | f64 best validation PSNR | u64 rng seed, stream, counter
///   | u32 optimizer count | (u32 name length, name, u64 step) per optimizer
///   | u32 tensor count | tensors
/// Each tensor is u32 name length, name bytes, u32 rank, u32 extents, and
/// float32 values. Tensor names are "<net>/<param>" for weights and
/// "<net>.m/<param>", "<net>.v/<param>" for Adam moments, with <net> one of
/// eps1, eps2, wfen1, wfen2.
struct Checkpoint {
  TrainConfig config;
  std::uint64_t iteration = 0;
  double best_val_psnr = 0.0;
  RngStream rng;
  Models models;
  OptStates opt;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& c);
/// Throws ParseError on malformed input and ConfigMismatch if the stored hash
/// does not match the stored config text.
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigMismatch unless `expected` hashes equal to the checkpoint's
/// config or `force` is set.
void check_config_hash(const Checkpoint& c, const TrainConfig& expected, bool force);

}  // namespace dcdsm
