#pragma once

#include <string>
#include <vector>

#include "dcdsm/autodiff.hpp"
#include "dcdsm/param_set.hpp"
#include "dcdsm/rng.hpp"
#include "dcdsm/tensor.hpp"

namespace dcdsm {

struct UNetConfig {
  std::size_t in_channels = 6;
  std::size_t out_channels = 3;
  std::size_t base_width = 16;
  /// Number of stride-2 stages; inputs must be divisible by 2^depth.
  std::size_t depth = 2;
  /// 0 disables time conditioning.
  std::size_t time_embed_dim = 32;
  /// Zero the output conv weights as well as its bias.
  bool zero_init_output = true;
  /// 3x3 conv + relu layers per stage; extras keep the stage width.
  std::size_t convs_per_level = 1;
};

/// Plain conv + relu U-Net.
///
///   in:    conv3x3(in -> w) [+ time projection] relu
///   down_i conv3x3 stride 2 (w 2^{i-1} -> w 2^i) relu           i = 1..depth
///   mid:   conv3x3 (w 2^depth -> same) relu
///   up_i   nearest x2, concat skip, conv3x3 -> w 2^{i-1} relu   i = depth..1
///   out:   conv3x3 (w -> out)
class UNet {
 public:
  UNet() = default;
  UNet(UNetConfig config, std::string prefix = "");

  const UNetConfig& config() const { return config_; }
  /// Registers every kernel and bias. A null rng gives all-zero parameters.
  void declare(ParamSet& params, RngStream* rng) const;
  /// `x` is [N,in,H,W]; `time_embedding` is [N,time_embed_dim] or invalid when
  /// time conditioning is disabled.
  Var forward(Tape& tape, const ParamSet& params, const Var& x, const Var& time_embedding) const;
  /// Number of scalar parameters implied by the config.
  std::size_t parameter_count() const;

  std::string name(const std::string& leaf) const { return prefix_ + leaf; }

 private:
  UNetConfig config_;
  std::string prefix_;
};

struct UNetParams {
  UNet net;
  ParamSet params;

  static UNetParams init(UNetConfig config, RngStream& rng);
  static UNetParams zeros(UNetConfig config);
};

/// Interleaved (sin t w_k, cos t w_k) with w_k = 10000^(-2k/dim).
Tensor sinusoidal_embed(int t, std::size_t dim);
/// [N, dim] embedding of one timestep per sample.
Tensor sinusoidal_embed(const std::vector<int>& t, std::size_t dim);

/// Noise predictor on a tape: concatenates x_t and cond along channels.
Var predict_noise(Tape& tape, const UNet& net, const ParamSet& params, const Var& x_t, const Var& cond,
                  const std::vector<int>& t);
/// x_t, cond: [C,H,W] or [N,C,H,W]; one timestep for the whole batch.
Tensor predict_noise(const UNetParams& p, const Tensor& x_t, int t, const Tensor& cond);

/// Time-free U-Net evaluation on [C,H,W] or [N,C,H,W].
Tensor unet3_forward(const UNetParams& p, const Tensor& x);

/// The WFEN high-path network: one down stage, no time input, zero biases.
UNetConfig unet3_config(std::size_t in_channels, std::size_t out_channels, std::size_t width = 16);

}  // namespace dcdsm
