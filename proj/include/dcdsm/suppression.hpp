#pragma once

#include <optional>
#include <string>
#include <utility>

#include "dcdsm/autodiff.hpp"
#include "dcdsm/denoiser.hpp"
#include "dcdsm/diffusion.hpp"
#include "dcdsm/param_set.hpp"
#include "dcdsm/rng.hpp"
#include "dcdsm/spectral.hpp"
#include "dcdsm/tensor.hpp"

namespace dcdsm {

struct WfenConfig {
  std::size_t channels = 3;
  /// Output channels of the 1x1 projection feeding the U-Net.
  std::size_t feature_channels = 16;
  std::size_t unet_width = 16;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  /// Hidden width of the WFCA gate network; 0 selects the default.
  std::size_t wfca_hidden = 0;
};

/// Wavelet frequency-domain feature extraction network.
///
///   {LL,LH,HL,HH} = dwt2(x)
///   f  = U(conv1x1(concat(LH,HL,HH)))            3C channels, subband size
///   {_,LH',HL',HH'} = dwt2(bilinear_up2(f))      band k taken from channels [kC,(k+1)C)
///   LL' = ifft2(wfca(fft2(LL)))
///   out = gain * idwt2(LL',LH',HL',HH')          gain is per channel
///
/// Linear upsampling is used because a nearest-upsampled map is constant on
/// every 2x2 block, so its Haar detail bands would vanish identically. The
/// output gain starts at zero, which makes a freshly built WFEN an exact
/// no-op while every internal path still trains.
class Wfen {
 public:
  Wfen() = default;
  Wfen(WfenConfig config, std::string prefix = "");

  const WfenConfig& config() const { return config_; }
  void declare(ParamSet& params, RngStream* rng, double gain_init = 0.0) const;
  /// x is [N,C,H,W] with H, W powers of two >= 8.
  Var forward(Tape& tape, const ParamSet& params, const Var& x) const;

  std::string name(const std::string& leaf) const { return prefix_ + leaf; }

 private:
  WfenConfig config_;
  std::string prefix_;
  UNet unet_;
  WfcaLayer wfca_;
};

struct WfenParams {
  Wfen net;
  ParamSet params;

  static WfenParams init(WfenConfig config, RngStream& rng, double gain_init = 0.0);
  /// Every weight zero (gate network included) and gain `gain_init`.
  static WfenParams zeros(WfenConfig config, double gain_init = 0.0);
};

/// x is [C,H,W] or [N,C,H,W].
Tensor wfen_forward(const WfenParams& p, const Tensor& x);

struct DualState {
  Tensor x1, x2;
  int t = 0;
  Tensor cond1, cond2;
};

/// x1 <- x1 - wfen(p2, x2), x2 <- x2 - wfen(p1, x1), both from the pre-update
/// values.
DualState apply_suppression(const DualState& state, const WfenParams& p1, const WfenParams& p2);

/// When the sampler applies suppression. The intermediate point is
/// t_alpha = round(alpha_index * T / 10); suppression runs right after the
/// reverse step that leaves t_alpha, and once more on the x_0 pair when
/// `final_step` is set.
struct WsmSchedule {
  int alpha_index = 5;
  bool intermediate = true;
  bool final_step = true;

  int insertion_timestep(int T) const;
  bool applies_at(int t, int T) const;

  static WsmSchedule disabled() { return {5, false, false}; }
};

/// Table rows of the suppression ablation.
enum class AblationConfig { I, II, III, IV };
WsmSchedule ablation_schedule(AblationConfig c, int alpha_index);
const char* ablation_label(AblationConfig c);

struct SamplerOptions {
  bool alpha_bar_mean = false;
  /// Condition of branch 2; the mixture when absent.
  std::optional<Tensor> cond2;
};

struct DualSample {
  /// Final outputs clamped to [-1, 1].
  Tensor x1, x2;
  /// x_0 pair before the final suppression, clamped to [-1, 1].
  Tensor pre_final1, pre_final2;
  int suppression_calls = 0;
};

/// Interactive dual-branch reverse sampler.
///
/// Sample n of the batch draws from rng.child(n); branch b from its child
/// "branch1" / "branch2". Each branch stream supplies x_T first and then one
/// noise draw per step with t > 1.
DualSample dual_reverse_sample(const Tensor& mixture, const UNetParams& eps1, const UNetParams& eps2,
                               const WfenParams& w1, const WfenParams& w2, const NoiseSchedule& s,
                               const WsmSchedule& w, const RngStream& rng, const SamplerOptions& opt = {});

/// One conditional branch alone, on the same stream layout as branch `branch`
/// (1 or 2) of dual_reverse_sample. Output is clamped to [-1, 1].
Tensor single_reverse_sample(const Tensor& cond, const UNetParams& eps, const NoiseSchedule& s, const RngStream& rng,
                             int branch, bool alpha_bar_mean = false);

}  // namespace dcdsm
