#include "dcdsm/suppression.hpp"

#include <cmath>
#include <vector>

#include "dcdsm/error.hpp"
#include "dcdsm/wavelet.hpp"

namespace dcdsm {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

Tensor restore_rank(const Tensor& batched, const Tensor& like) {
  return like.rank() == 3 ? batched.reshaped(like.shape()) : batched;
}

}  // namespace

Wfen::Wfen(WfenConfig config, std::string prefix)
    : config_(config),
      prefix_(std::move(prefix)),
      unet_(unet3_config(config.feature_channels, 3 * config.channels, config.unet_width), prefix_ + "unet."),
      wfca_(WfcaConfig{config.channels, config.grid_h, config.grid_w, config.wfca_hidden}, prefix_ + "wfca.") {
  if (config_.channels == 0 || config_.feature_channels == 0)
    throw InvalidArgument("wfen: channel counts must be positive");
}

void Wfen::declare(ParamSet& params, RngStream* rng, double gain_init) const {
  const std::size_t c = config_.channels, cf = config_.feature_channels;
  params.add(name("proj.w"), rng ? kaiming_conv(*rng, cf, 3 * c, 1) : Tensor({cf, 3 * c, 1, 1}));
  params.add(name("proj.b"), Tensor({cf}));
  unet_.declare(params, rng);
  wfca_.declare(params, rng);
  params.add(name("gain"), Tensor({c}, gain_init));
}

Var Wfen::forward(Tape& tape, const ParamSet& params, const Var& x) const {
  const Shape& s = x.shape();
  const std::size_t c = config_.channels;
  if (s.size() != 4 || s[1] != c)
    throw ShapeError("wfen: expected [N," + std::to_string(c) + ",H,W], got " + shape_str(s));
  if (!is_pow2(s[2]) || !is_pow2(s[3]) || s[2] < 8 || s[3] < 8)
    throw ShapeError("wfen: spatial extents must be powers of two >= 8, got " + shape_str(s));

  const ad::SubbandVars sb = ad::dwt2(x);

  Var f = ad::concat_channels({sb.lh, sb.hl, sb.hh});
  f = ad::conv2d(f, tape.param(params, name("proj.w")), tape.param(params, name("proj.b")), 1, 0);
  f = unet_.forward(tape, params, f, Var());
  const ad::SubbandVars fb = ad::dwt2(ad::upsample_bilinear2x(f));

  auto [re, im] = ad::fft2(sb.ll);
  auto [gre, gim] = wfca_.forward(tape, params, re, im);

  const ad::SubbandVars merged{ad::ifft2_real(gre, gim), ad::slice_channels(fb.lh, 0, c),
                               ad::slice_channels(fb.hl, c, 2 * c), ad::slice_channels(fb.hh, 2 * c, 3 * c)};
  return ad::mul_channel(ad::idwt2(merged), tape.param(params, name("gain")));
}

WfenParams WfenParams::init(WfenConfig config, RngStream& rng, double gain_init) {
  WfenParams p{Wfen(config), {}};
  p.net.declare(p.params, &rng, gain_init);
  return p;
}

WfenParams WfenParams::zeros(WfenConfig config, double gain_init) {
  WfenParams p{Wfen(config), {}};
  p.net.declare(p.params, nullptr, gain_init);
  return p;
}

Tensor wfen_forward(const WfenParams& p, const Tensor& x) {
  Tape tape(false);
  return restore_rank(p.net.forward(tape, p.params, tape.constant(as_batch(x))).value(), x);
}

DualState apply_suppression(const DualState& state, const WfenParams& p1, const WfenParams& p2) {
  require_same_shape(state.x1, state.x2, "apply_suppression");
  const Tensor out1 = wfen_forward(p1, state.x1);
  const Tensor out2 = wfen_forward(p2, state.x2);
  DualState next = state;
  next.x1 = state.x1 - out2;
  next.x2 = state.x2 - out1;
  return next;
}

int WsmSchedule::insertion_timestep(int T) const {
  if (alpha_index < 0 || alpha_index > 10)
    throw InvalidArgument("alpha_index must lie in [0, 10], got " + std::to_string(alpha_index));
  return static_cast<int>(std::lround(alpha_index * static_cast<double>(T) / 10.0));
}

bool WsmSchedule::applies_at(int t, int T) const {
  if (!intermediate) return false;
  const int ta = insertion_timestep(T);
  return ta >= 1 && t == ta;
}

WsmSchedule ablation_schedule(AblationConfig c, int alpha_index) {
  switch (c) {
    case AblationConfig::I: return {alpha_index, false, false};
    case AblationConfig::II: return {alpha_index, true, false};
    case AblationConfig::III: return {alpha_index, false, true};
    case AblationConfig::IV: return {alpha_index, true, true};
  }
  throw InvalidArgument("unknown ablation config");
}

const char* ablation_label(AblationConfig c) {
  switch (c) {
    case AblationConfig::I: return "I (no WSM)";
    case AblationConfig::II: return "II (WSM at t=alpha)";
    case AblationConfig::III: return "III (WSM at t=0)";
    case AblationConfig::IV: return "IV (WSM at t=alpha and t=0)";
  }
  return "?";
}

namespace {

// One branch of a batched chain with per-sample noise streams.
struct Branch {
  std::vector<RngStream> streams;
  Tensor x;

  Branch(const Shape& batch_shape, const RngStream& rng, const char* label) {
    const std::size_t n = batch_shape[0];
    const Shape item{batch_shape[1], batch_shape[2], batch_shape[3]};
    std::vector<Tensor> xs;
    for (std::size_t i = 0; i < n; ++i) {
      streams.push_back(rng.child(i).child(label));
      xs.push_back(randn(streams.back(), item));
    }
    x = stack(xs);
  }

  void step(const UNetParams& eps, const Tensor& cond, int t, const NoiseSchedule& s, bool exact) {
    Tensor mu = posterior_mean(x, t, predict_noise(eps, x, t, cond), s, exact);
    if (t > 1) {
      const std::size_t per = mu.size() / streams.size();
      const Shape item{mu.dim(1), mu.dim(2), mu.dim(3)};
      for (std::size_t i = 0; i < streams.size(); ++i) {
        const Tensor z = randn(streams[i], item);
        for (std::size_t q = 0; q < per; ++q) mu[i * per + q] += s.sigma(t) * z[q];
      }
    }
    x = std::move(mu);
  }
};

}  // namespace

DualSample dual_reverse_sample(const Tensor& mixture, const UNetParams& eps1, const UNetParams& eps2,
                               const WfenParams& w1, const WfenParams& w2, const NoiseSchedule& s,
                               const WsmSchedule& w, const RngStream& rng, const SamplerOptions& opt) {
  const Tensor cond1 = as_batch(mixture);
  const Tensor cond2 = opt.cond2 ? as_batch(*opt.cond2) : cond1;
  require_same_shape(cond1, cond2, "dual_reverse_sample");
  const int T = s.steps();
  Branch b1(cond1.shape(), rng, "branch1"), b2(cond1.shape(), rng, "branch2");
  DualSample out;
  for (int t = T; t >= 1; --t) {
    b1.step(eps1, cond1, t, s, opt.alpha_bar_mean);
    b2.step(eps2, cond2, t, s, opt.alpha_bar_mean);
    if (w.applies_at(t, T)) {
      DualState st = apply_suppression({b1.x, b2.x, t - 1, cond1, cond2}, w1, w2);
      b1.x = std::move(st.x1);
      b2.x = std::move(st.x2);
      ++out.suppression_calls;
    }
  }
  out.pre_final1 = restore_rank(clamp(b1.x, -1.0, 1.0), mixture);
  out.pre_final2 = restore_rank(clamp(b2.x, -1.0, 1.0), mixture);
  if (w.final_step) {
    DualState st = apply_suppression({b1.x, b2.x, 0, cond1, cond2}, w1, w2);
    b1.x = std::move(st.x1);
    b2.x = std::move(st.x2);
    ++out.suppression_calls;
  }
  out.x1 = restore_rank(clamp(b1.x, -1.0, 1.0), mixture);
  out.x2 = restore_rank(clamp(b2.x, -1.0, 1.0), mixture);
  return out;
}

Tensor single_reverse_sample(const Tensor& cond, const UNetParams& eps, const NoiseSchedule& s, const RngStream& rng,
                             int branch, bool alpha_bar_mean) {
  if (branch != 1 && branch != 2) throw InvalidArgument("branch must be 1 or 2");
  const Tensor c = as_batch(cond);
  Branch b(c.shape(), rng, branch == 1 ? "branch1" : "branch2");
  for (int t = s.steps(); t >= 1; --t) b.step(eps, c, t, s, alpha_bar_mean);
  return restore_rank(clamp(b.x, -1.0, 1.0), cond);
}

}  // namespace dcdsm
