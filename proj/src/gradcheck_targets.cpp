#include "dcdsm/gradcheck_targets.hpp"

#include "dcdsm/denoiser.hpp"
#include "dcdsm/error.hpp"
#include "dcdsm/objectives.hpp"
#include "dcdsm/rng.hpp"
#include "dcdsm/spectral.hpp"
#include "dcdsm/suppression.hpp"

namespace dcdsm {

namespace {

constexpr std::size_t kSide = 8;

WfenConfig small_wfen() { return {3, 4, 4, 2, 2, 0}; }

// Random gains so the output does not vanish at a fresh init.
void randomize_gain(ParamSet& p, const std::string& name, RngStream& rng) {
  Tensor& g = p.value(name);
  for (auto& v : g.data()) v = rng.uniform(0.5, 1.5);
}

GradcheckReport check_unet(RngStream rng, const GradcheckOptions& opt) {
  UNetConfig c;
  c.zero_init_output = false;
  UNet net(c);
  ParamSet params;
  net.declare(params, &rng);
  for (std::size_t i = 0; i < params.count(); ++i)
    if (params.name(i).ends_with(".b")) params.value(i) = randn(rng, params.value(i).shape()) * 0.1;
  const Tensor x = randn(rng, {2, 3, kSide, kSide});
  const Tensor cond = randn(rng, {2, 3, kSide, kSide});
  const Tensor target = randn(rng, {2, 3, kSide, kSide});
  return gradcheck(
      [&](Tape& tape) {
        Var pred = predict_noise(tape, net, params, tape.constant(x), tape.constant(cond), {3, 17});
        return ad::mean(ad::square(ad::sub(pred, tape.constant(target))));
      },
      params, opt);
}

GradcheckReport check_wfen(RngStream rng, const GradcheckOptions& opt) {
  Wfen net(small_wfen());
  ParamSet params;
  net.declare(params, &rng);
  randomize_gain(params, "gain", rng);
  const Tensor x = randn(rng, {2, 3, kSide, kSide});
  const Tensor w = randn(rng, {2, 3, kSide, kSide});
  return gradcheck([&](Tape& tape) { return ad::mean(ad::mul(net.forward(tape, params, tape.constant(x)), tape.constant(w))); },
                   params, opt);
}

GradcheckReport check_wfca(RngStream rng, const GradcheckOptions& opt) {
  WfcaLayer layer(WfcaConfig{3, 2, 2, 0}, "");
  ParamSet params;
  layer.declare(params, &rng);
  const ComplexTensor spec = fft2(randn(rng, {2, 3, kSide, kSide}));
  const Tensor wr = randn(rng, spec.re.shape());
  const Tensor wi = randn(rng, spec.im.shape());
  return gradcheck(
      [&](Tape& tape) {
        auto [re, im] = layer.forward(tape, params, tape.constant(spec.re), tape.constant(spec.im));
        return ad::add(ad::mean(ad::mul(re, tape.constant(wr))), ad::mean(ad::mul(im, tape.constant(wi))));
      },
      params, opt);
}

GradcheckReport check_wfen_loss(RngStream rng, const GradcheckOptions& opt) {
  Wfen n1(small_wfen(), "w1."), n2(small_wfen(), "w2.");
  ParamSet params;
  n1.declare(params, &rng);
  n2.declare(params, &rng);
  // Small gains keep the exponent well inside the clamp.
  params.value("w1.gain").fill(0.3);
  params.value("w2.gain").fill(0.3);
  const Shape s{2, 3, kSide, kSide};
  const Tensor x1 = randn(rng, s) * 0.5, x2 = randn(rng, s) * 0.5;
  const Tensor r1 = randn(rng, s) * 0.5, r2 = randn(rng, s) * 0.5;
  return gradcheck(
      [&](Tape& tape) {
        Var o1 = n1.forward(tape, params, tape.constant(x1));
        Var o2 = n2.forward(tape, params, tape.constant(x2));
        return ad::wfen_loss(x1, x2, o1, o2, r1, r2);
      },
      params, opt);
}

}  // namespace

std::vector<std::string> gradcheck_target_names() { return {"unet", "wfen", "wfca", "wfen_loss"}; }

GradcheckReport gradcheck_target(const std::string& target, std::uint64_t seed, const GradcheckOptions& options) {
  const RngStream rng = RngStream(seed, 0x7467).child(target);
  if (target == "unet") return check_unet(rng, options);
  if (target == "wfen") return check_wfen(rng, options);
  if (target == "wfca") return check_wfca(rng, options);
  if (target == "wfen_loss") return check_wfen_loss(rng, options);
  throw InvalidArgument("gradcheck: unknown target '" + target + "' (expected unet, wfen, wfca or wfen_loss)");
}

}  // namespace dcdsm
