#include "dcdsm/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcdsm/error.hpp"

namespace dcdsm {

namespace {

// Per-sample mean squared difference over all but the leading axis.
std::vector<double> per_sample_mse(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0), per = a.size() / n;
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t q = i * per; q < (i + 1) * per; ++q) s += (a[q] - b[q]) * (a[q] - b[q]);
    out[i] = s / static_cast<double>(per);
  }
  return out;
}

void check_wfen_shapes(const Tensor& x_t1, const Tensor& x_t2, const Shape& o1, const Shape& o2, const Tensor& ref1,
                       const Tensor& ref2) {
  const Shape& s = x_t1.shape();
  if (x_t2.shape() != s || o1 != s || o2 != s || ref1.shape() != s || ref2.shape() != s)
    throw InvalidArgument("wfen_loss: all six tensors must share shape " + shape_str(s));
}

}  // namespace

double diffusion_loss(const Tensor& eps_true1, const Tensor& eps_pred1, const Tensor& eps_true2,
                      const Tensor& eps_pred2) {
  return mse(eps_true1, eps_pred1) + mse(eps_true2, eps_pred2);
}

WfenLossValue wfen_loss(const Tensor& x_t1, const Tensor& x_t2, const Tensor& x_out1, const Tensor& x_out2,
                        const Tensor& ref1, const Tensor& ref2) {
  check_wfen_shapes(x_t1, x_t2, x_out1.shape(), x_out2.shape(), ref1, ref2);
  const bool batched = x_t1.rank() == 4;
  auto b = [batched](const Tensor& t) { return batched ? t : t.reshaped({1, t.size()}); };
  const Tensor a1 = b(x_t1), a2 = b(x_t2), r1 = b(ref1), r2 = b(ref2);
  const auto after1 = per_sample_mse(a1 - b(x_out2), r1), before1 = per_sample_mse(a1, r1);
  const auto after2 = per_sample_mse(a2 - b(x_out1), r2), before2 = per_sample_mse(a2, r2);
  WfenLossValue v;
  const std::size_t n = after1.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (double d : {after1[i] - before1[i], after2[i] - before2[i]}) {
      if (d > kWfenExponentClamp || d < -kWfenExponentClamp) ++v.clamp_activations;
      v.value += std::exp2(std::clamp(d, -kWfenExponentClamp, kWfenExponentClamp));
    }
  }
  v.value /= static_cast<double>(n);
  return v;
}

double total_loss(double l_diff, double l_wfen, double gamma) {
  if (!(gamma > 0.0)) throw InvalidArgument("total_loss: gamma must be positive, got " + std::to_string(gamma));
  return gamma * l_diff + l_wfen;
}

namespace ad {

Var diffusion_loss(const Var& eps_true1, const Var& eps_pred1, const Var& eps_true2, const Var& eps_pred2) {
  require_same_shape(eps_true1.value(), eps_pred1.value(), "diffusion_loss");
  require_same_shape(eps_true2.value(), eps_pred2.value(), "diffusion_loss");
  return add(mean(square(sub(eps_pred1, eps_true1))), mean(square(sub(eps_pred2, eps_true2))));
}

Var wfen_loss(const Tensor& x_t1, const Tensor& x_t2, const Var& x_out1, const Var& x_out2, const Tensor& ref1,
              const Tensor& ref2, std::size_t* clamps) {
  check_wfen_shapes(x_t1, x_t2, x_out1.shape(), x_out2.shape(), ref1, ref2);
  if (x_t1.rank() < 2) throw ShapeError("wfen_loss: expected a batch [N,...]");
  Tape& tape = x_out1.tape();
  const std::size_t n = x_t1.dim(0);
  auto exponent = [&](const Tensor& x, const Var& out, const Tensor& ref) {
    const Var after = mean_per_sample(square(sub(sub(tape.constant(x), out), tape.constant(ref))));
    return sub(after, tape.constant(Tensor({n}, per_sample_mse(x, ref))));
  };
  const Var d1 = exponent(x_t1, x_out2, ref1);
  const Var d2 = exponent(x_t2, x_out1, ref2);
  if (clamps) {
    *clamps = 0;
    for (const Var& d : {d1, d2})
      for (double v : d.value().data())
        if (v > kWfenExponentClamp || v < -kWfenExponentClamp) ++*clamps;
  }
  const Var total = add(exp2(clamp(d1, -kWfenExponentClamp, kWfenExponentClamp)),
                        exp2(clamp(d2, -kWfenExponentClamp, kWfenExponentClamp)));
  return scale(sum(total), 1.0 / static_cast<double>(n));
}

}  // namespace ad

}  // namespace dcdsm
