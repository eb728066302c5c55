#pragma once

#include <cstddef>

#include "dcdsm/autodiff.hpp"
#include "dcdsm/tensor.hpp"

namespace dcdsm {

/// Bound on the exponent of the suppression loss.
inline constexpr double kWfenExponentClamp = 20.0;

struct LossReport {
  double l_diff = 0.0;
  double l_wfen = 0.0;
  double l_total = 0.0;
  std::size_t clamp_activations = 0;
};

/// mse(eps_true1, eps_pred1) + mse(eps_true2, eps_pred2).
double diffusion_loss(const Tensor& eps_true1, const Tensor& eps_pred1, const Tensor& eps_true2,
                      const Tensor& eps_pred2);

struct WfenLossValue {
  double value = 0.0;
  std::size_t clamp_activations = 0;
};

/// 2^d1 + 2^d2 with
///   d1 = mse(x_t1 - x_out2, ref1) - mse(x_t1, ref1)
///   d2 = mse(x_t2 - x_out1, ref2) - mse(x_t2, ref2)
/// each clamped to [-20, 20]. A [N,...] batch is treated per sample and the
/// sample losses are averaged.
WfenLossValue wfen_loss(const Tensor& x_t1, const Tensor& x_t2, const Tensor& x_out1, const Tensor& x_out2,
                        const Tensor& ref1, const Tensor& ref2);

/// gamma * l_diff + l_wfen; gamma must be positive.
double total_loss(double l_diff, double l_wfen, double gamma);

namespace ad {

/// Sum of per-element mean squared errors of the two branches.
Var diffusion_loss(const Var& eps_true1, const Var& eps_pred1, const Var& eps_true2, const Var& eps_pred2);
/// Batched suppression loss; x_t and ref enter as constants. `clamps`, when
/// given, receives the number of clamped exponents.
Var wfen_loss(const Tensor& x_t1, const Tensor& x_t2, const Var& x_out1, const Var& x_out2, const Tensor& ref1,
              const Tensor& ref2, std::size_t* clamps = nullptr);

}  // namespace ad

}  // namespace dcdsm
