#pragma once

#include <cstddef>
#include <vector>

#include "dcdsm/rng.hpp"
#include "dcdsm/tensor.hpp"

namespace dcdsm {

/// Per-timestep coefficients for t = 0..T. Index 0 is the clean state:
/// alpha_bar(0) = 1 and beta(0) is unused.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// Builds a schedule from beta_1..beta_T.
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const noexcept { return static_cast<int>(betas_.size()) - 1; }
  double beta(int t) const { return betas_.at(check(t, 1)); }
  double alpha(int t) const { return alphas_.at(check(t, 1)); }
  double alpha_bar(int t) const { return alpha_bars_.at(check(t, 0)); }
  /// Reverse-step noise scale; sigma(t)^2 = beta(t).
  double sigma(int t) const { return sigmas_.at(check(t, 1)); }

 private:
  std::size_t check(int t, int lo) const;

  std::vector<double> betas_, alphas_, alpha_bars_, sigmas_;
};

/// beta_t = beta_start + (t-1) (beta_end - beta_start) / (T-1).
/// Requires T >= 1 and 0 < beta_start <= beta_end < 1; equal endpoints give
/// a constant schedule.
NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s);
/// Batched form with one timestep per sample of a [N,...] tensor.
Tensor forward_sample(const Tensor& x0, const std::vector<int>& t, const Tensor& eps, const NoiseSchedule& s);

/// sqrt(1 - beta_t) x_prev + sqrt(beta_t) z with z drawn from `rng`.
Tensor forward_step(const Tensor& x_prev, int t, RngStream& rng, const NoiseSchedule& s);

/// (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_pred) / sqrt(alpha_t).
/// With alpha_bar_mean the leading divisor is sqrt(alpha_bar_t) instead.
Tensor posterior_mean(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& s,
                      bool alpha_bar_mean = false);

/// posterior_mean + sigma_t z for t > 1; exactly the posterior mean at t = 1,
/// where `rng` is not advanced.
Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_pred, RngStream& rng, const NoiseSchedule& s,
                    bool alpha_bar_mean = false);

}  // namespace dcdsm
