#include "dcdsm/diffusion.hpp"

#include <cmath>
#include <string>

#include "dcdsm/error.hpp"

namespace dcdsm {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) {
  if (betas.empty()) throw InvalidArgument("noise schedule needs at least one step");
  const std::size_t T = betas.size();
  betas_.assign(T + 1, 0.0);
  alphas_.assign(T + 1, 1.0);
  alpha_bars_.assign(T + 1, 1.0);
  sigmas_.assign(T + 1, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double b = betas[t - 1];
    if (!(b > 0.0 && b < 1.0)) throw InvalidArgument("beta_" + std::to_string(t) + " = " + std::to_string(b) +
                                                     " is outside (0, 1)");
    betas_[t] = b;
    alphas_[t] = 1.0 - b;
    alpha_bars_[t] = alpha_bars_[t - 1] * alphas_[t];
    sigmas_[t] = std::sqrt(b);
  }
}

std::size_t NoiseSchedule::check(int t, int lo) const {
  if (t < lo || t > steps())
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                          std::to_string(steps()) + "]");
  return static_cast<std::size_t>(t);
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw InvalidArgument("schedule: T must be >= 1, got " + std::to_string(T));
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw InvalidArgument("schedule: need 0 < beta_start <= beta_end < 1, got " + std::to_string(beta_start) +
                          ", " + std::to_string(beta_end));
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t)
    betas[t - 1] = T == 1 ? beta_start : beta_start + (t - 1) * (beta_end - beta_start) / (T - 1);
  return NoiseSchedule(std::move(betas));
}

Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s) {
  require_same_shape(x0, eps, "forward_sample");
  const double ab = s.alpha_bar(t);
  if (t == 0) return x0;
  return axpby(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

Tensor forward_sample(const Tensor& x0, const std::vector<int>& t, const Tensor& eps, const NoiseSchedule& s) {
  require_same_shape(x0, eps, "forward_sample");
  if (x0.rank() < 2 || x0.dim(0) != t.size())
    throw InvalidArgument("forward_sample: " + std::to_string(t.size()) + " timesteps for batch " +
                          shape_str(x0.shape()));
  Tensor out(x0.shape());
  const std::size_t per = x0.size() / t.size();
  for (std::size_t n = 0; n < t.size(); ++n) {
    const double ab = s.alpha_bar(t[n]);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) out[i] = t[n] == 0 ? x0[i] : a * x0[i] + b * eps[i];
  }
  return out;
}

Tensor forward_step(const Tensor& x_prev, int t, RngStream& rng, const NoiseSchedule& s) {
  const double b = s.beta(t);
  return axpby(std::sqrt(1.0 - b), x_prev, std::sqrt(b), randn(rng, x_prev.shape()));
}

Tensor posterior_mean(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& s,
                      bool alpha_bar_mean) {
  require_same_shape(x_t, eps_pred, "posterior_mean");
  const double lead = 1.0 / std::sqrt(alpha_bar_mean ? s.alpha_bar(t) : s.alpha(t));
  const double k = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
  return axpby(lead, x_t, -lead * k, eps_pred);
}

Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_pred, RngStream& rng, const NoiseSchedule& s,
                    bool alpha_bar_mean) {
  Tensor mu = posterior_mean(x_t, t, eps_pred, s, alpha_bar_mean);
  if (t == 1) return mu;
  return axpby(1.0, mu, s.sigma(t), randn(rng, x_t.shape()));
}

}  // namespace dcdsm
