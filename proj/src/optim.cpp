#include "dcdsm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "dcdsm/error.hpp"
#include "dcdsm/rng.hpp"

namespace dcdsm {

AdamState::AdamState(const ParamSet& params, AdamConfig cfg) : config(cfg) {
  for (std::size_t i = 0; i < params.count(); ++i) {
    m.emplace_back(params.value(i).shape());
    v.emplace_back(params.value(i).shape());
  }
}

void AdamState::quantize_to_f32() {
  for (auto& t : m) dcdsm::quantize_to_f32(t);
  for (auto& t : v) dcdsm::quantize_to_f32(t);
}

void adam_step(ParamSet& params, AdamState& state) {
  if (state.m.size() != params.count() || state.v.size() != params.count())
    throw InvalidArgument("adam_step: optimizer state has " + std::to_string(state.m.size()) + " slots for " +
                          std::to_string(params.count()) + " parameters");
  for (std::size_t i = 0; i < params.count(); ++i)
    if (state.m[i].shape() != params.value(i).shape() || state.v[i].shape() != params.value(i).shape())
      throw InvalidArgument("adam_step: state shape mismatch for '" + params.name(i) + "'");

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.count(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = params.grad(i);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

namespace {

double evaluate(const LossClosure& loss, const std::shared_ptr<ReluMaskLog>& log) {
  Tape tape(false);
  if (log) {
    log->mode = ReluMaskLog::Mode::Replay;
    log->cursor = 0;
    tape.set_relu_log(log);
  }
  return loss(tape).value().item();
}

std::vector<std::size_t> sample_coords(std::size_t size, std::size_t want, RngStream rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (size <= want) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + rng.uniform_int(size - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(want);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradcheckReport gradcheck(const LossClosure& loss, ParamSet& params, const GradcheckOptions& options) {
  if (options.h <= 0.0) throw InvalidArgument("gradcheck: h must be positive");

  const double first = evaluate(loss, nullptr);
  const double second = evaluate(loss, nullptr);
  if (std::memcmp(&first, &second, sizeof(double)) != 0)
    throw ContractViolation("gradcheck: loss closure is not deterministic (" + std::to_string(first) + " vs " +
                            std::to_string(second) + ")");

  std::shared_ptr<ReluMaskLog> log;
  params.zero_grads();
  {
    Tape tape(true);
    if (options.freeze_relu) {
      log = std::make_shared<ReluMaskLog>();
      tape.set_relu_log(log);
    }
    Var l = loss(tape);
    tape.backward(l);
  }

  GradcheckReport report;
  RngStream rng(options.seed, 0x6772616463686bull);
  for (std::size_t p = 0; p < params.count(); ++p) {
    Tensor& value = params.value(p);
    const auto coords = sample_coords(value.size(), options.coords_per_param, rng.child(p));
    for (std::size_t j : coords) {
      const double orig = value[j];
      value[j] = orig + options.h;
      const double up = evaluate(loss, log);
      value[j] = orig - options.h;
      const double down = evaluate(loss, log);
      value[j] = orig;
      const double numeric = (up - down) / (2.0 * options.h);
      const double analytic = params.grad(p)[j];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coordinates_checked;
      if (rel > report.max_rel_err || report.worst_param.empty()) {
        report.max_rel_err = rel;
        report.worst_param = params.name(p);
        report.worst_index = j;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_err < options.tolerance;
  return report;
}

}  // namespace dcdsm
