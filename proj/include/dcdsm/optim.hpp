#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dcdsm/autodiff.hpp"
#include "dcdsm/param_set.hpp"

namespace dcdsm {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Moment accumulators aligned with a ParamSet's insertion order.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  AdamState() = default;
  AdamState(const ParamSet& params, AdamConfig cfg);

  void quantize_to_f32();
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update in place. Gradients are left untouched.
void adam_step(ParamSet& params, AdamState& state);

struct GradcheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  /// Coordinates sampled per parameter tensor (all of them if the tensor is smaller).
  std::size_t coords_per_param = 64;
  std::uint64_t seed = 0;
  /// Evaluate the perturbed losses on the relu sign pattern of the base point.
  bool freeze_relu = true;
  /// Gradients below this magnitude are compared absolutely.
  double abs_floor = 1e-6;
};

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
  bool passed = false;
};

/// Builds a scalar loss on the given tape, reading parameters via Tape::param.
using LossClosure = std::function<Var(Tape&)>;

/// Compares backward() gradients with central differences.
/// Throws ContractViolation if two evaluations of `loss` disagree.
GradcheckReport gradcheck(const LossClosure& loss, ParamSet& params, const GradcheckOptions& options = {});

}  // namespace dcdsm
