#pragma once

#include <string>
#include <utility>

#include "dcdsm/autodiff.hpp"
#include "dcdsm/param_set.hpp"
#include "dcdsm/rng.hpp"
#include "dcdsm/tensor.hpp"

namespace dcdsm {

struct ComplexTensor {
  Tensor re, im;
  const Shape& shape() const { return re.shape(); }
};

/// Largest imaginary magnitude ifft2 tolerates before refusing to drop it.
inline constexpr double kImagResidueLimit = 1e-6;

/// Unnormalized 2D DFT over the last two axes, X[u,v] = sum x[m,n] e^{-2 pi i (um/H + vn/W)}.
/// H and W must be powers of two.
ComplexTensor fft2(const Tensor& x);
ComplexTensor fft2(const ComplexTensor& x);
/// Inverse DFT with 1/(H*W) scaling, full complex result.
ComplexTensor ifft2_complex(const ComplexTensor& spectrum);
/// Real part of the inverse DFT. Throws NumericalContractError if the
/// imaginary residue exceeds kImagResidueLimit.
Tensor ifft2(const ComplexTensor& spectrum);

struct WfcaConfig {
  std::size_t channels = 3;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  /// Hidden width of the gating network; 0 selects 2 * channels * grid_h * grid_w.
  std::size_t hidden = 0;

  std::size_t descriptor_size() const { return channels * grid_h * grid_w; }
  std::size_t hidden_size() const { return hidden ? hidden : 2 * descriptor_size(); }
};

/// Window-based frequency channel attention.
///
/// The spectrum is tiled into grid_h x grid_w windows. Each (channel, window)
/// is summarized by its mean magnitude; a two-layer network (relu hidden,
/// sigmoid output) maps the descriptors to one gate per (channel, window).
/// A bin's gate is the average of its own window gate and the gate of the
/// window holding the mirrored bin (-u,-v), which keeps the gate field
/// symmetric and a Hermitian spectrum Hermitian.
class WfcaLayer {
 public:
  WfcaLayer() = default;
  WfcaLayer(WfcaConfig config, std::string prefix);

  const WfcaConfig& config() const { return config_; }
  /// Registers fc1.{w,b}, fc2.{w,b}. Zero weights give every gate 0.5.
  void declare(ParamSet& params, RngStream* rng) const;

  std::pair<Var, Var> forward(Tape& tape, const ParamSet& params, const Var& re, const Var& im) const;
  /// Per-bin gate field [N,C,H,W] for the given spectrum.
  Tensor gates(const ParamSet& params, const ComplexTensor& spectrum) const;

  std::string name(const char* leaf) const { return prefix_ + leaf; }

 private:
  void check_extents(const Shape& s) const;
  Var gate_field(Tape& tape, const ParamSet& params, const Var& re, const Var& im) const;

  WfcaConfig config_;
  std::string prefix_;
};

/// Standalone WFCA parameters.
struct WfcaParams {
  WfcaLayer layer;
  ParamSet params;

  /// Zero-initialized gating network.
  static WfcaParams zeros(WfcaConfig config);
  static WfcaParams random(WfcaConfig config, RngStream& rng);
};

/// Applies WFCA to a [C,H,W] or [N,C,H,W] spectrum. Throws InvalidArgument
/// if the grid does not divide the spectrum extents.
ComplexTensor wfca(const ComplexTensor& spectrum, const WfcaParams& p);

namespace ad {

std::pair<Var, Var> fft2(const Var& x);
/// Real part of the inverse transform, with the same residue contract as ifft2.
Var ifft2_real(const Var& re, const Var& im);

}  // namespace ad

}  // namespace dcdsm
