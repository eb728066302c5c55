#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dcdsm/param_set.hpp"
#include "dcdsm/tensor.hpp"

namespace dcdsm {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Sign patterns of every relu evaluated on a tape, in call order. Replaying
/// a recorded log evaluates the network on the same linear piece, which lets
/// finite differences straddle a kink without leaving it.
struct ReluMaskLog {
  enum class Mode { Record, Replay };
  Mode mode = Mode::Record;
  std::size_t cursor = 0;
  std::vector<std::vector<unsigned char>> masks;
};

/// Reverse-mode tape over a fixed operator set.
///
/// Nodes are appended in evaluation order, so a reverse sweep over ids is a
/// valid topological order. Parameter leaves forward their gradients into the
/// owning ParamSet, where repeated backward() calls accumulate.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf bound to a named parameter; gradients land in params.grad(name).
  Var param(const ParamSet& params, const std::string& name);
  /// Appends an op result. `fn` is kept only when some input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var record(Tensor value, const std::vector<Var>& inputs, Backward fn);

  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  const Tensor& value(const Var& v) const { return nodes_.at(v.id()).value; }
  /// Zero-initialized gradient buffer of `v`, for in-place accumulation.
  Tensor& grad_buffer(const Var& v);
  /// Adds `g` into the gradient of `v` if `v` requires one.
  void accumulate(const Var& v, const Tensor& g);

  /// Reverse sweep from a single-element loss.
  void backward(const Var& loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  void set_relu_log(std::shared_ptr<ReluMaskLog> log) { relu_log_ = std::move(log); }
  /// Relu sign mask for `z`, honouring a recorded log if one is attached.
  std::vector<unsigned char> relu_mask(const Tensor& z);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
    const ParamSet* params = nullptr;
    std::size_t param_index = 0;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::shared_ptr<ReluMaskLog> relu_log_;
};

/// Differentiable operators. Image tensors are [N,C,H,W].
namespace ad {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp2(const Var& a);
/// Gradient passes only where lo <= a <= hi.
Var clamp(const Var& a, double lo, double hi);
/// Elementwise sqrt(re^2 + im^2), with zero subgradient at the origin.
Var magnitude(const Var& re, const Var& im);

/// Sum of all elements, as a [1] tensor.
Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over all but the leading axis: [N, ...] -> [N].
Var mean_per_sample(const Var& a);

Var reshape(const Var& a, Shape shape);
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& a, std::size_t begin, std::size_t end);

/// [M,K] x [K,N].
Var matmul(const Var& a, const Var& b);
/// x [N,D_in], w [D_out,D_in], b [D_out] -> [N,D_out].
Var linear(const Var& x, const Var& w, const Var& b);
/// Adds a per-channel offset; `b` is [C] or [N,C].
Var add_channel(const Var& x, const Var& b);
/// Scales each channel by g[c]; `g` is [C].
Var mul_channel(const Var& x, const Var& g);
/// Zero-padded cross-correlation; `bias` may be invalid (no bias).
Var conv2d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t padding);

Var upsample_nearest(const Var& x, std::size_t factor_h, std::size_t factor_w);
/// Separable linear 2x upsampling with half-pixel centres and edge clamping.
Var upsample_bilinear2x(const Var& x);
/// Non-overlapping average pooling over kh x kw windows.
Var avgpool(const Var& x, std::size_t kh, std::size_t kw);
/// Frequency-index reflection on the last two axes: y[u,v] = x[-u mod H, -v mod W].
Var mirror_bins(const Var& x);

}  // namespace ad

/// Tensor-level forms used outside the tape.
Tensor upsample_nearest(const Tensor& x, std::size_t factor_h, std::size_t factor_w);
Tensor upsample_bilinear2x(const Tensor& x);
Tensor avgpool(const Tensor& x, std::size_t kh, std::size_t kw);
Tensor mirror_bins(const Tensor& x);

}  // namespace dcdsm
