#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dcdsm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Images are laid out as [C, H, W] or, batched, [N, C, H, W]. A Tensor is a
/// plain value: copies are deep and never alias.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* ptr() noexcept { return data_.data(); }
  const double* ptr() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Multi-index access; the number of indices must equal rank().
  double& at(std::initializer_list<std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;

  /// Scalar value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  void fill(double v);

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor operator*(const Tensor& a, double s);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// a*x + b*y elementwise.
Tensor axpby(double a, const Tensor& x, double b, const Tensor& y);

double sum(const Tensor& t);
double mean(const Tensor& t);
double sum_squares(const Tensor& t);
double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
/// Per-element mean squared difference.
double mse(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);
Tensor clamp(const Tensor& t, double lo, double hi);

/// Views [C,H,W] as [1,C,H,W]; rank-4 tensors pass through.
Tensor as_batch(const Tensor& t);
/// Sample `n` of a rank-4 tensor as a [C,H,W] copy.
Tensor batch_item(const Tensor& t, std::size_t n);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

/// Cross-correlation with zero padding. `input` is [C_in,H,W] or
/// [N,C_in,H,W]; `kernel` is [C_out,C_in,k,k] with k odd. The output extent
/// is floor((H + 2 padding - k) / stride) + 1; a ShapeError is raised when the
/// remainder of that division exceeds the padding, i.e. when real input rows
/// or columns would never be visited.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);

namespace detail {

struct ConvGeometry {
  std::size_t n, c_in, h, w, c_out, k, stride, pad, h_out, w_out;
};

ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride,
                           std::size_t padding);

// Row-major GEMM wrappers: C = alpha*op(A)*op(B) + beta*C.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c);

void im2col(const double* img, const ConvGeometry& g, double* col);
void col2im_add(const double* col, const ConvGeometry& g, double* img);

}  // namespace detail

}  // namespace dcdsm
