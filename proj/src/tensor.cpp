#include "dcdsm/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dcdsm/error.hpp"

namespace dcdsm {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw InvalidArgument("tensor shape must be non-empty");
  for (auto e : shape)
    if (e == 0) throw InvalidArgument("tensor extent must be >= 1, got " + shape_str(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw InvalidArgument("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                          shape_str(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis out of range for shape " + shape_str(shape_));
  return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch for shape " + shape_str(shape_));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for shape " + shape_str(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

double Tensor::item() const {
  if (data_.size() != 1) throw InvalidArgument("item() requires a single-element tensor, got " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw InvalidArgument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  r += b;
  return r;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  r -= b;
  return r;
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "operator*");
  Tensor r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] *= b[i];
  return r;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor r = a;
  r *= s;
  return r;
}

Tensor operator*(const Tensor& a, double s) { return s * a; }

Tensor axpby(double a, const Tensor& x, double b, const Tensor& y) {
  require_same_shape(x, y, "axpby");
  Tensor r(x.shape());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = a * x[i] + b * y[i];
  return r;
}

double sum(const Tensor& t) { return std::accumulate(t.data().begin(), t.data().end(), 0.0); }

double mean(const Tensor& t) { return sum(t) / static_cast<double>(t.size()); }

double sum_squares(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  Tensor r = t;
  for (auto& v : r.data()) v = std::clamp(v, lo, hi);
  return r;
}

Tensor as_batch(const Tensor& t) {
  if (t.rank() == 4) return t;
  if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
  throw ShapeError("expected [C,H,W] or [N,C,H,W], got " + shape_str(t.shape()));
}

Tensor batch_item(const Tensor& t, std::size_t n) {
  if (t.rank() != 4 || n >= t.dim(0)) throw ShapeError("batch_item: bad index for " + shape_str(t.shape()));
  const std::size_t per = t.size() / t.dim(0);
  std::vector<double> d(t.data().begin() + static_cast<std::ptrdiff_t>(n * per),
                        t.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * per));
  return Tensor({t.dim(1), t.dim(2), t.dim(3)}, std::move(d));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw InvalidArgument("stack: no tensors");
  Shape s{items.size()};
  s.insert(s.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> d;
  d.reserve(shape_numel(s));
  for (const auto& t : items) {
    require_same_shape(items[0], t, "stack");
    d.insert(d.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(s), std::move(d));
}

namespace detail {

ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t padding) {
  if (input.size() != 4) throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(input));
  if (kernel.size() != 4) throw ShapeError("conv2d: kernel must be [C_out,C_in,k,k], got " + shape_str(kernel));
  if (stride == 0) throw InvalidArgument("conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.n = input[0];
  g.c_in = input[1];
  g.h = input[2];
  g.w = input[3];
  g.c_out = kernel[0];
  g.k = kernel[2];
  g.stride = stride;
  g.pad = padding;
  if (kernel[1] != g.c_in)
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel[1]) + " input channels, got " +
                     std::to_string(g.c_in));
  if (kernel[2] != kernel[3] || g.k % 2 == 0) throw ShapeError("conv2d: kernel must be square with odd size");
  const std::size_t span_h = g.h + 2 * padding;
  const std::size_t span_w = g.w + 2 * padding;
  if (span_h < g.k || span_w < g.k) throw ShapeError("conv2d: kernel larger than padded input");
  // Floor division may drop trailing padding but never real input.
  if ((span_h - g.k) % stride > padding || (span_w - g.k) % stride > padding)
    throw ShapeError("conv2d: output extent is not integral for input " + shape_str(input) + ", k=" +
                     std::to_string(g.k) + ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(padding));
  g.h_out = (span_h - g.k) / stride + 1;
  g.w_out = (span_w - g.k) / stride + 1;
  return g;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
          const double* b, double beta, double* c) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  const auto mi = static_cast<Eigen::Index>(m), ni = static_cast<Eigen::Index>(n), ki = static_cast<Eigen::Index>(k);
  Eigen::Map<Mat> cm(c, mi, ni);
  if (beta == 0.0)
    cm.setZero();
  else if (beta != 1.0)
    cm *= beta;
  // A stored transposed is [k, m]; likewise B is [n, k].
  const CMap am(a, trans_a ? ki : mi, trans_a ? mi : ki);
  const CMap bm(b, trans_b ? ni : ki, trans_b ? ki : ni);
  if (trans_a && trans_b)
    cm.noalias() += alpha * am.transpose() * bm.transpose();
  else if (trans_a)
    cm.noalias() += alpha * am.transpose() * bm;
  else if (trans_b)
    cm.noalias() += alpha * am * bm.transpose();
  else
    cm.noalias() += alpha * am * bm;
}

// col layout: [(c*k + ky)*k + kx, oy*w_out + ox]
// Output columns [lo, hi) whose tap kx lands inside the input row.
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
  std::size_t lo = 0;
  while (lo < g.w_out && lo * g.stride + kx < g.pad) ++lo;
  std::size_t hi = g.w_out;
  while (hi > lo && (hi - 1) * g.stride + kx >= g.pad + g.w) --hi;
  return {lo, hi};
}

void im2col(const double* img, const ConvGeometry& g, double* col) {
  const std::size_t hw_out = g.h_out * g.w_out;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const double* plane = img + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * hw_out;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* out = row + oy * g.w_out;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.w_out, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          const auto [lo, hi] = valid_columns(g, kx);
          std::fill(out, out + lo, 0.0);
          const double* s = src + (lo * g.stride + kx - g.pad);
          if (g.stride == 1) {
            std::copy(s, s + (hi - lo), out + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox, s += g.stride) out[ox] = *s;
          }
          std::fill(out + hi, out + g.w_out, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
  const std::size_t hw_out = g.h_out * g.w_out;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    double* plane = img + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * hw_out;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const double* in = row + oy * g.w_out;
          const auto [lo, hi] = valid_columns(g, kx);
          double* d = dst + (lo * g.stride + kx - g.pad);
          for (std::size_t ox = lo; ox < hi; ++ox, d += g.stride) *d += in[ox];
        }
      }
    }
  }
}

}  // namespace detail

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  const bool unbatched = input.rank() == 3;
  const Tensor x = as_batch(input);
  const auto g = detail::conv_geometry(x.shape(), kernel.shape(), stride, padding);
  const std::size_t kk = g.c_in * g.k * g.k;
  const std::size_t hw_out = g.h_out * g.w_out;
  Tensor out({g.n, g.c_out, g.h_out, g.w_out});
  const bool direct = g.k == 1 && g.stride == 1 && g.pad == 0;
  std::vector<double> col(direct ? 0 : kk * hw_out);
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* img = x.ptr() + n * g.c_in * g.h * g.w;
    const double* b = img;
    if (!direct) {
      detail::im2col(img, g, col.data());
      b = col.data();
    }
    detail::gemm(false, false, g.c_out, hw_out, kk, 1.0, kernel.ptr(), b, 0.0, out.ptr() + n * g.c_out * hw_out);
  }
  if (unbatched) return out.reshaped({g.c_out, g.h_out, g.w_out});
  return out;
}

}  // namespace dcdsm
