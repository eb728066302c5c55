#include "dcdsm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dcdsm/error.hpp"

namespace dcdsm {

const Tensor& Var::value() const {
  if (!tape_) throw InvalidArgument("use of an unbound Var");
  return tape_->value(*this);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamSet& params, const std::string& name) {
  const std::size_t idx = params.index_of(name);
  nodes_.push_back(Node{params.value(idx), {}, {}, grad_enabled_, &params, idx});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || (in.valid() && requires_grad(in));
  needs = needs && grad_enabled_;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : Backward{}, needs, nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward fn) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || (in.valid() && requires_grad(in));
  needs = needs && grad_enabled_;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : Backward{}, needs, nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(const Var& v) {
  auto& node = nodes_.at(v.id());
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  if (!v.valid() || !requires_grad(v)) return;
  auto& node = nodes_.at(v.id());
  if (node.grad.empty()) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw InvalidArgument("backward: loss belongs to another tape");
  if (value(loss).size() != 1)
    throw InvalidArgument("backward: loss must be a scalar, got shape " + shape_str(value(loss).shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  if (!requires_grad(loss)) return;
  nodes_[loss.id()].grad = Tensor(value(loss).shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.params) n.params->grad_accumulator(n.param_index) += n.grad;
  }
}

std::vector<unsigned char> Tape::relu_mask(const Tensor& z) {
  if (relu_log_ && relu_log_->mode == ReluMaskLog::Mode::Replay) {
    if (relu_log_->cursor >= relu_log_->masks.size() || relu_log_->masks[relu_log_->cursor].size() != z.size())
      throw ContractViolation("relu mask replay does not match the recorded computation");
    return relu_log_->masks[relu_log_->cursor++];
  }
  std::vector<unsigned char> m(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) m[i] = z[i] > 0.0 ? 1 : 0;
  if (relu_log_) relu_log_->masks.push_back(m);
  return m;
}

namespace {

std::size_t channel_count(const Shape& s) {
  if (s.size() != 4) throw ShapeError("expected [N,C,H,W], got " + shape_str(s));
  return s[1];
}

}  // namespace

Tensor upsample_nearest(const Tensor& x, std::size_t fh, std::size_t fw) {
  const Tensor b = as_batch(x);
  const auto& s = b.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor y({s[0], s[1], h * fh, w * fw});
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = b.ptr() + p * h * w;
    double* dst = y.ptr() + p * h * fh * w * fw;
    for (std::size_t i = 0; i < h * fh; ++i)
      for (std::size_t j = 0; j < w * fw; ++j) dst[i * w * fw + j] = src[(i / fh) * w + j / fw];
  }
  return x.rank() == 3 ? y.reshaped({s[1], h * fh, w * fw}) : y;
}

namespace {

// 1D two-tap weights of half-pixel linear upsampling by 2 with clamped edges.
struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> bilinear_taps(std::size_t n) {
  std::vector<Tap> taps(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    taps[2 * i] = {i, i == 0 ? 0 : i - 1, 0.75, 0.25};
    taps[2 * i + 1] = {i, i + 1 < n ? i + 1 : n - 1, 0.75, 0.25};
  }
  return taps;
}

void bilinear_forward(const double* src, std::size_t h, std::size_t w, double* dst) {
  const auto th = bilinear_taps(h);
  const auto tw = bilinear_taps(w);
  std::vector<double> rows(2 * h * w);
  for (std::size_t i = 0; i < 2 * h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      rows[i * w + j] = th[i].w0 * src[th[i].i0 * w + j] + th[i].w1 * src[th[i].i1 * w + j];
  for (std::size_t i = 0; i < 2 * h; ++i)
    for (std::size_t j = 0; j < 2 * w; ++j)
      dst[i * 2 * w + j] = tw[j].w0 * rows[i * w + tw[j].i0] + tw[j].w1 * rows[i * w + tw[j].i1];
}

void bilinear_adjoint_add(const double* g, std::size_t h, std::size_t w, double* dsrc) {
  const auto th = bilinear_taps(h);
  const auto tw = bilinear_taps(w);
  std::vector<double> rows(2 * h * w, 0.0);
  for (std::size_t i = 0; i < 2 * h; ++i)
    for (std::size_t j = 0; j < 2 * w; ++j) {
      rows[i * w + tw[j].i0] += tw[j].w0 * g[i * 2 * w + j];
      rows[i * w + tw[j].i1] += tw[j].w1 * g[i * 2 * w + j];
    }
  for (std::size_t i = 0; i < 2 * h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      dsrc[th[i].i0 * w + j] += th[i].w0 * rows[i * w + j];
      dsrc[th[i].i1 * w + j] += th[i].w1 * rows[i * w + j];
    }
}

}  // namespace

Tensor upsample_bilinear2x(const Tensor& x) {
  const Tensor b = as_batch(x);
  const auto& s = b.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor y({s[0], s[1], 2 * h, 2 * w});
  for (std::size_t p = 0; p < planes; ++p) bilinear_forward(b.ptr() + p * h * w, h, w, y.ptr() + p * 4 * h * w);
  return x.rank() == 3 ? y.reshaped({s[1], 2 * h, 2 * w}) : y;
}

Tensor avgpool(const Tensor& x, std::size_t kh, std::size_t kw) {
  const Tensor b = as_batch(x);
  const auto& s = b.shape();
  if (kh == 0 || kw == 0 || s[2] % kh != 0 || s[3] % kw != 0)
    throw ShapeError("avgpool: window " + std::to_string(kh) + "x" + std::to_string(kw) + " does not tile " +
                     shape_str(s));
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3], ho = h / kh, wo = w / kw;
  Tensor y({s[0], s[1], ho, wo});
  const double inv = 1.0 / static_cast<double>(kh * kw);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = b.ptr() + p * h * w;
    double* dst = y.ptr() + p * ho * wo;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) dst[(i / kh) * wo + j / kw] += src[i * w + j];
    for (std::size_t q = 0; q < ho * wo; ++q) dst[q] *= inv;
  }
  return x.rank() == 3 ? y.reshaped({s[1], ho, wo}) : y;
}

Tensor mirror_bins(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("mirror_bins: need at least two axes");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = x.size() / (h * w);
  Tensor y(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.ptr() + p * h * w;
    double* dst = y.ptr() + p * h * w;
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) dst[u * w + v] = src[((h - u) % h) * w + (w - v) % w];
  }
  return y;
}

namespace ad {

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "ad::add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "ad::sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -1.0 * g);
  });
}

Var mul(const Var& a, const Var& b) {
  return a.tape().record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value());
    if (t.requires_grad(b)) t.accumulate(b, g * a.value());
  });
}

Var scale(const Var& a, double s) {
  return a.tape().record(s * a.value(), {a}, [a, s](Tape& t, const Tensor& g) { t.accumulate(a, s * g); });
}

Var add_scalar(const Var& a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data()) v += s;
  return a.tape().record(std::move(y), {a}, [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var square(const Var& a) {
  return a.tape().record(a.value() * a.value(), {a},
                         [a](Tape& t, const Tensor& g) { t.accumulate(a, 2.0 * (g * a.value())); });
}

Var relu(const Var& a) {
  auto mask = a.tape().relu_mask(a.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!mask[i]) y[i] = 0.0;
  return a.tape().record(std::move(y), {a}, [a, mask = std::move(mask)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (mask[i]) ga[i] += g[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor y = a.value();
  for (auto& v : y.data()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  Tensor s = y;
  return a.tape().record(std::move(y), {a}, [a, s = std::move(s)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var exp2(const Var& a) {
  Tensor y = a.value();
  for (auto& v : y.data()) v = std::exp2(v);
  Tensor dy = y;
  dy *= std::numbers::ln2;
  return a.tape().record(std::move(y), {a}, [a, dy = std::move(dy)](Tape& t, const Tensor& g) {
    t.accumulate(a, g * dy);
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tensor y = dcdsm::clamp(a.value(), lo, hi);
  return a.tape().record(std::move(y), {a}, [a, lo, hi](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
  });
}

Var magnitude(const Var& re, const Var& im) {
  require_same_shape(re.value(), im.value(), "ad::magnitude");
  Tensor y(re.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::hypot(re.value()[i], im.value()[i]);
  Tensor mag = y;
  return re.tape().record(std::move(y), {re, im}, [re, im, mag = std::move(mag)](Tape& t, const Tensor& g) {
    const bool need_re = t.requires_grad(re), need_im = t.requires_grad(im);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (mag[i] == 0.0) continue;
      const double s = g[i] / mag[i];
      if (need_re) t.grad_buffer(re)[i] += s * re.value()[i];
      if (need_im) t.grad_buffer(im)[i] += s * im.value()[i];
    }
  });
}

Var sum(const Var& a) {
  return a.tape().record(Tensor::scalar(dcdsm::sum(a.value())), {a}, [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (auto& v : ga.data()) v += g[0];
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return a.tape().record(Tensor::scalar(dcdsm::sum(a.value()) * inv), {a}, [a, inv](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (auto& v : ga.data()) v += g[0] * inv;
  });
}

Var mean_per_sample(const Var& a) {
  const std::size_t n = a.value().dim(0);
  const std::size_t per = a.value().size() / n;
  Tensor y({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) s += a.value()[i * per + j];
    y[i] = s / static_cast<double>(per);
  }
  return a.tape().record(std::move(y), {a}, [a, n, per](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    const double inv = 1.0 / static_cast<double>(per);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < per; ++j) ga[i * per + j] += g[i] * inv;
  });
}

Var reshape(const Var& a, Shape shape) {
  const Shape orig = a.shape();
  return a.tape().record(a.value().reshaped(std::move(shape)), {a},
                         [a, orig](Tape& t, const Tensor& g) { t.accumulate(a, g.reshaped(orig)); });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  channel_count(s0);
  std::size_t c_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
      throw ShapeError("concat_channels: incompatible " + shape_str(s) + " vs " + shape_str(s0));
    c_total += s[1];
  }
  const std::size_t n = s0[0], hw = s0[2] * s0[3];
  Tensor y({n, c_total, s0[2], s0[3]});
  std::size_t c_off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(c_off);
    const std::size_t c = p.shape()[1];
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(p.value().ptr() + i * c * hw, c * hw, y.ptr() + (i * c_total + c_off) * hw);
    c_off += c;
  }
  return parts[0].tape().record(std::move(y), parts, [parts, offsets, n, hw, c_total](Tape& t, const Tensor& g) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!t.requires_grad(parts[k])) continue;
      const std::size_t c = parts[k].shape()[1];
      Tensor& gp = t.grad_buffer(parts[k]);
      for (std::size_t i = 0; i < n; ++i) {
        const double* src = g.ptr() + (i * c_total + offsets[k]) * hw;
        double* dst = gp.ptr() + i * c * hw;
        for (std::size_t q = 0; q < c * hw; ++q) dst[q] += src[q];
      }
    }
  });
}

Var slice_channels(const Var& a, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  const std::size_t c = channel_count(s);
  if (begin >= end || end > c) throw ShapeError("slice_channels: bad range for " + shape_str(s));
  const std::size_t n = s[0], hw = s[2] * s[3], cs = end - begin;
  Tensor y({n, cs, s[2], s[3]});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(a.value().ptr() + (i * c + begin) * hw, cs * hw, y.ptr() + i * cs * hw);
  return a.tape().record(std::move(y), {a}, [a, n, c, hw, cs, begin](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < n; ++i) {
      double* dst = ga.ptr() + (i * c + begin) * hw;
      const double* src = g.ptr() + i * cs * hw;
      for (std::size_t q = 0; q < cs * hw; ++q) dst[q] += src[q];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw ShapeError("matmul: incompatible " + shape_str(sa) + " x " + shape_str(sb));
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor y({m, n});
  detail::gemm(false, false, m, n, k, 1.0, a.value().ptr(), b.value().ptr(), 0.0, y.ptr());
  return a.tape().record(std::move(y), {a, b}, [a, b, m, n, k](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) detail::gemm(false, true, m, k, n, 1.0, g.ptr(), b.value().ptr(), 1.0, t.grad_buffer(a).ptr());
    if (t.requires_grad(b)) detail::gemm(true, false, k, n, m, 1.0, a.value().ptr(), g.ptr(), 1.0, t.grad_buffer(b).ptr());
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1] || b.value().size() != sw[0])
    throw ShapeError("linear: incompatible " + shape_str(sx) + " with weight " + shape_str(sw));
  const std::size_t n = sx[0], din = sx[1], dout = sw[0];
  Tensor y({n, dout});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < dout; ++o) y[i * dout + o] = b.value()[o];
  detail::gemm(false, true, n, dout, din, 1.0, x.value().ptr(), w.value().ptr(), 1.0, y.ptr());
  return x.tape().record(std::move(y), {x, w, b}, [x, w, b, n, din, dout](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) detail::gemm(false, false, n, din, dout, 1.0, g.ptr(), w.value().ptr(), 1.0, t.grad_buffer(x).ptr());
    if (t.requires_grad(w)) detail::gemm(true, false, dout, din, n, 1.0, g.ptr(), x.value().ptr(), 1.0, t.grad_buffer(w).ptr());
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < dout; ++o) gb[o] += g[i * dout + o];
    }
  });
}

Var add_channel(const Var& x, const Var& b) {
  const Shape& s = x.shape();
  const std::size_t c = channel_count(s);
  const std::size_t n = s[0], hw = s[2] * s[3];
  const bool per_sample = b.value().rank() == 2;
  if ((per_sample && (b.shape()[0] != n || b.shape()[1] != c)) || (!per_sample && b.value().size() != c))
    throw ShapeError("add_channel: offset " + shape_str(b.shape()) + " does not fit " + shape_str(s));
  Tensor y = x.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double off = b.value()[per_sample ? i * c + ch : ch];
      double* p = y.ptr() + (i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) p[q] += off;
    }
  return x.tape().record(std::move(y), {x, b}, [x, b, n, c, hw, per_sample](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    if (!t.requires_grad(b)) return;
    Tensor& gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = g.ptr() + (i * c + ch) * hw;
        double s = 0.0;
        for (std::size_t q = 0; q < hw; ++q) s += p[q];
        gb[per_sample ? i * c + ch : ch] += s;
      }
  });
}

Var mul_channel(const Var& x, const Var& g) {
  const Shape& s = x.shape();
  const std::size_t c = channel_count(s);
  const std::size_t n = s[0], hw = s[2] * s[3];
  if (g.value().size() != c) throw ShapeError("mul_channel: scale " + shape_str(g.shape()) + " does not fit " + shape_str(s));
  Tensor y = x.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = y.ptr() + (i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) p[q] *= g.value()[ch];
    }
  return x.tape().record(std::move(y), {x, g}, [x, g, n, c, hw](Tape& t, const Tensor& gy) {
    if (t.requires_grad(x)) {
      Tensor gx = gy;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
          double* p = gx.ptr() + (i * c + ch) * hw;
          for (std::size_t q = 0; q < hw; ++q) p[q] *= g.value()[ch];
        }
      t.accumulate(x, gx);
    }
    if (!t.requires_grad(g)) return;
    Tensor& gg = t.grad_buffer(g);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* dy = gy.ptr() + (i * c + ch) * hw;
        const double* xv = x.value().ptr() + (i * c + ch) * hw;
        double acc = 0.0;
        for (std::size_t q = 0; q < hw; ++q) acc += dy[q] * xv[q];
        gg[ch] += acc;
      }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t padding) {
  const auto g = detail::conv_geometry(x.shape(), w.shape(), stride, padding);
  if (bias.valid() && bias.value().size() != g.c_out) throw ShapeError("conv2d: bias size mismatch");
  const std::size_t kk = g.c_in * g.k * g.k;
  const std::size_t hw_out = g.h_out * g.w_out;
  const std::size_t in_stride = g.c_in * g.h * g.w;
  const bool direct = g.k == 1 && g.stride == 1 && g.pad == 0;
  Tensor y({g.n, g.c_out, g.h_out, g.w_out});
  std::vector<double> col(direct ? 0 : kk * hw_out);
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* src = x.value().ptr() + n * in_stride;
    double* out = y.ptr() + n * g.c_out * hw_out;
    if (bias.valid()) {
      for (std::size_t c = 0; c < g.c_out; ++c) std::fill_n(out + c * hw_out, hw_out, bias.value()[c]);
    }
    const double* b = src;
    if (!direct) {
      detail::im2col(src, g, col.data());
      b = col.data();
    }
    detail::gemm(false, false, g.c_out, hw_out, kk, 1.0, w.value().ptr(), b, bias.valid() ? 1.0 : 0.0, out);
  }
  std::vector<Var> inputs{x, w};
  if (bias.valid()) inputs.push_back(bias);
  return x.tape().record(std::move(y), inputs, [x, w, bias, g, kk, hw_out, in_stride, direct](Tape& t, const Tensor& gy) {
    const bool need_x = t.requires_grad(x), need_w = t.requires_grad(w);
    std::vector<double> col(direct ? 0 : kk * hw_out);
    for (std::size_t n = 0; n < g.n; ++n) {
      const double* dy = gy.ptr() + n * g.c_out * hw_out;
      if (need_w) {
        const double* b = x.value().ptr() + n * in_stride;
        if (!direct) {
          detail::im2col(b, g, col.data());
          b = col.data();
        }
        detail::gemm(false, true, g.c_out, kk, hw_out, 1.0, dy, b, 1.0, t.grad_buffer(w).ptr());
      }
      if (need_x) {
        double* dx = t.grad_buffer(x).ptr() + n * in_stride;
        if (direct) {
          detail::gemm(true, false, kk, hw_out, g.c_out, 1.0, w.value().ptr(), dy, 1.0, dx);
        } else {
          detail::gemm(true, false, kk, hw_out, g.c_out, 1.0, w.value().ptr(), dy, 0.0, col.data());
          detail::col2im_add(col.data(), g, dx);
        }
      }
    }
    if (bias.valid() && t.requires_grad(bias)) {
      Tensor& gb = t.grad_buffer(bias);
      for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t c = 0; c < g.c_out; ++c) {
          const double* p = gy.ptr() + (n * g.c_out + c) * hw_out;
          double s = 0.0;
          for (std::size_t q = 0; q < hw_out; ++q) s += p[q];
          gb[c] += s;
        }
    }
  });
}

Var upsample_nearest(const Var& x, std::size_t fh, std::size_t fw) {
  channel_count(x.shape());
  return x.tape().record(dcdsm::upsample_nearest(x.value(), fh, fw), {x}, [x, fh, fw](Tape& t, const Tensor& g) {
    const Shape& s = x.shape();
    const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t p = 0; p < planes; ++p) {
      const double* src = g.ptr() + p * h * fh * w * fw;
      double* dst = gx.ptr() + p * h * w;
      for (std::size_t i = 0; i < h * fh; ++i)
        for (std::size_t j = 0; j < w * fw; ++j) dst[(i / fh) * w + j / fw] += src[i * w * fw + j];
    }
  });
}

Var upsample_bilinear2x(const Var& x) {
  channel_count(x.shape());
  return x.tape().record(dcdsm::upsample_bilinear2x(x.value()), {x}, [x](Tape& t, const Tensor& g) {
    const Shape& s = x.shape();
    const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t p = 0; p < planes; ++p) bilinear_adjoint_add(g.ptr() + p * 4 * h * w, h, w, gx.ptr() + p * h * w);
  });
}

Var avgpool(const Var& x, std::size_t kh, std::size_t kw) {
  channel_count(x.shape());
  return x.tape().record(dcdsm::avgpool(x.value(), kh, kw), {x}, [x, kh, kw](Tape& t, const Tensor& g) {
    const Shape& s = x.shape();
    const std::size_t planes = s[0] * s[1], h = s[2], w = s[3], wo = w / kw;
    const double inv = 1.0 / static_cast<double>(kh * kw);
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t p = 0; p < planes; ++p) {
      const double* src = g.ptr() + p * (h / kh) * wo;
      double* dst = gx.ptr() + p * h * w;
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) dst[i * w + j] += src[(i / kh) * wo + j / kw] * inv;
    }
  });
}

Var mirror_bins(const Var& x) {
  return x.tape().record(dcdsm::mirror_bins(x.value()), {x},
                         [x](Tape& t, const Tensor& g) { t.accumulate(x, dcdsm::mirror_bins(g)); });
}

}  // namespace ad

}  // namespace dcdsm
