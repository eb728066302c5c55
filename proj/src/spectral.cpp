#include "dcdsm/spectral.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dcdsm/error.hpp"

namespace dcdsm {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void check_fft_shape(const Shape& s, const char* what) {
  if (s.size() < 2) throw ShapeError(std::string(what) + ": need at least two axes, got " + shape_str(s));
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (!is_pow2(h) || !is_pow2(w))
    throw ShapeError(std::string(what) + ": extents must be powers of two, got " + shape_str(s));
}

// In-place iterative radix-2 transform of a strided sequence. sign = -1 is
// the forward transform.
void fft1d(std::complex<double>* x, std::size_t n, std::size_t stride, int sign) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i * stride], x[j * stride]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t k = 0; k < len / 2; ++k) {
      const std::complex<double> wk(std::cos(ang * k), std::sin(ang * k));
      for (std::size_t i = 0; i < n; i += len) {
        auto& a = x[(i + k) * stride];
        auto& b = x[(i + k + len / 2) * stride];
        const auto t = wk * b;
        b = a - t;
        a += t;
      }
    }
  }
}

ComplexTensor transform(const Tensor& re, const Tensor* im, int sign, const char* what) {
  check_fft_shape(re.shape(), what);
  const Shape& s = re.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  const std::size_t planes = re.size() / (h * w);
  std::vector<std::complex<double>> buf(h * w);
  ComplexTensor out{Tensor(s), Tensor(s)};
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t o = p * h * w;
    for (std::size_t q = 0; q < h * w; ++q) buf[q] = {re[o + q], im ? (*im)[o + q] : 0.0};
    for (std::size_t i = 0; i < h; ++i) fft1d(buf.data() + i * w, w, 1, sign);
    for (std::size_t j = 0; j < w; ++j) fft1d(buf.data() + j, h, w, sign);
    for (std::size_t q = 0; q < h * w; ++q) {
      out.re[o + q] = buf[q].real();
      out.im[o + q] = buf[q].imag();
    }
  }
  return out;
}

void check_complex(const ComplexTensor& x, const char* what) {
  if (x.re.shape() != x.im.shape())
    throw InvalidArgument(std::string(what) + ": re/im shapes differ: " + shape_str(x.re.shape()) + " vs " +
                          shape_str(x.im.shape()));
}

double plane_size(const Shape& s) { return static_cast<double>(s[s.size() - 2] * s[s.size() - 1]); }

}  // namespace

ComplexTensor fft2(const Tensor& x) { return transform(x, nullptr, -1, "fft2"); }

ComplexTensor fft2(const ComplexTensor& x) {
  check_complex(x, "fft2");
  return transform(x.re, &x.im, -1, "fft2");
}

ComplexTensor ifft2_complex(const ComplexTensor& spectrum) {
  check_complex(spectrum, "ifft2");
  ComplexTensor out = transform(spectrum.re, &spectrum.im, +1, "ifft2");
  const double inv = 1.0 / plane_size(spectrum.shape());
  out.re *= inv;
  out.im *= inv;
  return out;
}

Tensor ifft2(const ComplexTensor& spectrum) {
  ComplexTensor out = ifft2_complex(spectrum);
  const double residue = max_abs(out.im);
  if (!(residue <= kImagResidueLimit))
    throw NumericalContractError("ifft2: imaginary residue " + std::to_string(residue) + " exceeds " +
                                 std::to_string(kImagResidueLimit) + " (spectrum is not Hermitian)");
  return std::move(out.re);
}

WfcaLayer::WfcaLayer(WfcaConfig config, std::string prefix) : config_(config), prefix_(std::move(prefix)) {
  if (config_.channels == 0 || config_.grid_h == 0 || config_.grid_w == 0)
    throw InvalidArgument("wfca: channels and grid extents must be positive");
}

void WfcaLayer::declare(ParamSet& params, RngStream* rng) const {
  const std::size_t d = config_.descriptor_size(), hid = config_.hidden_size();
  if (rng) {
    params.add(name("fc1.w"), randn(*rng, {hid, d}) * std::sqrt(2.0 / static_cast<double>(d)));
    params.add(name("fc1.b"), Tensor({hid}));
    params.add(name("fc2.w"), randn(*rng, {d, hid}) * std::sqrt(1.0 / static_cast<double>(hid)));
    params.add(name("fc2.b"), Tensor({d}));
  } else {
    params.add(name("fc1.w"), Tensor({hid, d}));
    params.add(name("fc1.b"), Tensor({hid}));
    params.add(name("fc2.w"), Tensor({d, hid}));
    params.add(name("fc2.b"), Tensor({d}));
  }
}

void WfcaLayer::check_extents(const Shape& s) const {
  if (s.size() != 4) throw ShapeError("wfca: expected [N,C,H,W], got " + shape_str(s));
  if (s[1] != config_.channels)
    throw InvalidArgument("wfca: configured for " + std::to_string(config_.channels) + " channels, got " +
                          shape_str(s));
  if (s[2] % config_.grid_h != 0 || s[3] % config_.grid_w != 0)
    throw InvalidArgument("wfca: grid " + std::to_string(config_.grid_h) + "x" + std::to_string(config_.grid_w) +
                          " does not divide spectrum " + shape_str(s));
}

Var WfcaLayer::gate_field(Tape& tape, const ParamSet& params, const Var& re, const Var& im) const {
  const Shape s = re.shape();
  check_extents(s);
  const std::size_t n = s[0], kh = s[2] / config_.grid_h, kw = s[3] / config_.grid_w;
  Var desc = ad::avgpool(ad::magnitude(re, im), kh, kw);
  desc = ad::reshape(desc, {n, config_.descriptor_size()});
  Var hidden = ad::relu(ad::linear(desc, tape.param(params, name("fc1.w")), tape.param(params, name("fc1.b"))));
  Var g = ad::sigmoid(ad::linear(hidden, tape.param(params, name("fc2.w")), tape.param(params, name("fc2.b"))));
  g = ad::upsample_nearest(ad::reshape(g, {n, config_.channels, config_.grid_h, config_.grid_w}), kh, kw);
  return ad::scale(ad::add(g, ad::mirror_bins(g)), 0.5);
}

std::pair<Var, Var> WfcaLayer::forward(Tape& tape, const ParamSet& params, const Var& re, const Var& im) const {
  const Var gate = gate_field(tape, params, re, im);
  return {ad::mul(re, gate), ad::mul(im, gate)};
}

Tensor WfcaLayer::gates(const ParamSet& params, const ComplexTensor& spectrum) const {
  check_complex(spectrum, "wfca");
  Tape tape(false);
  return gate_field(tape, params, tape.constant(as_batch(spectrum.re)), tape.constant(as_batch(spectrum.im))).value();
}

WfcaParams WfcaParams::zeros(WfcaConfig config) {
  WfcaParams p{WfcaLayer(config, ""), {}};
  p.layer.declare(p.params, nullptr);
  return p;
}

WfcaParams WfcaParams::random(WfcaConfig config, RngStream& rng) {
  WfcaParams p{WfcaLayer(config, ""), {}};
  p.layer.declare(p.params, &rng);
  return p;
}

ComplexTensor wfca(const ComplexTensor& spectrum, const WfcaParams& p) {
  check_complex(spectrum, "wfca");
  Tape tape(false);
  auto [re, im] = p.layer.forward(tape, p.params, tape.constant(as_batch(spectrum.re)),
                                  tape.constant(as_batch(spectrum.im)));
  ComplexTensor out{re.value(), im.value()};
  if (spectrum.re.rank() == 3) {
    out.re = out.re.reshaped(spectrum.re.shape());
    out.im = out.im.reshaped(spectrum.im.shape());
  }
  return out;
}

namespace ad {

std::pair<Var, Var> fft2(const Var& x) {
  ComplexTensor X = dcdsm::fft2(x.value());
  Tape& tape = x.tape();
  const Shape s = x.shape();
  const double n = plane_size(s);
  Var re = tape.record(std::move(X.re), {x}, [x, s, n](Tape& t, const Tensor& g) {
    t.accumulate(x, ifft2_complex({g, Tensor(s)}).re * n);
  });
  Var im = tape.record(std::move(X.im), {x}, [x, s, n](Tape& t, const Tensor& g) {
    t.accumulate(x, ifft2_complex({Tensor(s), g}).re * n);
  });
  return {re, im};
}

Var ifft2_real(const Var& re, const Var& im) {
  Tensor y = dcdsm::ifft2({re.value(), im.value()});
  const double n = plane_size(re.shape());
  return re.tape().record(std::move(y), {re, im}, [re, im, n](Tape& t, const Tensor& g) {
    ComplexTensor G = dcdsm::fft2(g);
    t.accumulate(re, G.re * (1.0 / n));
    t.accumulate(im, G.im * (1.0 / n));
  });
}

}  // namespace ad

}  // namespace dcdsm
