#include "dcdsm/wavelet.hpp"

#include "dcdsm/error.hpp"

namespace dcdsm {

namespace {

Shape half_shape(const Shape& s) {
  if (s.size() < 2) throw ShapeError("dwt2: need at least two axes, got " + shape_str(s));
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("dwt2: spatial extents must be even, got " + shape_str(s));
  Shape out = s;
  out[s.size() - 2] = h / 2;
  out[s.size() - 1] = w / 2;
  return out;
}

void analyze(const double* x, std::size_t planes, std::size_t h, std::size_t w, double* ll, double* lh, double* hl,
             double* hh) {
  const std::size_t hh2 = h / 2, wh = w / 2;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x + p * h * w;
    const std::size_t o = p * hh2 * wh;
    for (std::size_t i = 0; i < hh2; ++i) {
      const double* r0 = src + 2 * i * w;
      const double* r1 = r0 + w;
      for (std::size_t j = 0; j < wh; ++j) {
        const double a = r0[2 * j], b = r0[2 * j + 1], c = r1[2 * j], d = r1[2 * j + 1];
        const std::size_t q = o + i * wh + j;
        ll[q] = 0.5 * (a + b + c + d);
        lh[q] = 0.5 * (a - b + c - d);
        hl[q] = 0.5 * (a + b - c - d);
        hh[q] = 0.5 * (a - b - c + d);
      }
    }
  }
}

void synthesize(const double* ll, const double* lh, const double* hl, const double* hh, std::size_t planes,
                std::size_t hh2, std::size_t wh, double* x) {
  const std::size_t h = 2 * hh2, w = 2 * wh;
  for (std::size_t p = 0; p < planes; ++p) {
    double* dst = x + p * h * w;
    const std::size_t o = p * hh2 * wh;
    for (std::size_t i = 0; i < hh2; ++i) {
      double* r0 = dst + 2 * i * w;
      double* r1 = r0 + w;
      for (std::size_t j = 0; j < wh; ++j) {
        const std::size_t q = o + i * wh + j;
        const double s = ll[q], u = lh[q], v = hl[q], z = hh[q];
        r0[2 * j] = 0.5 * (s + u + v + z);
        r0[2 * j + 1] = 0.5 * (s - u + v - z);
        r1[2 * j] = 0.5 * (s + u - v - z);
        r1[2 * j + 1] = 0.5 * (s - u - v + z);
      }
    }
  }
}

}  // namespace

WaveletSubbands dwt2(const Tensor& x) {
  const Shape hs = half_shape(x.shape());
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  WaveletSubbands s{Tensor(hs), Tensor(hs), Tensor(hs), Tensor(hs)};
  analyze(x.ptr(), x.size() / (h * w), h, w, s.ll.ptr(), s.lh.ptr(), s.hl.ptr(), s.hh.ptr());
  return s;
}

Tensor idwt2(const WaveletSubbands& s) {
  const Shape& hs = s.ll.shape();
  if (s.lh.shape() != hs || s.hl.shape() != hs || s.hh.shape() != hs)
    throw ShapeError("idwt2: subband shapes differ: " + shape_str(s.ll.shape()) + ", " + shape_str(s.lh.shape()) +
                          ", " + shape_str(s.hl.shape()) + ", " + shape_str(s.hh.shape()));
  if (hs.size() < 2) throw ShapeError("idwt2: need at least two axes");
  Shape full = hs;
  full[hs.size() - 2] *= 2;
  full[hs.size() - 1] *= 2;
  Tensor x(full);
  const std::size_t hh2 = hs[hs.size() - 2], wh = hs[hs.size() - 1];
  synthesize(s.ll.ptr(), s.lh.ptr(), s.hl.ptr(), s.hh.ptr(), s.ll.size() / (hh2 * wh), hh2, wh, x.ptr());
  return x;
}

namespace ad {

// The transform is orthonormal, so each adjoint is the other transform.

SubbandVars dwt2(const Var& x) {
  WaveletSubbands s = dcdsm::dwt2(x.value());
  Tape& tape = x.tape();
  // Each band is its own node; its adjoint synthesizes from that band alone.
  const Shape hs = s.ll.shape();
  auto band = [&](Tensor t, int which) {
    return tape.record(std::move(t), {x}, [x, hs, which](Tape& tp, const Tensor& g) {
      const Tensor zero(hs);
      WaveletSubbands gs{zero, zero, zero, zero};
      (which == 0 ? gs.ll : which == 1 ? gs.lh : which == 2 ? gs.hl : gs.hh) = g;
      tp.accumulate(x, dcdsm::idwt2(gs));
    });
  };
  return {band(std::move(s.ll), 0), band(std::move(s.lh), 1), band(std::move(s.hl), 2), band(std::move(s.hh), 3)};
}

Var idwt2(const SubbandVars& s) {
  Tensor x = dcdsm::idwt2({s.ll.value(), s.lh.value(), s.hl.value(), s.hh.value()});
  return s.ll.tape().record(std::move(x), {s.ll, s.lh, s.hl, s.hh}, [s](Tape& t, const Tensor& g) {
    WaveletSubbands gs = dcdsm::dwt2(g);
    t.accumulate(s.ll, gs.ll);
    t.accumulate(s.lh, gs.lh);
    t.accumulate(s.hl, gs.hl);
    t.accumulate(s.hh, gs.hh);
  });
}

}  // namespace ad

}  // namespace dcdsm
