#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcdsm/autodiff.hpp"
#include "dcdsm/error.hpp"
#include "dcdsm/gradcheck_targets.hpp"
#include "dcdsm/optim.hpp"
#include "dcdsm/rng.hpp"
#include "dcdsm/spectral.hpp"
#include "oracles.hpp"

using namespace dcdsm;

TEST_CASE("constant image concentrates in the DC bin") {
  const ComplexTensor X = fft2(Tensor({1, 4, 8}, 0.25));
  CHECK(X.re[0] == doctest::Approx(0.25 * 32));
  for (std::size_t i = 1; i < X.re.size(); ++i) {
    CHECK(std::abs(X.re[i]) < 1e-9);
    CHECK(std::abs(X.im[i]) < 1e-9);
  }
}

TEST_CASE("impulse has a flat spectrum") {
  Tensor x({1, 8, 8});
  x[0] = 1.0;
  const ComplexTensor X = fft2(x);
  CHECK(max_abs_diff(X.re, Tensor({1, 8, 8}, 1.0)) < 1e-12);
  CHECK(max_abs(X.im) < 1e-12);
}

TEST_CASE("fft2 matches the naive DFT") {
  RngStream rng(4, 0);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 4}, {4, 4}, {8, 2}, {16, 16}, {8, 16}}) {
    const Tensor x = randn(rng, {2, h, w});
    const ComplexTensor X = fft2(x);
    for (std::size_t p = 0; p < 2; ++p) {
      std::vector<double> plane(x.data().begin() + static_cast<long>(p * h * w),
                                x.data().begin() + static_cast<long>((p + 1) * h * w));
      const auto ref = oracle::dft2(plane, h, w);
      double err = 0.0;
      for (std::size_t q = 0; q < h * w; ++q)
        err = std::max({err, std::abs(ref[q].real() - X.re[p * h * w + q]), std::abs(ref[q].imag() - X.im[p * h * w + q])});
      CHECK(err < 1e-9);
    }
  }
}

TEST_CASE("Parseval against the naive DFT") {
  RngStream rng(5, 0);
  const Tensor x = randn(rng, {1, 8, 8});
  const auto ref = oracle::dft2(std::vector<double>(x.data().begin(), x.data().end()), 8, 8);
  double spec = 0.0;
  for (const auto& c : ref) spec += std::norm(c);
  CHECK(std::abs(sum_squares(x) - spec / 64.0) / sum_squares(x) < 1e-10);
  const ComplexTensor X = fft2(x);
  CHECK(std::abs(sum_squares(x) - (sum_squares(X.re) + sum_squares(X.im)) / 64.0) / sum_squares(x) < 1e-10);
}

TEST_CASE("inverse transform") {
  RngStream rng(6, 0);
  const Tensor x = randn(rng, {3, 16, 16});
  CHECK(max_abs_diff(ifft2(fft2(x)), x) < 1e-9);
  CHECK(ifft2({Tensor({1, 4, 4}), Tensor({1, 4, 4})}) == Tensor({1, 4, 4}));
  Tensor dc({1, 4, 8});
  dc[0] = 32.0;
  CHECK(max_abs_diff(ifft2({dc, Tensor({1, 4, 8})}), Tensor({1, 4, 8}, 1.0)) < 1e-12);
}

TEST_CASE("non-Hermitian spectrum is refused") {
  Tensor im({1, 4, 4});
  im[1] = 1.0;
  CHECK_THROWS_AS(ifft2({Tensor({1, 4, 4}), im}), NumericalContractError);
  CHECK_NOTHROW(ifft2_complex({Tensor({1, 4, 4}), im}));
}

TEST_CASE("non power-of-two extents are refused") {
  CHECK_THROWS_AS(fft2(Tensor({1, 6, 8})), ShapeError);
  CHECK_THROWS_AS(fft2(Tensor({1, 8, 12})), ShapeError);
}

TEST_CASE("zero gating parameters halve the spectrum") {
  RngStream rng(7, 0);
  const ComplexTensor X = fft2(randn(rng, {3, 8, 8}));
  const ComplexTensor Y = wfca(X, WfcaParams::zeros({3, 4, 4, 0}));
  CHECK(Y.re == X.re * 0.5);
  CHECK(Y.im == X.im * 0.5);
}

TEST_CASE("saturated gates pass the spectrum through") {
  RngStream rng(8, 0);
  const ComplexTensor X = fft2(randn(rng, {3, 8, 8}));
  WfcaParams p = WfcaParams::zeros({3, 2, 2, 0});
  p.params.value("fc2.b").fill(20.0);
  const ComplexTensor Y = wfca(X, p);
  for (std::size_t i = 0; i < X.re.size(); ++i) {
    CHECK(std::abs(Y.re[i] - X.re[i]) <= 1e-8 * std::abs(X.re[i]) + 1e-300);
    CHECK(std::abs(Y.im[i] - X.im[i]) <= 1e-8 * std::abs(X.im[i]) + 1e-300);
  }
}

TEST_CASE("WFCA matches a scalar evaluation") {
  RngStream rng(9, 0);
  const std::size_t H = 8, W = 8, G = 2, D = 4, hid = 3;
  const ComplexTensor X = fft2(randn(rng, {1, H, W}));
  WfcaParams p = WfcaParams::random({1, G, G, hid}, rng);
  p.params.value("fc1.b") = randn(rng, {hid});
  p.params.value("fc2.b") = randn(rng, {D});
  const Tensor &w1 = p.params.value("fc1.w"), &b1 = p.params.value("fc1.b");
  const Tensor &w2 = p.params.value("fc2.w"), &b2 = p.params.value("fc2.b");

  double desc[D] = {};
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < W; ++v) {
      const std::size_t q = u * W + v;
      desc[(u / 4) * G + v / 4] += std::hypot(X.re[q], X.im[q]) / 16.0;
    }
  double hidden[hid], gate[D];
  for (std::size_t j = 0; j < hid; ++j) {
    double z = b1[j];
    for (std::size_t i = 0; i < D; ++i) z += w1[j * D + i] * desc[i];
    hidden[j] = z > 0 ? z : 0.0;
  }
  for (std::size_t i = 0; i < D; ++i) {
    double z = b2[i];
    for (std::size_t j = 0; j < hid; ++j) z += w2[i * hid + j] * hidden[j];
    gate[i] = oracle::sigmoid(z);
  }
  auto g = [&](std::size_t u, std::size_t v) { return gate[(u / 4) * G + v / 4]; };

  const ComplexTensor Y = wfca(X, p);
  double err = 0.0;
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < W; ++v) {
      const double sym = 0.5 * (g(u, v) + g((H - u) % H, (W - v) % W));
      const std::size_t q = u * W + v;
      err = std::max({err, std::abs(Y.re[q] - sym * X.re[q]), std::abs(Y.im[q] - sym * X.im[q])});
    }
  CHECK(err < 1e-12);
}

TEST_CASE("gated real spectrum stays real after the inverse") {
  RngStream rng(10, 0);
  const Tensor x = randn(rng, {3, 8, 8});
  const ComplexTensor Y = wfca(fft2(x), WfcaParams::random({3, 4, 4, 0}, rng));
  CHECK_NOTHROW(ifft2(Y));
  CHECK(max_abs(ifft2_complex(Y).im) < 1e-12);
}

TEST_CASE("WFCA configuration errors") {
  CHECK_THROWS_AS(wfca(fft2(Tensor({2, 8, 8})), WfcaParams::zeros({3, 4, 4, 0})), InvalidArgument);
  CHECK_THROWS_AS(wfca(fft2(Tensor({3, 8, 8})), WfcaParams::zeros({3, 3, 3, 0})), InvalidArgument);
}

TEST_CASE("spectral transforms pass gradcheck") {
  RngStream rng(11, 0);
  ParamSet p;
  p.add("x", randn(rng, {2, 3, 8, 8}));
  const Tensor w = randn(rng, {2, 3, 8, 8});
  WfcaParams gate = WfcaParams::random({3, 2, 2, 0}, rng);
  const auto r = gradcheck(
      [&](Tape& t) {
        auto [re, im] = ad::fft2(t.param(p, "x"));
        auto [gr, gi] = gate.layer.forward(t, gate.params, re, im);
        return ad::mean(ad::mul(ad::ifft2_real(gr, gi), t.constant(w)));
      },
      p);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("gating network passes gradcheck") {
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto r = gradcheck_target("wfca", seed);
    CHECK(r.max_rel_err < 1e-4);
  }
}
