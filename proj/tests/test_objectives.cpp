#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dcdsm/error.hpp"
#include "dcdsm/gradcheck_targets.hpp"
#include "dcdsm/objectives.hpp"
#include "dcdsm/rng.hpp"

using namespace dcdsm;

namespace {

double loop_mse(const Tensor& a, const Tensor& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<double>(s / a.size());
}

}  // namespace

TEST_CASE("diffusion loss") {
  RngStream rng(1, 0);
  const Tensor e1 = randn(rng, {2, 3, 8, 8}), e2 = randn(rng, {2, 3, 8, 8});
  CHECK(diffusion_loss(e1, e1, e2, e2) == 0.0);
  CHECK(diffusion_loss(e1, e1 + Tensor(e1.shape(), 1.0), e2, e2 + Tensor(e2.shape(), 1.0)) ==
        doctest::Approx(2.0).epsilon(1e-14));
  const Tensor p1 = randn(rng, e1.shape()), p2 = randn(rng, e2.shape());
  const double ref = loop_mse(e1, p1) + loop_mse(e2, p2);
  CHECK(std::abs(diffusion_loss(e1, p1, e2, p2) - ref) / ref < 1e-12);
  CHECK_THROWS_AS(diffusion_loss(e1, randn(rng, {2, 3, 8, 4}), e2, p2), InvalidArgument);
}

TEST_CASE("zero suppression gives exactly two") {
  RngStream rng(2, 0);
  const Tensor x1 = randn(rng, {3, 8, 8}), x2 = randn(rng, {3, 8, 8}), r1 = randn(rng, {3, 8, 8}),
               r2 = randn(rng, {3, 8, 8}), z({3, 8, 8});
  const WfenLossValue v = wfen_loss(x1, x2, z, z, r1, r2);
  CHECK(v.value == 2.0);
  CHECK(v.clamp_activations == 0);
}

TEST_CASE("perfect suppression gives 2 * 2^-m") {
  for (double m : {0.25, 1.0, 3.0, 25.0}) {
    RngStream rng(3, 0);
    const Tensor r1 = randn(rng, {3, 8, 8}), r2 = randn(rng, {3, 8, 8});
    // x_t - ref = +-sqrt(m) everywhere, so mse(x_t, ref) = m.
    Tensor d({3, 8, 8});
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (i % 2 ? 1.0 : -1.0) * std::sqrt(m);
    const Tensor x1 = r1 + d, x2 = r2 + d;
    const WfenLossValue v = wfen_loss(x1, x2, d, d, r1, r2);
    CHECK(v.value == doctest::Approx(2.0 * std::exp2(-std::min(m, 20.0))).epsilon(1e-12));
    CHECK(v.clamp_activations == (m > 20.0 ? 2u : 0u));
  }
}

TEST_CASE("suppression loss stays within the clamp bounds") {
  RngStream rng(4, 0);
  for (int i = 0; i < 50; ++i) {
    const double s = std::exp2(rng.uniform(-6.0, 6.0));
    Tensor t[6];
    for (auto& x : t) x = randn(rng, {3, 8, 8}) * s;
    const double v = wfen_loss(t[0], t[1], t[2], t[3], t[4], t[5]).value;
    CHECK(v > 0.0);
    CHECK(v <= 2.0 * std::exp2(20.0));
  }
  const Tensor z({3, 8, 8}), big({3, 8, 8}, 100.0);
  const WfenLossValue v = wfen_loss(z, z, big, big, z, z);
  CHECK(v.value == 2.0 * std::exp2(20.0));
  CHECK(v.clamp_activations == 2);
}

TEST_CASE("suppression loss is monotone in branch-1 improvement") {
  RngStream rng(5, 0);
  const Tensor x1 = randn(rng, {3, 8, 8}), x2 = randn(rng, {3, 8, 8}), r1 = randn(rng, {3, 8, 8}),
               r2 = randn(rng, {3, 8, 8}), o1 = randn(rng, {3, 8, 8}) * 0.1;
  const Tensor dir = x1 - r1;
  double prev = wfen_loss(x1, x2, o1, Tensor({3, 8, 8}), r1, r2).value;
  for (double k : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    const double v = wfen_loss(x1, x2, o1, dir * k, r1, r2).value;
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("batched loss averages per-sample values") {
  RngStream rng(6, 0);
  Tensor t[6];
  for (auto& x : t) x = randn(rng, {3, 3, 8, 8}) * 0.5;
  double mean = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    const double d1 = loop_mse(batch_item(t[0], n) - batch_item(t[3], n), batch_item(t[4], n)) -
                      loop_mse(batch_item(t[0], n), batch_item(t[4], n));
    const double d2 = loop_mse(batch_item(t[1], n) - batch_item(t[2], n), batch_item(t[5], n)) -
                      loop_mse(batch_item(t[1], n), batch_item(t[5], n));
    mean += (std::exp2(d1) + std::exp2(d2)) / 3.0;
  }
  CHECK(wfen_loss(t[0], t[1], t[2], t[3], t[4], t[5]).value == doctest::Approx(mean).epsilon(1e-12));

  Tape tape;
  const Var v = ad::wfen_loss(t[0], t[1], tape.constant(t[2]), tape.constant(t[3]), t[4], t[5]);
  CHECK(v.value().item() == doctest::Approx(mean).epsilon(1e-12));
  CHECK_THROWS_AS(wfen_loss(t[0], t[1], t[2], t[3], t[4], randn(rng, {3, 3, 8, 4})), InvalidArgument);
}

TEST_CASE("total loss") {
  CHECK(total_loss(0.0, 2.0, 3.0) == 2.0);
  CHECK(total_loss(1.0, 2.0, 3.0) == 5.0);
  CHECK(total_loss(2.0, 2.0, 3.0) - total_loss(1.0, 2.0, 3.0) == 3.0);
  CHECK_THROWS_AS(total_loss(1.0, 2.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(total_loss(1.0, 2.0, -1.0), InvalidArgument);
}

TEST_CASE("suppression loss passes gradcheck through both WFENs") {
  for (std::uint64_t seed : {0, 1, 2}) CHECK(gradcheck_target("wfen_loss", seed).max_rel_err < 1e-4);
}
