#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcdsm/error.hpp"
#include "dcdsm/optim.hpp"
#include "dcdsm/rng.hpp"
#include "dcdsm/wavelet.hpp"

using namespace dcdsm;

TEST_CASE("constant image has only an approximation band") {
  const auto s = dwt2(Tensor({2, 4, 6}, 0.75));
  CHECK(s.ll == Tensor({2, 2, 3}, 1.5));
  CHECK(s.lh == Tensor({2, 2, 3}));
  CHECK(s.hl == Tensor({2, 2, 3}));
  CHECK(s.hh == Tensor({2, 2, 3}));
}

TEST_CASE("2x2 block formulas") {
  const auto s = dwt2(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  CHECK(s.ll.item() == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(s.lh.item() == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(s.hl.item() == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(s.hh.item() == doctest::Approx(0.0));
  const Tensor back = idwt2({Tensor({1, 1, 1}, 5.0), Tensor({1, 1, 1}, -1.0), Tensor({1, 1, 1}, -2.0), Tensor({1, 1, 1})});
  CHECK(max_abs_diff(back, Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4})) < 1e-15);
}

TEST_CASE("odd extents are rejected") {
  CHECK_THROWS_AS(dwt2(Tensor({3, 5, 6})), ShapeError);
  CHECK_THROWS_AS(dwt2(Tensor({3, 4, 7})), ShapeError);
  CHECK_THROWS_AS(idwt2({Tensor({1, 2, 2}), Tensor({1, 2, 2}), Tensor({1, 2, 3}), Tensor({1, 2, 2})}), ShapeError);
}

TEST_CASE("zero subbands reconstruct zero") {
  const Tensor z({3, 4, 4});
  CHECK(idwt2({z, z, z, z}) == Tensor({3, 8, 8}));
}

TEST_CASE("perfect reconstruction and energy preservation") {
  RngStream rng(12, 0);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = randn(rng, {3, 32, 32});
    const auto s = dwt2(x);
    CHECK(max_abs_diff(idwt2(s), x) < 1e-12);
    const double e = sum_squares(s.ll) + sum_squares(s.lh) + sum_squares(s.hl) + sum_squares(s.hh);
    CHECK(std::abs(e - sum_squares(x)) / sum_squares(x) < 1e-10);
  }
}

TEST_CASE("batched input keeps the batch axis") {
  RngStream rng(1, 0);
  const Tensor x = randn(rng, {2, 3, 8, 8});
  const auto s = dwt2(x);
  CHECK(s.hh.shape() == Shape{2, 3, 4, 4});
  CHECK(dwt2(batch_item(x, 1)).hl == batch_item(s.hl, 1));
}

TEST_CASE("differentiable transforms pass gradcheck") {
  RngStream rng(2, 0);
  ParamSet p;
  p.add("x", randn(rng, {2, 3, 8, 8}));
  const Tensor w1 = randn(rng, {2, 3, 4, 4}), w2 = randn(rng, {2, 3, 4, 4}), w3 = randn(rng, {2, 3, 8, 8});
  const auto r = gradcheck(
      [&](Tape& t) {
        const auto s = ad::dwt2(t.param(p, "x"));
        Var y = ad::idwt2({ad::mul(s.ll, t.constant(w1)), s.hl, ad::mul(s.lh, t.constant(w2)), s.hh});
        return ad::sum(ad::mul(y, t.constant(w3)));
      },
      p);
  CHECK(r.max_rel_err < 1e-8);
}
