#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcdsm/error.hpp"
#include "dcdsm/rng.hpp"
#include "dcdsm/tensor.hpp"
#include "oracles.hpp"

using namespace dcdsm;

TEST_CASE("tensor construction and indexing") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  t.at({1, 2}) = 4.0;
  CHECK(t[5] == 4.0);
  CHECK_THROWS_AS(t.at({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}), InvalidArgument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), InvalidArgument);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("elementwise ops and reductions") {
  Tensor a({3}, std::vector<double>{1, -2, 3});
  Tensor b({3}, std::vector<double>{4, 5, -6});
  CHECK((a + b) == Tensor({3}, std::vector<double>{5, 3, -3}));
  CHECK((a * b) == Tensor({3}, std::vector<double>{4, -10, -18}));
  CHECK(sum(a) == 2.0);
  CHECK(sum_squares(a) == 14.0);
  CHECK(max_abs(b) == 6.0);
  CHECK(mse(a, a) == 0.0);
  CHECK(axpby(2.0, a, -1.0, b) == Tensor({3}, std::vector<double>{-2, -9, 12}));
  CHECK_THROWS_AS(a + Tensor({2}), InvalidArgument);
}

TEST_CASE("stack and batch_item are inverse") {
  RngStream rng(3, 0);
  std::vector<Tensor> items{randn(rng, {2, 4, 4}), randn(rng, {2, 4, 4})};
  const Tensor s = stack(items);
  CHECK(s.shape() == Shape{2, 2, 4, 4});
  CHECK(batch_item(s, 1) == items[1]);
}

TEST_CASE("gemm matches naive products for every transpose combination") {
  RngStream rng(11, 0);
  for (std::size_t n : {1, 7, 64, 200, 257})
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb) {
        const std::size_t m = 9, k = 17;
        const Tensor a = randn(rng, ta ? Shape{k, m} : Shape{m, k});
        const Tensor b = randn(rng, tb ? Shape{n, k} : Shape{k, n});
        Tensor c = randn(rng, {m, n});
        const Tensor c0 = c;
        detail::gemm(ta, tb, m, n, k, 0.5, a.ptr(), b.ptr(), 2.0, c.ptr());
        double err = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t q = 0; q < k; ++q) s += (ta ? a[q * m + i] : a[i * k + q]) * (tb ? b[j * k + q] : b[q * n + j]);
            err = std::max(err, std::abs(0.5 * s + 2.0 * c0[i * n + j] - c[i * n + j]));
          }
        CHECK(err < 1e-12);
      }
}

TEST_CASE("conv2d identity kernel") {
  RngStream rng(1, 1);
  const Tensor x = randn(rng, {2, 3, 5});
  CHECK_THROWS_AS(conv2d(x, Tensor({1, 1, 1, 1}, 1.0), 1, 0), ShapeError);
  const Tensor img = randn(rng, {1, 4, 4});
  CHECK(conv2d(img, Tensor({1, 1, 1, 1}, 1.0), 1, 0) == img);
}

TEST_CASE("conv2d all-ones 3x3 hand values") {
  const Tensor y = conv2d(Tensor({1, 3, 3}, 1.0), Tensor({1, 1, 3, 3}, 1.0), 1, 1);
  CHECK(y.shape() == Shape{1, 3, 3});
  CHECK(y.at({0, 1, 1}) == 9.0);
  CHECK(y.at({0, 0, 0}) == 4.0);
  CHECK(y.at({0, 2, 2}) == 4.0);
  CHECK(y.at({0, 0, 1}) == 6.0);
}

TEST_CASE("conv2d stride 2 shape and values") {
  RngStream rng(2, 2);
  const Tensor x = randn(rng, {1, 4, 4});
  const Tensor k = randn(rng, {1, 1, 3, 3});
  const Tensor y = conv2d(x, k, 2, 1);
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(max_abs_diff(as_batch(y), oracle::conv2d(as_batch(x), k, 2, 1)) < 1e-12);
}

TEST_CASE("conv2d matches direct summation on random batches") {
  RngStream rng(5, 5);
  for (std::size_t stride : {1, 2})
    for (std::size_t hw : {2, 4, 8, 9}) {
      const Tensor x = randn(rng, {2, 5, hw, hw});
      const Tensor k = randn(rng, {4, 5, 3, 3});
      CHECK(max_abs_diff(conv2d(x, k, stride, 1), oracle::conv2d(x, k, stride, 1)) < 1e-12);
    }
}

TEST_CASE("conv2d rejects geometry that would drop input") {
  // (5 + 0 - 1) % 2 == 0 is fine, (6 - 1) % 2 == 1 > pad 0 is not.
  CHECK_NOTHROW(conv2d(Tensor({1, 5, 5}), Tensor({1, 1, 1, 1}), 2, 0));
  CHECK_THROWS_AS(conv2d(Tensor({1, 6, 6}), Tensor({1, 1, 1, 1}), 2, 0), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor({2, 4, 4}), Tensor({1, 1, 3, 3}), 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 4, 4}), Tensor({1, 1, 2, 2}), 1, 0), ShapeError);
}
