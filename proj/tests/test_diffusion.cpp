#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dcdsm/diffusion.hpp"
#include "dcdsm/error.hpp"

using namespace dcdsm;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

}  // namespace

TEST_CASE("linear schedule endpoints") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  CHECK(s.steps() == 1000);
  CHECK(s.beta(1) == doctest::Approx(1e-4).epsilon(1e-14));
  CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-14));
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1000) < 0.1);
  CHECK(s.sigma(500) * s.sigma(500) == doctest::Approx(s.beta(500)).epsilon(1e-14));
  for (int t = 2; t <= 1000; ++t) {
    CHECK(s.beta(t) > s.beta(t - 1));
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  }
}

TEST_CASE("cumulative product matches a long double loop") {
  const NoiseSchedule s = make_linear_schedule(200, 1e-4, 0.02);
  long double prod = 1.0L;
  for (int t = 1; t <= 200; ++t) {
    const long double beta = 1e-4L + (t - 1) * (0.02L - 1e-4L) / 199.0L;
    prod *= 1.0L - beta;
  }
  CHECK(std::abs(s.alpha_bar(200) - static_cast<double>(prod)) < 1e-13);
}

TEST_CASE("schedule argument errors") {
  CHECK_THROWS_AS(make_linear_schedule(0, 1e-4, 0.02), InvalidArgument);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.02), InvalidArgument);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.03, 0.02), InvalidArgument);
  CHECK_THROWS_AS(make_linear_schedule(10, 1e-4, 1.0), InvalidArgument);
  CHECK_NOTHROW(make_linear_schedule(1, 0.01, 0.01));
  const NoiseSchedule s = make_linear_schedule(10, 1e-4, 0.02);
  CHECK_THROWS_AS(s.beta(0), InvalidArgument);
  CHECK_THROWS_AS(s.alpha_bar(11), InvalidArgument);
  CHECK_THROWS_AS(s.alpha_bar(-1), InvalidArgument);
}

TEST_CASE("forward sample boundaries") {
  RngStream rng(3, 0);
  const NoiseSchedule s = make_linear_schedule(200, 1e-4, 0.02);
  const Tensor x0 = randn(rng, {3, 4, 4}), eps = randn(rng, {3, 4, 4});
  CHECK(forward_sample(x0, 0, eps, s) == x0);
  CHECK(max_abs_diff(forward_sample(x0, 77, Tensor({3, 4, 4}), s), x0 * std::sqrt(s.alpha_bar(77))) < 1e-15);
  CHECK_THROWS_AS(forward_sample(x0, 1, Tensor({3, 4, 5}), s), InvalidArgument);
  CHECK_THROWS_AS(forward_sample(x0, 201, eps, s), InvalidArgument);

  const Tensor b0 = randn(rng, {2, 3, 4, 4}), be = randn(rng, {2, 3, 4, 4});
  const Tensor batched = forward_sample(b0, std::vector<int>{5, 150}, be, s);
  CHECK(batch_item(batched, 1) == forward_sample(batch_item(b0, 1), 150, batch_item(be, 1), s));
}

TEST_CASE("forward sample moments at the terminal step") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  RngStream rng(4, 0);
  const Tensor x0 = randn(rng, {8});
  const int trials = 10000;
  std::vector<std::vector<double>> draws(8);
  Tensor eps({8});
  for (int i = 0; i < trials; ++i) {
    rng.fill_normal(eps.data());
    const Tensor x = forward_sample(x0, 1000, eps, s);
    for (std::size_t p = 0; p < 8; ++p) draws[p].push_back(x[p]);
  }
  const double ab = s.alpha_bar(1000);
  for (std::size_t p = 0; p < 8; ++p) {
    const Moments m = moments(draws[p]);
    CHECK(std::abs(m.mean - std::sqrt(ab) * x0[p]) < 4.0 / std::sqrt(trials));
    CHECK(std::abs(m.var / (1.0 - ab) - 1.0) < 0.05);
  }
}

TEST_CASE("vanishing noise leaves the input unchanged") {
  const NoiseSchedule s = make_linear_schedule(5, 1e-12, 1e-12);
  RngStream rng(5, 0);
  const Tensor x = randn(rng, {3, 4, 4});
  CHECK(max_abs_diff(forward_step(x, 3, rng, s), x) < 1e-5);
  CHECK_THROWS_AS(forward_step(x, 0, rng, s), InvalidArgument);
  CHECK_THROWS_AS(forward_step(x, 6, rng, s), InvalidArgument);
}

TEST_CASE("iterated steps match the closed form") {
  const NoiseSchedule s = make_linear_schedule(200, 1e-4, 0.02);
  RngStream rng(6, 0);
  const Tensor x0 = Tensor({2}, std::vector<double>{0.8, -0.5});
  const int trials = 10000;
  for (int t : {1, 7, 40}) {
    std::vector<double> stepped, closed;
    Tensor eps({2});
    for (int i = 0; i < trials; ++i) {
      Tensor x = x0;
      for (int k = 1; k <= t; ++k) x = forward_step(x, k, rng, s);
      stepped.push_back(x[0]);
      rng.fill_normal(eps.data());
      closed.push_back(forward_sample(x0, t, eps, s)[0]);
    }
    const Moments a = moments(stepped), b = moments(closed);
    const double var = 1.0 - s.alpha_bar(t);
    CHECK(std::abs(a.mean - b.mean) < 4.0 * std::sqrt(2.0 * var / trials));
    CHECK(std::abs(a.var - b.var) < 4.0 * var * std::sqrt(4.0 / trials));
  }
}

TEST_CASE("single step from zero has variance beta") {
  const NoiseSchedule s = make_linear_schedule(200, 1e-4, 0.02);
  RngStream rng(7, 0);
  const Tensor x = forward_step(Tensor({100000}), 120, rng, s);
  std::vector<double> v(x.data().begin(), x.data().end());
  CHECK(std::abs(moments(v).var / s.beta(120) - 1.0) < 0.05);
}

TEST_CASE("posterior mean") {
  const NoiseSchedule s = make_linear_schedule(200, 1e-4, 0.02);
  RngStream rng(8, 0);
  const Tensor x0 = randn(rng, {3, 4, 4}), eps = randn(rng, {3, 4, 4});
  const Tensor x1 = forward_sample(x0, 1, eps, s);
  CHECK(max_abs_diff(posterior_mean(x1, 1, eps, s), x0) < 1e-8);
  CHECK(max_abs_diff(posterior_mean(x1, 1, eps, s, true), x0) < 1e-8);
  CHECK(max_abs_diff(posterior_mean(x1, 1, eps, s), posterior_mean(x1, 1, eps, s, true)) < 1e-15);

  const Tensor xt = randn(rng, {3, 4, 4});
  CHECK(max_abs_diff(posterior_mean(xt, 90, Tensor({3, 4, 4}), s), xt * (1.0 / std::sqrt(s.alpha(90)))) < 1e-15);
  CHECK(max_abs_diff(posterior_mean(xt, 90, Tensor({3, 4, 4}), s, true), xt * (1.0 / std::sqrt(s.alpha_bar(90)))) <
        1e-15);
  const double c = s.beta(90) / std::sqrt(1.0 - s.alpha_bar(90));
  CHECK(max_abs_diff(posterior_mean(xt, 90, eps, s), (xt - eps * c) * (1.0 / std::sqrt(s.alpha(90)))) < 1e-14);
  CHECK_THROWS_AS(posterior_mean(xt, 1, Tensor({3, 4, 2}), s), InvalidArgument);
  CHECK_THROWS_AS(posterior_mean(xt, 0, eps, s), InvalidArgument);
}

TEST_CASE("reverse step") {
  const NoiseSchedule s = make_linear_schedule(200, 1e-4, 0.02);
  RngStream rng(9, 0);
  const Tensor xt = randn(rng, {3, 4, 4}), eps = randn(rng, {3, 4, 4});

  RngStream a(1, 1);
  const RngStream before = a;
  CHECK(reverse_step(xt, 1, eps, a, s) == posterior_mean(xt, 1, eps, s));
  CHECK(a.normal() == RngStream(before).normal());

  RngStream b(2, 2), c(2, 2);
  CHECK(reverse_step(xt, 50, eps, b, s) == reverse_step(xt, 50, eps, c, s));

  const Tensor x({1}, 0.3), e({1}, -0.2);
  const double mu = posterior_mean(x, 150, e, s)[0];
  std::vector<double> draws;
  for (int i = 0; i < 10000; ++i) draws.push_back(reverse_step(x, 150, e, rng, s)[0]);
  const Moments m = moments(draws);
  CHECK(std::abs(m.var / s.beta(150) - 1.0) < 0.05);
  CHECK(std::abs(m.mean - mu) < 4.0 * s.sigma(150) / 100.0);
  CHECK_THROWS_AS(reverse_step(x, 201, e, rng, s), InvalidArgument);
}
