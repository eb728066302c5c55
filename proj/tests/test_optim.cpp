#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dcdsm/autodiff.hpp"
#include "dcdsm/error.hpp"
#include "dcdsm/optim.hpp"
#include "dcdsm/rng.hpp"

using namespace dcdsm;

TEST_CASE("first Adam step moves by lr in the gradient sign") {
  for (double g : {0.3, -2.0, 1e-3}) {
    ParamSet p;
    p.add("w", Tensor({1}, 1.0));
    p.grad_accumulator(0)[0] = g;
    AdamState s(p, AdamConfig{});
    adam_step(p, s);
    const double lr = 1e-4, eps = 1e-8;
    CHECK(std::abs((p.value(0)[0] - 1.0) - (-lr * (g > 0 ? 1.0 : -1.0))) <= std::abs(lr * eps / g) + 1e-15);
  }
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  RngStream rng(0, 0);
  ParamSet p;
  p.add("w", randn(rng, {3, 3}));
  const Tensor before = p.value(0);
  AdamState s(p, AdamConfig{});
  for (int i = 0; i < 5; ++i) adam_step(p, s);
  CHECK(p.value(0) == before);
}

TEST_CASE("Adam on (p-3)^2 matches a reference recurrence") {
  ParamSet p;
  p.add("p", Tensor({1}, 0.0));
  AdamConfig c;
  c.lr = 0.1;
  AdamState s(p, c);
  double q = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    p.zero_grads();
    {
      Tape tape;
      tape.backward(ad::sum(ad::square(ad::add_scalar(tape.param(p, "p"), -3.0))));
    }
    adam_step(p, s);
    const double g = 2.0 * (q - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    q -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(p.value(0)[0] == doctest::Approx(q).epsilon(1e-12));
  }
  CHECK(std::abs(p.value(0)[0] - 3.0) < 0.1);
}

TEST_CASE("optimizer state must match the parameter set") {
  ParamSet a, b;
  a.add("w", Tensor({2}));
  b.add("w", Tensor({3}));
  AdamState s(a, AdamConfig{});
  CHECK_THROWS_AS(adam_step(b, s), InvalidArgument);
}

TEST_CASE("gradcheck is exact for a linear model") {
  RngStream rng(2, 2);
  ParamSet p;
  p.add("w", randn(rng, {4, 5}));
  p.add("b", randn(rng, {4}));
  const Tensor x = randn(rng, {3, 5}), y = randn(rng, {3, 4});
  const auto r = gradcheck(
      [&](Tape& t) { return ad::sum(ad::mul(ad::linear(t.constant(x), t.param(p, "w"), t.param(p, "b")), t.constant(y))); },
      p);
  CHECK(r.max_rel_err < 1e-8);
  CHECK(r.passed);
  CHECK(r.coordinates_checked == 24);
}

TEST_CASE("gradcheck rejects a nondeterministic closure") {
  ParamSet p;
  p.add("w", Tensor({2}, 1.0));
  RngStream rng(1, 1);
  CHECK_THROWS_AS(gradcheck([&](Tape& t) { return ad::add_scalar(ad::sum(t.param(p, "w")), rng.uniform()); }, p),
                  ContractViolation);
}

TEST_CASE("f32 quantization is idempotent") {
  RngStream rng(3, 3);
  ParamSet p;
  p.add("w", randn(rng, {10}));
  p.quantize_to_f32();
  const Tensor once = p.value(0);
  p.quantize_to_f32();
  CHECK(p.value(0) == once);
  for (double v : once.data()) CHECK(static_cast<double>(static_cast<float>(v)) == v);
}
