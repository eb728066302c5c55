#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dcdsm/denoiser.hpp"
#include "dcdsm/error.hpp"
#include "dcdsm/gradcheck_targets.hpp"
#include "dcdsm/optim.hpp"

using namespace dcdsm;

TEST_CASE("sinusoidal embedding") {
  const Tensor e0 = sinusoidal_embed(0, 6);
  CHECK(e0 == Tensor({6}, std::vector<double>{0, 1, 0, 1, 0, 1}));
  const Tensor e1 = sinusoidal_embed(1, 4);
  CHECK(e1[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(e1[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(e1[2] == doctest::Approx(std::sin(1e-2)).epsilon(1e-15));
  CHECK(e1[3] == doctest::Approx(std::cos(1e-2)).epsilon(1e-15));
  for (int t : {3, 199, 1000}) CHECK(max_abs(sinusoidal_embed(t, 32)) <= 1.0);
  CHECK_THROWS_AS(sinusoidal_embed(1, 5), InvalidArgument);
  CHECK_THROWS_AS(sinusoidal_embed(-1, 4), InvalidArgument);
  const Tensor batch = sinusoidal_embed(std::vector<int>{0, 1}, 4);
  CHECK(batch.shape() == Shape{2, 4});
  CHECK(batch[5] == e1[1]);
}

TEST_CASE("noise predictor shapes and initial output") {
  RngStream rng(1, 0);
  const UNetParams p = UNetParams::init({}, rng);
  const Tensor x = randn(rng, {3, 32, 32}), c = randn(rng, {3, 32, 32});
  const Tensor eps = predict_noise(p, x, 17, c);
  CHECK(eps.shape() == x.shape());
  CHECK(max_abs(eps) == 0.0);
  CHECK(predict_noise(p, x, 17, c) == eps);
  CHECK_THROWS_AS(predict_noise(p, randn(rng, {3, 30, 30}), 1, randn(rng, {3, 30, 30})), ShapeError);
  CHECK_THROWS_AS(predict_noise(p, x, 1, randn(rng, {3, 16, 16})), InvalidArgument);
}

TEST_CASE("initialization is seed-deterministic") {
  RngStream a(5, 0), b(5, 0), c(6, 0);
  const UNetParams pa = UNetParams::init({}, a), pb = UNetParams::init({}, b), pc = UNetParams::init({}, c);
  CHECK(pa.params == pb.params);
  CHECK_FALSE(pa.params.value("in.w") == pc.params.value("in.w"));
}

TEST_CASE("parameter count is a function of the config") {
  const UNetConfig cfg{6, 3, 4, 2, 8, true};
  RngStream rng(2, 0);
  const UNetParams p = UNetParams::init(cfg, rng);
  const std::size_t n = p.params.parameter_count();
  CHECK(UNet(cfg).parameter_count() == n);
  CHECK(UNet(cfg).parameter_count() == UNet(cfg).parameter_count());
  // in 6*4*9+4, time 8*4+4, down1 4*8*9+8, down2 8*16*9+16, mid 16*16*9+16,
  // up2 (16+8)*8*9+8, up1 (8+4)*4*9+4, out 4*3*9+3
  CHECK(n == 220 + 36 + 296 + 1168 + 2320 + 1736 + 436 + 111);
}

TEST_CASE("three-layer U-Net") {
  RngStream rng(3, 0);
  const UNetConfig cfg = unet3_config(9, 5, 8);
  const UNetParams p = UNetParams::init(cfg, rng);
  CHECK(unet3_forward(p, randn(rng, {9, 16, 16})).shape() == Shape{5, 16, 16});
  CHECK(unet3_forward(p, randn(rng, {2, 9, 8, 8})).shape() == Shape{2, 5, 8, 8});
  const UNetParams z = UNetParams::zeros(cfg);
  CHECK(max_abs(unet3_forward(z, randn(rng, {9, 16, 16}))) == 0.0);
  CHECK_THROWS_AS(unet3_forward(p, randn(rng, {9, 7, 8})), ShapeError);
}

TEST_CASE("noise predictor passes gradcheck") {
  for (std::uint64_t seed : {0, 1}) CHECK(gradcheck_target("unet", seed).max_rel_err < 1e-4);
}

TEST_CASE("three-layer U-Net passes gradcheck") {
  RngStream rng(4, 0);
  UNetParams p = UNetParams::init(unet3_config(9, 4, 4), rng);
  for (std::size_t i = 0; i < p.params.count(); ++i)
    if (p.params.name(i).ends_with(".b")) p.params.value(i) = randn(rng, p.params.value(i).shape()) * 0.1;
  const Tensor x = randn(rng, {1, 9, 8, 8}), w = randn(rng, {1, 4, 8, 8});
  const auto r = gradcheck(
      [&](Tape& t) { return ad::mean(ad::mul(p.net.forward(t, p.params, t.constant(x), Var()), t.constant(w))); },
      p.params);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("branches share no storage") {
  RngStream r1(7, 1), r2(7, 2);
  UNetParams a = UNetParams::init({6, 3, 4, 2, 8, false}, r1);
  const UNetParams b = UNetParams::init({6, 3, 4, 2, 8, false}, r2);
  RngStream rng(8, 0);
  const Tensor x = randn(rng, {3, 8, 8}), c = randn(rng, {3, 8, 8});
  const Tensor before = predict_noise(b, x, 4, c);
  for (std::size_t i = 0; i < a.params.count(); ++i) a.params.value(i).fill(0.5);
  CHECK(predict_noise(b, x, 4, c) == before);
  CHECK_FALSE(predict_noise(a, x, 4, c) == before);
}
