#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "dcdsm/checkpoint.hpp"
#include "dcdsm/error.hpp"

using namespace dcdsm;

namespace {

Checkpoint fresh(std::uint64_t seed) {
  TrainConfig cfg = TrainConfig::parse("model.base_width = 4\nmodel.time_embed_dim = 8\nwfen.feature_channels = 4\n"
                                       "wfen.unet_width = 4\n");
  cfg.seed = seed;
  Checkpoint c;
  c.config = cfg;
  c.rng = RngStream(seed, 3, 17);
  c.models = Models::init(cfg, RngStream(seed, 1));
  c.opt = OptStates::init(c.models, cfg);
  c.iteration = 42;
  c.best_val_psnr = 12.5;
  return c;
}

}  // namespace

TEST_CASE("initialization is float32 exact and seed-deterministic") {
  const Checkpoint a = fresh(1), b = fresh(1), c = fresh(2);
  CHECK(a.models == b.models);
  CHECK_FALSE(a.models == c.models);
  for (std::size_t i = 0; i < a.models.eps1.params.count(); ++i)
    for (double v : a.models.eps1.params.value(i).data()) CHECK(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("encode and decode round trip byte-identically") {
  Checkpoint c = fresh(3);
  c.opt.eps1.step = 9;
  c.opt.wfen2.m[0].fill(0.25);
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back == c);
  CHECK(encode_checkpoint(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "dcdsm_test.ckpt";
  save_checkpoint(path, c);
  CHECK(load_checkpoint(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoints are refused") {
  const std::string bytes = encode_checkpoint(fresh(4));
  CHECK_THROWS_AS(decode_checkpoint("not a checkpoint"), ParseError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), ParseError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), ParseError);
  std::string tampered = bytes;
  const auto pos = tampered.find("gamma = 3");
  REQUIRE(pos != std::string::npos);
  tampered[pos + 8] = '4';
  CHECK_THROWS_AS(decode_checkpoint(tampered), ConfigMismatch);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.ckpt"), InvalidArgument);
}

TEST_CASE("config hash check") {
  const Checkpoint c = fresh(5);
  CHECK_NOTHROW(check_config_hash(c, c.config, false));
  TrainConfig other = c.config;
  other.gamma = 5;
  CHECK_THROWS_AS(check_config_hash(c, other, false), ConfigMismatch);
  CHECK_NOTHROW(check_config_hash(c, other, true));
}
