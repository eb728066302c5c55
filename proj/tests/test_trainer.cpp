#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "dcdsm/trainer.hpp"

using namespace dcdsm;

namespace {

TrainConfig tiny() {
  return TrainConfig::parse(
      "dataset.train = 12\ndataset.test = 4\ndataset.size = 16\nschedule.T = 10\nmodel.base_width = 4\n"
      "model.time_embed_dim = 8\nwfen.feature_channels = 4\nwfen.unet_width = 4\nwfca.grid_h = 2\nwfca.grid_w = 2\n"
      "batch_size = 4\nmax_iterations = 6\nval_interval = 3\nval_count = 2\nclean_reference = true\nlr = 1e-3\n");
}

}  // namespace

TEST_CASE("training is deterministic") {
  const TrainConfig cfg = tiny();
  const TrainResult a = train(cfg), b = train(cfg);
  REQUIRE(a.losses.size() == 6);
  for (std::size_t i = 0; i < a.losses.size(); ++i) {
    CHECK(a.losses[i].l_diff == b.losses[i].l_diff);
    CHECK(a.losses[i].l_wfen == b.losses[i].l_wfen);
    CHECK(a.losses[i].l_total == a.losses[i].l_diff * cfg.gamma + a.losses[i].l_wfen);
  }
  CHECK(encode_checkpoint(a.best) == encode_checkpoint(b.best));
  CHECK(encode_checkpoint(a.last) == encode_checkpoint(b.last));
  REQUIRE(a.validations.size() == 2);
  CHECK(a.validations[1].iteration == 6);
  TrainConfig other = cfg;
  other.seed = 1;
  CHECK_FALSE(train(other).losses[0].l_diff == a.losses[0].l_diff);
}

TEST_CASE("disabled suppression leaves the WFENs untouched") {
  TrainConfig cfg = tiny();
  cfg.wsm_enabled = false;
  const TrainResult r = train(cfg);
  const Models init = initial_models(cfg);
  CHECK(r.last.models.wfen1.params == init.wfen1.params);
  CHECK(r.last.models.wfen2.params == init.wfen2.params);
  CHECK_FALSE(r.last.models.eps1.params == init.eps1.params);
  for (const auto& l : r.losses) CHECK(l.l_wfen == 2.0);

  TrainConfig on = tiny();
  const TrainResult s = train(on);
  for (std::size_t i = 0; i < r.losses.size(); ++i) CHECK(s.losses[i].l_diff == r.losses[i].l_diff);
  CHECK_FALSE(s.last.models.wfen1.params == init.wfen1.params);
}

TEST_CASE("early stopping with frozen parameters") {
  TrainConfig cfg = tiny();
  cfg.lr = 0.0;
  cfg.patience = 1;
  cfg.val_interval = 1;
  cfg.max_iterations = 10;
  const TrainResult r = train(cfg);
  CHECK(r.early_stopped);
  CHECK(r.validations.size() == 2);
  CHECK(r.validations[0].mean_psnr == r.validations[1].mean_psnr);
  CHECK(r.best.iteration == 1);
}

TEST_CASE("overfitting one batch") {
  TrainConfig cfg = tiny();
  cfg.base_width = 8;
  const auto samples = make_split(cfg.dataset, Split::Train, 4);
  const TrainBatch batch = make_batch(samples, {0, 1, 2, 3});
  Models m = initial_models(cfg);
  OptStates opt = OptStates::init(m, cfg);
  const NoiseSchedule s = make_schedule(cfg);
  const RngStream step(9, 9);
  const double first = train_step(batch, m, opt, step, cfg, s).l_diff;
  double last = first;
  for (int i = 1; i < 200; ++i) last = train_step(batch, m, opt, step, cfg, s).l_diff;
  CHECK(last < 0.5 * first);
  CHECK(opt.eps1.step == 200);
}

TEST_CASE("checkpoint round trip reproduces validation") {
  const TrainConfig cfg = tiny();
  const TrainResult r = train(cfg);
  const Checkpoint back = decode_checkpoint(encode_checkpoint(r.best));
  const auto val = make_split(cfg.dataset, Split::Validation, cfg.val_count);
  const double a = evaluate_samples(r.best, val, full_schedule(cfg), validation_rng(cfg)).mean_psnr();
  const double b = evaluate_samples(back, val, full_schedule(cfg), validation_rng(cfg)).mean_psnr();
  CHECK(a == b);
  CHECK(a == r.best.best_val_psnr);
}

TEST_CASE("separate and ablation plumbing") {
  const TrainConfig cfg = tiny();
  const TrainResult r = train(cfg);
  const auto test = make_split(cfg.dataset, Split::Test, 2);
  const auto [o1, o2] = separate(r.best, test[0].mixture, test_rng(cfg));
  CHECK(o1.shape() == test[0].mixture.shape());
  CHECK(max_abs(o2) <= 1.0);
  const auto again = separate(r.best, test[0].mixture, test_rng(cfg));
  CHECK(again.first == o1);

  const AblationScores sc = evaluate_ablation(r.best, test, test_rng(cfg));
  const MetricReport iv = evaluate_samples(r.best, test, ablation_schedule(AblationConfig::IV, 5), test_rng(cfg));
  CHECK(sc.rows[3].mean_psnr() == iv.mean_psnr());
  const MetricReport i = evaluate_samples(r.best, test, ablation_schedule(AblationConfig::I, 5), test_rng(cfg));
  CHECK(sc.rows[0].mean_psnr() == i.mean_psnr());

  AblationTable t;
  add_ablation_seed(t, 0, sc);
  add_ablation_seed(t, 1, sc);
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[2].psnr.size() == 2);
  std::ostringstream os;
  write_ablation_table(os, t);
  CHECK(os.str().find("IV") != std::string::npos);

  const auto pts = alpha_sweep(r.best, {1, 9}, test, test_rng(cfg));
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].value == 1.0);
  std::ostringstream csv;
  write_sweep_csv(csv, "alpha_index", pts);
  CHECK(csv.str().rfind("alpha_index,mean_psnr,mean_ssim\n", 0) == 0);
}
