#include "dcdsm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include "dcdsm/denoiser.hpp"
#include "dcdsm/diffusion.hpp"

namespace dcdsm {

namespace {

constexpr std::uint64_t kTrainStream = 0x7472616e;  // "tran"
constexpr std::uint64_t kValStream = 0x76616c;      // "val"
constexpr std::uint64_t kTestStream = 0x74657374;   // "test"
constexpr std::uint64_t kInitStream = 0x696e6974;   // "init"

// One reverse step per sample at that sample's own timestep.
Tensor reverse_step_batch(const Tensor& x_t, const std::vector<int>& t, const Tensor& eps_pred, const RngStream& rng,
                          const NoiseSchedule& s, bool exact) {
  std::vector<Tensor> out;
  for (std::size_t n = 0; n < t.size(); ++n) {
    RngStream r = rng.child(n);
    out.push_back(reverse_step(batch_item(x_t, n), t[n], batch_item(eps_pred, n), r, s, exact));
  }
  return stack(out);
}

void quantize(Models& m, OptStates& o) {
  for (ParamSet* p : {&m.eps1.params, &m.eps2.params, &m.wfen1.params, &m.wfen2.params}) p->quantize_to_f32();
  for (AdamState* a : {&o.eps1, &o.eps2, &o.wfen1, &o.wfen2}) a->quantize_to_f32();
}

bool models_finite(const Models& m) {
  return m.eps1.params.all_finite() && m.eps2.params.all_finite() && m.wfen1.params.all_finite() &&
         m.wfen2.params.all_finite();
}

}  // namespace

TrainBatch make_batch(const std::vector<MixtureSample>& samples, const std::vector<std::size_t>& indices) {
  std::vector<Tensor> a, b, c;
  for (std::size_t i : indices) {
    const MixtureSample& s = samples.at(i);
    a.push_back(s.source1);
    b.push_back(s.source2);
    c.push_back(s.mixture);
  }
  return {stack(a), stack(b), stack(c)};
}

LossReport train_step(const TrainBatch& batch, Models& models, OptStates& opt, const RngStream& step_rng,
                      const TrainConfig& cfg, const NoiseSchedule& schedule) {
  const std::size_t n = batch.source1.dim(0);
  if (n == 0) throw InvalidArgument("train_step: empty batch");

  RngStream diff = step_rng.child("diff");
  std::vector<int> ts(n);
  for (auto& t : ts) t = 1 + static_cast<int>(diff.uniform_int(static_cast<std::uint64_t>(schedule.steps())));
  const Tensor eps1 = randn(diff, batch.source1.shape());
  const Tensor eps2 = randn(diff, batch.source2.shape());
  const Tensor x_t1 = forward_sample(batch.source1, ts, eps1, schedule);
  const Tensor x_t2 = forward_sample(batch.source2, ts, eps2, schedule);

  for (ParamSet* p : {&models.eps1.params, &models.eps2.params, &models.wfen1.params, &models.wfen2.params})
    p->zero_grads();

  Tape tape;
  const Var cond = tape.constant(batch.mixture);
  const Var pred1 = predict_noise(tape, models.eps1.net, models.eps1.params, tape.constant(x_t1), cond, ts);
  const Var pred2 = predict_noise(tape, models.eps2.net, models.eps2.params, tape.constant(x_t2), cond, ts);
  const Var l_diff = ad::diffusion_loss(tape.constant(eps1), pred1, tape.constant(eps2), pred2);

  LossReport report;
  report.l_diff = l_diff.value().item();
  report.l_wfen = 2.0;
  Var total = ad::scale(l_diff, cfg.gamma);
  if (cfg.wsm_enabled) {
    Tensor in1 = x_t1, in2 = x_t2;
    if (cfg.wfen_input == WfenInput::Reverse) {
      RngStream w = step_rng.child("wfen");
      in1 = reverse_step_batch(x_t1, ts, pred1.value(), w.child("branch1"), schedule, cfg.alpha_bar_mean);
      in2 = reverse_step_batch(x_t2, ts, pred2.value(), w.child("branch2"), schedule, cfg.alpha_bar_mean);
    }
    const Tensor& ref1 = cfg.clean_reference ? batch.source1 : batch.mixture;
    const Tensor& ref2 = cfg.clean_reference ? batch.source2 : batch.mixture;
    const Var out1 = models.wfen1.net.forward(tape, models.wfen1.params, tape.constant(in1));
    const Var out2 = models.wfen2.net.forward(tape, models.wfen2.params, tape.constant(in2));
    const Var l_wfen = ad::wfen_loss(in1, in2, out1, out2, ref1, ref2, &report.clamp_activations);
    report.l_wfen = l_wfen.value().item();
    total = ad::add(total, l_wfen);
  }
  report.l_total = total_loss(report.l_diff, report.l_wfen, cfg.gamma);
  if (!std::isfinite(report.l_diff)) throw TrainingDivergence("training diverged: l_diff is not finite", "l_diff", nullptr);
  if (!std::isfinite(report.l_wfen)) throw TrainingDivergence("training diverged: l_wfen is not finite", "l_wfen", nullptr);

  tape.backward(total);
  adam_step(models.eps1.params, opt.eps1);
  adam_step(models.eps2.params, opt.eps2);
  if (cfg.wsm_enabled) {
    adam_step(models.wfen1.params, opt.wfen1);
    adam_step(models.wfen2.params, opt.wfen2);
  }
  quantize(models, opt);
  if (!models_finite(models))
    throw TrainingDivergence("training diverged: a parameter became non-finite", "parameters", nullptr);
  return report;
}

RngStream validation_rng(const TrainConfig& cfg) { return RngStream(cfg.seed, kValStream); }
RngStream test_rng(const TrainConfig& cfg) { return RngStream(cfg.seed, kTestStream); }

WsmSchedule full_schedule(const TrainConfig& cfg) {
  return cfg.wsm_enabled ? ablation_schedule(AblationConfig::IV, cfg.alpha_index) : WsmSchedule::disabled();
}

namespace {

std::vector<Tensor> sample_outputs(const Checkpoint& ckpt, const Tensor& mixtures, const WsmSchedule& w,
                                   const RngStream& rng, DualSample* raw = nullptr) {
  const NoiseSchedule s = make_schedule(ckpt.config);
  SamplerOptions opt;
  opt.alpha_bar_mean = ckpt.config.alpha_bar_mean;
  DualSample d = dual_reverse_sample(mixtures, ckpt.models.eps1, ckpt.models.eps2, ckpt.models.wfen1,
                                     ckpt.models.wfen2, s, w, rng, opt);
  std::vector<Tensor> out{d.x1, d.x2};
  if (raw) *raw = std::move(d);
  return out;
}

Tensor stack_mixtures(const std::vector<MixtureSample>& samples) {
  std::vector<Tensor> m;
  for (const auto& s : samples) m.push_back(s.mixture);
  return stack(m);
}

MetricReport score(const std::vector<MixtureSample>& samples, const Tensor& o1, const Tensor& o2,
                   const std::vector<std::string>& ids) {
  MetricReport r;
  for (std::size_t i = 0; i < samples.size(); ++i)
    r.add(ids.empty() ? "sample_" + std::to_string(i) : ids.at(i),
          evaluate_separation({batch_item(o1, i), batch_item(o2, i)}, {samples[i].source1, samples[i].source2}));
  return r;
}

}  // namespace

MetricReport evaluate_samples(const Checkpoint& ckpt, const std::vector<MixtureSample>& samples, const WsmSchedule& w,
                              const RngStream& rng, const std::vector<std::string>& ids) {
  if (samples.empty()) throw InvalidArgument("evaluate: no samples");
  const auto out = sample_outputs(ckpt, stack_mixtures(samples), w, rng);
  return score(samples, out[0], out[1], ids);
}

std::pair<Tensor, Tensor> separate(const Checkpoint& ckpt, const Tensor& mixture, const RngStream& rng) {
  const auto out = sample_outputs(ckpt, as_batch(mixture), full_schedule(ckpt.config), rng);
  if (mixture.rank() == 3) return {batch_item(out[0], 0), batch_item(out[1], 0)};
  return {out[0], out[1]};
}

double mixture_baseline_psnr(const std::vector<MixtureSample>& samples) {
  double total = 0.0;
  for (const auto& s : samples) total += 0.5 * (psnr(s.mixture, s.source1) + psnr(s.mixture, s.source2));
  return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

Models initial_models(const TrainConfig& cfg) { return Models::init(cfg, RngStream(cfg.seed, kInitStream)); }

TrainResult train(const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  const NoiseSchedule schedule = make_schedule(cfg);
  const auto train_set = make_split(cfg.dataset, Split::Train, cfg.dataset.train_count);
  const auto val_set = make_split(cfg.dataset, Split::Validation, cfg.val_count);
  const Tensor val_mix = stack_mixtures(val_set);
  const RngStream root(cfg.seed, kTrainStream);

  TrainResult result;
  Checkpoint& state = result.last;
  state.config = cfg;
  state.rng = root;
  state.models = initial_models(cfg);
  state.opt = OptStates::init(state.models, cfg);
  state.best_val_psnr = -std::numeric_limits<double>::infinity();
  result.best = state;

  const std::size_t n = train_set.size();
  std::vector<std::size_t> perm(n);
  std::size_t perm_epoch = std::numeric_limits<std::size_t>::max();
  auto index_at = [&](std::size_t pos) {
    const std::size_t epoch = pos / n;
    if (epoch != perm_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      RngStream r = root.child("epoch").child(epoch);
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[r.uniform_int(i)]);
      perm_epoch = epoch;
    }
    return perm[pos % n];
  };

  std::size_t stale_rounds = 0;
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    std::vector<std::size_t> idx(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) idx[b] = index_at((it - 1) * cfg.batch_size + b);
    LossReport rep;
    Checkpoint before = state;
    try {
      rep = train_step(make_batch(train_set, idx), state.models, state.opt, root.child("step").child(it), cfg,
                       schedule);
    } catch (const TrainingDivergence& e) {
      throw TrainingDivergence(std::string(e.what()) + " at iteration " + std::to_string(it), e.term(),
                               std::make_shared<const Checkpoint>(std::move(before)));
    }
    state.iteration = it;
    result.losses.push_back(rep);
    if (options.log && (it % options.log_interval == 0 || it == 1))
      *options.log << it << ' ' << std::setprecision(8) << rep.l_diff << ' ' << rep.l_wfen << ' ' << rep.l_total << ' '
                   << rep.clamp_activations << '\n';

    if (it % cfg.val_interval == 0 || it == cfg.max_iterations) {
      const auto out = sample_outputs(state, val_mix, full_schedule(cfg), validation_rng(cfg));
      const ValidationRecord rec{it, score(val_set, out[0], out[1], {}).mean_psnr()};
      result.validations.push_back(rec);
      if (options.on_validation) options.on_validation(rec);
      if (rec.mean_psnr > state.best_val_psnr) {
        state.best_val_psnr = rec.mean_psnr;
        result.best = state;
        stale_rounds = 0;
      } else {
        ++stale_rounds;
        if (cfg.patience > 0 && stale_rounds >= cfg.patience) {
          result.early_stopped = true;
          break;
        }
      }
    }
  }
  result.best.best_val_psnr = state.best_val_psnr;
  return result;
}

AblationScores evaluate_ablation(const Checkpoint& ckpt, const std::vector<MixtureSample>& samples,
                                 const RngStream& rng) {
  const Tensor mix = stack_mixtures(samples);
  const int a = ckpt.config.alpha_index;
  AblationScores s;
  DualSample d;
  sample_outputs(ckpt, mix, ablation_schedule(AblationConfig::III, a), rng, &d);
  s.rows[0] = score(samples, d.pre_final1, d.pre_final2, {});
  s.rows[2] = score(samples, d.x1, d.x2, {});
  sample_outputs(ckpt, mix, ablation_schedule(AblationConfig::IV, a), rng, &d);
  s.rows[1] = score(samples, d.pre_final1, d.pre_final2, {});
  s.rows[3] = score(samples, d.x1, d.x2, {});
  return s;
}

double AblationRow::mean_psnr() const {
  return psnr.empty() ? 0.0 : std::accumulate(psnr.begin(), psnr.end(), 0.0) / static_cast<double>(psnr.size());
}

double AblationRow::mean_ssim() const {
  return ssim.empty() ? 0.0 : std::accumulate(ssim.begin(), ssim.end(), 0.0) / static_cast<double>(ssim.size());
}

void add_ablation_seed(AblationTable& table, std::uint64_t seed, const AblationScores& s) {
  if (table.rows.empty())
    for (AblationConfig c : {AblationConfig::I, AblationConfig::II, AblationConfig::III, AblationConfig::IV})
      table.rows.push_back({c, {}, {}});
  table.seeds.push_back(seed);
  for (int r = 0; r < 4; ++r) {
    table.rows[r].psnr.push_back(s.rows[r].mean_psnr());
    table.rows[r].ssim.push_back(s.rows[r].mean_ssim());
  }
}

AblationTable run_ablation(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           const TrainOptions& options) {
  AblationTable table;
  const auto test_set = make_split(cfg.dataset, Split::Test, cfg.dataset.test_count);
  table.baseline_psnr = mixture_baseline_psnr(test_set);
  for (std::uint64_t seed : seeds) {
    TrainConfig c = cfg;
    c.seed = seed;
    c.wsm_enabled = true;
    const TrainResult r = train(c, options);
    add_ablation_seed(table, seed, evaluate_ablation(r.best, test_set, test_rng(c)));
  }
  return table;
}

void write_ablation_table(std::ostream& os, const AblationTable& t) {
  os << "Ablation of wavelet suppression (mean over seeds";
  for (std::size_t i = 0; i < t.seeds.size(); ++i) os << (i ? ", " : " ") << t.seeds[i];
  os << ")\n";
  os << std::left << std::setw(32) << "Config" << std::right << std::setw(12) << "PSNR (dB)" << std::setw(10) << "SSIM"
     << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& r : t.rows)
    os << std::left << std::setw(32) << ablation_label(r.config) << std::right << std::setw(12) << r.mean_psnr()
       << std::setw(10) << r.mean_ssim() << '\n';
  os << std::left << std::setw(32) << "mixture baseline" << std::right << std::setw(12) << t.baseline_psnr << '\n';
  os.unsetf(std::ios::floatfield);
  os << std::setprecision(6);
}

std::vector<SweepPoint> gamma_sweep(const TrainConfig& cfg, const std::vector<double>& gammas,
                                    const TrainOptions& options) {
  const auto test_set = make_split(cfg.dataset, Split::Test, cfg.dataset.test_count);
  std::vector<SweepPoint> out;
  for (double g : gammas) {
    TrainConfig c = cfg;
    c.gamma = g;
    const TrainResult r = train(c, options);
    const MetricReport m = evaluate_samples(r.best, test_set, full_schedule(c), test_rng(c));
    out.push_back({g, m.mean_psnr(), m.mean_ssim()});
  }
  return out;
}

std::vector<SweepPoint> alpha_sweep(const Checkpoint& ckpt, const std::vector<int>& alpha_indices,
                                    const std::vector<MixtureSample>& samples, const RngStream& rng) {
  std::vector<SweepPoint> out;
  for (int a : alpha_indices) {
    const MetricReport m = evaluate_samples(ckpt, samples, ablation_schedule(AblationConfig::IV, a), rng);
    out.push_back({static_cast<double>(a), m.mean_psnr(), m.mean_ssim()});
  }
  return out;
}

void write_sweep_csv(std::ostream& os, const std::string& name, const std::vector<SweepPoint>& points) {
  os << name << ",mean_psnr,mean_ssim\n" << std::setprecision(10);
  for (const auto& p : points) os << p.value << ',' << p.mean_psnr << ',' << p.mean_ssim << '\n';
}

}  // namespace dcdsm
