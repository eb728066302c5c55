#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcdsm/checkpoint.hpp"
#include "dcdsm/config.hpp"
#include "dcdsm/dataset.hpp"
#include "dcdsm/error.hpp"
#include "dcdsm/evaluation.hpp"
#include "dcdsm/objectives.hpp"
#include "dcdsm/suppression.hpp"

namespace dcdsm {

/// A loss term or parameter became non-finite. Carries the last checkpoint
/// whose state was entirely finite.
class TrainingDivergence : public NumericalContractError {
 public:
  TrainingDivergence(const std::string& what, std::string term, std::shared_ptr<const Checkpoint> last_finite)
      : NumericalContractError(what), term_(std::move(term)), last_finite_(std::move(last_finite)) {}
  const std::string& term() const noexcept { return term_; }
  const Checkpoint* last_finite() const noexcept { return last_finite_.get(); }

 private:
  std::string term_;
  std::shared_ptr<const Checkpoint> last_finite_;
};

/// Stacked [B,3,H,W] tensors of a minibatch.
struct TrainBatch {
  Tensor source1, source2, mixture;
};
TrainBatch make_batch(const std::vector<MixtureSample>& samples, const std::vector<std::size_t>& indices);

/// One optimization step on all four networks.
///
/// Draws one t per sample and the diffusion noise from step_rng.child("diff");
/// the suppression inputs use step_rng.child("wfen"), so the denoiser updates
/// do not depend on whether suppression is trained. Suppression-loss
/// gradients reach only the WFEN parameters.
LossReport train_step(const TrainBatch& batch, Models& models, OptStates& opt, const RngStream& step_rng,
                      const TrainConfig& cfg, const NoiseSchedule& schedule);

struct ValidationRecord {
  std::size_t iteration = 0;
  double mean_psnr = 0.0;
};

struct TrainOptions {
  /// Receives "iteration l_diff l_wfen l_total clamps" lines.
  std::ostream* log = nullptr;
  std::size_t log_interval = 50;
  /// Called after every validation round.
  std::function<void(const ValidationRecord&)> on_validation;
};

struct TrainResult {
  /// Best validation PSNR state.
  Checkpoint best;
  /// State after the last completed iteration.
  Checkpoint last;
  std::vector<LossReport> losses;
  std::vector<ValidationRecord> validations;
  bool early_stopped = false;
};

TrainResult train(const TrainConfig& cfg, const TrainOptions& options = {});

/// The networks train() starts from.
Models initial_models(const TrainConfig& cfg);

/// Stream used for validation sampling; identical in every round.
RngStream validation_rng(const TrainConfig& cfg);
/// Stream used for test-set sampling by evaluate / ablate.
RngStream test_rng(const TrainConfig& cfg);

/// Row IV when suppression is enabled in cfg, otherwise no suppression.
WsmSchedule full_schedule(const TrainConfig& cfg);

/// Runs the dual sampler on one [3,H,W] mixture or a [N,3,H,W] batch.
std::pair<Tensor, Tensor> separate(const Checkpoint& ckpt, const Tensor& mixture, const RngStream& rng);

/// Separates every mixture of `samples` with the given schedule and scores it.
MetricReport evaluate_samples(const Checkpoint& ckpt, const std::vector<MixtureSample>& samples, const WsmSchedule& w,
                              const RngStream& rng, const std::vector<std::string>& ids = {});
/// Mean PSNR of each mixture against its two sources.
double mixture_baseline_psnr(const std::vector<MixtureSample>& samples);

/// Scores for the four ablation rows of one trained model. Rows I/III and
/// II/IV share their trajectories up to the final suppression.
struct AblationScores {
  MetricReport rows[4];
};
AblationScores evaluate_ablation(const Checkpoint& ckpt, const std::vector<MixtureSample>& samples,
                                 const RngStream& rng);

struct AblationRow {
  AblationConfig config;
  std::vector<double> psnr;  // per seed
  std::vector<double> ssim;
  double mean_psnr() const;
  double mean_ssim() const;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  double baseline_psnr = 0.0;
};

/// Adds one seed's scores to the table.
void add_ablation_seed(AblationTable& table, std::uint64_t seed, const AblationScores& s);
/// Trains one model per seed and evaluates all four rows on the test split.
AblationTable run_ablation(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           const TrainOptions& options = {});
void write_ablation_table(std::ostream& os, const AblationTable& t);

struct SweepPoint {
  double value = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Retrains for every gamma and scores the full schedule (row IV).
std::vector<SweepPoint> gamma_sweep(const TrainConfig& cfg, const std::vector<double>& gammas,
                                    const TrainOptions& options = {});
/// Scores row IV of an already trained model at every alpha_index; the
/// insertion point affects sampling only.
std::vector<SweepPoint> alpha_sweep(const Checkpoint& ckpt, const std::vector<int>& alpha_indices,
                                    const std::vector<MixtureSample>& samples, const RngStream& rng);
/// Header: <name>,mean_psnr,mean_ssim
void write_sweep_csv(std::ostream& os, const std::string& name, const std::vector<SweepPoint>& points);

}  // namespace dcdsm
