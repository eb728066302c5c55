#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "dcdsm/checkpoint.hpp"
#include "dcdsm/config.hpp"
#include "dcdsm/dataset.hpp"
#include "dcdsm/error.hpp"
#include "dcdsm/evaluation.hpp"
#include "dcdsm/gradcheck_targets.hpp"
#include "dcdsm/trainer.hpp"

namespace fs = std::filesystem;
using namespace dcdsm;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

std::string config_defaults_text() {
  std::ostringstream os;
  os << "\nConfig file keys (key = value, '#' starts a comment) and defaults:\n";
  for (const auto& [k, v] : TrainConfig::defaults()) os << "  " << std::left << std::setw(24) << k << v << '\n';
  return os.str();
}

void print_config(const TrainConfig& cfg) {
  std::cout << "# resolved config\n" << cfg.to_text() << "# seed = " << cfg.seed << "\n" << std::flush;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write " + path.string());
  return f;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw InvalidArgument("bad seed '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw InvalidArgument("empty seed list");
  return out;
}

// Checkpoint config, optionally checked against a config file.
Checkpoint load_checked(const fs::path& ckpt_path, const std::string& config_path, bool force) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (!config_path.empty()) check_config_hash(ckpt, TrainConfig::load(config_path), force);
  return ckpt;
}

TrainOptions progress_options() {
  TrainOptions o;
  o.log = &std::cout;
  o.on_validation = [](const ValidationRecord& r) {
    std::cout << "validation " << r.iteration << " mean_psnr " << std::fixed << std::setprecision(4) << r.mean_psnr
              << std::defaultfloat << std::endl;
  };
  return o;
}

struct Args {
  std::string spec, out, config, ckpt, input, out1, out2, corpus, csv, target = "all", split = "test";
  std::string seeds = "0,1,2", out_dir;
  std::vector<double> gammas;
  std::vector<int> alphas;
  std::optional<std::uint64_t> seed;
  std::size_t log_interval = 50;
  double h = 1e-5, tolerance = 1e-4;
  bool force = false;
};

int cmd_make_dataset(const Args& a) {
  DatasetSpec spec = parse_dataset_spec(read_text_file(a.spec));
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  std::cout << "# resolved dataset spec\n" << dataset_spec_text(spec) << "# seed = " << spec.seed << "\n";
  const auto entries = write_corpus(spec, a.out);
  std::map<std::string, std::size_t> kinds, splits;
  for (const auto& e : entries) {
    ++kinds[e.kind];
    ++splits[e.split];
  }
  std::cout << "samples " << entries.size() << " (";
  bool first = true;
  for (const auto& [k, n] : splits) {
    std::cout << (first ? "" : ", ") << k << ' ' << n;
    first = false;
  }
  std::cout << ")\nimage size 3x" << spec.size << 'x' << spec.size << "\nmix kinds";
  for (const auto& [k, n] : kinds) std::cout << ' ' << k << '=' << n;
  std::cout << "\nwrote " << (fs::path(a.out) / "manifest.txt").string() << '\n';
  return kOk;
}

int cmd_train(const Args& a) {
  TrainConfig cfg = TrainConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  print_config(cfg);
  TrainOptions o = progress_options();
  o.log_interval = a.log_interval;
  try {
    const TrainResult r = train(cfg, o);
    save_checkpoint(a.out, r.best);
    std::cout << "best validation psnr " << r.best.best_val_psnr << " at iteration " << r.best.iteration
              << (r.early_stopped ? " (early stop)" : "") << "\nwrote " << a.out << '\n';
  } catch (const TrainingDivergence& e) {
    if (e.last_finite()) {
      const std::string rescue = a.out + ".last_finite";
      save_checkpoint(rescue, *e.last_finite());
      std::cerr << "saved last finite state to " << rescue << '\n';
    }
    throw;
  }
  return kOk;
}

int cmd_separate(const Args& a) {
  const Checkpoint ckpt = load_checked(a.ckpt, a.config, a.force);
  TrainConfig cfg = ckpt.config;
  if (a.seed) cfg.seed = *a.seed;
  print_config(cfg);
  const Tensor mix = load_image(a.input);
  if (mix.dim(1) != cfg.dataset.size || mix.dim(2) != cfg.dataset.size)
    throw ShapeError("separate: checkpoint expects " + std::to_string(cfg.dataset.size) + "x" +
                     std::to_string(cfg.dataset.size) + " images, got " + shape_str(mix.shape()));
  const auto [x1, x2] = separate(ckpt, mix, test_rng(cfg));
  save_image(a.out1, x1);
  save_image(a.out2, x2);
  std::cout << "wrote " << a.out1 << " and " << a.out2 << '\n';
  return kOk;
}

int cmd_evaluate(const Args& a) {
  const Checkpoint ckpt = load_checked(a.ckpt, a.config, a.force);
  TrainConfig cfg = ckpt.config;
  if (a.seed) cfg.seed = *a.seed;
  print_config(cfg);
  const fs::path dir(a.corpus);
  std::vector<MixtureSample> samples;
  std::vector<std::string> ids;
  for (const auto& e : read_manifest(dir / "manifest.txt")) {
    if (a.split != "all" && e.split != a.split) continue;
    MixtureSample s;
    s.source1 = load_image(dir / e.source1);
    s.source2 = load_image(dir / e.source2);
    s.mixture = load_image(dir / e.mixture);
    samples.push_back(std::move(s));
    ids.push_back(e.id);
  }
  if (samples.empty()) throw InvalidArgument("evaluate: no '" + a.split + "' samples in " + dir.string());
  const MetricReport r = evaluate_samples(ckpt, samples, full_schedule(cfg), test_rng(cfg), ids);
  write_metric_table(std::cout, r);
  std::cout << "mixture baseline psnr " << mixture_baseline_psnr(samples) << '\n';
  if (!a.csv.empty()) {
    auto f = open_output(a.csv);
    write_metric_csv(f, r);
    std::cout << "wrote " << a.csv << '\n';
  }
  return kOk;
}

int cmd_ablate(const Args& a) {
  TrainConfig cfg = TrainConfig::load(a.config);
  const auto seeds = parse_seed_list(a.seeds);
  cfg.seed = seeds.front();
  print_config(cfg);
  std::cout << "# seeds = " << a.seeds << '\n';
  TrainOptions o = progress_options();
  o.log_interval = a.log_interval;
  const fs::path out_dir = a.out_dir.empty() ? fs::path() : fs::path(a.out_dir);

  const auto test_set = make_split(cfg.dataset, Split::Test, cfg.dataset.test_count);
  AblationTable table;
  table.baseline_psnr = mixture_baseline_psnr(test_set);
  std::optional<Checkpoint> first;
  for (std::uint64_t seed : seeds) {
    TrainConfig c = cfg;
    c.seed = seed;
    c.wsm_enabled = true;
    std::cout << "training seed " << seed << std::endl;
    TrainResult r = train(c, o);
    add_ablation_seed(table, seed, evaluate_ablation(r.best, test_set, test_rng(c)));
    if (!first) first = std::move(r.best);
  }
  write_ablation_table(std::cout, table);
  if (!out_dir.empty()) {
    auto f = open_output(out_dir / "ablation.txt");
    write_ablation_table(f, table);
  }

  if (!a.alphas.empty()) {
    const auto pts = alpha_sweep(*first, a.alphas, test_set, test_rng(first->config));
    write_sweep_csv(std::cout, "alpha_index", pts);
    if (!out_dir.empty()) {
      auto f = open_output(out_dir / "alpha_sweep.csv");
      write_sweep_csv(f, "alpha_index", pts);
    }
  }
  if (!a.gammas.empty()) {
    const auto pts = gamma_sweep(cfg, a.gammas, o);
    write_sweep_csv(std::cout, "gamma", pts);
    if (!out_dir.empty()) {
      auto f = open_output(out_dir / "gamma_sweep.csv");
      write_sweep_csv(f, "gamma", pts);
    }
  }
  return kOk;
}

int cmd_gradcheck(const Args& a) {
  std::vector<std::string> targets;
  if (a.target == "all") targets = gradcheck_target_names();
  else targets.push_back(a.target);
  const std::uint64_t seed = a.seed.value_or(0);
  std::cout << "# seed = " << seed << ", h = " << a.h << ", tolerance = " << a.tolerance << '\n';
  GradcheckOptions opt;
  opt.h = a.h;
  opt.tolerance = a.tolerance;
  bool ok = true;
  for (const auto& t : targets) {
    const GradcheckReport r = gradcheck_target(t, seed, opt);
    std::cout << std::left << std::setw(10) << t << " max_rel_err " << std::scientific << std::setprecision(3)
              << r.max_rel_err << std::defaultfloat << " over " << r.coordinates_checked << " coordinates (worst "
              << r.worst_param << "[" << r.worst_index << "]) " << (r.passed ? "PASS" : "FAIL") << '\n';
    ok = ok && r.passed;
  }
  return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-branch conditional diffusion with wavelet suppression for blind image separation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");
  Args a;

  auto* mk = app.add_subcommand("make-dataset", "Write a synthetic mixture corpus (PPM images and a manifest)");
  mk->add_option("--spec", a.spec, "Dataset spec file (dataset.* keys)")->required()->check(CLI::ExistingFile);
  mk->add_option("--out", a.out, "Output directory")->required();
  mk->add_option("--seed", a.seed, "Override dataset.seed");

  auto* tr = app.add_subcommand("train", "Train both denoisers and both suppression networks");
  tr->add_option("--config", a.config, "Config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", a.out, "Checkpoint path (best validation state)")->required();
  tr->add_option("--seed", a.seed, "Override the config seed");
  tr->add_option("--log-interval", a.log_interval, "Iterations between loss lines")->capture_default_str();
  tr->footer(config_defaults_text());

  auto* sp = app.add_subcommand("separate", "Separate one mixture image into two sources");
  sp->add_option("--ckpt", a.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sp->add_option("--input", a.input, "Mixture PPM")->required()->check(CLI::ExistingFile);
  sp->add_option("--out1", a.out1, "First source PPM")->required();
  sp->add_option("--out2", a.out2, "Second source PPM")->required();
  sp->add_option("--config", a.config, "Refuse unless the checkpoint was trained with this config")
      ->check(CLI::ExistingFile);
  sp->add_flag("--force", a.force, "Ignore a config mismatch");
  sp->add_option("--seed", a.seed, "Sampling seed (default: checkpoint seed)");

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a corpus written by make-dataset");
  ev->add_option("--ckpt", a.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--corpus", a.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", a.split, "Manifest split to score: train, test or all")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "test", "all"}));
  ev->add_option("--csv", a.csv, "Also write per-sample metrics as CSV");
  ev->add_option("--config", a.config, "Refuse unless the checkpoint was trained with this config")
      ->check(CLI::ExistingFile);
  ev->add_flag("--force", a.force, "Ignore a config mismatch");
  ev->add_option("--seed", a.seed, "Sampling seed (default: checkpoint seed)");

  auto* ab = app.add_subcommand("ablate", "Suppression ablation table and optional gamma / alpha sweeps");
  ab->add_option("--config", a.config, "Config file")->required()->check(CLI::ExistingFile);
  ab->add_option("--seeds", a.seeds, "Comma-separated training seeds")->capture_default_str();
  ab->add_option("--gamma", a.gammas, "Gamma values to sweep, comma-separated (retrains per value)")->delimiter(',');
  ab->add_option("--alpha", a.alphas, "alpha_index values to sweep on the first seed's model, comma-separated")->delimiter(',');
  ab->add_option("--out-dir", a.out_dir, "Directory for ablation.txt and sweep CSVs");
  ab->add_option("--log-interval", a.log_interval, "Iterations between loss lines")->capture_default_str();
  ab->footer(config_defaults_text());

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check on 8x8 inputs");
  std::vector<std::string> names = gradcheck_target_names();
  names.push_back("all");
  gc->add_option("--target", a.target, "Module to check")->capture_default_str()->check(CLI::IsMember(names));
  gc->add_option("--seed", a.seed, "Seed for weights and inputs (default 0)");
  gc->add_option("--step", a.h, "Central-difference step h")->capture_default_str();
  gc->add_option("--tolerance", a.tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*mk) return cmd_make_dataset(a);
    if (*tr) return cmd_train(a);
    if (*sp) return cmd_separate(a);
    if (*ev) return cmd_evaluate(a);
    if (*ab) return cmd_ablate(a);
    if (*gc) return cmd_gradcheck(a);
  } catch (const NumericalContractError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kUsage;
}
