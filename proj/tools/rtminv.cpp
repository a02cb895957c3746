// Command-line driver: dataset generation, fitting, evaluation and benchmarks.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rtminv/experiments.hpp"
#include "rtminv/log.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rtminv;

namespace {

enum ExitCode { kOk = 0, kInvalidInput = 1, kNumericalFailure = 2 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
  bool no_timing = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--threads", c.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_flag("--no-timing", c.no_timing, "zero wall-clock fields so reruns are byte-identical");
  cmd->add_flag("--quiet", c.quiet, "suppress warnings");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    finalize(cfg);
  }
  return cfg;
}

fs::path out_dir(const Common& c) {
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

Dataset dataset_for(const ExperimentConfig& cfg, const std::string& data_dir) {
  return data_dir.empty() ? gen_data(cfg) : read_dataset(data_dir);
}

Vector parse_vector(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw InvalidInput("'" + text + "' is not a comma-separated list of numbers");
    }
  }
  require(!v.empty(), "empty vector '" + text + "'");
  return from_std(v);
}

int cmd_gen_data(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  const Dataset ds = gen_data(cfg);
  const fs::path dir = out_dir(c);
  write_dataset(ds, dir);
  std::cout << json{{"train_size", ds.effects.size()}, {"test_size", ds.test_effects.size()},
                    {"out", dir.string()}}
                   .dump()
            << '\n';
  return kOk;
}

int cmd_fit(const Common& c, const std::string& data_dir) {
  const ExperimentConfig cfg = load_config(c);
  const Dataset ds = dataset_for(cfg, data_dir);
  const fs::path dir = out_dir(c);
  json summary = json::array();
  for (FitResult fit : run_fit(cfg, ds, c.threads)) {
    if (c.no_timing) strip_timing(fit);
    const fs::path path = dir / ("fit_" + fit.method + ".json");
    write_fit(fit, path);
    summary.push_back({{"method", fit.method}, {"kl_to_truth", fit.kl_to_truth.value_or(NAN)},
                       {"prior", fit.prior}, {"file", path.string()}});
  }
  std::cout << summary.dump() << '\n';
  return kOk;
}

int cmd_eval_kl(const Common& c, const std::string& fit_path) {
  const ExperimentConfig cfg = load_config(c);
  const FitResult fit = read_fit(fit_path);
  require(fit.prior.dim() == cfg.true_prior.dim(), "fit and config disagree on the cause dimension");
  const json result{{"method", fit.method}, {"kl_to_truth", kl_gaussians(fit.prior, cfg.true_prior)}};
  if (!c.out.empty()) open_out(out_dir(c) / "kl.json") << result.dump(2) << '\n';
  std::cout << result.dump() << '\n';
  return kOk;
}

int cmd_eval_evidence(const Common& c, const std::string& fit_path, const std::string& data_dir) {
  const ExperimentConfig cfg = load_config(c);
  const Dataset ds = dataset_for(cfg, data_dir);
  require(!ds.test_effects.empty(), "dataset has no test split");
  const GaussianDensity prior = fit_path.empty() ? cfg.true_prior : read_fit(fit_path).prior;
  const LikelihoodModel lm(make_model(ds.model, ds.noise_variance));
  const auto n = std::min<std::size_t>(ds.test_effects.size(), static_cast<std::size_t>(cfg.evidence_test_points));
  const std::vector<Vector> subset(ds.test_effects.begin(), ds.test_effects.begin() + static_cast<std::ptrdiff_t>(n));
  const TestEvidence ev = test_evidence(lm, prior, subset, cfg.evidence, derive_seed(cfg.seed, 0x65766964), c.threads);
  const fs::path dir = out_dir(c);
  auto csv = open_out(dir / "evidence.csv");
  write_evidence_csv(csv, ev);
  const json result{{"mean_log_evidence", ev.mean}, {"data", n}, {"failures", ev.failures}};
  open_out(dir / "evidence.json") << result.dump(2) << '\n';
  std::cout << result.dump() << '\n';
  return kOk;
}

int cmd_eval_predict(const Common& c, const std::string& fit_path, const std::string& data_dir) {
  require(!fit_path.empty(), "eval-predict needs --fit");
  const FitResult fit = read_fit(fit_path);
  Dataset ds;
  if (data_dir.empty()) {
    require(!c.config.empty(), "eval-predict needs --data or --config");
    ds = gen_data(load_config(c));
  } else {
    ds = read_dataset(data_dir);
  }
  const bool has_test = !ds.test_effects.empty() && !ds.test_causes.empty();
  const PredictionReport rep = has_test ? eval_predictions(fit, ds.test_causes, ds.test_effects)
                                        : eval_predictions(fit, ds.causes, ds.effects);
  const fs::path dir = out_dir(c);
  auto csv = open_out(dir / "predictions.csv");
  write_predictions_csv(csv, rep);
  const json metrics = prediction_metrics(rep);
  open_out(dir / "metrics.json") << metrics.dump(2) << '\n';
  std::cout << metrics.dump() << '\n';
  return kOk;
}

int cmd_bench(const Common& c, int repetitions) {
  ExperimentConfig cfg = load_config(c);
  if (repetitions > 0) cfg.bench.repetitions = repetitions;
  std::vector<BenchRow> rows = bench_convergence(cfg, c.threads);
  if (c.no_timing)
    for (auto& r : rows) r.wall_clock_s = 0.0;
  auto csv = open_out(out_dir(c) / "bench.csv");
  write_bench_csv(csv, rows);
  std::cout << json{{"rows", rows.size()}}.dump() << '\n';
  return kOk;
}

int cmd_sample_posterior(const Common& c, const std::string& fit_path, const std::string& effect, int n) {
  const ExperimentConfig cfg = load_config(c);
  const GaussianDensity prior = fit_path.empty() ? cfg.true_prior : read_fit(fit_path).prior;
  const LikelihoodModel lm(cfg.forward_model());
  Rng rng = make_rng(cfg.seed, 0x73616d70);
  const PosteriorSamples draws = sample_posterior(lm, prior, parse_vector(effect), n, cfg.mcem.sampler, rng);
  auto csv = open_out(out_dir(c) / "posterior.csv");
  write_chain_csv(csv, draws.samples);
  json modes = json::array();
  for (std::size_t k = 0; k < draws.modes.size(); ++k) {
    modes.push_back({{"point", to_std(draws.modes[k].point)}, {"log_mass", draws.modes[k].log_mass},
                     {"samples", draws.per_mode_counts.empty() ? 0 : draws.per_mode_counts[k]}});
  }
  std::cout << json{{"samples", draws.samples.size()}, {"acceptance_rate", draws.acceptance_rate},
                    {"modes", modes}}
                   .dump()
            << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn simulator input priors from observed outputs and invert the simulator"};
  app.require_subcommand(1);

  Common common;
  std::string data_dir;
  std::string fit_path;
  std::string effect;
  int n_samples = 5000;
  int repetitions = 0;

  auto* gen = app.add_subcommand("gen-data", "draw a training/test dataset from the true prior");
  add_common(gen, common, true);
  auto* fit = app.add_subcommand("fit", "fit the prior with VI and/or MCEM");
  add_common(fit, common, true);
  fit->add_option("--data", data_dir, "dataset directory (default: generate from the config)");
  auto* kl = app.add_subcommand("eval-kl", "KL divergence from a fitted prior to the true prior");
  add_common(kl, common, true);
  kl->add_option("--fit", fit_path, "fit result JSON")->required();
  auto* ev = app.add_subcommand("eval-evidence", "RIS log-evidence on the test split");
  add_common(ev, common, true);
  ev->add_option("--fit", fit_path, "fit result JSON (default: the true prior)");
  ev->add_option("--data", data_dir, "dataset directory (default: generate from the config)");
  auto* pred = app.add_subcommand("eval-predict", "score the VI recognition model on held-out data");
  add_common(pred, common, false);
  pred->add_option("--fit", fit_path, "VI fit result JSON")->required();
  pred->add_option("--data", data_dir, "dataset directory with ground-truth causes");
  auto* bench = app.add_subcommand("bench", "test evidence against training time for both methods");
  add_common(bench, common, true);
  bench->add_option("--repetitions", repetitions, "override the configured repetition count")
      ->check(CLI::PositiveNumber);
  auto* post = app.add_subcommand("sample-posterior", "HMC draws from the posterior of one effect");
  add_common(post, common, true);
  post->add_option("--fit", fit_path, "fit result JSON supplying the prior (default: the true prior)");
  post->add_option("--effect", effect, "observed effect, comma-separated")->required();
  post->add_option("--n", n_samples, "number of draws")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalidInput;
  }

  if (common.quiet) set_warning_sink({});
  try {
    if (gen->parsed()) return cmd_gen_data(common);
    if (fit->parsed()) return cmd_fit(common, data_dir);
    if (kl->parsed()) return cmd_eval_kl(common, fit_path);
    if (ev->parsed()) return cmd_eval_evidence(common, fit_path, data_dir);
    if (pred->parsed()) return cmd_eval_predict(common, fit_path, data_dir);
    if (bench->parsed()) return cmd_bench(common, repetitions);
    if (post->parsed()) return cmd_sample_posterior(common, fit_path, effect, n_samples);
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const InvalidState& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const json::exception& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
  return kInvalidInput;
}
