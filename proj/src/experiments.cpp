#include "rtminv/experiments.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rtminv {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> ExperimentConfig::methods() const {
  if (method == "both") return {"vi", "mcem"};
  return {method};
}

void finalize(ExperimentConfig& cfg) {
  const auto names = model_names();
  require(std::find(names.begin(), names.end(), cfg.model) != names.end(),
          "unknown model '" + cfg.model + "'");
  require(cfg.noise_variance > 0.0, "noise variance must be positive");
  const ForwardModel model = cfg.forward_model();
  require(cfg.true_prior.dim() == model.cause_dim(),
          "true prior dimension does not match the model's cause dimension");
  require(cfg.train_size >= 1, "train_size must be positive");
  require(cfg.test_size >= 0, "test_size must be nonnegative");
  require(cfg.method == "vi" || cfg.method == "mcem" || cfg.method == "both",
          "method must be vi, mcem or both");
  require(cfg.evidence_test_points >= 1, "evidence_test_points must be positive");
  require(cfg.cause_scale.size() == 0 || cfg.cause_scale.size() == model.cause_dim(),
          "cause_scale does not match the model");
  require(cfg.bench.repetitions >= 1, "bench repetitions must be positive");
  require(cfg.bench.vi_epochs >= 1 && cfg.bench.mcem_epochs >= 1, "bench epochs must be positive");
  for (int n : cfg.bench.sizes) require(n >= 2, "bench dataset sizes must be at least 2");
  cfg.vi.seed = derive_seed(cfg.seed, 0x7669);
  cfg.mcem.seed = derive_seed(cfg.seed, 0x6d63656d);
  cfg.vi.cause_scale = cfg.cause_scale;
  cfg.mcem.cause_scale = cfg.cause_scale;
  validate(cfg.vi);
  validate(cfg.mcem);
  validate(cfg.evidence);
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_sampler(const json& j, PosteriorSamplerConfig& s) {
  read_opt(j, "random_starts", s.modes.random_starts);
  read_opt(j, "merge_tolerance", s.modes.merge_tolerance);
  read_opt(j, "lbfgs_max_iterations", s.modes.lbfgs.max_iterations);
  read_opt(j, "lbfgs_memory", s.modes.lbfgs.memory);
  read_opt(j, "gradient_tolerance", s.modes.lbfgs.gradient_tolerance);
  read_opt(j, "function_tolerance", s.modes.lbfgs.function_tolerance);
  read_opt(j, "leapfrog_steps", s.hmc.leapfrog_steps);
  read_opt(j, "step_size", s.hmc.step_size);
  read_opt(j, "burn_in", s.hmc.burn_in);
  read_opt(j, "thinning", s.hmc.thinning);
}

json write_sampler(const PosteriorSamplerConfig& s) {
  return {{"random_starts", s.modes.random_starts},
          {"merge_tolerance", s.modes.merge_tolerance},
          {"lbfgs_max_iterations", s.modes.lbfgs.max_iterations},
          {"lbfgs_memory", s.modes.lbfgs.memory},
          {"gradient_tolerance", s.modes.lbfgs.gradient_tolerance},
          {"function_tolerance", s.modes.lbfgs.function_tolerance},
          {"leapfrog_steps", s.hmc.leapfrog_steps},
          {"step_size", s.hmc.step_size},
          {"burn_in", s.hmc.burn_in},
          {"thinning", s.hmc.thinning}};
}

std::vector<int> k_range(int k_max) {
  std::vector<int> ks;
  for (int k = 1; k <= k_max; ++k) ks.push_back(k);
  return ks;
}

}  // namespace

void from_json(const json& j, ExperimentConfig& cfg) {
  cfg = ExperimentConfig{};
  cfg.model = j.at("model").get<std::string>();
  cfg.name = j.value("name", cfg.model);
  read_opt(j, "noise_variance", cfg.noise_variance);
  cfg.true_prior = j.at("true_prior").get<GaussianDensity>();
  read_opt(j, "train_size", cfg.train_size);
  read_opt(j, "test_size", cfg.test_size);
  read_opt(j, "method", cfg.method);
  read_opt(j, "seed", cfg.seed);
  if (j.contains("cause_scale")) cfg.cause_scale = from_std(j["cause_scale"].get<std::vector<double>>());
  read_opt(j, "track_test_evidence", cfg.track_test_evidence);

  if (j.contains("sampler")) {
    read_sampler(j["sampler"], cfg.mcem.sampler);
    cfg.evidence.sampler = cfg.mcem.sampler;
  }
  if (j.contains("vi")) {
    const json& v = j["vi"];
    read_opt(v, "epochs", cfg.vi.epochs);
    read_opt(v, "learning_rate", cfg.vi.learning_rate);
    read_opt(v, "mc_samples_per_datum", cfg.vi.mc_samples_per_datum);
    read_opt(v, "hidden_layers", cfg.vi.hidden_layers);
  }
  if (j.contains("mcem")) {
    const json& m = j["mcem"];
    read_opt(m, "epochs", cfg.mcem.epochs);
    read_opt(m, "samples_per_datum", cfg.mcem.samples_per_datum);
    read_opt(m, "parallel_e_step", cfg.mcem.parallel_e_step);
    read_opt(m, "reference_variance", cfg.mcem.reference_variance);
  }
  if (j.contains("evidence")) {
    const json& e = j["evidence"];
    read_opt(e, "fit_samples", cfg.evidence.fit_samples);
    read_opt(e, "estimator_samples", cfg.evidence.estimator_samples);
    read_opt(e, "test_points", cfg.evidence_test_points);
    read_opt(e, "folds", cfg.evidence.gmm.folds);
    if (e.contains("k_max")) cfg.evidence.gmm.k_candidates = k_range(e["k_max"].get<int>());
  }
  if (j.contains("bench")) {
    const json& b = j["bench"];
    read_opt(b, "sizes", cfg.bench.sizes);
    read_opt(b, "repetitions", cfg.bench.repetitions);
    read_opt(b, "vi_epochs", cfg.bench.vi_epochs);
    read_opt(b, "mcem_epochs", cfg.bench.mcem_epochs);
  }
}

void to_json(json& j, const ExperimentConfig& cfg) {
  j = json{{"name", cfg.name},
           {"model", cfg.model},
           {"noise_variance", cfg.noise_variance},
           {"true_prior", cfg.true_prior},
           {"train_size", cfg.train_size},
           {"test_size", cfg.test_size},
           {"method", cfg.method},
           {"seed", cfg.seed},
           {"track_test_evidence", cfg.track_test_evidence},
           {"sampler", write_sampler(cfg.mcem.sampler)},
           {"vi",
            {{"epochs", cfg.vi.epochs},
             {"learning_rate", cfg.vi.learning_rate},
             {"mc_samples_per_datum", cfg.vi.mc_samples_per_datum},
             {"hidden_layers", cfg.vi.hidden_layers}}},
           {"mcem",
            {{"epochs", cfg.mcem.epochs},
             {"samples_per_datum", cfg.mcem.samples_per_datum},
             {"parallel_e_step", cfg.mcem.parallel_e_step},
             {"reference_variance", cfg.mcem.reference_variance}}},
           {"evidence",
            {{"fit_samples", cfg.evidence.fit_samples},
             {"estimator_samples", cfg.evidence.estimator_samples},
             {"test_points", cfg.evidence_test_points},
             {"folds", cfg.evidence.gmm.folds},
             {"k_max", cfg.evidence.gmm.k_candidates.empty() ? 0 : cfg.evidence.gmm.k_candidates.back()}}},
           {"bench",
            {{"sizes", cfg.bench.sizes},
             {"repetitions", cfg.bench.repetitions},
             {"vi_epochs", cfg.bench.vi_epochs},
             {"mcem_epochs", cfg.bench.mcem_epochs}}}};
  if (cfg.cause_scale.size()) j["cause_scale"] = to_std(cfg.cause_scale);
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw InvalidInput("config " + path.string() + " is not valid JSON: " + ex.what());
  }
  ExperimentConfig cfg;
  try {
    cfg = j.get<ExperimentConfig>();
  } catch (const json::exception& ex) {
    throw InvalidInput("config " + path.string() + ": " + ex.what());
  }
  finalize(cfg);
  return cfg;
}

Dataset gen_data(const ExperimentConfig& cfg, int train_size, std::uint64_t seed) {
  require(train_size >= 1, "dataset size must be positive");
  const ForwardModel model = cfg.forward_model();
  require(cfg.true_prior.dim() == model.cause_dim(), "true prior does not match the model");
  Dataset ds;
  ds.model = cfg.model;
  ds.noise_variance = cfg.noise_variance;
  ds.seed = seed;
  auto draw = [&](int n, Rng& rng, std::vector<Vector>& causes, std::vector<Vector>& effects) {
    for (int i = 0; i < n; ++i) {
      causes.push_back(cfg.true_prior.sample(rng));
      effects.push_back(model.simulate(causes.back(), rng));
    }
  };
  Rng train_rng = make_rng(seed, 0x747261696e);
  draw(train_size, train_rng, ds.causes, ds.effects);
  // The test stream depends on the base seed only, so every training size
  // shares one test set.
  Rng test_rng = make_rng(cfg.seed, 0x74657374);
  draw(cfg.test_size, test_rng, ds.test_causes, ds.test_effects);
  return ds;
}

Dataset gen_data(const ExperimentConfig& cfg) { return gen_data(cfg, cfg.train_size, cfg.seed); }

void write_matrix_csv(std::ostream& out, const std::vector<Vector>& rows, const std::string& prefix) {
  require(!rows.empty(), "cannot write an empty table");
  const Eigen::Index d = rows.front().size();
  for (Eigen::Index k = 0; k < d; ++k) out << (k ? "," : "") << prefix << '_' << (k + 1);
  out << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    for (Eigen::Index k = 0; k < d; ++k) out << (k ? "," : "") << r[k];
    out << '\n';
  }
}

std::vector<Vector> read_matrix_csv(std::istream& in, const std::string& prefix) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("CSV file is empty");
  std::size_t cols = 0;
  {
    std::istringstream header(line);
    std::string name;
    while (std::getline(header, name, ',')) {
      if (name != prefix + "_" + std::to_string(cols + 1))
        throw InvalidInput("unexpected CSV column '" + name + "'");
      ++cols;
    }
  }
  std::vector<Vector> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    Vector v(static_cast<Eigen::Index>(cols));
    std::size_t k = 0;
    while (std::getline(row, cell, ',')) {
      if (k >= cols) throw InvalidInput("CSV row has too many columns");
      try {
        v[static_cast<Eigen::Index>(k)] = std::stod(cell);
      } catch (const std::exception&) {
        throw InvalidInput("CSV cell '" + cell + "' is not a number");
      }
      ++k;
    }
    if (k != cols) throw InvalidInput("CSV row has too few columns");
    rows.push_back(std::move(v));
  }
  return rows;
}

namespace {

void write_table(const fs::path& path, const std::vector<Vector>& rows, const std::string& prefix) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  write_matrix_csv(out, rows, prefix);
}

std::vector<Vector> read_table(const fs::path& path, const std::string& prefix) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read " + path.string());
  return read_matrix_csv(in, prefix);
}

void create_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create output directory " + dir.string() + ": " + ec.message());
}

}  // namespace

void write_dataset(const Dataset& ds, const fs::path& dir) {
  create_dir(dir);
  write_table(dir / "effects.csv", ds.effects, "e");
  if (!ds.causes.empty()) write_table(dir / "causes.csv", ds.causes, "c");
  if (!ds.test_effects.empty()) {
    create_dir(dir / "test");
    write_table(dir / "test" / "effects.csv", ds.test_effects, "e");
    if (!ds.test_causes.empty()) write_table(dir / "test" / "causes.csv", ds.test_causes, "c");
  }
  std::ofstream meta(dir / "dataset.json");
  meta << json{{"model", ds.model},
               {"noise_variance", ds.noise_variance},
               {"seed", ds.seed},
               {"train_size", ds.effects.size()},
               {"test_size", ds.test_effects.size()}}
              .dump(2)
       << '\n';
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream meta_in(dir / "dataset.json");
  if (!meta_in) throw InvalidInput("no dataset.json in " + dir.string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& ex) {
    throw InvalidInput("dataset.json is not valid JSON: " + std::string(ex.what()));
  }
  Dataset ds;
  ds.model = meta.at("model").get<std::string>();
  ds.noise_variance = meta.at("noise_variance").get<double>();
  ds.seed = meta.value("seed", std::uint64_t{0});
  ds.effects = read_table(dir / "effects.csv", "e");
  if (fs::exists(dir / "causes.csv")) ds.causes = read_table(dir / "causes.csv", "c");
  if (fs::exists(dir / "test" / "effects.csv")) ds.test_effects = read_table(dir / "test" / "effects.csv", "e");
  if (fs::exists(dir / "test" / "causes.csv")) ds.test_causes = read_table(dir / "test" / "causes.csv", "c");
  require(ds.causes.empty() || ds.causes.size() == ds.effects.size(),
          "causes and effects have different row counts");
  require(ds.test_causes.empty() || ds.test_causes.size() == ds.test_effects.size(),
          "test causes and effects have different row counts");
  return ds;
}

EpochObserver evidence_observer(const ExperimentConfig& cfg, const LikelihoodModel& lm,
                                const std::vector<Vector>& test_effects, int threads) {
  require(!test_effects.empty(), "evidence tracking needs a test set");
  const auto n = std::min<std::size_t>(test_effects.size(), static_cast<std::size_t>(cfg.evidence_test_points));
  std::vector<Vector> subset(test_effects.begin(), test_effects.begin() + static_cast<std::ptrdiff_t>(n));
  const std::uint64_t seed = derive_seed(cfg.seed, 0x65766964);
  return [lm, subset = std::move(subset), ris = cfg.evidence, seed, threads](
             int, const GaussianDensity& prior) -> std::optional<double> {
    return test_evidence(lm, prior, subset, ris, seed, threads).mean;
  };
}

std::vector<FitResult> run_fit(const ExperimentConfig& cfg, const Dataset& ds, int threads) {
  require(!ds.effects.empty(), "dataset has no effects");
  require(ds.model == cfg.model, "dataset model '" + ds.model + "' does not match the config");
  const LikelihoodModel lm(make_model(ds.model, ds.noise_variance));
  EpochObserver observer;
  if (cfg.track_test_evidence) observer = evidence_observer(cfg, lm, ds.test_effects, threads);
  std::vector<FitResult> results;
  for (const auto& method : cfg.methods()) {
    FitResult fit;
    if (method == "vi") {
      fit = fit_vi(lm, ds.effects, cfg.vi, observer);
    } else {
      McemConfig mc = cfg.mcem;
      mc.threads = threads;
      fit = fit_mcem(lm, ds.effects, mc, observer);
    }
    fit.kl_to_truth = kl_gaussians(fit.prior, cfg.true_prior);
    results.push_back(std::move(fit));
  }
  return results;
}

void write_fit(const FitResult& fit, const fs::path& path) {
  if (path.has_parent_path()) create_dir(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << json(fit).dump(2) << '\n';
}

FitResult read_fit(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read fit result " + path.string());
  try {
    return json::parse(in).get<FitResult>();
  } catch (const json::exception& ex) {
    throw InvalidInput("fit result " + path.string() + " is malformed: " + ex.what());
  }
}

std::vector<BenchRow> bench_convergence(const ExperimentConfig& cfg, int threads) {
  std::vector<BenchRow> rows;
  for (const int n : cfg.bench.sizes) {
    for (int rep = 0; rep < cfg.bench.repetitions; ++rep) {
      const Dataset ds = gen_data(cfg, n, derive_seed(cfg.seed, static_cast<std::uint64_t>(n),
                                                      static_cast<std::uint64_t>(rep)));
      require(!ds.test_effects.empty(), "bench needs a test set (test_size > 0)");
      const LikelihoodModel lm(make_model(ds.model, ds.noise_variance));
      const EpochObserver observer = evidence_observer(cfg, lm, ds.test_effects, threads);
      for (const auto& method : cfg.methods()) {
        FitResult fit;
        if (method == "vi") {
          ViFitConfig vc = cfg.vi;
          vc.epochs = cfg.bench.vi_epochs;
          vc.seed = derive_seed(cfg.vi.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep));
          fit = fit_vi(lm, ds.effects, vc, observer);
        } else {
          McemConfig mc = cfg.mcem;
          mc.epochs = cfg.bench.mcem_epochs;
          mc.threads = threads;
          mc.seed = derive_seed(cfg.mcem.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep));
          fit = fit_mcem(lm, ds.effects, mc, observer);
        }
        for (const auto& e : fit.epochs) {
          rows.push_back({method, n, rep, e.epoch, e.wall_clock_s, e.test_log_evidence.value_or(NAN)});
        }
      }
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "method,n,repetition,epoch,wall_clock_s,test_log_evidence\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.method << ',' << r.n << ',' << r.repetition << ',' << r.epoch << ',' << r.wall_clock_s << ','
        << r.test_log_evidence << '\n';
  }
}

double r_squared(const std::vector<double>& truth, const std::vector<double>& predicted) {
  require(truth.size() == predicted.size() && !truth.empty(), "R^2 needs matching non-empty vectors");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

PredictionReport eval_predictions(const Predictor& predict, const std::vector<Vector>& causes,
                                  const std::vector<Vector>& effects) {
  require(!effects.empty(), "prediction needs a non-empty test set");
  require(causes.size() == effects.size(), "prediction needs ground-truth causes for every effect");
  PredictionReport rep;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    const GaussianDensity q = predict(effects[i]);
    require(q.dim() == causes[i].size(), "predicted dimension does not match the causes");
    rep.truth.push_back(causes[i]);
    rep.mean.push_back(q.mean());
    rep.stddev.push_back(q.cov().diagonal().cwiseSqrt());
  }
  const Eigen::Index d = causes.front().size();
  rep.r2.resize(d);
  rep.rmse.resize(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    std::vector<double> t;
    std::vector<double> p;
    double sq = 0.0;
    for (std::size_t i = 0; i < effects.size(); ++i) {
      t.push_back(rep.truth[i][k]);
      p.push_back(rep.mean[i][k]);
      sq += (t.back() - p.back()) * (t.back() - p.back());
    }
    rep.r2[k] = r_squared(t, p);
    rep.rmse[k] = std::sqrt(sq / static_cast<double>(effects.size()));
  }
  return rep;
}

PredictionReport eval_predictions(const FitResult& fit, const std::vector<Vector>& causes,
                                  const std::vector<Vector>& effects) {
  if (!fit.encoder) {
    throw UnsupportedOperation("fit '" + fit.method +
                               "' has no recognition model; use sample-posterior to obtain "
                               "posterior draws for individual effects");
  }
  const VariationalPosterior& q = *fit.encoder;
  return eval_predictions([&](const Vector& e) { return predict_posterior(q, e); }, causes, effects);
}

void write_predictions_csv(std::ostream& out, const PredictionReport& report) {
  out << "datum,parameter,true,predicted_mean,predicted_std\n" << std::setprecision(17);
  for (std::size_t i = 0; i < report.truth.size(); ++i) {
    for (Eigen::Index k = 0; k < report.truth[i].size(); ++k) {
      out << i << ',' << (k + 1) << ',' << report.truth[i][k] << ',' << report.mean[i][k] << ','
          << report.stddev[i][k] << '\n';
    }
  }
}

json prediction_metrics(const PredictionReport& report) {
  return {{"r2", to_std(report.r2)}, {"rmse", to_std(report.rmse)}, {"n", report.truth.size()}};
}

}  // namespace rtminv
