#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rtminv/evidence.hpp"
#include "rtminv/mcem.hpp"
#include "rtminv/vi.hpp"

namespace rtminv {

struct BenchConfig {
  std::vector<int> sizes{50, 500, 1000, 2000};
  int repetitions = 5;
  int vi_epochs = 20;
  int mcem_epochs = 3;
};

struct ExperimentConfig {
  std::string name;
  std::string model;
  double noise_variance = kDefaultNoiseVariance;
  GaussianDensity true_prior;
  int train_size = 500;
  int test_size = 50;
  /// "vi", "mcem" or "both".
  std::string method = "both";
  std::uint64_t seed = 0;
  /// Empty means the model's own scale.
  Vector cause_scale;
  ViFitConfig vi;
  McemConfig mcem;
  RisConfig evidence;
  /// Test points scored by RIS when evidence is tracked or evaluated.
  int evidence_test_points = 20;
  bool track_test_evidence = false;
  BenchConfig bench;

  ForwardModel forward_model() const { return make_model(model, noise_variance); }
  std::vector<std::string> methods() const;
};

/// Checks the cross-field invariants and pushes seed / scale into the engine configs.
void finalize(ExperimentConfig& cfg);

void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct Dataset {
  std::string model;
  double noise_variance = 0.0;
  std::uint64_t seed = 0;
  /// Ground truth; may be empty.
  std::vector<Vector> causes;
  std::vector<Vector> effects;
  std::vector<Vector> test_causes;
  std::vector<Vector> test_effects;
};

/// Training and test pairs drawn from the true prior through the model.
Dataset gen_data(const ExperimentConfig& cfg);
Dataset gen_data(const ExperimentConfig& cfg, int train_size, std::uint64_t seed);

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

void write_matrix_csv(std::ostream& out, const std::vector<Vector>& rows, const std::string& prefix);
std::vector<Vector> read_matrix_csv(std::istream& in, const std::string& prefix);

/// Observer scoring each epoch's prior on the first evidence_test_points test effects.
EpochObserver evidence_observer(const ExperimentConfig& cfg, const LikelihoodModel& lm,
                                const std::vector<Vector>& test_effects, int threads);

/// Runs every configured method; results carry the KL to the true prior.
std::vector<FitResult> run_fit(const ExperimentConfig& cfg, const Dataset& ds, int threads);

void write_fit(const FitResult& fit, const std::filesystem::path& path);
FitResult read_fit(const std::filesystem::path& path);

struct BenchRow {
  std::string method;
  int n = 0;
  int repetition = 0;
  int epoch = 0;
  double wall_clock_s = 0.0;
  double test_log_evidence = 0.0;
};

/// Per-epoch test evidence against training time for both methods, every
/// dataset size and repetition.
std::vector<BenchRow> bench_convergence(const ExperimentConfig& cfg, int threads);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

struct PredictionReport {
  /// Per test datum: true causes, predicted means, predicted standard deviations.
  std::vector<Vector> truth;
  std::vector<Vector> mean;
  std::vector<Vector> stddev;
  Vector r2;
  Vector rmse;
};

using Predictor = std::function<GaussianDensity(const Vector& effect)>;

PredictionReport eval_predictions(const Predictor& predict, const std::vector<Vector>& causes,
                                  const std::vector<Vector>& effects);
/// Throws UnsupportedOperation for fits without an encoder (MCEM).
PredictionReport eval_predictions(const FitResult& fit, const std::vector<Vector>& causes,
                                  const std::vector<Vector>& effects);

/// Columns: datum, parameter, true, predicted_mean, predicted_std.
void write_predictions_csv(std::ostream& out, const PredictionReport& report);
nlohmann::json prediction_metrics(const PredictionReport& report);

/// Coefficient of determination of `predicted` against `truth`.
double r_squared(const std::vector<double>& truth, const std::vector<double>& predicted);

}  // namespace rtminv
