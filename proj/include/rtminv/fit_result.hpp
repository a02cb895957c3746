#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rtminv/gaussian.hpp"
#include "rtminv/variational.hpp"

namespace rtminv {

struct EpochRecord {
  int epoch = 0;
  /// Cumulative training time at the end of this epoch (evaluation excluded).
  double wall_clock_s = 0.0;
  /// Mean ELBO per datum (VI) or mean M-step objective per sample (MCEM).
  double objective = 0.0;
  std::optional<double> test_log_evidence;
  /// Data skipped this epoch after numerical failures.
  int skipped = 0;
};

/// Called after each epoch with the current prior; may return a test
/// log-evidence to record. Its running time is not charged to training.
using EpochObserver = std::function<std::optional<double>(int epoch, const GaussianDensity& prior)>;

struct FitResult {
  std::string method;  // "vi" or "mcem"
  std::string model;
  GaussianDensity prior;
  /// Trained recognition model; VI only.
  std::optional<VariationalPosterior> encoder;
  std::vector<EpochRecord> epochs;
  /// Time spent before the first epoch (MCEM initialization).
  double init_wall_clock_s = 0.0;
  std::optional<double> kl_to_truth;
};

void to_json(nlohmann::json& j, const EpochRecord& r);
void from_json(const nlohmann::json& j, EpochRecord& r);
void to_json(nlohmann::json& j, const FitResult& r);
void from_json(const nlohmann::json& j, FitResult& r);

/// Zeroes every wall-clock field so outputs of identical runs compare equal.
void strip_timing(FitResult& r);

}  // namespace rtminv
