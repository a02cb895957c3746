#pragma once

#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rtminv/gaussian.hpp"

namespace rtminv {

class GaussianMixture {
 public:
  GaussianMixture() = default;
  GaussianMixture(Vector weights, std::vector<GaussianDensity> components);

  Eigen::Index size() const { return weights_.size(); }
  Eigen::Index dim() const { return components_.front().dim(); }
  const Vector& weights() const { return weights_; }
  const std::vector<GaussianDensity>& components() const { return components_; }

  double log_pdf(const Vector& x) const;
  /// log_pdf at every point, batched.
  Vector log_pdf(std::span<const Vector> xs) const;
  Vector sample(Rng& rng) const;

 private:
  Vector weights_;
  std::vector<GaussianDensity> components_;
};

struct EmConfig {
  int max_iterations = 200;
  /// Stop once the total training log-likelihood increases by less than this.
  double tolerance = 1e-8;
  /// Components whose weight falls below this are dropped.
  double min_weight = 1e-6;
};

struct EmFit {
  GaussianMixture mixture;
  /// Total training log-likelihood after each EM iteration.
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  int dropped_components = 0;
};

/// EM for a K-component mixture with k-means++-style seeding.
/// Collapsed components are dropped; throws NumericalFailure if none survive.
EmFit fit_gmm_em(std::span<const Vector> samples, int components, Rng& rng,
                 const EmConfig& cfg = {});

struct GmmSelectionConfig {
  std::vector<int> k_candidates{1, 2, 3, 4, 5};
  int folds = 5;
  EmConfig em;
};

struct GmmSelection {
  GaussianMixture mixture;
  int selected_k = 0;
  /// Mean held-out log-likelihood per sample, one entry per candidate.
  std::vector<double> cv_scores;
};

/// Chooses K by cross-validated held-out log-likelihood, then refits on all data.
GmmSelection fit_gmm(std::span<const Vector> samples, const GmmSelectionConfig& cfg, Rng& rng);

void to_json(nlohmann::json& j, const GaussianMixture& g);
void from_json(const nlohmann::json& j, GaussianMixture& g);

/// log(sum(exp(values))) with max-shift.
double log_sum_exp(std::span<const double> values);

}  // namespace rtminv
