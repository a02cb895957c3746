#include "rtminv/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace rtminv {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

GaussianMixture::GaussianMixture(Vector weights, std::vector<GaussianDensity> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  require(!components_.empty(), "mixture needs at least one component");
  require(weights_.size() == static_cast<Eigen::Index>(components_.size()),
          "mixture weight count does not match component count");
  require((weights_.array() >= 0.0).all(), "mixture weights must be nonnegative");
  require(std::abs(weights_.sum() - 1.0) <= 1e-12, "mixture weights must sum to 1");
  for (const auto& c : components_) {
    require(c.dim() == components_.front().dim(), "mixture components differ in dimension");
  }
}

double GaussianMixture::log_pdf(const Vector& x) const {
  std::vector<double> terms;
  terms.reserve(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const double w = weights_[static_cast<Eigen::Index>(k)];
    if (w > 0.0) terms.push_back(std::log(w) + components_[k].log_pdf(x));
  }
  return log_sum_exp(terms);
}

Vector GaussianMixture::sample(Rng& rng) const {
  double u = uniform01(rng);
  std::size_t k = 0;
  for (; k + 1 < components_.size(); ++k) {
    u -= weights_[static_cast<Eigen::Index>(k)];
    if (u < 0.0) break;
  }
  return components_[k].sample(rng);
}

namespace {

std::vector<Vector> kmeanspp_centers(std::span<const Vector> samples, int k, Rng& rng) {
  const std::size_t n = samples.size();
  std::vector<Vector> centers;
  centers.push_back(samples[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n))]);
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], (samples[i] - centers.back()).squaredNorm());
      total += dist2[i];
    }
    if (!(total > 0.0)) {
      centers.push_back(samples[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n))]);
      continue;
    }
    double u = uniform01(rng) * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= dist2[i];
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(samples[pick]);
  }
  return centers;
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Column-wise log N(x_i | component) for the samples stacked in x (D x N).
Eigen::RowVectorXd batch_log_pdf(const Matrix& x, const GaussianDensity& g) {
  Matrix z = x.colwise() - g.mean();
  g.factor().triangularView<Eigen::Lower>().solveInPlace(z);
  const double c = -0.5 * (static_cast<double>(x.rows()) * kLog2Pi + g.log_det_cov());
  return (-0.5 * z.colwise().squaredNorm()).array() + c;
}

Matrix stack(std::span<const Vector> samples) {
  Matrix x(samples.front().size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = samples[i];
  return x;
}

}  // namespace

EmFit fit_gmm_em(std::span<const Vector> samples, int components, Rng& rng, const EmConfig& cfg) {
  require(components >= 1, "GMM needs at least one component");
  require(samples.size() >= 2 && samples.size() >= static_cast<std::size_t>(components),
          "GMM needs at least max(2, K) samples");
  const auto n = static_cast<Eigen::Index>(samples.size());
  const Matrix x = stack(samples);

  const GaussianDensity global = fit_gaussian_mle(samples);
  std::vector<GaussianDensity> comps;
  for (const auto& center : kmeanspp_centers(samples, components, rng)) {
    comps.emplace_back(center, global.cov());
  }
  std::vector<double> log_w(comps.size(), -std::log(static_cast<double>(comps.size())));

  EmFit fit;
  double previous = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const auto kk = static_cast<Eigen::Index>(comps.size());
    Matrix log_resp(kk, n);
    for (Eigen::Index k = 0; k < kk; ++k) {
      log_resp.row(k) = batch_log_pdf(x, comps[static_cast<std::size_t>(k)]).array() +
                        log_w[static_cast<std::size_t>(k)];
    }
    const Eigen::RowVectorXd top = log_resp.colwise().maxCoeff();
    const Eigen::RowVectorXd lse =
        top.array() + (log_resp.rowwise() - top).array().exp().colwise().sum().log();
    const double total = lse.sum();
    if (!std::isfinite(total)) throw NumericalFailure("GMM EM: non-finite log-likelihood");
    fit.log_likelihood_trace.push_back(total);
    fit.iterations = iter + 1;
    if (total - previous < cfg.tolerance) break;
    previous = total;
    const Matrix resp = (log_resp.rowwise() - lse).array().exp();

    // M-step; collapsed components are dropped.
    std::vector<GaussianDensity> next;
    std::vector<double> next_log_w;
    for (Eigen::Index k = 0; k < kk; ++k) {
      const double nk = resp.row(k).sum();
      const double weight = nk / static_cast<double>(n);
      if (!(weight >= cfg.min_weight)) {
        ++fit.dropped_components;
        continue;
      }
      const Vector mean = x * resp.row(k).transpose() / nk;
      const Matrix centered = x.colwise() - mean;
      Matrix cov = centered * resp.row(k).asDiagonal() * centered.transpose() / nk;
      cov = 0.5 * (cov + cov.transpose());
      try {
        next.emplace_back(mean, cov);
        next_log_w.push_back(std::log(weight));
      } catch (const NumericalFailure&) {
        ++fit.dropped_components;
      }
    }
    if (next.empty()) throw NumericalFailure("GMM EM: every component collapsed");
    if (next.size() != comps.size()) {
      // Renormalize after dropping; the likelihood trace restarts its baseline.
      const double l = log_sum_exp(next_log_w);
      for (auto& w : next_log_w) w -= l;
      previous = -std::numeric_limits<double>::infinity();
    }
    comps = std::move(next);
    log_w = std::move(next_log_w);
  }

  Vector weights(static_cast<Eigen::Index>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k) weights[static_cast<Eigen::Index>(k)] = std::exp(log_w[k]);
  weights /= weights.sum();
  fit.mixture = GaussianMixture(weights, std::move(comps));
  return fit;
}

Vector GaussianMixture::log_pdf(std::span<const Vector> xs) const {
  require(!xs.empty(), "log_pdf needs at least one point");
  const Matrix x = stack(xs);
  Matrix terms(size(), x.cols());
  for (Eigen::Index k = 0; k < size(); ++k) {
    const double w = weights_[k];
    if (w > 0.0) {
      terms.row(k) = batch_log_pdf(x, components_[static_cast<std::size_t>(k)]).array() + std::log(w);
    } else {
      terms.row(k).setConstant(-std::numeric_limits<double>::infinity());
    }
  }
  const Eigen::RowVectorXd top = terms.colwise().maxCoeff();
  return (top.array() + (terms.rowwise() - top).array().exp().colwise().sum().log()).transpose();
}

GmmSelection fit_gmm(std::span<const Vector> samples, const GmmSelectionConfig& cfg, Rng& rng) {
  require(!cfg.k_candidates.empty(), "fit_gmm needs at least one candidate K");
  require(cfg.folds >= 2, "fit_gmm needs at least 2 folds");
  const int max_k = *std::max_element(cfg.k_candidates.begin(), cfg.k_candidates.end());
  require(*std::min_element(cfg.k_candidates.begin(), cfg.k_candidates.end()) >= 1,
          "candidate K values must be positive");
  require(samples.size() >= static_cast<std::size_t>(cfg.folds) * static_cast<std::size_t>(max_k),
          "fit_gmm needs at least folds * max(K) samples");

  const std::size_t n = samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  GmmSelection out;
  double best = -std::numeric_limits<double>::infinity();
  for (int k : cfg.k_candidates) {
    double score = 0.0;
    for (int fold = 0; fold < cfg.folds && std::isfinite(score); ++fold) {
      std::vector<Vector> train;
      std::vector<Vector> held;
      for (std::size_t pos = 0; pos < n; ++pos) {
        (static_cast<int>(pos % static_cast<std::size_t>(cfg.folds)) == fold ? held : train)
            .push_back(samples[order[pos]]);
      }
      try {
        const EmFit em = fit_gmm_em(train, k, rng, cfg.em);
        const double ll = em.mixture.log_pdf(held).sum();
        score += ll / static_cast<double>(held.size()) / static_cast<double>(cfg.folds);
      } catch (const NumericalFailure&) {
        score = -std::numeric_limits<double>::infinity();
      } catch (const InvalidInput&) {
        score = -std::numeric_limits<double>::infinity();
      }
    }
    if (!std::isfinite(score)) score = -std::numeric_limits<double>::infinity();
    out.cv_scores.push_back(score);
    if (score > best) {
      best = score;
      out.selected_k = k;
    }
  }
  if (out.selected_k == 0) throw NumericalFailure("fit_gmm: every candidate K failed");
  out.mixture = fit_gmm_em(samples, out.selected_k, rng, cfg.em).mixture;
  return out;
}

void to_json(nlohmann::json& j, const GaussianMixture& g) {
  j = nlohmann::json{{"weights", to_std(g.weights())}, {"components", g.components()}};
}

void from_json(const nlohmann::json& j, GaussianMixture& g) {
  g = GaussianMixture(from_std(j.at("weights").get<std::vector<double>>()),
                      j.at("components").get<std::vector<GaussianDensity>>());
}

}  // namespace rtminv
