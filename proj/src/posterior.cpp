#include "rtminv/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rtminv {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

PosteriorTarget::PosteriorTarget(LikelihoodModel likelihood, GaussianDensity prior, Vector effect)
    : likelihood_(std::move(likelihood)), prior_(std::move(prior)), effect_(std::move(effect)) {
  require(prior_.dim() == likelihood_.forward().cause_dim(),
          "prior dimension does not match the model's cause dimension");
  require(effect_.size() == likelihood_.forward().effect_dim(),
          "effect dimension does not match the model");
}

double PosteriorTarget::log_density(const Vector& c, Vector& grad) const {
  const double value = likelihood_.log_likelihood(c, effect_, grad) + prior_.log_pdf(c);
  grad += prior_.grad_log_pdf(c);
  return value;
}

double PosteriorTarget::log_density(const Vector& c) const {
  return likelihood_.log_likelihood(c, effect_) + prior_.log_pdf(c);
}

LogDensity PosteriorTarget::as_log_density() const {
  return [this](const Vector& c, Vector& grad) {
    try {
      return log_density(c, grad);
    } catch (const NumericalFailure&) {
      grad = Vector::Constant(c.size(), std::numeric_limits<double>::quiet_NaN());
      return -std::numeric_limits<double>::infinity();
    }
  };
}

Matrix PosteriorTarget::gauss_newton_precision(const Vector& c) const {
  const Matrix j = likelihood_.forward().jacobian(c);
  const Matrix& l = prior_.factor();
  const Matrix l_inv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(dim(), dim()));
  return j.transpose() * j / likelihood_.noise_variance() + l_inv.transpose() * l_inv;
}

MapResult find_posterior_map(const PosteriorTarget& target, const Vector& start,
                             const LbfgsConfig& cfg) {
  const Vector& m = target.prior().mean();
  const Matrix& l = target.prior().factor();
  const LogDensity base = target.as_log_density();
  const LogDensity whitened = [&](const Vector& u, Vector& grad) {
    Vector gc;
    const double v = base(m + l * u, gc);
    grad = l.transpose() * gc;
    return v;
  };
  MapResult r = find_map(whitened, target.prior().whiten(start - m), cfg);
  r.point = m + l * r.point;
  r.gradient = target.prior().solve(l * r.gradient);  // back to d/dc
  return r;
}

PosteriorMode laplace_at(const PosteriorTarget& target, const Vector& point) {
  const Eigen::Index d = target.dim();
  const Matrix& l = target.prior().factor();
  const Matrix j = target.likelihood().forward().jacobian(point) * l;
  // Precision in prior-whitened coordinates: L^T J^T J L / sigma^2 + I.
  Matrix h = j.transpose() * j / target.likelihood().noise_variance();
  h.diagonal().array() += 1.0;
  const Matrix r = cholesky_with_jitter(0.5 * (h + h.transpose()));
  // Cov_u = R^{-T} R^{-1}; factor F_u = R^{-T}.
  const Matrix f_u = r.transpose().triangularView<Eigen::Upper>().solve(Matrix::Identity(d, d));
  PosteriorMode mode;
  mode.point = point;
  mode.log_density = target.log_density(point);
  mode.scale_factor = l * f_u;
  const double log_det_cov =
      target.prior().log_det_cov() - 2.0 * r.diagonal().array().log().sum();
  mode.log_mass = mode.log_density + 0.5 * log_det_cov + 0.5 * static_cast<double>(d) * kLog2Pi;
  return mode;
}

std::vector<PosteriorMode> find_posterior_modes(const PosteriorTarget& target,
                                                const ModeSearchConfig& cfg, Rng& rng) {
  require(cfg.random_starts >= 0, "random_starts must be nonnegative");
  std::vector<Vector> starts{target.prior().mean()};
  for (int i = 0; i < cfg.random_starts; ++i) starts.push_back(target.prior().sample(rng));

  std::vector<MapResult> found;
  for (const auto& s : starts) {
    try {
      MapResult r = find_posterior_map(target, s, cfg.lbfgs);
      if (std::isfinite(r.log_density)) found.push_back(std::move(r));
    } catch (const InvalidInput&) {
      // Start outside the target's finite region; try the next one.
    }
  }
  if (found.empty()) throw NumericalFailure("posterior mode search failed from every start");
  std::stable_sort(found.begin(), found.end(),
                   [](const MapResult& a, const MapResult& b) { return a.log_density > b.log_density; });

  std::vector<PosteriorMode> modes;
  std::vector<Vector> kept_whitened;
  for (const auto& r : found) {
    const Vector u = target.prior().whiten(r.point - target.prior().mean());
    const bool duplicate = std::any_of(kept_whitened.begin(), kept_whitened.end(), [&](const Vector& k) {
      return (k - u).norm() < cfg.merge_tolerance;
    });
    if (duplicate) continue;
    try {
      PosteriorMode mode = laplace_at(target, r.point);
      mode.converged = r.converged;
      modes.push_back(std::move(mode));
      kept_whitened.push_back(u);
    } catch (const NumericalFailure&) {
      // Unusable curvature at this point.
    }
  }
  if (modes.empty()) throw NumericalFailure("no posterior mode with a usable Laplace approximation");
  std::stable_sort(modes.begin(), modes.end(),
                   [](const PosteriorMode& a, const PosteriorMode& b) { return a.log_mass > b.log_mass; });
  return modes;
}

PosteriorSamples sample_posterior_modes(const PosteriorTarget& target, int n,
                                        const PosteriorSamplerConfig& cfg, Rng& rng) {
  require(n >= 0, "posterior sample count must be nonnegative");
  validate(cfg.hmc);
  PosteriorSamples out;
  if (n == 0) return out;
  out.modes = find_posterior_modes(target, cfg.modes, rng);

  const double top = out.modes.front().log_mass;
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& m : out.modes) {
    total += std::exp(m.log_mass - top);
    cumulative.push_back(total);
  }
  out.per_mode_counts.assign(out.modes.size(), 0);
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                         out.modes.size() - 1);
    ++out.per_mode_counts[k];
  }

  const LogDensity density = target.as_log_density();
  double accepted = 0.0;
  double proposals = 0.0;
  for (std::size_t k = 0; k < out.modes.size(); ++k) {
    if (out.per_mode_counts[k] == 0) continue;
    const HmcResult chain = hmc_sample(density, out.modes[k].point, out.per_mode_counts[k], cfg.hmc,
                                       rng, &out.modes[k].scale_factor);
    out.samples.insert(out.samples.end(), chain.samples.begin(), chain.samples.end());
    accepted += chain.acceptance_rate * chain.proposals;
    proposals += chain.proposals;
  }
  out.acceptance_rate = proposals > 0.0 ? accepted / proposals : 0.0;
  return out;
}

}  // namespace rtminv
