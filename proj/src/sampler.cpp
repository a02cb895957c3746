#include "rtminv/sampler.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

namespace rtminv {

namespace {
// Consecutive negligible improvements before the search counts as converged.
constexpr int kStallIterations = 3;
}  // namespace

MapResult find_map(const LogDensity& target, const Vector& start, const LbfgsConfig& cfg) {
  require(cfg.memory >= 1, "L-BFGS memory must be at least 1");
  require(cfg.max_iterations >= 0, "L-BFGS max_iterations must be nonnegative");

  // Minimize phi = -log p.
  Vector x = start;
  Vector grad_logp;
  double logp = target(x, grad_logp);
  if (!std::isfinite(logp) || !grad_logp.allFinite()) {
    throw InvalidInput("find_map: target is not finite at the starting point");
  }
  Vector g = -grad_logp;

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;

  MapResult out;
  int small_steps = 0;
  out.converged = g.norm() < cfg.gradient_tolerance;
  for (int iter = 0; iter < cfg.max_iterations && !out.converged; ++iter) {
    // Two-loop recursion.
    Vector d = -g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      d /= std::max(1.0, g.norm());
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += s_hist[i] * (alpha[i] - beta);
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
    }

    double step = 1.0;
    bool accepted = false;
    Vector x_new;
    Vector grad_new;
    double logp_new = 0.0;
    for (int shrink = 0; shrink <= cfg.max_shrinks; ++shrink) {
      x_new = x + step * d;
      logp_new = target(x_new, grad_new);
      if (std::isfinite(logp_new) && grad_new.allFinite() &&
          -logp_new <= -logp + cfg.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= cfg.shrink;
    }
    out.iterations = iter + 1;
    if (!accepted) {
      out.line_search_failed = true;
      break;
    }

    const Vector g_new = -grad_new;
    Vector s = x_new - x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = logp_new - logp;
    x = std::move(x_new);
    logp = logp_new;
    g = g_new;
    small_steps = decrease <= cfg.function_tolerance * std::max(1.0, std::abs(logp)) ? small_steps + 1 : 0;
    out.converged = g.norm() < cfg.gradient_tolerance || small_steps >= kStallIterations;
  }
  out.point = std::move(x);
  out.log_density = logp;
  out.gradient = -g;
  return out;
}

void validate(const HmcConfig& cfg) {
  require(cfg.leapfrog_steps >= 1, "HMC needs at least one leapfrog step");
  require(cfg.step_size > 0.0 && std::isfinite(cfg.step_size), "HMC step size must be positive");
  require(cfg.burn_in >= 0, "HMC burn-in must be nonnegative");
  require(cfg.thinning >= 1, "HMC thinning must be at least 1");
}

namespace {

struct Trajectory {
  PhasePoint end;
  double log_density;
  Vector grad;
};

// Leapfrog that reuses the starting gradient and returns the final one.
Trajectory integrate(Vector position, Vector momentum, const Vector& start_grad,
                     const LogDensity& target, int steps, double step_size) {
  Vector grad = start_grad;
  double logp = std::numeric_limits<double>::quiet_NaN();
  momentum += 0.5 * step_size * grad;
  for (int i = 0; i < steps; ++i) {
    position += step_size * momentum;
    logp = target(position, grad);
    if (!std::isfinite(logp) || !grad.allFinite() || !position.allFinite()) {
      throw NumericalFailure("leapfrog: non-finite state");
    }
    momentum += (i + 1 < steps ? 1.0 : 0.5) * step_size * grad;
  }
  if (!momentum.allFinite()) throw NumericalFailure("leapfrog: non-finite momentum");
  return {{std::move(position), std::move(momentum)}, logp, std::move(grad)};
}

}  // namespace

PhasePoint leapfrog(Vector position, Vector momentum, const LogDensity& target, int steps,
                    double step_size) {
  require(position.size() == momentum.size(), "leapfrog: position/momentum size mismatch");
  if (!position.allFinite() || !momentum.allFinite()) {
    throw NumericalFailure("leapfrog: non-finite input");
  }
  if (steps <= 0) return {std::move(position), std::move(momentum)};
  Vector grad;
  const double logp = target(position, grad);
  if (!std::isfinite(logp) || !grad.allFinite()) throw NumericalFailure("leapfrog: non-finite start");
  return integrate(std::move(position), std::move(momentum), grad, target, steps, step_size).end;
}

HmcResult hmc_sample(const LogDensity& target, const Vector& init, int n_samples,
                     const HmcConfig& cfg, Rng& rng, const Matrix* position_factor) {
  validate(cfg);
  require(n_samples >= 0, "HMC sample count must be nonnegative");
  HmcResult out;
  if (n_samples == 0) return out;
  const Eigen::Index d = init.size();
  if (position_factor) {
    require(position_factor->rows() == d && position_factor->cols() == d,
            "HMC position factor has the wrong shape");
  }

  // Chain state lives in z; x = init + F z (or x = z without a factor).
  const LogDensity chain_target = [&](const Vector& z, Vector& grad) {
    if (!position_factor) return target(z, grad);
    Vector gx;
    const double v = target(init + (*position_factor) * z, gx);
    grad = position_factor->transpose() * gx;
    return v;
  };
  const auto to_x = [&](const Vector& z) -> Vector {
    return position_factor ? Vector(init + (*position_factor) * z) : z;
  };

  Vector z = position_factor ? Vector(Vector::Zero(d)) : init;
  Vector grad;
  double logp = chain_target(z, grad);
  if (!std::isfinite(logp) || !grad.allFinite()) {
    throw InvalidInput("hmc_sample: target is not finite at the initial point");
  }

  const long total = static_cast<long>(cfg.burn_in) + static_cast<long>(n_samples) * cfg.thinning;
  const long max_consecutive_bad = std::max(10L, total / 2);
  long consecutive_bad = 0;
  long accepted = 0;
  out.samples.reserve(static_cast<std::size_t>(n_samples));
  for (long it = 0; it < total; ++it) {
    const Vector p0 = standard_normal(rng, d);
    const double h0 = -logp + 0.5 * p0.squaredNorm();
    bool finite = true;
    bool accept = false;
    Trajectory traj;
    try {
      traj = integrate(z, p0, grad, chain_target, cfg.leapfrog_steps, cfg.step_size);
      const double h1 = -traj.log_density + 0.5 * traj.end.momentum.squaredNorm();
      finite = std::isfinite(h1);
      if (finite) {
        const double log_ratio = h0 - h1;
        accept = log_ratio >= 0.0 || std::log(uniform01(rng)) < log_ratio;
      }
    } catch (const NumericalFailure&) {
      finite = false;
    }
    ++out.proposals;
    if (!finite) {
      ++out.nonfinite_proposals;
      if (++consecutive_bad > max_consecutive_bad) {
        throw NumericalFailure("hmc_sample: too many consecutive non-finite proposals");
      }
    } else {
      consecutive_bad = 0;
    }
    if (accept) {
      ++accepted;
      z = std::move(traj.end.position);
      logp = traj.log_density;
      grad = std::move(traj.grad);
    }
    if (it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thinning == 0) {
      out.samples.push_back(to_x(z));
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(total);
  return out;
}

void write_chain_csv(std::ostream& out, std::span<const Vector> samples) {
  if (samples.empty()) return;
  const Eigen::Index d = samples.front().size();
  for (Eigen::Index k = 0; k < d; ++k) out << (k ? "," : "") << "x_" << (k + 1);
  out << '\n';
  const auto old_precision = out.precision(17);
  for (const auto& s : samples) {
    for (Eigen::Index k = 0; k < d; ++k) out << (k ? "," : "") << s[k];
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace rtminv
