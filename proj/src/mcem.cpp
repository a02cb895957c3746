#include "rtminv/mcem.hpp"

#include <chrono>
#include <string>

#include "rtminv/log.hpp"
#include "rtminv/parallel.hpp"

namespace rtminv {

void validate(const McemConfig& cfg) {
  require(cfg.epochs >= 1, "MCEM needs at least one epoch");
  require(cfg.samples_per_datum >= 1, "MCEM needs at least one sample per datum");
  require(cfg.reference_variance > 0.0, "reference prior variance must be positive");
  require(cfg.threads >= 0, "thread count must be nonnegative");
  validate(cfg.sampler.hmc);
}

std::vector<Vector> e_step(const LikelihoodModel& lm, const GaussianDensity& prior, const Vector& e,
                           const McemConfig& cfg, Rng& rng) {
  const PosteriorTarget target(lm, prior, e);
  return sample_posterior_modes(target, cfg.samples_per_datum, cfg.sampler, rng).samples;
}

GaussianDensity m_step(std::span<const Vector> samples) {
  require(samples.size() >= 2, "M-step needs at least two samples");
  return fit_gaussian_mle(samples);
}

double m_step_objective(std::span<const Vector> samples, const GaussianDensity& prior) {
  require(!samples.empty(), "M-step objective needs samples");
  double total = 0.0;
  for (const auto& c : samples) total += prior.log_pdf(c);
  return total / static_cast<double>(samples.size());
}

GaussianDensity initial_prior(const LikelihoodModel& lm, std::span<const Vector> effects,
                              const McemConfig& cfg) {
  validate(cfg);
  const Vector scale = cfg.cause_scale.size() ? cfg.cause_scale : lm.forward().cause_scale();
  require(scale.size() == lm.forward().cause_dim(), "cause scale does not match the model");
  const GaussianDensity reference(Vector::Zero(scale.size()),
                                  Matrix(cfg.reference_variance * scale.cwiseAbs2().asDiagonal()));
  // Starting off the origin keeps sign-symmetric models from sitting on the
  // stationary point between mirrored modes.
  const Vector start = scale;
  std::vector<Vector> estimates(effects.size());
  std::vector<char> ok(effects.size(), 0);
  parallel_for(effects.size(), cfg.parallel_e_step ? cfg.threads : 1, [&](std::size_t i) {
    try {
      const MapResult r = find_posterior_map(PosteriorTarget(lm, reference, effects[i]), start,
                                             cfg.sampler.modes.lbfgs);
      if (all_finite(r.point)) {
        estimates[i] = r.point;
        ok[i] = 1;
      }
    } catch (const NumericalFailure&) {
    }
  });
  std::vector<Vector> kept;
  for (std::size_t i = 0; i < effects.size(); ++i)
    if (ok[i]) kept.push_back(std::move(estimates[i]));
  if (kept.size() < 2) throw NumericalFailure("MCEM initialization: fewer than two usable MAP estimates");
  return fit_gaussian_mle(kept);
}

EpochStats mcem_epoch(const LikelihoodModel& lm, std::span<const Vector> effects,
                      const McemConfig& cfg, McemState& state) {
  const int epoch = state.epoch + 1;
  const std::size_t n = effects.size();
  std::vector<std::vector<Vector>> draws(n);
  std::vector<std::string> errors(n);
  parallel_for(n, cfg.parallel_e_step ? cfg.threads : 1, [&](std::size_t i) {
    Rng rng = make_rng(cfg.seed, i, static_cast<std::uint64_t>(epoch));
    try {
      draws[i] = e_step(lm, state.prior, effects[i], cfg, rng);
    } catch (const NumericalFailure& ex) {
      errors[i] = ex.what();
    }
  });

  EpochStats stats;
  std::vector<Vector> pooled;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      ++stats.failed;
      warn("MCEM epoch " + std::to_string(epoch) + ": skipping datum " + std::to_string(i) + ": " +
           errors[i]);
      continue;
    }
    pooled.insert(pooled.end(), draws[i].begin(), draws[i].end());
  }
  if (2 * stats.failed > static_cast<int>(n)) {
    throw NumericalFailure("MCEM epoch " + std::to_string(epoch) + ": E-step failed for " +
                           std::to_string(stats.failed) + " of " + std::to_string(n) + " data");
  }
  state.prior = m_step(pooled);
  stats.objective = m_step_objective(pooled, state.prior);
  state.last_samples = std::move(draws);
  state.epoch = epoch;
  return stats;
}

FitResult fit_mcem(const LikelihoodModel& lm, std::span<const Vector> effects,
                   const McemConfig& cfg, const EpochObserver& observer) {
  validate(cfg);
  require(effects.size() >= 2, "fit_mcem needs at least two data");
  for (const auto& e : effects)
    require(e.size() == lm.forward().effect_dim(), "fit_mcem: effect has the wrong dimension");

  using Clock = std::chrono::steady_clock;
  const auto seconds = [](Clock::duration d) { return std::chrono::duration<double>(d).count(); };
  FitResult result;
  result.method = "mcem";
  result.model = lm.forward().name();

  auto t0 = Clock::now();
  McemState state;
  state.prior = initial_prior(lm, effects, cfg);
  result.init_wall_clock_s = seconds(Clock::now() - t0);

  double training = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    t0 = Clock::now();
    const EpochStats stats = mcem_epoch(lm, effects, cfg, state);
    training += seconds(Clock::now() - t0);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.wall_clock_s = training;
    rec.objective = stats.objective;
    rec.skipped = stats.failed;
    if (observer) rec.test_log_evidence = observer(epoch, state.prior);
    result.epochs.push_back(rec);
  }
  result.prior = state.prior;
  return result;
}

PosteriorSamples sample_posterior(const LikelihoodModel& lm, const GaussianDensity& prior,
                                  const Vector& e, int n, const PosteriorSamplerConfig& cfg, Rng& rng) {
  return sample_posterior_modes(PosteriorTarget(lm, prior, e), n, cfg, rng);
}

}  // namespace rtminv
