#include "rtminv/evidence.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <string>

#include "rtminv/log.hpp"
#include "rtminv/parallel.hpp"

namespace rtminv {

void validate(const RisConfig& cfg) {
  require(cfg.fit_samples >= 100, "RIS needs at least 100 samples to fit q");
  require(cfg.estimator_samples >= 1, "RIS needs at least one estimator sample");
  validate(cfg.sampler.hmc);
}

RisEstimate ris_from_samples(const LikelihoodModel& lm, const GaussianDensity& prior, const Vector& e,
                             const std::function<double(const Vector&)>& log_q,
                             std::span<const Vector> samples) {
  require(!samples.empty(), "RIS needs at least one sample");
  std::vector<double> log_ratio;
  log_ratio.reserve(samples.size());
  for (const auto& c : samples) {
    const double r = log_q(c) - prior.log_pdf(c) - lm.log_likelihood(c, e);
    if (std::isnan(r)) throw NumericalFailure("RIS: non-finite importance ratio");
    log_ratio.push_back(r);
  }
  const double lse = log_sum_exp(log_ratio);
  if (!std::isfinite(lse)) throw NumericalFailure("RIS: importance ratios are not finite");
  std::vector<double> doubled(log_ratio.size());
  double max_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_ratio.size(); ++i) {
    doubled[i] = 2.0 * log_ratio[i];
    max_ratio = std::max(max_ratio, log_ratio[i]);
  }
  RisEstimate est;
  est.log_evidence = -(lse - std::log(static_cast<double>(samples.size())));
  est.max_ratio_fraction = std::exp(max_ratio - lse);
  est.effective_samples = std::exp(2.0 * lse - log_sum_exp(doubled));
  est.high_variance = samples.size() < 100 || est.effective_samples < 5.0 || est.max_ratio_fraction >= 0.5;
  return est;
}

RisEstimate ris_log_evidence(const LikelihoodModel& lm, const GaussianDensity& prior, const Vector& e,
                             const RisConfig& cfg, Rng& rng) {
  validate(cfg);
  const PosteriorTarget target(lm, prior, e);
  const PosteriorSamples fit_draws = sample_posterior_modes(target, cfg.fit_samples, cfg.sampler, rng);

  GaussianMixture q;
  int k = 0;
  bool fallback = false;
  try {
    GmmSelection sel = fit_gmm(fit_draws.samples, cfg.gmm, rng);
    q = std::move(sel.mixture);
    k = sel.selected_k;
  } catch (const NumericalFailure& ex) {
    warn(std::string("RIS: mixture fit failed, using a single Gaussian: ") + ex.what());
    q = GaussianMixture(Vector::Ones(1), {fit_gaussian_mle(fit_draws.samples)});
    k = 1;
    fallback = true;
  }

  const PosteriorSamples fresh = sample_posterior_modes(target, cfg.estimator_samples, cfg.sampler, rng);
  RisEstimate est = ris_from_samples(lm, prior, e, [&](const Vector& c) { return q.log_pdf(c); },
                                     fresh.samples);
  est.gmm_components = k;
  est.gmm_fallback = fallback;
  est.acceptance_rate = 0.5 * (fit_draws.acceptance_rate + fresh.acceptance_rate);
  if (est.high_variance && cfg.estimator_samples >= 100) {
    warn("RIS: importance weights are degenerate (effective samples " +
         std::to_string(est.effective_samples) + ")");
  }
  return est;
}

TestEvidence test_evidence(const LikelihoodModel& lm, const GaussianDensity& prior,
                           std::span<const Vector> effects, const RisConfig& cfg, std::uint64_t seed,
                           int threads) {
  require(!effects.empty(), "test evidence needs a non-empty test set");
  validate(cfg);
  TestEvidence out;
  out.per_datum.resize(effects.size());
  std::vector<std::string> errors(effects.size());
  parallel_for(effects.size(), threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, i, 0x455649);
    try {
      out.per_datum[i] = ris_log_evidence(lm, prior, effects[i], cfg, rng);
    } catch (const NumericalFailure& ex) {
      errors[i] = ex.what();
    }
  });
  double total = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    if (out.per_datum[i]) {
      total += out.per_datum[i]->log_evidence;
      ++used;
    } else {
      ++out.failures;
      warn("test evidence: datum " + std::to_string(i) + " failed: " + errors[i]);
    }
  }
  if (used == 0) throw NumericalFailure("test evidence failed for every datum");
  out.mean = total / used;
  return out;
}

void write_evidence_csv(std::ostream& out, const TestEvidence& ev) {
  out << "datum,log_evidence,acceptance_rate,gmm_components\n" << std::setprecision(17);
  for (std::size_t i = 0; i < ev.per_datum.size(); ++i) {
    out << i << ',';
    if (ev.per_datum[i]) {
      out << ev.per_datum[i]->log_evidence << ',' << ev.per_datum[i]->acceptance_rate << ','
          << ev.per_datum[i]->gmm_components;
    } else {
      out << "nan,nan,0";
    }
    out << '\n';
  }
}

}  // namespace rtminv
