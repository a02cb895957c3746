#include "rtminv/vi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace rtminv {

void validate(const ViFitConfig& cfg) {
  require(cfg.epochs >= 1, "VI needs at least one epoch");
  require(cfg.learning_rate > 0.0, "VI learning rate must be positive");
  require(cfg.mc_samples_per_datum >= 1, "VI needs at least one Monte Carlo sample per datum");
  for (int h : cfg.hidden_layers) require(h > 0, "hidden layer sizes must be positive");
}

FitResult fit_vi(const LikelihoodModel& lm, std::span<const Vector> effects,
                 const ViFitConfig& cfg, const EpochObserver& observer) {
  validate(cfg);
  require(!effects.empty(), "fit_vi needs a non-empty dataset");
  const ForwardModel& model = lm.forward();
  const Eigen::Index dc = model.cause_dim();
  const Eigen::Index de = model.effect_dim();
  for (const auto& e : effects) require(e.size() == de, "fit_vi: effect has the wrong dimension");
  const Vector scale = cfg.cause_scale.size() ? cfg.cause_scale : model.cause_scale();
  require(scale.size() == dc && (scale.array() > 0.0).all(), "fit_vi: invalid cause scale");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  Rng rng = make_rng(cfg.seed, 0x5649);

  // Encoder input standardization from the training set.
  Vector in_mean = Vector::Zero(de);
  for (const auto& e : effects) in_mean += e;
  in_mean /= static_cast<double>(effects.size());
  Vector in_scale = Vector::Zero(de);
  for (const auto& e : effects) in_scale += (e - in_mean).cwiseAbs2();
  in_scale = (in_scale / static_cast<double>(effects.size())).cwiseSqrt();
  for (Eigen::Index i = 0; i < de; ++i)
    if (!(in_scale[i] > 1e-12)) in_scale[i] = 1.0;

  std::vector<int> sizes{static_cast<int>(de)};
  sizes.insert(sizes.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
  sizes.push_back(static_cast<int>(VariationalPosterior::output_dim(dc)));
  VariationalPosterior q(Mlp::glorot_uniform(sizes, rng), in_mean, in_scale, scale);
  LearnablePrior prior(dc);

  const AdamConfig adam_cfg{cfg.learning_rate};
  Adam encoder_opt(q.encoder().parameter_count(), adam_cfg, q.encoder().blocks());
  Adam prior_opt(prior.parameters().size(), adam_cfg,
                 {{"prior mean", 0, dc}, {"prior factor", dc, lower_entry_count(dc)}});

  FitResult result;
  result.method = "vi";
  result.model = model.name();
  std::vector<std::size_t> order(effects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double paused = 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double elbo_sum = 0.0;
    int used = 0;
    int skipped = 0;
    for (const std::size_t i : order) {
      ElboEstimate est;
      try {
        est = elbo_estimate(lm, prior, q, effects[i], cfg.mc_samples_per_datum, rng);
      } catch (const NumericalFailure&) {
        ++skipped;
        continue;
      }
      if (!std::isfinite(est.value) || !est.encoder_grad.allFinite() || !est.prior_grad.allFinite()) {
        ++skipped;
        continue;
      }
      encoder_opt.step(q.encoder().parameters(), est.encoder_grad, Objective::maximize);
      prior_opt.step(prior.parameters(), est.prior_grad, Objective::maximize);
      elbo_sum += est.value;
      ++used;
    }
    if (used == 0) {
      throw NumericalFailure("fit_vi: ELBO was non-finite for every datum in epoch " +
                             std::to_string(epoch) + " (learning rate " +
                             std::to_string(cfg.learning_rate) + ")");
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.objective = elbo_sum / used;
    rec.skipped = skipped;
    rec.wall_clock_s = std::chrono::duration<double>(Clock::now() - start).count() - paused;
    if (observer) {
      const auto pause_start = Clock::now();
      rec.test_log_evidence = observer(epoch, prior.density(scale));
      paused += std::chrono::duration<double>(Clock::now() - pause_start).count();
    }
    result.epochs.push_back(rec);
  }
  result.prior = prior.density(scale);
  result.encoder = std::move(q);
  return result;
}

GaussianDensity predict_posterior(const VariationalPosterior& q, const Vector& e) {
  return q.predict(e);
}

}  // namespace rtminv
