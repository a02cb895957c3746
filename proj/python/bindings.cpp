#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "rtminv/experiments.hpp"

namespace py = pybind11;
using namespace rtminv;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<Vector> rows_of(const Eigen::Ref<const RowMatrix>& m) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
  return out;
}

RowMatrix stack(const std::vector<Vector>& rows, Eigen::Index cols) {
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

PosteriorSamplerConfig sampler_config(int random_starts, int leapfrog_steps, double step_size, int burn_in) {
  PosteriorSamplerConfig cfg;
  cfg.modes.random_starts = random_starts;
  cfg.hmc = HmcConfig{leapfrog_steps, step_size, burn_in, 1};
  validate(cfg.hmc);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_rtminv, m) {
  m.doc() = "Prior learning and simulator inversion with amortized VI and Monte Carlo EM";

  py::register_exception<NumericalFailure>(m, "NumericalFailure", PyExc_RuntimeError);
  py::register_exception<UnsupportedOperation>(m, "UnsupportedOperation", PyExc_ValueError);
  py::register_exception<InvalidState>(m, "InvalidState", PyExc_RuntimeError);

  py::class_<GaussianDensity>(m, "Gaussian")
      .def(py::init<Vector, Matrix>(), py::arg("mean"), py::arg("cov"))
      .def_property_readonly("mean", &GaussianDensity::mean)
      .def_property_readonly("cov", &GaussianDensity::cov)
      .def_property_readonly("dim", &GaussianDensity::dim)
      .def("log_pdf", py::overload_cast<const Vector&>(&GaussianDensity::log_pdf, py::const_), py::arg("x"))
      .def(
          "sample",
          [](const GaussianDensity& g, int n, std::uint64_t seed) {
            require(n >= 0, "n must be nonnegative");
            Rng rng = make_rng(seed);
            std::vector<Vector> xs;
            for (int i = 0; i < n; ++i) xs.push_back(g.sample(rng));
            return stack(xs, g.dim());
          },
          py::arg("n"), py::arg("seed") = 0)
      .def("__repr__", [](const GaussianDensity& g) { return "Gaussian(" + nlohmann::json(g).dump() + ")"; });

  py::class_<ForwardModel>(m, "ForwardModel")
      .def_property_readonly("name", &ForwardModel::name)
      .def_property_readonly("cause_dim", &ForwardModel::cause_dim)
      .def_property_readonly("effect_dim", &ForwardModel::effect_dim)
      .def_property_readonly("noise_variance", &ForwardModel::noise_variance)
      .def_property_readonly("cause_scale", &ForwardModel::cause_scale)
      .def("eval", &ForwardModel::eval, py::arg("c"))
      .def("jacobian", &ForwardModel::jacobian, py::arg("c"))
      .def(
          "simulate",
          [](const ForwardModel& f, const Eigen::Ref<const RowMatrix>& causes, std::uint64_t seed) {
            Rng rng = make_rng(seed);
            std::vector<Vector> out;
            for (const auto& c : rows_of(causes)) out.push_back(f.simulate(c, rng));
            return stack(out, f.effect_dim());
          },
          py::arg("causes"), py::arg("seed") = 0, "Noisy effects, one row per cause row.");

  m.def("make_model", &make_model, py::arg("name"), py::arg("noise_variance") = kDefaultNoiseVariance);
  m.def("model_names", &model_names);
  m.def("kl_gaussians", &kl_gaussians, py::arg("p"), py::arg("q"), "KL(p || q) in closed form.");

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("method", &FitResult::method)
      .def_readonly("model", &FitResult::model)
      .def_readonly("prior", &FitResult::prior)
      .def_property_readonly("has_encoder", [](const FitResult& r) { return r.encoder.has_value(); })
      .def_property_readonly("epoch_wall_clock_s",
                             [](const FitResult& r) {
                               std::vector<double> t;
                               for (const auto& e : r.epochs) t.push_back(e.wall_clock_s);
                               return t;
                             })
      .def_property_readonly("epoch_test_log_evidence",
                             [](const FitResult& r) {
                               std::vector<std::optional<double>> v;
                               for (const auto& e : r.epochs) v.push_back(e.test_log_evidence);
                               return v;
                             })
      .def(
          "predict",
          [](const FitResult& r, const Vector& e) {
            if (!r.encoder) throw UnsupportedOperation("MCEM fits have no encoder; use sample_posterior");
            return predict_posterior(*r.encoder, e);
          },
          py::arg("effect"))
      .def("to_json", [](const FitResult& r) { return nlohmann::json(r).dump(); })
      .def_static("from_json", [](const std::string& s) { return nlohmann::json::parse(s).get<FitResult>(); });

  m.def(
      "fit_vi",
      [](const ForwardModel& f, const Eigen::Ref<const RowMatrix>& effects, int epochs, double learning_rate,
         int mc_samples, std::vector<int> hidden_layers, std::uint64_t seed, const EpochObserver& observer) {
        ViFitConfig cfg;
        cfg.epochs = epochs;
        cfg.learning_rate = learning_rate;
        cfg.mc_samples_per_datum = mc_samples;
        cfg.hidden_layers = std::move(hidden_layers);
        cfg.seed = seed;
        const std::vector<Vector> data = rows_of(effects);
        if (observer) return fit_vi(LikelihoodModel(f), data, cfg, observer);
        py::gil_scoped_release release;
        return fit_vi(LikelihoodModel(f), data, cfg);
      },
      py::arg("model"), py::arg("effects"), py::arg("epochs") = 50, py::arg("learning_rate") = 1e-3,
      py::arg("mc_samples") = 1, py::arg("hidden_layers") = std::vector<int>{64, 64}, py::arg("seed") = 0,
      py::arg("observer") = EpochObserver{});

  m.def(
      "fit_mcem",
      [](const ForwardModel& f, const Eigen::Ref<const RowMatrix>& effects, int epochs, int samples_per_datum,
         int random_starts, int leapfrog_steps, double step_size, int burn_in, int threads, std::uint64_t seed,
         const EpochObserver& observer) {
        McemConfig cfg;
        cfg.epochs = epochs;
        cfg.samples_per_datum = samples_per_datum;
        cfg.sampler = sampler_config(random_starts, leapfrog_steps, step_size, burn_in);
        cfg.parallel_e_step = threads != 1;
        cfg.threads = threads;
        cfg.seed = seed;
        const std::vector<Vector> data = rows_of(effects);
        if (observer) return fit_mcem(LikelihoodModel(f), data, cfg, observer);
        py::gil_scoped_release release;
        return fit_mcem(LikelihoodModel(f), data, cfg);
      },
      py::arg("model"), py::arg("effects"), py::arg("epochs") = 10, py::arg("samples_per_datum") = 1,
      py::arg("random_starts") = 16, py::arg("leapfrog_steps") = 20, py::arg("step_size") = 0.1,
      py::arg("burn_in") = 100, py::arg("threads") = 1, py::arg("seed") = 0, py::arg("observer") = EpochObserver{});

  m.def(
      "sample_posterior",
      [](const ForwardModel& f, const GaussianDensity& prior, const Vector& e, int n, std::uint64_t seed,
         int random_starts, int leapfrog_steps, double step_size, int burn_in) {
        const PosteriorSamplerConfig cfg = sampler_config(random_starts, leapfrog_steps, step_size, burn_in);
        Rng rng = make_rng(seed);
        PosteriorSamples s;
        {
          py::gil_scoped_release release;
          s = sample_posterior(LikelihoodModel(f), prior, e, n, cfg, rng);
        }
        return py::make_tuple(stack(s.samples, prior.dim()), s.acceptance_rate);
      },
      py::arg("model"), py::arg("prior"), py::arg("effect"), py::arg("n"), py::arg("seed") = 0,
      py::arg("random_starts") = 16, py::arg("leapfrog_steps") = 20, py::arg("step_size") = 0.1,
      py::arg("burn_in") = 100, "Returns (samples, acceptance_rate).");

  m.def(
      "ris_log_evidence",
      [](const ForwardModel& f, const GaussianDensity& prior, const Vector& e, int fit_samples,
         int estimator_samples, std::uint64_t seed) {
        RisConfig cfg;
        cfg.fit_samples = fit_samples;
        cfg.estimator_samples = estimator_samples;
        Rng rng = make_rng(seed);
        RisEstimate est;
        {
          py::gil_scoped_release release;
          est = ris_log_evidence(LikelihoodModel(f), prior, e, cfg, rng);
        }
        py::dict out;
        out["log_evidence"] = est.log_evidence;
        out["acceptance_rate"] = est.acceptance_rate;
        out["gmm_components"] = est.gmm_components;
        out["effective_samples"] = est.effective_samples;
        out["high_variance"] = est.high_variance;
        return out;
      },
      py::arg("model"), py::arg("prior"), py::arg("effect"), py::arg("fit_samples") = 2000,
      py::arg("estimator_samples") = 2000, py::arg("seed") = 0);

  m.def(
      "test_evidence",
      [](const ForwardModel& f, const GaussianDensity& prior, const Eigen::Ref<const RowMatrix>& effects,
         int fit_samples, int estimator_samples, std::uint64_t seed, int threads) {
        RisConfig cfg;
        cfg.fit_samples = fit_samples;
        cfg.estimator_samples = estimator_samples;
        const std::vector<Vector> data = rows_of(effects);
        py::gil_scoped_release release;
        return test_evidence(LikelihoodModel(f), prior, data, cfg, seed, threads).mean;
      },
      py::arg("model"), py::arg("prior"), py::arg("effects"), py::arg("fit_samples") = 2000,
      py::arg("estimator_samples") = 2000, py::arg("seed") = 0, py::arg("threads") = 1,
      "Mean RIS log-evidence over the rows of `effects`.");

  m.def(
      "gen_data",
      [](const std::string& config_path, std::optional<std::uint64_t> seed) {
        ExperimentConfig cfg = load_experiment_config(config_path);
        if (seed) {
          cfg.seed = *seed;
          finalize(cfg);
        }
        const Dataset ds = gen_data(cfg);
        const ForwardModel f = cfg.forward_model();
        py::dict out;
        out["causes"] = stack(ds.causes, f.cause_dim());
        out["effects"] = stack(ds.effects, f.effect_dim());
        out["test_causes"] = stack(ds.test_causes, f.cause_dim());
        out["test_effects"] = stack(ds.test_effects, f.effect_dim());
        out["true_prior"] = cfg.true_prior;
        out["model"] = f;
        return out;
      },
      py::arg("config_path"), py::arg("seed") = std::nullopt,
      "Training and test data for a JSON experiment config.");
}
