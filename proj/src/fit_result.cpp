#include "rtminv/fit_result.hpp"

#include <nlohmann/json.hpp>

namespace rtminv {

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = nlohmann::json{{"epoch", r.epoch},
                     {"wall_clock_s", r.wall_clock_s},
                     {"objective", r.objective},
                     {"skipped", r.skipped}};
  if (r.test_log_evidence) j["test_log_evidence"] = *r.test_log_evidence;
}

void from_json(const nlohmann::json& j, EpochRecord& r) {
  r.epoch = j.at("epoch").get<int>();
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  r.objective = j.value("objective", 0.0);
  r.skipped = j.value("skipped", 0);
  r.test_log_evidence.reset();
  if (j.contains("test_log_evidence")) r.test_log_evidence = j["test_log_evidence"].get<double>();
}

void to_json(nlohmann::json& j, const FitResult& r) {
  j = nlohmann::json{{"method", r.method},
                     {"model", r.model},
                     {"prior", r.prior},
                     {"init_wall_clock_s", r.init_wall_clock_s},
                     {"epochs", r.epochs}};
  if (r.encoder) j["encoder"] = *r.encoder;
  if (r.kl_to_truth) j["kl_to_truth"] = *r.kl_to_truth;
}

void from_json(const nlohmann::json& j, FitResult& r) {
  r.method = j.at("method").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.prior = j.at("prior").get<GaussianDensity>();
  r.init_wall_clock_s = j.value("init_wall_clock_s", 0.0);
  r.epochs = j.at("epochs").get<std::vector<EpochRecord>>();
  r.encoder.reset();
  if (j.contains("encoder")) r.encoder = j["encoder"].get<VariationalPosterior>();
  r.kl_to_truth.reset();
  if (j.contains("kl_to_truth")) r.kl_to_truth = j["kl_to_truth"].get<double>();
}

void strip_timing(FitResult& r) {
  r.init_wall_clock_s = 0.0;
  for (auto& e : r.epochs) e.wall_clock_s = 0.0;
}

}  // namespace rtminv
