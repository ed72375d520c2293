#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "vbnn/bbvi.hpp"
#include "vbnn/data.hpp"
#include "vbnn/metrics.hpp"
#include "vbnn/model.hpp"
#include "vbnn/prediction.hpp"
#include "vbnn/variational.hpp"

namespace vbnn::io {

using nlohmann::json;

/// Writes to a sibling temporary file and renames it over path.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);
/// Pretty JSON with a trailing newline.
std::string dump(const json& j);

/// Everything a training run needs besides the data.
struct RunConfig {
  TrainConfig train;
  std::size_t hidden = 10;
  double prior_mu = 0.0;
  double prior_zeta = 1.0;
  PredictiveConfig predictive;
};

json to_json(const Schedule& schedule);
Schedule schedule_from_json(const json& j);
json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});
json to_json(const RunConfig& config);
RunConfig run_config_from_json(const json& j);

json to_json(const Schema& schema);
Schema schema_from_json(const json& j);

/// Fitted model: network shape, prior, q and the data schema it was trained on.
struct ModelArtifact {
  NetworkShape shape;
  PriorConfig prior;
  VariationalParams q;
  Schema schema;
  RunConfig config;
  bool converged = false;
  std::size_t iterations_run = 0;

  Model model() const { return {shape, prior}; }
};

json to_json(const ModelArtifact& artifact);
ModelArtifact model_from_json(const json& j);

json to_json(const NetworkParams& theta);
NetworkParams network_from_json(const json& j);

json to_json(const TrueFunction& truth);
/// Accepts {"kind": "network"|"constant"|"linear"|"reference", ...} or a model
/// artifact, whose mean network becomes the truth.
TrueFunction truth_from_json(const json& j);

std::string report_csv(const TrainReport& report);
json report_summary(const TrainReport& report);

json to_json(const Diagnostics& diagnostics);

}  // namespace vbnn::io
