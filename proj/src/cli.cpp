#include "vbnn/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "vbnn/bbvi.hpp"
#include "vbnn/data.hpp"
#include "vbnn/io.hpp"
#include "vbnn/metrics.hpp"
#include "vbnn/numeric.hpp"
#include "vbnn/parallel.hpp"
#include "vbnn/prediction.hpp"

namespace vbnn::cli {
namespace {

using io::json;

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("VBNN_LOG");
  if (!env) return LogLevel::error;
  const std::string v(env);
  if (v == "debug") return LogLevel::debug;
  if (v == "info") return LogLevel::info;
  return LogLevel::error;
}

class Logger {
 public:
  explicit Logger(std::ostream& err) : err_(err), level_(log_level()) {}
  void info(const std::string& msg) const {
    if (level_ >= LogLevel::info) err_ << "[info] " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level_ >= LogLevel::debug) err_ << "[debug] " << msg << '\n';
  }
  void error(const std::string& msg) const { err_ << "error: " << msg << '\n'; }

 private:
  std::ostream& err_;
  LogLevel level_;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

Schema load_schema_or_default(const std::string& path, std::size_t p_hint) {
  if (!path.empty()) return io::schema_from_json(io::read_json(path));
  return Schema::numeric(p_hint, Normalization::none);
}

// Reads the header to count feature columns when no schema is supplied.
Schema infer_schema(const std::string& data_path) {
  std::istringstream header(io::read_text(data_path));
  std::string line;
  std::getline(header, line);
  Schema schema;
  std::stringstream fields(line);
  std::string name;
  while (std::getline(fields, name, ',')) {
    while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
    schema.columns.push_back({name, name == "y" ? ColumnKind::label : ColumnKind::numeric,
                              Normalization::none});
  }
  schema.validate();
  return schema;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string data, schema, config, out = "model.json", report = "report.csv", summary;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algo, schedule;
  std::optional<std::size_t> S, max_iters, M;
  std::optional<double> lr, rho0, b, c;
};

io::RunConfig resolve_config(const TrainFlags& f) {
  io::RunConfig cfg;
  if (!f.config.empty()) cfg = io::run_config_from_json(io::read_json(f.config));
  TrainConfig& t = cfg.train;
  if (f.seed) t.seed = *f.seed;
  if (f.algo) t.use_control_variates = *f.algo == "bbvi-cv";
  if (f.S) t.S = *f.S;
  if (f.max_iters) t.max_iters = *f.max_iters;
  if (f.schedule) t.schedule.kind = *f.schedule == "rm" ? ScheduleKind::robbins_monro : ScheduleKind::fixed;
  if (f.lr) t.schedule.rho = *f.lr;
  if (f.rho0) t.schedule.rho0 = *f.rho0;
  if (f.b) t.schedule.b = *f.b;
  if (f.c) t.schedule.c = *f.c;
  if (f.M) cfg.predictive.M = *f.M;
  t.validate();
  cfg.predictive.validate();
  return cfg;
}

struct PreparedData {
  LabeledBatch batch;  // model space
  Schema schema;       // fitted
};

PreparedData prepare_training_data(const std::string& data, const std::string& schema_path,
                                   const Logger& log) {
  const Schema schema = schema_path.empty() ? infer_schema(data) : load_schema_or_default(schema_path, 0);
  LoadedData loaded = load_csv(data, schema);
  NormalizeResult norm = normalize(loaded.batch, loaded.schema);
  log.info("loaded " + std::to_string(norm.batch.rows()) + " rows with " +
           std::to_string(norm.batch.p) + " features from " + data);
  return {std::move(norm.batch), std::move(loaded.schema)};
}

int cmd_train(const TrainFlags& f, std::ostream& out, const Logger& log) {
  const io::RunConfig cfg = resolve_config(f);
  const PreparedData data = prepare_training_data(f.data, f.schema, log);
  const NetworkShape shape(data.batch.p, cfg.hidden);
  const Model model{shape, PriorConfig::isotropic(shape.param_count(), cfg.prior_mu, cfg.prior_zeta)};
  log.info("training " + std::string(cfg.train.use_control_variates ? "bbvi-cv" : "bbvi") +
           " with K=" + std::to_string(shape.param_count()) + ", S=" + std::to_string(cfg.train.S));

  TrainResult result;
  try {
    result = train(data.batch, model, cfg.train);
  } catch (const TrainingDiverged& e) {
    throw std::runtime_error(std::string(e.what()) + " (last good iteration " +
                             std::to_string(e.last_good().report.iterations_run) + ")");
  }
  io::ModelArtifact artifact{shape, model.prior, result.q, data.schema, cfg,
                             result.report.converged, result.report.iterations_run};
  io::write_atomic(f.out, io::dump(io::to_json(artifact)));
  io::write_atomic(f.report, io::report_csv(result.report));
  if (!f.summary.empty()) io::write_atomic(f.summary, io::dump(io::report_summary(result.report)));
  out << "iterations " << result.report.iterations_run << ", converged "
      << (result.report.converged ? "yes" : "no") << ", final elbo "
      << fmt_double(result.report.elbo_trace.back()) << '\n';
  return result.report.converged ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------

struct PredictFlags {
  std::string model, data, out, truth;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> M, n_mc;
};

PredictiveConfig predictive_config(const io::ModelArtifact& artifact, const PredictFlags& f) {
  PredictiveConfig cfg = artifact.config.predictive;
  if (f.seed) cfg.seed = *f.seed;
  if (f.M) cfg.M = *f.M;
  cfg.validate();
  return cfg;
}

struct ModelInputs {
  io::ModelArtifact artifact;
  LabeledBatch batch;
  bool has_labels = false;
};

ModelInputs load_model_inputs(const PredictFlags& f, bool need_labels) {
  ModelInputs in;
  in.artifact = io::model_from_json(io::read_json(f.model));
  CsvData csv = read_csv(f.data, in.artifact.schema, {.label_optional = !need_labels});
  in.has_labels = csv.has_labels;
  in.batch = normalize(csv.batch, in.artifact.schema).batch;
  if (in.batch.rows() > 0 && in.batch.p != in.artifact.shape.p) {
    throw ShapeError("data width does not match the model");
  }
  return in;
}

int cmd_predict(const PredictFlags& f, std::ostream& out) {
  const ModelInputs in = load_model_inputs(f, false);
  const VariationalClassifier clf(in.artifact.shape, in.artifact.q, predictive_config(in.artifact, f));
  const std::vector<double> probs = clf.probabilities(in.batch);
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << "row_id,p_hat,label_hat\n";
  for (std::size_t i = 0; i < probs.size(); ++i) {
    os << i << ',' << probs[i] << ',' << classify_probability(probs[i]) << '\n';
  }
  if (f.out.empty()) {
    out << os.str();
  } else {
    io::write_atomic(f.out, os.str());
  }
  return kExitOk;
}

int cmd_evaluate(const PredictFlags& f, std::ostream& out) {
  const ModelInputs in = load_model_inputs(f, true);
  const VariationalClassifier clf(in.artifact.shape, in.artifact.q, predictive_config(in.artifact, f));
  const double accuracy = clf.accuracy(in.batch);
  const json result = {{"n", in.batch.rows()}, {"accuracy", accuracy}, {"error_rate", 1.0 - accuracy}};
  if (f.out.empty()) {
    out << io::dump(result);
  } else {
    io::write_atomic(f.out, io::dump(result));
  }
  return kExitOk;
}

int cmd_diagnose(const PredictFlags& f, std::ostream& out) {
  const io::ModelArtifact artifact = io::model_from_json(io::read_json(f.model));
  const TrueFunction truth = f.truth == "reference" ? TrueFunction::reference()
                                                    : io::truth_from_json(io::read_json(f.truth));
  if (!artifact.schema.unit_cube_compatible()) {
    throw DataError("diagnostics integrate over [0,1]^p; the model was trained on z-scored features");
  }
  const VariationalClassifier clf(artifact.shape, artifact.q, predictive_config(artifact, f));
  IntegrationConfig icfg;
  if (f.n_mc) icfg.n_mc = *f.n_mc;
  if (f.seed) icfg.seed = *f.seed;
  const Diagnostics d = diagnose(clf, truth, icfg);
  if (f.out.empty()) {
    out << io::dump(io::to_json(d));
  } else {
    io::write_atomic(f.out, io::dump(io::to_json(d)));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthFlags {
  std::string truth = "reference", out, schema;
  std::size_t n = 500;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  const TrueFunction truth = f.truth == "reference" ? TrueFunction::reference()
                                                    : io::truth_from_json(io::read_json(f.truth));
  const LabeledBatch batch = generate_synthetic(truth, f.n, f.seed);
  const Schema schema = Schema::numeric(truth.dim(), Normalization::none);
  io::write_atomic(f.out, to_csv(batch, schema));
  if (!f.schema.empty()) io::write_atomic(f.schema, io::dump(io::to_json(schema)));
  out << "wrote " << batch.rows() << " rows, checksum " << std::hex << dataset_checksum(batch)
      << std::dec << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepFlags {
  std::string grid, data, schema, out = "sweep.csv";
};

std::string schedule_label(const Schedule& s) {
  if (s.kind == ScheduleKind::fixed) return "fixed(" + fmt_double(s.rho) + ")";
  return "rm(" + fmt_double(s.rho0) + ";" + fmt_double(s.b) + ";" + fmt_double(s.c) + ")";
}

int cmd_sweep(const SweepFlags& f, std::ostream& out, const Logger& log) {
  const json grid = io::read_json(f.grid);
  const std::string data_path = !f.data.empty() ? f.data : grid.value("data", std::string());
  const std::string schema_path = !f.schema.empty() ? f.schema : grid.value("schema", std::string());
  if (data_path.empty()) throw ConfigError("sweep needs a data file (--data or \"data\" in the grid)");

  const io::RunConfig base = grid.contains("base") ? io::run_config_from_json(grid.at("base")) : io::RunConfig{};
  std::vector<std::size_t> sample_sizes;
  std::vector<Schedule> schedules;
  std::vector<std::string> algos;
  for (const auto& s : grid.value("S", json::array())) sample_sizes.push_back(s.get<std::size_t>());
  for (const auto& s : grid.value("schedule", json::array())) schedules.push_back(io::schedule_from_json(s));
  for (const auto& a : grid.value("algo", json::array())) {
    const auto name = a.get<std::string>();
    if (name != "bbvi" && name != "bbvi-cv") throw ConfigError("unknown algo '" + name + "'");
    algos.push_back(name);
  }
  if (sample_sizes.empty() || schedules.empty() || algos.empty()) {
    throw ConfigError("sweep grid is empty: S, schedule and algo each need at least one value");
  }
  const std::size_t folds = grid.value("folds", std::size_t{5});

  const Schema schema = schema_path.empty() ? infer_schema(data_path) : io::schema_from_json(io::read_json(schema_path));
  const CsvData raw = read_csv(data_path, schema);
  const std::vector<Fold> splits = split(raw.batch.rows(), {SplitKind::kfold, 0.7, folds, grid.value("split_seed", std::uint64_t{0})});

  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << "S,schedule,algo,folds,accuracy_mean,accuracy_sd,iterations_mean,converged_folds,grad_var_mean,wall_time\n";
  for (std::size_t S : sample_sizes) {
    for (const Schedule& schedule : schedules) {
      for (const std::string& algo : algos) {
        io::RunConfig cfg = base;
        cfg.train.S = S;
        cfg.train.schedule = schedule;
        cfg.train.use_control_variates = algo == "bbvi-cv";
        cfg.train.validate();
        std::vector<double> accuracy, iterations, grad_var;
        std::size_t converged = 0;
        double wall = 0.0;
        for (const Fold& fold : splits) {
          const Schema fitted = fit_schema(raw.batch, schema, fold.train);
          const LabeledBatch train_set = normalize(subset(raw.batch, fold.train), fitted).batch;
          const LabeledBatch test_set = normalize(subset(raw.batch, fold.test), fitted).batch;
          const NetworkShape shape(train_set.p, cfg.hidden);
          const Model model{shape, PriorConfig::isotropic(shape.param_count(), cfg.prior_mu, cfg.prior_zeta)};
          const TrainResult result = train(train_set, model, cfg.train);
          accuracy.push_back(test_accuracy(shape, result.q, test_set, cfg.predictive));
          iterations.push_back(static_cast<double>(result.report.iterations_run));
          grad_var.push_back(pairwise_mean(result.report.grad_var_trace));
          converged += result.report.converged ? 1 : 0;
          wall += result.report.wall_time;
        }
        log.info("cell S=" + std::to_string(S) + " " + schedule_label(schedule) + " " + algo + " done");
        os << S << ',' << schedule_label(schedule) << ',' << algo << ',' << splits.size() << ','
           << pairwise_mean(accuracy) << ',' << std::sqrt(sample_variance(accuracy)) << ','
           << pairwise_mean(iterations) << ',' << converged << ',' << pairwise_mean(grad_var) << ','
           << wall << '\n';
      }
    }
  }
  io::write_atomic(f.out, os.str());
  out << "wrote " << f.out << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Logger log(err);
  CLI::App app{"Variational Bayesian neural-network classifiers trained by black-box VI", "vbnn"};
  app.require_subcommand(1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Fit q by BBVI or BBVI-CV");
  train_cmd->add_option("--data", train_flags.data, "Training CSV")->required();
  train_cmd->add_option("--schema", train_flags.schema, "Schema JSON sidecar");
  train_cmd->add_option("--config", train_flags.config, "Training config JSON");
  train_cmd->add_option("--out", train_flags.out, "Model artifact path");
  train_cmd->add_option("--report", train_flags.report, "Per-iteration trace CSV");
  train_cmd->add_option("--summary", train_flags.summary, "Summary JSON");
  train_cmd->add_option("--seed", train_flags.seed);
  train_cmd->add_option("--algo", train_flags.algo)->check(CLI::IsMember({"bbvi", "bbvi-cv"}));
  train_cmd->add_option("--S", train_flags.S);
  train_cmd->add_option("--lr", train_flags.lr, "Fixed learning rate");
  train_cmd->add_option("--schedule", train_flags.schedule)->check(CLI::IsMember({"fixed", "rm"}));
  train_cmd->add_option("--rho0", train_flags.rho0);
  train_cmd->add_option("--b", train_flags.b);
  train_cmd->add_option("--c", train_flags.c);
  train_cmd->add_option("--max-iters", train_flags.max_iters);
  train_cmd->add_option("--M", train_flags.M, "Posterior draws stored for prediction");

  PredictFlags predict_flags;
  auto* predict_cmd = app.add_subcommand("predict", "Write row_id,p_hat,label_hat");
  predict_cmd->add_option("--model", predict_flags.model)->required();
  predict_cmd->add_option("--data", predict_flags.data)->required();
  predict_cmd->add_option("--out", predict_flags.out);
  predict_cmd->add_option("--seed", predict_flags.seed);
  predict_cmd->add_option("--M", predict_flags.M);

  PredictFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("evaluate", "Test accuracy of a model on labeled data");
  eval_cmd->add_option("--model", eval_flags.model)->required();
  eval_cmd->add_option("--data", eval_flags.data)->required();
  eval_cmd->add_option("--out", eval_flags.out);
  eval_cmd->add_option("--seed", eval_flags.seed);
  eval_cmd->add_option("--M", eval_flags.M);

  PredictFlags diag_flags;
  auto* diag_cmd = app.add_subcommand("diagnose", "Distances and risk gap against a known truth");
  diag_cmd->add_option("--model", diag_flags.model)->required();
  diag_cmd->add_option("--truth", diag_flags.truth)->required();
  diag_cmd->add_option("--out", diag_flags.out);
  diag_cmd->add_option("--seed", diag_flags.seed, "Integration seed");
  diag_cmd->add_option("--M", diag_flags.M);
  diag_cmd->add_option("--n-mc", diag_flags.n_mc, "Monte Carlo integration points");

  SynthFlags synth_flags;
  auto* synth_cmd = app.add_subcommand("synth", "Sample a dataset from a known logit function");
  synth_cmd->add_option("--truth", synth_flags.truth, "Truth JSON or 'reference'");
  synth_cmd->add_option("--n", synth_flags.n)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_flags.seed);
  synth_cmd->add_option("--out", synth_flags.out)->required();
  synth_cmd->add_option("--schema", synth_flags.schema, "Also write a schema sidecar");

  SweepFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "Cross-validated grid over S, schedule and algorithm");
  sweep_cmd->add_option("--grid", sweep_flags.grid)->required();
  sweep_cmd->add_option("--data", sweep_flags.data);
  sweep_cmd->add_option("--schema", sweep_flags.schema);
  sweep_cmd->add_option("--out", sweep_flags.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitError;
  }

  set_num_threads(threads);
  try {
    if (*train_cmd) return cmd_train(train_flags, out, log);
    if (*predict_cmd) return cmd_predict(predict_flags, out);
    if (*eval_cmd) return cmd_evaluate(eval_flags, out);
    if (*diag_cmd) return cmd_diagnose(diag_flags, out);
    if (*synth_cmd) return cmd_synth(synth_flags, out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, out, log);
  } catch (const std::exception& e) {
    log.error(e.what());
    return kExitError;
  }
  return kExitError;
}

}  // namespace vbnn::cli
