#include "vbnn/io.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "vbnn/numeric.hpp"

namespace vbnn::io {
namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string kind_name(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical_binary: return "categorical_binary";
    case ColumnKind::label: return "label";
  }
  return "numeric";
}

ColumnKind parse_kind(const std::string& s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "categorical_binary") return ColumnKind::categorical_binary;
  if (s == "label") return ColumnKind::label;
  throw DataError("unknown column kind '" + s + "'");
}

std::string normalization_name(Normalization n) {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::zscore: return "zscore";
    case Normalization::minmax01: return "minmax01";
  }
  return "none";
}

Normalization parse_normalization(const std::string& s) {
  if (s == "none") return Normalization::none;
  if (s == "zscore") return Normalization::zscore;
  if (s == "minmax01") return Normalization::minmax01;
  throw DataError("unknown normalization '" + s + "'");
}

NetworkShape shape_from_json(const json& j) {
  return NetworkShape(j.at("p").get<std::size_t>(), j.at("k").get<std::size_t>());
}

json shape_to_json(const NetworkShape& shape) { return {{"p", shape.p}, {"k", shape.k}}; }

}  // namespace

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot rename into " + path.string());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------

json to_json(const Schedule& s) {
  if (s.kind == ScheduleKind::fixed) return {{"kind", "fixed"}, {"rho", s.rho}};
  return {{"kind", "robbins_monro"}, {"rho0", s.rho0}, {"b", s.b}, {"c", s.c}, {"strict_rm", s.strict_rm}};
}

Schedule schedule_from_json(const json& j) {
  reject_unknown(j, {"kind", "rho", "rho0", "b", "c", "strict_rm"}, "schedule");
  Schedule s;
  const std::string kind = j.value("kind", std::string("fixed"));
  if (kind == "fixed") {
    s.kind = ScheduleKind::fixed;
  } else if (kind == "robbins_monro" || kind == "rm") {
    s.kind = ScheduleKind::robbins_monro;
  } else {
    throw ConfigError("unknown schedule kind '" + kind + "'");
  }
  read_opt(j, "rho", s.rho);
  read_opt(j, "rho0", s.rho0);
  read_opt(j, "b", s.b);
  read_opt(j, "c", s.c);
  read_opt(j, "strict_rm", s.strict_rm);
  s.validate();
  return s;
}

json to_json(const TrainConfig& c) {
  json j = {{"S", c.S},
            {"schedule", to_json(c.schedule)},
            {"use_control_variates", c.use_control_variates},
            {"cv_mode", c.cv_mode == CvMode::pooled ? "pooled" : "per_coordinate"},
            {"cv_holdout", c.cv_holdout},
            {"max_iters", c.max_iters},
            {"conv_window", c.conv_window},
            {"conv_rel_tol", c.conv_rel_tol},
            {"grad_clip", nullptr},
            {"seed", c.seed},
            {"init_jitter", c.init_jitter}};
  if (c.grad_clip) j["grad_clip"] = *c.grad_clip;
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  reject_unknown(j,
                 {"S", "schedule", "use_control_variates", "cv_mode", "cv_holdout", "max_iters",
                  "conv_window", "conv_rel_tol", "grad_clip", "seed", "init_jitter"},
                 "train config");
  read_opt(j, "S", c.S);
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
  read_opt(j, "use_control_variates", c.use_control_variates);
  if (j.contains("cv_mode")) {
    const auto mode = j.at("cv_mode").get<std::string>();
    if (mode == "per_coordinate") {
      c.cv_mode = CvMode::per_coordinate;
    } else if (mode == "pooled") {
      c.cv_mode = CvMode::pooled;
    } else {
      throw ConfigError("unknown cv_mode '" + mode + "'");
    }
  }
  read_opt(j, "cv_holdout", c.cv_holdout);
  read_opt(j, "max_iters", c.max_iters);
  read_opt(j, "conv_window", c.conv_window);
  read_opt(j, "conv_rel_tol", c.conv_rel_tol);
  if (j.contains("grad_clip")) {
    if (j.at("grad_clip").is_null()) {
      c.grad_clip.reset();
    } else {
      c.grad_clip = j.at("grad_clip").get<double>();
    }
  }
  read_opt(j, "seed", c.seed);
  read_opt(j, "init_jitter", c.init_jitter);
  return c;
}

json to_json(const RunConfig& c) {
  json j = to_json(c.train);
  j["k"] = c.hidden;
  j["prior"] = {{"mu", c.prior_mu}, {"zeta", c.prior_zeta}};
  j["predictive"] = {{"M", c.predictive.M}, {"seed", c.predictive.seed},
                     {"prob_clamp_eps", c.predictive.prob_clamp_eps}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  json train = j;
  if (j.contains("k")) {
    c.hidden = j.at("k").get<std::size_t>();
    train.erase("k");
  }
  if (j.contains("prior")) {
    const json& prior = j.at("prior");
    reject_unknown(prior, {"mu", "zeta"}, "prior");
    read_opt(prior, "mu", c.prior_mu);
    read_opt(prior, "zeta", c.prior_zeta);
    train.erase("prior");
  }
  if (j.contains("predictive")) {
    const json& pred = j.at("predictive");
    reject_unknown(pred, {"M", "seed", "prob_clamp_eps"}, "predictive");
    read_opt(pred, "M", c.predictive.M);
    read_opt(pred, "seed", c.predictive.seed);
    read_opt(pred, "prob_clamp_eps", c.predictive.prob_clamp_eps);
    train.erase("predictive");
  }
  c.train = train_config_from_json(train);
  if (c.hidden < 1) throw ConfigError("k must be at least 1");
  if (!(c.prior_zeta > 0.0)) throw ConfigError("prior zeta must be positive");
  c.predictive.validate();
  return c;
}

// ---------------------------------------------------------------------------

json to_json(const Schema& schema) {
  json cols = json::array();
  for (const auto& c : schema.columns) {
    json col = {{"name", c.name}, {"kind", kind_name(c.kind)},
                {"normalization", normalization_name(c.normalization)}};
    if (c.fitted) {
      if (c.normalization == Normalization::zscore) {
        col["stats"] = {{"mean", c.center}, {"sd", c.scale}};
      } else if (c.normalization == Normalization::minmax01) {
        col["stats"] = {{"min", c.center}, {"max", c.center + c.scale}};
      }
    }
    cols.push_back(col);
  }
  return {{"columns", cols}};
}

Schema schema_from_json(const json& j) {
  Schema schema;
  for (const auto& col : j.at("columns")) {
    ColumnSchema c;
    c.name = col.at("name").get<std::string>();
    c.kind = parse_kind(col.value("kind", std::string("numeric")));
    c.normalization = parse_normalization(col.value("normalization", std::string("none")));
    if (col.contains("stats")) {
      const json& stats = col.at("stats");
      if (c.normalization == Normalization::zscore) {
        c.center = stats.at("mean").get<double>();
        c.scale = stats.at("sd").get<double>();
      } else if (c.normalization == Normalization::minmax01) {
        c.center = stats.at("min").get<double>();
        c.scale = stats.at("max").get<double>() - c.center;
      }
      c.fitted = c.normalization != Normalization::none;
    }
    schema.columns.push_back(c);
  }
  schema.validate();
  return schema;
}

// ---------------------------------------------------------------------------

json to_json(const NetworkParams& theta) {
  return {{"shape", shape_to_json(theta.shape())}, {"flat_theta", theta.flatten()}};
}

NetworkParams network_from_json(const json& j) {
  return NetworkParams(shape_from_json(j.at("shape")), j.at("flat_theta").get<std::vector<double>>());
}

json to_json(const ModelArtifact& a) {
  return {{"format", "vbnn-model"},
          {"version", 1},
          {"shape", shape_to_json(a.shape)},
          {"flat_theta", a.q.m},
          {"prior", {{"mu", a.prior.mu}, {"zeta", a.prior.zeta}}},
          {"variational", {{"m", a.q.m}, {"r", a.q.r}}},
          {"schema", to_json(a.schema)},
          {"config", to_json(a.config)},
          {"seed", a.config.train.seed},
          {"converged", a.converged},
          {"iterations_run", a.iterations_run}};
}

ModelArtifact model_from_json(const json& j) {
  ModelArtifact a;
  a.shape = shape_from_json(j.at("shape"));
  a.prior.mu = j.at("prior").at("mu").get<std::vector<double>>();
  a.prior.zeta = j.at("prior").at("zeta").get<std::vector<double>>();
  a.prior.validate(a.shape.param_count());
  a.q = VariationalParams(j.at("variational").at("m").get<std::vector<double>>(),
                          j.at("variational").at("r").get<std::vector<double>>());
  if (a.q.size() != a.shape.param_count()) throw ShapeError("variational state does not match shape");
  a.schema = schema_from_json(j.at("schema"));
  if (j.contains("config")) a.config = run_config_from_json(j.at("config"));
  a.converged = j.value("converged", false);
  a.iterations_run = j.value("iterations_run", std::size_t{0});
  return a;
}

json to_json(const TrueFunction& truth) {
  struct {
    json operator()(const NetworkParams& t) const {
      json j = io::to_json(t);
      j["kind"] = "network";
      return j;
    }
    json operator()(const TrueFunction::Constant& c) const {
      return {{"kind", "constant"}, {"p", c.p}, {"value", c.value}};
    }
    json operator()(const TrueFunction::Linear& l) const {
      return {{"kind", "linear"}, {"a", l.a}, {"b", l.b}};
    }
  } visitor;
  return std::visit(visitor, truth.form());
}

TrueFunction truth_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("truth must be a JSON object");
  const std::string kind = j.contains("kind") ? j.at("kind").get<std::string>()
                           : j.contains("flat_theta") ? "network"
                                                      : "";
  if (kind == "network") return TrueFunction::network(network_from_json(j));
  if (kind == "constant") return TrueFunction::constant(j.at("p").get<std::size_t>(), j.at("value").get<double>());
  if (kind == "linear") return TrueFunction::linear(j.at("a").get<std::vector<double>>(), j.at("b").get<double>());
  if (kind == "reference") return TrueFunction::reference();
  throw ConfigError("unknown truth kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

std::string report_csv(const TrainReport& report) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << "iteration,elbo,grad_var,rho_t\n";
  for (std::size_t t = 0; t < report.iterations_run; ++t) {
    os << t << ',' << report.elbo_trace[t] << ',' << report.grad_var_trace[t] << ','
       << report.rho_trace[t] << '\n';
  }
  return os.str();
}

json report_summary(const TrainReport& report) {
  json j = {{"iterations_run", report.iterations_run},
            {"converged", report.converged},
            {"wall_time", report.wall_time}};
  if (!report.elbo_trace.empty()) {
    j["final_elbo"] = report.elbo_trace.back();
    j["mean_grad_var"] = pairwise_mean(report.grad_var_trace);
  }
  return j;
}

json to_json(const Diagnostics& d) {
  return {{"hellinger", d.hellinger.value},
          {"hellinger_stderr", d.hellinger.stderr_},
          {"kl", d.kl.value},
          {"kl_stderr", d.kl.stderr_},
          {"bayes_risk", d.bayes_risk.value},
          {"bayes_risk_stderr", d.bayes_risk.stderr_},
          {"risk_gap", d.risk.gap.value},
          {"risk_gap_stderr", d.risk.gap.stderr_},
          {"risk_bound", d.risk.bound.value},
          {"risk_bound_stderr", d.risk.bound.stderr_},
          {"n_mc", d.n_mc},
          {"seed", d.seed}};
}

}  // namespace vbnn::io
