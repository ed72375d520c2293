#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vbnn/bbvi.hpp"
#include "vbnn/model.hpp"
#include "vbnn/prediction.hpp"

namespace vbnn {

/// A logit field eta: [0,1]^dim -> R.
struct LogitField {
  std::size_t dim = 1;
  std::function<double(std::span<const double>)> eta;

  double operator()(std::span<const double> x) const { return eta(x); }
};

/// Ground-truth eta0 for synthetic experiments.
class TrueFunction {
 public:
  struct Constant {
    std::size_t p = 1;
    double value = 0.0;
  };
  struct Linear {
    std::vector<double> a;
    double b = 0.0;
  };
  using Form = std::variant<NetworkParams, Constant, Linear>;

  explicit TrueFunction(Form form);

  static TrueFunction network(NetworkParams theta) { return TrueFunction(std::move(theta)); }
  static TrueFunction constant(std::size_t p, double value) { return TrueFunction(Constant{p, value}); }
  static TrueFunction linear(std::vector<double> a, double b) {
    return TrueFunction(Linear{std::move(a), b});
  }
  /// The documented p = 2, k = 3 reference network used by the synthetic benchmarks.
  static TrueFunction reference();
  static NetworkParams reference_network();

  std::size_t dim() const;
  double eta(std::span<const double> x) const;
  const Form& form() const { return form_; }
  LogitField field() const;

 private:
  Form form_;
};

struct IntegrationConfig {
  std::size_t n_mc = 100000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Monte Carlo estimate with its standard error.
struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// n_mc x p row-major uniform points on [0,1]^p; point i depends only on (seed, i).
std::vector<double> integration_points(std::size_t p, const IntegrationConfig& cfg);

/// Pointwise integrands. The Hellinger term is
/// 1 - BC = ((sqrt pa - sqrt pb)^2 + (sqrt(1-pa) - sqrt(1-pb))^2) / 2.
double hellinger_integrand(double eta_a, double eta_b);
double kl_integrand(double eta_a, double eta_b);

/// Half-normalized Hellinger distance in [0, 1]. stderr_ via the delta method.
Estimate hellinger_distance(const LogitField& a, const LogitField& b, const IntegrationConfig& cfg);
/// Squared Hellinger distance, with the plain MC standard error.
Estimate hellinger_squared(const LogitField& a, const LogitField& b, const IntegrationConfig& cfg);
/// KL(l_a || l_b), integrated over x ~ U[0,1]^p.
Estimate kl_distance(const LogitField& a, const LogitField& b, const IntegrationConfig& cfg);

/// E_X min(sigma(eta0), 1 - sigma(eta0)).
Estimate bayes_risk(const TrueFunction& truth, const IntegrationConfig& cfg);

struct RiskGap {
  Estimate gap;    // R(C_hat) - R(C_Bayes)
  Estimate bound;  // 2 E|sigma(eta0) - sigma(eta_hat)|
};

RiskGap risk_gap(const VariationalClassifier& classifier, const TrueFunction& truth,
                 const IntegrationConfig& cfg);
RiskGap risk_gap(const NetworkShape& shape, const VariationalParams& q, const TrueFunction& truth,
                 const PredictiveConfig& pred_cfg, const IntegrationConfig& cfg);

/// All truth-referenced diagnostics for one fitted model, sharing one set of
/// integration points and one evaluation of the predictive at each point.
struct Diagnostics {
  Estimate hellinger;
  Estimate kl;
  Estimate bayes_risk;
  RiskGap risk;
  std::size_t n_mc = 0;
  std::uint64_t seed = 0;
};

Diagnostics diagnose(const VariationalClassifier& classifier, const TrueFunction& truth,
                     const IntegrationConfig& cfg);

/// Logit field of the classifier's clamped predictive probability.
LogitField predictive_field(const VariationalClassifier& classifier);

struct VarianceProfileRow {
  std::size_t iteration = 0;  // last iteration covered
  double grad_var = 0.0;
  double elbo = 0.0;
};

/// Trailing moving average of the gradient-variance and ELBO traces. A trace
/// shorter than the window collapses to a single summary row.
std::vector<VarianceProfileRow> gradient_variance_profile(const TrainReport& report,
                                                          std::size_t window = 50);

}  // namespace vbnn
