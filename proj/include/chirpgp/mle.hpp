#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chirpgp/filters.hpp"
#include "chirpgp/model.hpp"
#include "chirpgp/simulate.hpp"

namespace chirpgp {

/// Unconstrained reparameterization of ModelParams:
/// [log lambda, log b, log xi, log ell, log sigma, m0v].
struct UnconstrainedParams {
  Eigen::Matrix<double, 6, 1> theta = Eigen::Matrix<double, 6, 1>::Zero();

  /// Requires lambda, b > 0 (zero values are representable only through
  /// pinning, not through the log map).
  static UnconstrainedParams from(const ModelParams& params);
  ModelParams to_params() const;
};

struct OptimizerOptions {
  int max_iterations = 400;
  double grad_tol = 1e-6;   ///< infinity norm of the gradient
  double rel_tol = 1e-10;   ///< relative change of the objective
  double fd_step = 1e-5;    ///< relative central-difference step
  int memory = 10;          ///< L-BFGS history length
  bool verbose = false;     ///< record the per-iteration objective trace
  bool parallel_gradient = true;
};

struct FitResult {
  ModelParams params;
  double nll = 0.0;
  long n_evaluations = 0;
  bool converged = false;
  int start_index = 0;
  std::vector<double> trace;  ///< per-iteration nll of the winning start
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  long n_evaluations = 0;
  bool converged = false;
  std::vector<double> trace;
};

/// Objective value returned when a filter pass fails numerically; the
/// optimizer treats it as a rejected step.
inline constexpr double kFailedObjective = 1e300;

/// Central finite-difference gradient with per-coordinate step
/// rel_step * max(1, |x_i|). Evaluations may run in parallel; the result is
/// independent of scheduling.
Eigen::VectorXd fd_gradient(const Objective& fn, const Eigen::VectorXd& x,
                            double rel_step, bool parallel);

/// Limited-memory BFGS with Armijo backtracking line search and
/// finite-difference gradients.
MinimizeResult minimize(const Objective& fn, const Eigen::VectorXd& x0,
                        const OptimizerOptions& opts = {});

/// Negative log-likelihood of the series under the model at the given
/// unconstrained parameters. Numerical failures map to kFailedObjective.
double nll(const UnconstrainedParams& uparams, const TimeSeries& series,
           const Bijection& bij, const QuadratureRule& rule,
           const PredictOptions& predict_opts = {});

/// Names accepted by the pin map: lambda, b, xi, ell, sigma, m0v. Pinned
/// parameters are held at the given constrained value during optimization.
using PinMap = std::map<std::string, double>;

/// Default multi-start grid: m0v over g^{-1}({10, 5, 20}) crossed with
/// ell in {1.5, 0.5} (central starts first), other parameters at
/// lambda = 0.1, b = 0.1, xi = 0.1, sigma = 3.
std::vector<ModelParams> default_starts(const Bijection& bij, int count = 6);

/// Maximum-likelihood fit over the given starts; returns the best final
/// result (ties broken by lowest start index). Throws std::runtime_error
/// with diagnostics if every start fails numerically.
FitResult fit(const TimeSeries& series, const Bijection& bij,
              const QuadratureRule& rule,
              const std::vector<ModelParams>& starts,
              const OptimizerOptions& opts = {}, const PinMap& pins = {},
              const PredictOptions& predict_opts = {});

}  // namespace chirpgp
