#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "chirpgp/model.hpp"
#include "chirpgp/simulate.hpp"

namespace chirpgp {

/// Moment-matching rule used for the prediction integrals: first-order
/// linearization (extended Kalman) or tensor-product Gauss-Hermite
/// quadrature of the given order.
struct Linearize {};
struct GaussHermite {
  int order = 3;
};
using QuadratureRule = std::variant<Linearize, GaussHermite>;

/// Prediction time handling: exact one-step discretization, or integration
/// of the Gaussian moment ODEs between measurements.
enum class TimeMode { Discrete, ContinuousDiscrete };

struct PredictOptions {
  TimeMode mode = TimeMode::Discrete;
  int cd_substeps = 10;  ///< RK4 substeps per inter-sample interval
};

/// Tensor-product Gauss-Hermite nodes (dim x order^dim) and weights for the
/// standard normal distribution. Weights sum to 1.
struct GhPoints {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic> nodes;
  Eigen::VectorXd weights;
};
GhPoints gh_points(int dim, int order);

/// Forward filtering pass: per-step predicted and filtered beliefs,
/// innovation variances, and the accumulated negative log-likelihood.
struct FilterRun {
  std::vector<double> t;
  std::vector<StateVector> mean_pred, mean_filt;
  std::vector<Mat4> cov_pred, cov_filt;
  std::vector<double> innovation_var;
  double nll = 0.0;

  std::size_t size() const { return t.size(); }
};

/// Backward smoothing pass; the final smoothed belief equals the final
/// filtered belief by construction.
struct SmootherRun {
  std::vector<double> t;
  std::vector<StateVector> mean;
  std::vector<Mat4> cov;

  std::size_t size() const { return t.size(); }
};

/// Frequency estimate with a 95% band obtained by pushing the v-marginal
/// quantiles through the monotone bijection.
struct IfEstimate {
  double t = 0.0;
  double if_mean = 0.0;
  double if_lower = 0.0;
  double if_upper = 0.0;
  double chirp_mean = 0.0;
  double chirp_std = 0.0;
};

/// One-step moment-matched prediction through the discretized transition,
/// adding the step noise covariance. Throws NumericalError if the input
/// covariance has an eigenvalue below -1e-6.
GaussianBelief predict(const GaussianBelief& belief, double dt,
                       const ModelParams& params, const Bijection& bij,
                       const QuadratureRule& rule);

/// Continuous-discrete prediction: integrates the Gaussian moment ODEs
/// dm/dt = E[a(U)], dP/dt = Cov-terms + B B^T with classical RK4 over
/// n_substeps steps, expectations taken under the chosen rule.
GaussianBelief cd_predict(const GaussianBelief& belief, double dt,
                          const ModelParams& params, const Bijection& bij,
                          const QuadratureRule& rule, int n_substeps);

/// Scalar Kalman update with H = [0 1 0 0] in Joseph form. Returns the
/// posterior belief and log N(y | H m-, S) for likelihood accumulation.
std::pair<GaussianBelief, double> update(const GaussianBelief& pred_belief,
                                         double y, double xi);

/// Full forward pass over the series. The model time origin is 0, so the
/// first prediction spans (0, t_1]. `init` overrides the model's initial
/// belief when given.
FilterRun filter(const TimeSeries& series, const ModelParams& params,
                 const Bijection& bij, const QuadratureRule& rule,
                 const PredictOptions& opts = {},
                 const std::optional<GaussianBelief>& init = std::nullopt);

/// Storage-free forward pass returning only the negative log-likelihood;
/// used in the inner loop of parameter fitting.
double filter_nll(const TimeSeries& series, const ModelParams& params,
                  const Bijection& bij, const QuadratureRule& rule,
                  const PredictOptions& opts = {},
                  const std::optional<GaussianBelief>& init = std::nullopt);

/// Backward Rauch-Tung-Striebel pass. Cross-covariances are recomputed with
/// the same rule as the forward pass (Linearize: P J^T, Gauss-Hermite:
/// quadrature of the state against the propagated state).
SmootherRun smooth(const FilterRun& run, const ModelParams& params,
                   const Bijection& bij, const QuadratureRule& rule,
                   const PredictOptions& opts = {});

std::vector<IfEstimate> extract_if(const FilterRun& run, const Bijection& bij);
std::vector<IfEstimate> extract_if(const SmootherRun& run,
                                   const Bijection& bij);

}  // namespace chirpgp
