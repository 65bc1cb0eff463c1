#include "chirpgp/filters.hpp"

#include <cmath>
#include <memory>
#include <numbers>

namespace chirpgp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPsdTol = 1e-6;
constexpr double kLog2Pi = 1.8378770664093453;

using Mat4X = Eigen::Matrix<double, 4, Eigen::Dynamic>;

std::string step_msg(const char* what, long step) {
  if (step < 0) return what;
  return std::string(what) + " at step " + std::to_string(step);
}

// Factor P = B B^T through an eigen decomposition, rejecting eigenvalues
// below -kPsdTol and clamping small negatives to zero.
Mat4 psd_sqrt_checked(const Mat4& p, long step) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(p);
  if (es.info() != Eigen::Success) {
    throw NumericalError(step_msg("covariance eigendecomposition failed", step),
                         step);
  }
  if (es.eigenvalues().minCoeff() < -kPsdTol) {
    throw NumericalError(
        step_msg("covariance lost positive semidefiniteness", step), step);
  }
  const Vec4 root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

void symmetrize(Mat4& p) { p = 0.5 * (p + p.transpose()).eval(); }

// Per-step-size quantities of the discretized transition; refreshed only
// when dt changes, so evenly sampled series pay the setup once.
struct LcdCache {
  double dt = -1.0;
  double damp = 1.0;
  double angle_scale = 0.0;  // dt * 2 pi
  Mat2 matern_t = Mat2::Identity();
  Mat4 omega = Mat4::Zero();

  void refresh(double new_dt, const ModelParams& params) {
    if (new_dt == dt) return;
    dt = new_dt;
    damp = std::exp(-params.lambda * dt);
    angle_scale = dt * kTwoPi;
    matern_t = matern32_transition(dt, params.ell);
    omega = lcd_cov(dt, params);
  }
};

struct GhWorkspace {
  Mat4X unit;  // 4 x n unit-normal nodes
  Eigen::VectorXd w;
  Mat4X pts, mapped;
  Eigen::ArrayXd vrow, frow, phi, cphi, sphi;

  explicit GhWorkspace(int order) {
    const GhPoints g = gh_points(4, order);
    unit = g.nodes;
    w = g.weights;
    const Eigen::Index n = unit.cols();
    pts.resize(4, n);
    mapped.resize(4, n);
    vrow.resize(n);
    frow.resize(n);
    phi.resize(n);
    cphi.resize(n);
    sphi.resize(n);
  }
};

struct Prediction {
  GaussianBelief belief;
  Mat4 cross = Mat4::Zero();  // Cov[u_k, u_{k+1}^-], filled when requested
};

Prediction predict_linearize(const GaussianBelief& belief,
                             const LcdCache& cache, const ModelParams& params,
                             const Bijection& bij, bool want_cross) {
  const Mat4 jac = lcd_jacobian(belief.mean, cache.dt, params, bij);
  Prediction out;
  out.belief.mean = lcd_mean(belief.mean, cache.dt, params, bij);
  out.belief.cov = jac * belief.cov * jac.transpose() + cache.omega;
  symmetrize(out.belief.cov);
  if (want_cross) out.cross = belief.cov * jac.transpose();
  return out;
}

Prediction predict_gh(const GaussianBelief& belief, const LcdCache& cache,
                      const Bijection& bij, GhWorkspace& ws, bool want_cross,
                      long step) {
  const Mat4 root = psd_sqrt_checked(belief.cov, step);
  ws.pts.noalias() = root * ws.unit;
  ws.pts.colwise() += belief.mean;

  ws.vrow = ws.pts.row(kVIndex).transpose().array();
  bij.forward_array(ws.vrow, ws.frow);
  ws.phi = cache.angle_scale * ws.frow;
  ws.cphi = ws.phi.cos();
  ws.sphi = ws.phi.sin();

  const Eigen::ArrayXd x0 = ws.pts.row(0).transpose().array();
  const Eigen::ArrayXd x1 = ws.pts.row(1).transpose().array();
  ws.mapped.row(0) = (cache.damp * (ws.cphi * x0 - ws.sphi * x1)).transpose();
  ws.mapped.row(1) = (cache.damp * (ws.sphi * x0 + ws.cphi * x1)).transpose();
  ws.mapped.bottomRows<2>().noalias() = cache.matern_t * ws.pts.bottomRows<2>();

  Prediction out;
  out.belief.mean.noalias() = ws.mapped * ws.w;
  ws.mapped.colwise() -= out.belief.mean;
  out.belief.cov.noalias() =
      ws.mapped * ws.w.asDiagonal() * ws.mapped.transpose();
  out.belief.cov += cache.omega;
  symmetrize(out.belief.cov);
  if (want_cross) {
    ws.pts.colwise() -= belief.mean;
    out.cross.noalias() = ws.pts * ws.w.asDiagonal() * ws.mapped.transpose();
  }
  return out;
}

// --- continuous-discrete moment ODEs ----------------------------------------

struct CdState {
  Vec4 m;
  Mat4 p;
  Mat4 c;  // cross-covariance against the interval's start state
};

struct CdDerivs {
  Vec4 dm;
  Mat4 dp;
  Mat4 dc;
};

CdDerivs cd_derivs_linearize(const CdState& s, const ModelParams& params,
                             const Bijection& bij, const Mat4& bbt) {
  CdDerivs d;
  d.dm = drift(s.m, params, bij);
  const Mat4 jac = drift_jacobian(s.m, params, bij);
  d.dp = jac * s.p + s.p * jac.transpose() + bbt;
  d.dc = s.c * jac.transpose();
  return d;
}

CdDerivs cd_derivs_gh(const CdState& s, const ModelParams& params,
                      const Bijection& bij, const Mat4& bbt, GhWorkspace& ws) {
  // clamped root: RK4 stage extrapolations may dip slightly indefinite
  Eigen::SelfAdjointEigenSolver<Mat4> es(s.p);
  const Vec4 root_d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Mat4 root = es.eigenvectors() * root_d.asDiagonal();

  ws.pts.noalias() = root * ws.unit;
  ws.pts.colwise() += s.m;
  ws.vrow = ws.pts.row(kVIndex).transpose().array();
  bij.forward_array(ws.vrow, ws.frow);
  ws.phi = kTwoPi * ws.frow;  // angular rate per node

  const Eigen::ArrayXd x0 = ws.pts.row(0).transpose().array();
  const Eigen::ArrayXd x1 = ws.pts.row(1).transpose().array();
  const Eigen::ArrayXd x2 = ws.pts.row(2).transpose().array();
  const Eigen::ArrayXd x3 = ws.pts.row(3).transpose().array();
  const double g2 = 3.0 / (params.ell * params.ell);
  const double g1 = 2.0 * std::sqrt(3.0) / params.ell;
  ws.mapped.row(0) = (-params.lambda * x0 - ws.phi * x1).transpose();
  ws.mapped.row(1) = (ws.phi * x0 - params.lambda * x1).transpose();
  ws.mapped.row(2) = x3.transpose();
  ws.mapped.row(3) = (-g2 * x2 - g1 * x3).transpose();

  CdDerivs d;
  d.dm.noalias() = ws.mapped * ws.w;
  ws.pts.colwise() -= s.m;
  Mat4 ca;
  ca.noalias() = ws.pts * ws.w.asDiagonal() * ws.mapped.transpose();
  d.dp = ca + ca.transpose() + bbt;
  // dC/dt = C P^{-1} Cov[U, a(U)] under the joint-Gaussian closure
  Eigen::LDLT<Mat4> ldlt(s.p);
  d.dc = s.c * ldlt.solve(ca);
  return d;
}

Prediction cd_predict_impl(const GaussianBelief& belief, double dt,
                           const ModelParams& params, const Bijection& bij,
                           const QuadratureRule& rule, int n_substeps,
                           GhWorkspace* ws, long step) {
  if (n_substeps < 1) throw std::invalid_argument("n_substeps must be >= 1");
  if (dt < 0.0) throw std::invalid_argument("dt must be >= 0");

  CdState s{belief.mean, belief.cov, belief.cov};
  if (dt == 0.0) return Prediction{GaussianBelief{s.m, s.p}, s.c};

  const Mat4 bbt = diffusion_outer(params);
  const bool gh = std::holds_alternative<GaussHermite>(rule);
  auto derivs = [&](const CdState& state) {
    return gh ? cd_derivs_gh(state, params, bij, bbt, *ws)
              : cd_derivs_linearize(state, params, bij, bbt);
  };

  const double h = dt / n_substeps;
  for (int i = 0; i < n_substeps; ++i) {
    const CdDerivs k1 = derivs(s);
    CdState s2{s.m + 0.5 * h * k1.dm, s.p + 0.5 * h * k1.dp,
               s.c + 0.5 * h * k1.dc};
    const CdDerivs k2 = derivs(s2);
    CdState s3{s.m + 0.5 * h * k2.dm, s.p + 0.5 * h * k2.dp,
               s.c + 0.5 * h * k2.dc};
    const CdDerivs k3 = derivs(s3);
    CdState s4{s.m + h * k3.dm, s.p + h * k3.dp, s.c + h * k3.dc};
    const CdDerivs k4 = derivs(s4);
    s.m += (h / 6.0) * (k1.dm + 2.0 * k2.dm + 2.0 * k3.dm + k4.dm);
    s.p += (h / 6.0) * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
    s.c += (h / 6.0) * (k1.dc + 2.0 * k2.dc + 2.0 * k3.dc + k4.dc);
    symmetrize(s.p);
    Eigen::SelfAdjointEigenSolver<Mat4> es(s.p, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol) {
      throw NumericalError(
          step_msg("moment ODE covariance lost positive semidefiniteness",
                   step),
          step);
    }
  }
  return Prediction{GaussianBelief{s.m, s.p}, s.c};
}

Prediction predict_full(const GaussianBelief& belief, double dt,
                        const LcdCache& cache, const ModelParams& params,
                        const Bijection& bij, const QuadratureRule& rule,
                        const PredictOptions& opts, GhWorkspace* ws,
                        bool want_cross, long step) {
  if (dt < 0.0) throw std::invalid_argument("dt must be >= 0");
  if (opts.mode == TimeMode::ContinuousDiscrete) {
    // PSD contract checked up front; the integrator re-checks per substep
    psd_sqrt_checked(belief.cov, step);
    return cd_predict_impl(belief, dt, params, bij, rule, opts.cd_substeps, ws,
                           step);
  }
  if (dt == 0.0) {
    psd_sqrt_checked(belief.cov, step);
    return Prediction{belief, belief.cov};
  }
  if (std::holds_alternative<Linearize>(rule)) {
    psd_sqrt_checked(belief.cov, step);
    return predict_linearize(belief, cache, params, bij, want_cross);
  }
  return predict_gh(belief, cache, bij, *ws, want_cross, step);
}

struct UpdateResult {
  GaussianBelief belief;
  double log_pred_density = 0.0;
  double innovation_var = 0.0;
};

UpdateResult update_impl(const GaussianBelief& pred, double y, double xi,
                         long step) {
  if (xi <= 0.0) throw std::invalid_argument("xi must be > 0");
  const double s = pred.cov(kChirpIndex, kChirpIndex) + xi;
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw NumericalError(step_msg("innovation variance not positive", step),
                         step);
  }
  const Vec4 gain = pred.cov.col(kChirpIndex) / s;
  const double residual = y - pred.mean[kChirpIndex];

  UpdateResult out;
  out.belief.mean = pred.mean + gain * residual;
  // Joseph form keeps the posterior covariance PSD at small xi
  Mat4 ikh = Mat4::Identity();
  ikh.col(kChirpIndex) -= gain;
  out.belief.cov =
      ikh * pred.cov * ikh.transpose() + xi * gain * gain.transpose();
  symmetrize(out.belief.cov);
  out.log_pred_density =
      -0.5 * (kLog2Pi + std::log(s) + residual * residual / s);
  out.innovation_var = s;
  return out;
}

std::unique_ptr<GhWorkspace> make_workspace(const QuadratureRule& rule) {
  if (const auto* gh = std::get_if<GaussHermite>(&rule)) {
    return std::make_unique<GhWorkspace>(gh->order);
  }
  return nullptr;
}

// Shared forward recursion; on_step receives every per-step result.
template <typename OnStep>
double run_forward(const TimeSeries& series, const ModelParams& params,
                   const Bijection& bij, const QuadratureRule& rule,
                   const PredictOptions& opts,
                   const std::optional<GaussianBelief>& init,
                   OnStep&& on_step) {
  if (series.size() == 0) throw std::invalid_argument("empty series");
  if (series.t.front() < 0.0) {
    throw std::invalid_argument("series must not start before time 0");
  }

  GaussianBelief belief = init ? *init : initial_belief(params);
  auto ws = make_workspace(rule);
  LcdCache cache;

  double nll = 0.0;
  double t_prev = 0.0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double dt = series.t[k] - t_prev;
    cache.refresh(dt, params);
    const Prediction pred =
        predict_full(belief, dt, cache, params, bij, rule, opts, ws.get(),
                     /*want_cross=*/false, static_cast<long>(k));
    UpdateResult upd =
        update_impl(pred.belief, series.y[k], params.xi, static_cast<long>(k));
    nll -= upd.log_pred_density;
    on_step(k, pred.belief, upd);
    belief = std::move(upd.belief);
    t_prev = series.t[k];
  }
  return nll;
}

}  // namespace

GhPoints gh_points(int dim, int order) {
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (order < 1 || order > 20) {
    throw std::invalid_argument("unsupported Gauss-Hermite order");
  }
  const double count = std::pow(static_cast<double>(order), dim);
  if (count > 2e5) {
    throw std::invalid_argument("Gauss-Hermite tensor grid too large");
  }

  // 1-D nodes/weights by Golub-Welsch on the probabilists' Jacobi matrix
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double off = std::sqrt(static_cast<double>(k));
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  const Eigen::VectorXd nodes1 = es.eigenvalues();
  Eigen::VectorXd w1(order);
  for (int i = 0; i < order; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    w1[i] = v0 * v0;
  }
  w1 /= w1.sum();

  const auto n = static_cast<Eigen::Index>(count);
  GhPoints out;
  out.nodes.resize(dim, n);
  out.weights.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index rest = j;
    double wj = 1.0;
    for (int axis = 0; axis < dim; ++axis) {
      const Eigen::Index idx = rest % order;
      rest /= order;
      out.nodes(axis, j) = nodes1[idx];
      wj *= w1[idx];
    }
    out.weights[j] = wj;
  }
  return out;
}

GaussianBelief predict(const GaussianBelief& belief, double dt,
                       const ModelParams& params, const Bijection& bij,
                       const QuadratureRule& rule) {
  LcdCache cache;
  cache.refresh(dt, params);
  auto ws = make_workspace(rule);
  PredictOptions opts;
  return predict_full(belief, dt, cache, params, bij, rule, opts, ws.get(),
                      false, -1)
      .belief;
}

GaussianBelief cd_predict(const GaussianBelief& belief, double dt,
                          const ModelParams& params, const Bijection& bij,
                          const QuadratureRule& rule, int n_substeps) {
  auto ws = make_workspace(rule);
  return cd_predict_impl(belief, dt, params, bij, rule, n_substeps, ws.get(),
                         -1)
      .belief;
}

std::pair<GaussianBelief, double> update(const GaussianBelief& pred_belief,
                                         double y, double xi) {
  UpdateResult r = update_impl(pred_belief, y, xi, -1);
  return {std::move(r.belief), r.log_pred_density};
}

FilterRun filter(const TimeSeries& series, const ModelParams& params,
                 const Bijection& bij, const QuadratureRule& rule,
                 const PredictOptions& opts,
                 const std::optional<GaussianBelief>& init) {
  FilterRun run;
  const std::size_t n = series.size();
  run.t = series.t;
  run.mean_pred.resize(n);
  run.mean_filt.resize(n);
  run.cov_pred.resize(n);
  run.cov_filt.resize(n);
  run.innovation_var.resize(n);
  run.nll = run_forward(series, params, bij, rule, opts, init,
                        [&](std::size_t k, const GaussianBelief& pred,
                            const UpdateResult& upd) {
                          run.mean_pred[k] = pred.mean;
                          run.cov_pred[k] = pred.cov;
                          run.mean_filt[k] = upd.belief.mean;
                          run.cov_filt[k] = upd.belief.cov;
                          run.innovation_var[k] = upd.innovation_var;
                        });
  return run;
}

double filter_nll(const TimeSeries& series, const ModelParams& params,
                  const Bijection& bij, const QuadratureRule& rule,
                  const PredictOptions& opts,
                  const std::optional<GaussianBelief>& init) {
  return run_forward(series, params, bij, rule, opts, init,
                     [](std::size_t, const GaussianBelief&,
                        const UpdateResult&) {});
}

SmootherRun smooth(const FilterRun& run, const ModelParams& params,
                   const Bijection& bij, const QuadratureRule& rule,
                   const PredictOptions& opts) {
  const std::size_t n = run.size();
  if (n == 0) throw std::invalid_argument("empty filter run");

  SmootherRun out;
  out.t = run.t;
  out.mean.resize(n);
  out.cov.resize(n);
  out.mean[n - 1] = run.mean_filt[n - 1];
  out.cov[n - 1] = run.cov_filt[n - 1];

  auto ws = make_workspace(rule);
  LcdCache cache;
  for (std::size_t k = n - 1; k-- > 0;) {
    const double dt = run.t[k + 1] - run.t[k];
    cache.refresh(dt, params);
    const GaussianBelief filtered{run.mean_filt[k], run.cov_filt[k]};
    const Prediction pred =
        predict_full(filtered, dt, cache, params, bij, rule, opts, ws.get(),
                     /*want_cross=*/true, static_cast<long>(k));

    Eigen::LDLT<Mat4> ldlt(pred.belief.cov);
    if (ldlt.info() != Eigen::Success) {
      throw NumericalError(
          step_msg("prediction covariance factorization failed",
                   static_cast<long>(k)),
          static_cast<long>(k));
    }
    const Mat4 gain = ldlt.solve(pred.cross.transpose()).transpose();
    out.mean[k] =
        run.mean_filt[k] + gain * (out.mean[k + 1] - pred.belief.mean);
    Mat4 cov = run.cov_filt[k] +
               gain * (out.cov[k + 1] - pred.belief.cov) * gain.transpose();
    symmetrize(cov);
    out.cov[k] = cov;
  }
  return out;
}

namespace {

IfEstimate belief_to_if(double t, const StateVector& m, const Mat4& p,
                        const Bijection& bij) {
  IfEstimate e;
  e.t = t;
  const double v = m[kVIndex];
  const double sd = std::sqrt(std::max(p(kVIndex, kVIndex), 0.0));
  e.if_mean = bij.forward(v);
  e.if_lower = bij.forward(v - 1.96 * sd);
  e.if_upper = bij.forward(v + 1.96 * sd);
  e.chirp_mean = m[kChirpIndex];
  e.chirp_std = std::sqrt(std::max(p(kChirpIndex, kChirpIndex), 0.0));
  return e;
}

}  // namespace

std::vector<IfEstimate> extract_if(const FilterRun& run, const Bijection& bij) {
  std::vector<IfEstimate> out(run.size());
  for (std::size_t k = 0; k < run.size(); ++k) {
    out[k] = belief_to_if(run.t[k], run.mean_filt[k], run.cov_filt[k], bij);
  }
  return out;
}

std::vector<IfEstimate> extract_if(const SmootherRun& run,
                                   const Bijection& bij) {
  std::vector<IfEstimate> out(run.size());
  for (std::size_t k = 0; k < run.size(); ++k) {
    out[k] = belief_to_if(run.t[k], run.mean[k], run.cov[k], bij);
  }
  return out;
}

}  // namespace chirpgp
