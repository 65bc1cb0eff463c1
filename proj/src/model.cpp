#include "chirpgp/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace chirpgp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_finite(double x, const char* name) {
  if (!std::isfinite(x)) {
    throw std::invalid_argument(std::string(name) + " must be finite");
  }
}

double softplus_fwd(double x) {
  // log(1 + e^x), overflow-safe on both tails
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double softplus_inv(double f) {
  if (f <= 0.0) {
    throw std::invalid_argument("softplus inverse requires a positive value");
  }
  // log(e^f - 1); switch to the log-domain expansion for large f
  if (f > 30.0) return f + std::log1p(-std::exp(-f));
  return std::log(std::expm1(f));
}

double softplus_deriv(double x) {
  // logistic sigmoid, stable on both tails
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ModelParams::ModelParams(double lambda_, double b_, double xi_, double ell_,
                         double sigma_, double m0v_)
    : lambda(lambda_), b(b_), xi(xi_), ell(ell_), sigma(sigma_), m0v(m0v_) {
  require_finite(lambda, "lambda");
  require_finite(b, "b");
  require_finite(xi, "xi");
  require_finite(ell, "ell");
  require_finite(sigma, "sigma");
  require_finite(m0v, "m0v");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (b < 0.0) throw std::invalid_argument("b must be >= 0");
  if (xi <= 0.0) throw std::invalid_argument("xi must be > 0");
  if (ell <= 0.0) throw std::invalid_argument("ell must be > 0");
  if (sigma <= 0.0) throw std::invalid_argument("sigma must be > 0");
}

Bijection Bijection::softplus() { return Bijection(BijectionKind::Softplus); }

Bijection Bijection::exponential() { return Bijection(BijectionKind::Exp); }

Bijection Bijection::custom(std::function<double(double)> fwd,
                            std::function<double(double)> inv,
                            std::function<double(double)> deriv) {
  Bijection b(BijectionKind::Custom);
  b.fwd_ = std::move(fwd);
  b.inv_ = std::move(inv);
  b.deriv_ = std::move(deriv);
  return b;
}

double Bijection::forward(double x) const {
  switch (kind_) {
    case BijectionKind::Softplus:
      return softplus_fwd(x);
    case BijectionKind::Exp:
      return std::exp(x);
    case BijectionKind::Custom:
      return fwd_(x);
  }
  return 0.0;  // unreachable
}

double Bijection::inverse(double f) const {
  switch (kind_) {
    case BijectionKind::Softplus:
      return softplus_inv(f);
    case BijectionKind::Exp:
      if (f <= 0.0) {
        throw std::invalid_argument("exp inverse requires a positive value");
      }
      return std::log(f);
    case BijectionKind::Custom:
      return inv_(f);
  }
  return 0.0;
}

double Bijection::deriv(double x) const {
  switch (kind_) {
    case BijectionKind::Softplus:
      return softplus_deriv(x);
    case BijectionKind::Exp:
      return std::exp(x);
    case BijectionKind::Custom:
      return deriv_(x);
  }
  return 0.0;
}

void Bijection::forward_array(const Eigen::ArrayXd& x,
                              Eigen::ArrayXd& out) const {
  switch (kind_) {
    case BijectionKind::Softplus: {
      // log1p(exp(x)) with the shifted form on the positive tail
      out = (x > 30.0).select(x + (-x).exp().log1p(), x.exp().log1p());
      return;
    }
    case BijectionKind::Exp:
      out = x.exp();
      return;
    case BijectionKind::Custom:
      out.resize(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = fwd_(x[i]);
      return;
  }
}

void GaussianBelief::validate() const {
  if (!mean.allFinite() || !cov.allFinite()) {
    throw std::invalid_argument("belief has non-finite entries");
  }
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("belief covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat4> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-9) {
    throw std::invalid_argument("belief covariance is not PSD");
  }
}

Mat2 harmonic_transition(double f, double dt, double lambda) {
  require_finite(f, "f");
  require_finite(dt, "dt");
  require_finite(lambda, "lambda");
  if (dt < 0.0) throw std::invalid_argument("dt must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  const double angle = dt * kTwoPi * f;
  const double c = std::cos(angle), s = std::sin(angle);
  const double damp = std::exp(-lambda * dt);
  Mat2 out;
  out << c, -s, s, c;
  return damp * out;
}

double harmonic_noise_scalar(double dt, double lambda, double b) {
  if (dt < 0.0) throw std::invalid_argument("dt must be >= 0");
  if (lambda > 0.0) {
    return b * b * (1.0 - std::exp(-2.0 * lambda * dt)) / (2.0 * lambda);
  }
  return b * b * dt;
}

Mat2 harmonic_noise_cov(double dt, double lambda, double b) {
  return harmonic_noise_scalar(dt, lambda, b) * Mat2::Identity();
}

Mat2 harmonic_kernel(double t, double t_prime, double f, double lambda,
                     double b, const Mat2& p0x) {
  if (t < 0.0 || t_prime < 0.0) {
    throw std::invalid_argument("kernel times must be >= 0");
  }
  const double lo = std::min(t, t_prime);
  const Mat2 f_lo = harmonic_transition(f, lo, lambda);
  const Mat2 cov_lo =
      f_lo * p0x * f_lo.transpose() + harmonic_noise_cov(lo, lambda, b);
  if (t >= t_prime) {
    return harmonic_transition(f, t - t_prime, lambda) * cov_lo;
  }
  return cov_lo * harmonic_transition(f, t_prime - t, lambda).transpose();
}

Mat2 matern32_drift_matrix(double ell) {
  if (ell <= 0.0) throw std::invalid_argument("ell must be > 0");
  Mat2 m;
  m << 0.0, 1.0, -3.0 / (ell * ell), -2.0 * std::sqrt(3.0) / ell;
  return m;
}

Vec2 matern32_dispersion(double ell, double sigma) {
  const double gamma = std::sqrt(3.0) / ell;
  return Vec2(0.0, 2.0 * sigma * std::pow(gamma, 1.5));
}

Mat2 matern32_stationary_cov(double ell, double sigma) {
  Mat2 p = Mat2::Zero();
  p(0, 0) = sigma * sigma;
  p(1, 1) = 3.0 * sigma * sigma / (ell * ell);
  return p;
}

Mat2 matern32_transition(double dt, double ell) {
  if (dt < 0.0) throw std::invalid_argument("dt must be >= 0");
  if (ell <= 0.0) throw std::invalid_argument("ell must be > 0");
  const double gamma = std::sqrt(3.0) / ell;
  const double e = std::exp(-dt * gamma);
  Mat2 out;
  out << 1.0 + dt * gamma, dt, -dt * gamma * gamma, 1.0 - dt * gamma;
  return e * out;
}

Mat2 matern32_noise_cov(double dt, double ell, double sigma) {
  if (dt < 0.0) throw std::invalid_argument("dt must be >= 0");
  const double gamma = std::sqrt(3.0) / ell;
  const double eta = dt * gamma;
  const double s2 = sigma * sigma;
  const double beta = s2 * std::exp(-2.0 * eta);
  Mat2 out;
  out(0, 0) = s2 - beta * (2.0 * eta + 2.0 * eta * eta + 1.0);
  out(0, 1) = 2.0 * dt * dt * gamma * gamma * gamma * beta;
  out(1, 0) = out(0, 1);
  out(1, 1) = gamma * gamma * (s2 + beta * (2.0 * eta - 2.0 * eta * eta - 1.0));
  return out;
}

double matern32_kernel(double t, double t_prime, double ell, double sigma) {
  if (ell <= 0.0 || sigma <= 0.0) {
    throw std::invalid_argument("ell and sigma must be > 0");
  }
  const double psi = std::sqrt(3.0) * std::abs(t - t_prime) / ell;
  return sigma * sigma * (1.0 + psi) * std::exp(-psi);
}

Vec4 drift(const StateVector& u, const ModelParams& params,
           const Bijection& bij) {
  if (!u.allFinite()) throw std::invalid_argument("state must be finite");
  const double f = bij.forward(u[kVIndex]);
  const double w = kTwoPi * f;
  const double g2 = 3.0 / (params.ell * params.ell);
  const double g1 = 2.0 * std::sqrt(3.0) / params.ell;
  Vec4 out;
  out[0] = -params.lambda * u[0] - w * u[1];
  out[1] = w * u[0] - params.lambda * u[1];
  out[2] = u[3];
  out[3] = -g2 * u[2] - g1 * u[3];
  return out;
}

Mat4 drift_jacobian(const StateVector& u, const ModelParams& params,
                    const Bijection& bij) {
  const double f = bij.forward(u[kVIndex]);
  const double w = kTwoPi * f;
  const double dw = kTwoPi * bij.deriv(u[kVIndex]);
  Mat4 j = Mat4::Zero();
  j(0, 0) = -params.lambda;
  j(0, 1) = -w;
  j(0, 2) = -dw * u[1];
  j(1, 0) = w;
  j(1, 1) = -params.lambda;
  j(1, 2) = dw * u[0];
  j(2, 3) = 1.0;
  j(3, 2) = -3.0 / (params.ell * params.ell);
  j(3, 3) = -2.0 * std::sqrt(3.0) / params.ell;
  return j;
}

Mat4 diffusion_outer(const ModelParams& params) {
  Mat4 q = Mat4::Zero();
  q(0, 0) = params.b * params.b;
  q(1, 1) = params.b * params.b;
  const Vec2 l = matern32_dispersion(params.ell, params.sigma);
  q(3, 3) = l[1] * l[1];
  return q;
}

Vec4 lcd_mean(const StateVector& u, double dt, const ModelParams& params,
              const Bijection& bij) {
  if (dt < 0.0) throw std::invalid_argument("dt must be >= 0");
  const double phi = dt * kTwoPi * bij.forward(u[kVIndex]);
  const double c = std::cos(phi), s = std::sin(phi);
  const double damp = std::exp(-params.lambda * dt);
  const Mat2 tv = matern32_transition(dt, params.ell);
  Vec4 out;
  out[0] = damp * (c * u[0] - s * u[1]);
  out[1] = damp * (s * u[0] + c * u[1]);
  out[2] = tv(0, 0) * u[2] + tv(0, 1) * u[3];
  out[3] = tv(1, 0) * u[2] + tv(1, 1) * u[3];
  return out;
}

Mat4 lcd_jacobian(const StateVector& u, double dt, const ModelParams& params,
                  const Bijection& bij) {
  const double phi = dt * kTwoPi * bij.forward(u[kVIndex]);
  const double dphi = dt * kTwoPi * bij.deriv(u[kVIndex]);
  const double c = std::cos(phi), s = std::sin(phi);
  const double damp = std::exp(-params.lambda * dt);
  Mat4 j = Mat4::Zero();
  j(0, 0) = damp * c;
  j(0, 1) = -damp * s;
  j(1, 0) = damp * s;
  j(1, 1) = damp * c;
  // rotation angle depends on v
  j(0, 2) = damp * (-s * u[0] - c * u[1]) * dphi;
  j(1, 2) = damp * (c * u[0] - s * u[1]) * dphi;
  j.block<2, 2>(2, 2) = matern32_transition(dt, params.ell);
  return j;
}

Mat4 lcd_cov(double dt, const ModelParams& params) {
  Mat4 q = Mat4::Zero();
  q.block<2, 2>(0, 0) = harmonic_noise_cov(dt, params.lambda, params.b);
  q.block<2, 2>(2, 2) = matern32_noise_cov(dt, params.ell, params.sigma);
  return q;
}

GaussianBelief initial_belief(const ModelParams& params) {
  GaussianBelief belief;
  belief.mean = StateVector::Zero();
  belief.mean[kVIndex] = params.m0v;
  belief.cov = Mat4::Zero();
  belief.cov.block<2, 2>(0, 0) = Mat2::Identity();
  belief.cov.block<2, 2>(2, 2) =
      matern32_stationary_cov(params.ell, params.sigma);
  return belief;
}

}  // namespace chirpgp
