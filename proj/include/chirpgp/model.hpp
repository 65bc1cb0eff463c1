#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>

namespace chirpgp {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

/// Joint state u = [x1, x2, v, vdot]: 2-D harmonic oscillator carrying the
/// chirp plus a Matern 3/2 state driving the instantaneous frequency.
using StateVector = Eigen::Vector4d;

/// Index of the chirp component observed by the measurement model (H u).
inline constexpr int kChirpIndex = 1;
/// Index of the latent frequency driver V (H_V u).
inline constexpr int kVIndex = 2;

/// The six tunables of the chirp-IF model. Positivity is enforced on
/// construction; b = 0 selects the legacy deterministic-chirp special case.
struct ModelParams {
  double lambda;  ///< chirp damping rate, 1/time, >= 0
  double b;       ///< chirp dispersion, signal units / sqrt(time), >= 0
  double xi;      ///< measurement-noise variance, signal units^2, > 0
  double ell;     ///< Matern length scale, time, > 0
  double sigma;   ///< Matern magnitude scale, > 0
  double m0v;     ///< initial mean of V, unconstrained

  ModelParams(double lambda_, double b_, double xi_, double ell_,
              double sigma_, double m0v_);
};

enum class BijectionKind { Softplus, Exp, Custom };

/// Positive bijection g mapping the latent driver V to the frequency f = g(V).
/// Softplus and Exp are the built-in choices; a custom triple (forward,
/// inverse, derivative) can be injected, e.g. to freeze the frequency in
/// linear-model tests.
class Bijection {
 public:
  static Bijection softplus();
  static Bijection exponential();
  static Bijection custom(std::function<double(double)> fwd,
                          std::function<double(double)> inv,
                          std::function<double(double)> deriv);

  double forward(double x) const;
  double inverse(double f) const;
  double deriv(double x) const;

  /// Vectorized forward map; the built-in kinds use packet math.
  void forward_array(const Eigen::ArrayXd& x, Eigen::ArrayXd& out) const;

  BijectionKind kind() const { return kind_; }

 private:
  explicit Bijection(BijectionKind kind) : kind_(kind) {}

  BijectionKind kind_;
  std::function<double(double)> fwd_, inv_, deriv_;
};

/// Gaussian state belief N(mean, cov) at one time point.
struct GaussianBelief {
  StateVector mean = StateVector::Zero();
  Mat4 cov = Mat4::Zero();

  /// Throws std::invalid_argument if cov is asymmetric beyond 1e-10 relative
  /// or has an eigenvalue below -1e-9.
  void validate() const;
};

/// Raised when a filtering/smoothing recursion degenerates numerically;
/// carries the step index at which it happened.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// --- Harmonic (chirp) block -------------------------------------------------

/// Transition matrix of the damped harmonic SDE over dt at frequency f:
/// exp(-lambda dt) times the rotation by dt * 2*pi*f.
Mat2 harmonic_transition(double f, double dt, double lambda);

/// Process-noise covariance of the harmonic SDE over dt:
/// b^2 (1 - e^{-2 lambda dt}) / (2 lambda) * I, with the exact dt*I limit
/// at lambda = 0.
Mat2 harmonic_noise_cov(double dt, double lambda, double b);

/// Scalar diagonal value of harmonic_noise_cov (the matrix is that value
/// times the identity).
double harmonic_noise_scalar(double dt, double lambda, double b);

/// Covariance function Cov[X(t), X(t')] of the constant-frequency harmonic
/// process started from X(0) ~ N(., p0x).
Mat2 harmonic_kernel(double t, double t_prime, double f, double lambda,
                     double b, const Mat2& p0x);

// --- Matern 3/2 (frequency driver) block ------------------------------------

/// Drift matrix M of the Matern 3/2 SDE.
Mat2 matern32_drift_matrix(double ell);

/// Dispersion vector L of the Matern 3/2 SDE.
Vec2 matern32_dispersion(double ell, double sigma);

/// Stationary covariance diag(sigma^2, 3 sigma^2 / ell^2).
Mat2 matern32_stationary_cov(double ell, double sigma);

/// Closed-form matrix exponential e^{dt M}.
Mat2 matern32_transition(double dt, double ell);

/// Closed-form process-noise covariance of the Matern 3/2 SDE over dt.
Mat2 matern32_noise_cov(double dt, double ell, double sigma);

/// Matern nu = 3/2 covariance function sigma^2 (1 + psi) e^{-psi},
/// psi = sqrt(3) |t - t'| / ell.
double matern32_kernel(double t, double t_prime, double ell, double sigma);

// --- Joint model ------------------------------------------------------------

/// Drift A(u) u of the joint SDE; the chirp block rotates at 2*pi*g(v).
Vec4 drift(const StateVector& u, const ModelParams& params,
           const Bijection& bij);

/// Jacobian of the drift with respect to u.
Mat4 drift_jacobian(const StateVector& u, const ModelParams& params,
                    const Bijection& bij);

/// B B^T of the joint SDE (diffusion outer product).
Mat4 diffusion_outer(const ModelParams& params);

/// Locally conditional discretization of the joint SDE: the chirp block is
/// rotated by dt * 2*pi*g(v) and damped, the Matern block propagates by its
/// exact transition, with the frequency frozen at the start of the step.
Vec4 lcd_mean(const StateVector& u, double dt, const ModelParams& params,
              const Bijection& bij);

/// Jacobian of lcd_mean with respect to u; the rotation block is
/// differentiated through the angle via 2*pi*dt*g'(v).
Mat4 lcd_jacobian(const StateVector& u, double dt, const ModelParams& params,
                  const Bijection& bij);

/// Process-noise covariance of the discretized step:
/// blkdiag(harmonic_noise_cov, matern32_noise_cov).
Mat4 lcd_cov(double dt, const ModelParams& params);

/// Initial belief of the joint state: mean [0, 0, m0v, 0], covariance
/// blkdiag(I2, stationary Matern covariance). The chirp block starts at unit
/// scale independent of b so that a near-deterministic chirp (small b) can
/// still carry an O(1) amplitude through its initial condition.
GaussianBelief initial_belief(const ModelParams& params);

}  // namespace chirpgp
