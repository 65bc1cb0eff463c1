#include "chirpgp/simulate.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "chirpgp/rng.hpp"

namespace chirpgp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// stream ids for independent randomness within one run
enum Stream : std::uint64_t {
  kNoiseStream = 0,
  kAmplitudeStream = 1,
  kPriorPathStream = 2,
  kConditionalCovStream = 3,
};

void check_domain(double t) {
  if (!(t > 0.0 && t < std::numbers::pi)) {
    throw std::domain_error("t must lie in (0, pi)");
  }
}

// Draws from N(0, cov) for a 2x2 PSD cov via eigenvalue square root; handles
// singular blocks (b = 0, dt = 0) without regularization.
Vec2 draw_gaussian2(const Mat2& cov, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  Vec2 ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * (ev.array() * Vec2(rng.normal(), rng.normal()).array()).matrix();
}

Vec4 draw_gaussian4(const Mat4& cov, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(cov);
  Vec4 ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Vec4 z(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return es.eigenvectors() * (ev.array() * z.array()).matrix();
}

}  // namespace

TimeSeries::TimeSeries(std::vector<double> t_, std::vector<double> y_)
    : t(std::move(t_)), y(std::move(y_)) {
  if (t.empty() || t.size() != y.size()) {
    throw std::invalid_argument("time series needs equal, nonzero lengths");
  }
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!std::isfinite(t[k]) || !std::isfinite(y[k])) {
      throw std::invalid_argument("time series entries must be finite");
    }
    if (k > 0 && t[k] <= t[k - 1]) {
      throw std::invalid_argument("timestamps must be strictly increasing");
    }
  }
}

bool TimeSeries::evenly_sampled(double rel_tol) const {
  if (t.size() < 3) return true;
  const double mean_dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (std::abs(t[k] - t[k - 1] - mean_dt) > rel_tol * mean_dt) return false;
  }
  return true;
}

double true_if(double t, double a, double b, double c) {
  check_domain(t);
  const double s = std::sin(t);
  const double csc = 1.0 / s;
  const double cot = std::cos(t) / s;
  return a * b * cot * csc * std::exp(-b * csc) + c;
}

double true_phase(double t, double a, double b, double c) {
  check_domain(t);
  return a * std::exp(-b / std::sin(t)) + c * t;
}

std::pair<SyntheticTruth, TimeSeries> gen_benchmark(double fs,
                                                    const AmplitudeMode& mode,
                                                    double noise_var,
                                                    std::uint64_t seed) {
  if (fs <= 0.0) throw std::invalid_argument("fs must be > 0");
  if (noise_var < 0.0) throw std::invalid_argument("noise_var must be >= 0");

  // grid k/fs strictly inside (0, pi)
  std::size_t n = static_cast<std::size_t>(std::floor(std::numbers::pi * fs));
  while (static_cast<double>(n) / fs >= std::numbers::pi) --n;
  if (n == 0) throw std::invalid_argument("fs too small for the interval");

  SyntheticTruth truth;
  truth.t.resize(n);
  truth.f_true.resize(n);
  truth.phase.resize(n);
  truth.alpha.resize(n);
  truth.clean.resize(n);

  Rng noise_rng(seed, kNoiseStream);
  Rng amp_rng(seed, kAmplitudeStream);

  // amplitude state for the OU regime, started from its stationary law
  const bool is_ou = std::holds_alternative<AmplitudeOrnsteinUhlenbeck>(mode);
  double ou_state = 0.0;
  if (is_ou) ou_state = std::sqrt(0.5) * amp_rng.normal();

  std::vector<double> y(n);
  double t_prev = 0.0;
  const double noise_std = std::sqrt(noise_var);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k + 1) / fs;
    truth.t[k] = t;
    truth.f_true[k] = true_if(t);
    truth.phase[k] = true_phase(t);

    double alpha;
    if (std::holds_alternative<AmplitudeConstant>(mode)) {
      alpha = 1.0;
    } else if (const auto* damped = std::get_if<AmplitudeDamped>(&mode)) {
      alpha = std::exp(-damped->rate * t);
    } else {
      // exact OU transition: mean e^{-dt}, variance (1 - e^{-2 dt}) / 2
      const double dt = t - t_prev;
      const double decay = std::exp(-dt);
      ou_state = decay * ou_state +
                 std::sqrt(0.5 * (1.0 - decay * decay)) * amp_rng.normal();
      alpha = ou_state;
    }
    truth.alpha[k] = alpha;
    truth.clean[k] = alpha * std::sin(kTwoPi * truth.phase[k]);
    y[k] = truth.clean[k] + noise_std * noise_rng.normal();
    t_prev = t;
  }

  TimeSeries series(truth.t, std::move(y));
  return {std::move(truth), std::move(series)};
}

PriorPath sample_prior_path(const ModelParams& params, const Bijection& bij,
                            const std::vector<double>& t_grid,
                            std::uint64_t seed) {
  if (t_grid.empty()) throw std::invalid_argument("empty time grid");
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    if (t_grid[k] <= t_grid[k - 1]) {
      throw std::invalid_argument("time grid must be strictly increasing");
    }
  }

  Rng rng(seed, kPriorPathStream);
  const GaussianBelief init = initial_belief(params);
  Vec4 u = init.mean + draw_gaussian4(init.cov, rng);

  PriorPath path;
  path.chirp.reserve(t_grid.size());
  path.f.reserve(t_grid.size());
  double t_prev = 0.0;
  for (double t : t_grid) {
    const double dt = t - t_prev;
    Vec4 mean = lcd_mean(u, dt, params, bij);
    Vec2 chirp_noise =
        std::sqrt(harmonic_noise_scalar(dt, params.lambda, params.b)) *
        Vec2(rng.normal(), rng.normal());
    Vec2 matern_noise =
        draw_gaussian2(matern32_noise_cov(dt, params.ell, params.sigma), rng);
    u = mean;
    u.head<2>() += chirp_noise;
    u.tail<2>() += matern_noise;
    path.chirp.push_back(u[kChirpIndex]);
    path.f.push_back(bij.forward(u[kVIndex]));
    t_prev = t;
  }
  return path;
}

Eigen::MatrixXd conditional_cov_mc(const ModelParams& params,
                                   const std::vector<double>& f_path,
                                   const std::vector<double>& t_grid,
                                   int n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw std::invalid_argument("need n_samples >= 2");
  if (f_path.size() != t_grid.size()) {
    throw std::invalid_argument("f_path and t_grid lengths differ");
  }
  const std::size_t n = t_grid.size();

  Rng rng(seed, kConditionalCovStream);
  const Mat2 p0x = initial_belief(params).cov.block<2, 2>(0, 0);

  Eigen::MatrixXd samples(n_samples, n);
  for (int s = 0; s < n_samples; ++s) {
    Vec2 x = draw_gaussian2(p0x, rng);
    double t_prev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double dt = t_grid[k] - t_prev;
      x = harmonic_transition(f_path[k], dt, params.lambda) * x +
          std::sqrt(harmonic_noise_scalar(dt, params.lambda, params.b)) *
              Vec2(rng.normal(), rng.normal());
      samples(s, k) = x[1];
      t_prev = t_grid[k];
    }
  }

  const Eigen::RowVectorXd mean = samples.colwise().mean();
  Eigen::MatrixXd centered = samples.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(n_samples - 1);
}

}  // namespace chirpgp
