#pragma once

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "chirpgp/model.hpp"

namespace chirpgp {

/// Scalar measurements on a strictly increasing time grid. Supports uneven
/// sampling.
struct TimeSeries {
  std::vector<double> t;
  std::vector<double> y;

  TimeSeries() = default;
  TimeSeries(std::vector<double> t_, std::vector<double> y_);

  std::size_t size() const { return t.size(); }
  bool evenly_sampled(double rel_tol = 1e-9) const;
};

/// Ground truth of a simulated benchmark signal.
struct SyntheticTruth {
  std::vector<double> t;
  std::vector<double> f_true;  ///< instantaneous frequency, Hz
  std::vector<double> phase;   ///< accumulated cycles from time 0
  std::vector<double> alpha;   ///< amplitude values
  std::vector<double> clean;   ///< noiseless chirp alpha * sin(2 pi phase)
};

/// Amplitude regimes of the benchmark: constant 1, exponential decay, or an
/// Ornstein-Uhlenbeck path d alpha = -alpha dt + dW.
struct AmplitudeConstant {};
struct AmplitudeDamped {
  double rate = 0.3;
};
struct AmplitudeOrnsteinUhlenbeck {};
using AmplitudeMode =
    std::variant<AmplitudeConstant, AmplitudeDamped, AmplitudeOrnsteinUhlenbeck>;

/// True instantaneous frequency a b cot(t) csc(t) e^{-b csc(t)} + c on (0, pi).
double true_if(double t, double a = 500.0, double b = 5.0, double c = 8.0);

/// Phase (in cycles) of the benchmark chirp: a e^{-b / sin t} + c t. Its time
/// derivative is true_if pointwise.
double true_phase(double t, double a = 500.0, double b = 5.0, double c = 8.0);

/// Generates the benchmark chirp on the open interval (0, pi): grid t_k = k/fs
/// for k = 1 .. floor(pi fs) - adjusted so every point stays below pi. Noise
/// and amplitude use independent streams derived from the seed.
std::pair<SyntheticTruth, TimeSeries> gen_benchmark(double fs,
                                                    const AmplitudeMode& mode,
                                                    double noise_var,
                                                    std::uint64_t seed);

/// One sample path of the joint prior on a grid: sequential draws
/// u_k ~ N(lcd_mean(u_{k-1}), lcd_cov), u_0 from the initial belief.
struct PriorPath {
  std::vector<double> chirp;  ///< H u along the path
  std::vector<double> f;      ///< g(v) along the path
};
PriorPath sample_prior_path(const ModelParams& params, const Bijection& bij,
                            const std::vector<double>& t_grid,
                            std::uint64_t seed);

/// Monte-Carlo estimate of Cov[H U(t), H U(t')] conditioned on a given
/// frequency path (the chirp block is simulated; the frequency is clamped to
/// the supplied values).
Eigen::MatrixXd conditional_cov_mc(const ModelParams& params,
                                   const std::vector<double>& f_path,
                                   const std::vector<double>& t_grid,
                                   int n_samples, std::uint64_t seed);

}  // namespace chirpgp
