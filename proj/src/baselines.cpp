#include "chirpgp/baselines.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace chirpgp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// FFTW plan creation is not thread-safe; executions of distinct plans are.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

void require_even_sampling(const TimeSeries& series) {
  if (!series.evenly_sampled()) {
    throw std::invalid_argument(
        "baseline requires an evenly sampled series");
  }
}

std::vector<std::complex<double>> dft(std::vector<std::complex<double>> in,
                                      int sign) {
  const std::size_t n = in.size();
  std::vector<std::complex<double>> out(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_1d(static_cast<int>(n),
                            reinterpret_cast<fftw_complex*>(in.data()),
                            reinterpret_cast<fftw_complex*>(out.data()), sign,
                            FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

}  // namespace

BaselineEstimate hilbert_if(const TimeSeries& series, double fs) {
  require_even_sampling(series);
  const std::size_t n = series.size();
  if (n < 8) throw std::invalid_argument("series too short for Hilbert IF");

  std::vector<std::complex<double>> buf(n);
  for (std::size_t k = 0; k < n; ++k) buf[k] = series.y[k];
  std::vector<std::complex<double>> spec = dft(std::move(buf), FFTW_FORWARD);

  // analytic signal: keep DC (and Nyquist for even n), double the positive
  // bins, zero the negative ones
  const std::size_t last_pos = (n % 2 == 0) ? n / 2 - 1 : (n - 1) / 2;
  for (std::size_t k = 1; k <= last_pos; ++k) spec[k] *= 2.0;
  for (std::size_t k = (n % 2 == 0) ? n / 2 + 1 : last_pos + 1; k < n; ++k) {
    spec[k] = 0.0;
  }

  std::vector<std::complex<double>> analytic = dft(std::move(spec), FFTW_BACKWARD);
  for (auto& z : analytic) z /= static_cast<double>(n);

  // unwrapped instantaneous phase
  std::vector<double> phase(n);
  double offset = 0.0;
  double prev = std::arg(analytic[0]);
  phase[0] = prev;
  for (std::size_t k = 1; k < n; ++k) {
    const double raw = std::arg(analytic[k]);
    double d = raw - prev;
    if (d > std::numbers::pi) {
      offset -= kTwoPi;
    } else if (d < -std::numbers::pi) {
      offset += kTwoPi;
    }
    phase[k] = raw + offset;
    prev = raw;
  }

  BaselineEstimate out;
  out.method = BaselineMethod::Hilbert;
  out.t = series.t;
  out.if_est.resize(n);
  out.edge.assign(n, false);
  const double scale = fs / kTwoPi;
  out.if_est[0] = (phase[1] - phase[0]) * scale;
  out.if_est[n - 1] = (phase[n - 1] - phase[n - 2]) * scale;
  out.edge[0] = out.edge[n - 1] = true;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    out.if_est[k] = (phase[k + 1] - phase[k - 1]) * 0.5 * scale;
  }
  return out;
}

BaselineEstimate spectrogram_if(const TimeSeries& series, double fs,
                                int window_len, int overlap) {
  require_even_sampling(series);
  const int n = static_cast<int>(series.size());
  if (window_len < 4 || window_len > n) {
    throw std::invalid_argument("window length must be in [4, series length]");
  }
  if (overlap < 0 || overlap >= window_len) {
    throw std::invalid_argument("overlap must be in [0, window_len)");
  }
  const int hop = window_len - overlap;

  // Hann window
  std::vector<double> window(window_len);
  for (int i = 0; i < window_len; ++i) {
    window[i] =
        0.5 - 0.5 * std::cos(kTwoPi * i / static_cast<double>(window_len - 1));
  }

  std::vector<double> frame_time;
  std::vector<double> frame_if;
  const int n_bins = window_len / 2;  // positive-frequency bins, DC excluded

  fftw_plan plan;
  std::vector<std::complex<double>> in(window_len), out(window_len);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_1d(window_len,
                            reinterpret_cast<fftw_complex*>(in.data()),
                            reinterpret_cast<fftw_complex*>(out.data()),
                            FFTW_FORWARD, FFTW_ESTIMATE);
  }

  for (int start = 0; start + window_len <= n; start += hop) {
    for (int i = 0; i < window_len; ++i) {
      in[i] = series.y[start + i] * window[i];
    }
    fftw_execute(plan);
    double num = 0.0, den = 0.0;
    for (int k = 1; k <= n_bins; ++k) {
      const double p = std::norm(out[k]);
      const double f = fs * static_cast<double>(k) / window_len;
      num += f * p;
      den += p;
    }
    frame_time.push_back(series.t[start] +
                         0.5 * (window_len - 1) / fs);
    frame_if.push_back(den > 0.0 ? num / den : 0.0);
  }
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  if (frame_time.empty()) {
    throw std::invalid_argument("no spectrogram frames produced");
  }

  // linear interpolation back to the measurement grid; ends clamp to the
  // nearest frame and are flagged as edges
  BaselineEstimate est;
  est.method = BaselineMethod::Spectrogram;
  est.t = series.t;
  est.if_est.resize(n);
  est.edge.assign(n, false);
  std::size_t j = 0;
  for (int k = 0; k < n; ++k) {
    const double t = series.t[k];
    if (t <= frame_time.front()) {
      est.if_est[k] = frame_if.front();
      est.edge[k] = true;
    } else if (t >= frame_time.back()) {
      est.if_est[k] = frame_if.back();
      est.edge[k] = true;
    } else {
      while (j + 1 < frame_time.size() && frame_time[j + 1] < t) ++j;
      const double t0 = frame_time[j], t1 = frame_time[j + 1];
      const double w = (t - t0) / (t1 - t0);
      est.if_est[k] = (1.0 - w) * frame_if[j] + w * frame_if[j + 1];
    }
  }
  return est;
}

BaselineEstimate legacy_ss_if(const TimeSeries& series, const Bijection& bij,
                              const QuadratureRule& rule,
                              const std::vector<ModelParams>& starts,
                              const OptimizerOptions& opts) {
  PinMap pins{{"b", 0.0}};
  const FitResult fitted = fit(series, bij, rule, starts, opts, pins);
  const FilterRun run = filter(series, fitted.params, bij, rule);
  const SmootherRun smoothed = smooth(run, fitted.params, bij, rule);
  const std::vector<IfEstimate> ests = extract_if(smoothed, bij);

  BaselineEstimate out;
  out.method = BaselineMethod::LegacySS;
  out.t.reserve(ests.size());
  out.if_est.reserve(ests.size());
  out.edge.assign(ests.size(), false);
  for (const auto& e : ests) {
    out.t.push_back(e.t);
    out.if_est.push_back(e.if_mean);
  }
  return out;
}

}  // namespace chirpgp
