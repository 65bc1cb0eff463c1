#pragma once

#include <vector>

#include "chirpgp/filters.hpp"
#include "chirpgp/mle.hpp"
#include "chirpgp/simulate.hpp"

namespace chirpgp {

enum class BaselineMethod { Hilbert, Spectrogram, LegacySS };

struct BaselineEstimate {
  std::vector<double> t;
  std::vector<double> if_est;  ///< Hz
  BaselineMethod method = BaselineMethod::Hilbert;
  /// True where the estimate near the edges comes from one-sided
  /// differences or shortened interpolation.
  std::vector<bool> edge;
};

/// Analytic-signal frequency estimate: FFT-based Hilbert transform, phase
/// unwrapping, central differences scaled by fs / (2 pi). Requires even
/// sampling and at least 8 samples.
BaselineEstimate hilbert_if(const TimeSeries& series, double fs);

/// Short-time power-spectrum first moment over the positive band with a Hann
/// window, interpolated back to the measurement timestamps. Defaults follow
/// a 450-sample window advanced one sample at a time.
BaselineEstimate spectrogram_if(const TimeSeries& series, double fs,
                                int window_len = 450, int overlap = 449);

/// Legacy deterministic-chirp state-space baseline: the full fit + smooth
/// pipeline with the dispersion b pinned to zero.
BaselineEstimate legacy_ss_if(const TimeSeries& series, const Bijection& bij,
                              const QuadratureRule& rule,
                              const std::vector<ModelParams>& starts,
                              const OptimizerOptions& opts = {});

}  // namespace chirpgp
