#include "chirpgp/mle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "chirpgp/threading.hpp"

namespace chirpgp {

namespace {

constexpr int kNumParams = 6;
const char* const kParamNames[kNumParams] = {"lambda", "b",     "xi",
                                             "ell",    "sigma", "m0v"};

bool is_failed(double f) { return !std::isfinite(f) || f >= kFailedObjective; }

// Maps between the full constrained parameter vector and the reduced
// unconstrained vector of free (unpinned) coordinates.
struct Reparam {
  std::array<bool, kNumParams> pinned{};
  std::array<double, kNumParams> pin_value{};
  std::vector<int> free_indices;

  explicit Reparam(const PinMap& pins) {
    for (const auto& [name, value] : pins) {
      const auto it =
          std::find(std::begin(kParamNames), std::end(kParamNames), name);
      if (it == std::end(kParamNames)) {
        throw std::invalid_argument("unknown parameter name: " + name);
      }
      const int idx = static_cast<int>(it - std::begin(kParamNames));
      pinned[idx] = true;
      pin_value[idx] = value;
    }
    for (int i = 0; i < kNumParams; ++i) {
      if (!pinned[i]) free_indices.push_back(i);
    }
  }

  static std::array<double, kNumParams> to_array(const ModelParams& p) {
    return {p.lambda, p.b, p.xi, p.ell, p.sigma, p.m0v};
  }

  Eigen::VectorXd to_free(const ModelParams& p) const {
    const auto vals = to_array(p);
    Eigen::VectorXd x(static_cast<Eigen::Index>(free_indices.size()));
    for (std::size_t j = 0; j < free_indices.size(); ++j) {
      const int i = free_indices[j];
      x[static_cast<Eigen::Index>(j)] = (i == 5) ? vals[i] : std::log(vals[i]);
    }
    return x;
  }

  ModelParams to_params(const Eigen::VectorXd& x) const {
    std::array<double, kNumParams> vals;
    for (int i = 0; i < kNumParams; ++i) vals[i] = pin_value[i];
    for (std::size_t j = 0; j < free_indices.size(); ++j) {
      const int i = free_indices[j];
      const double v = x[static_cast<Eigen::Index>(j)];
      vals[i] = (i == 5) ? v : std::exp(v);
    }
    return ModelParams(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]);
  }
};

}  // namespace

UnconstrainedParams UnconstrainedParams::from(const ModelParams& params) {
  if (params.lambda <= 0.0 || params.b <= 0.0) {
    throw std::invalid_argument(
        "log reparameterization requires lambda, b > 0; pin them instead");
  }
  UnconstrainedParams u;
  u.theta << std::log(params.lambda), std::log(params.b), std::log(params.xi),
      std::log(params.ell), std::log(params.sigma), params.m0v;
  return u;
}

ModelParams UnconstrainedParams::to_params() const {
  return ModelParams(std::exp(theta[0]), std::exp(theta[1]),
                     std::exp(theta[2]), std::exp(theta[3]),
                     std::exp(theta[4]), theta[5]);
}

Eigen::VectorXd fd_gradient(const Objective& fn, const Eigen::VectorXd& x,
                            double rel_step, bool parallel) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd grad(n);
  Eigen::VectorXd f_plus(n), f_minus(n), h(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    h[i] = rel_step * std::max(1.0, std::abs(x[i]));
  }

  auto eval_one = [&](std::size_t j) {
    const Eigen::Index i = static_cast<Eigen::Index>(j / 2);
    Eigen::VectorXd xp = x;
    if (j % 2 == 0) {
      xp[i] += h[i];
      f_plus[i] = fn(xp);
    } else {
      xp[i] -= h[i];
      f_minus[i] = fn(xp);
    }
  };

  const std::size_t jobs = static_cast<std::size_t>(2 * n);
  if (parallel) {
    parallel_for(jobs, eval_one);
  } else {
    for (std::size_t j = 0; j < jobs; ++j) eval_one(j);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    grad[i] = (f_plus[i] - f_minus[i]) / (2.0 * h[i]);
  }
  return grad;
}

MinimizeResult minimize(const Objective& fn, const Eigen::VectorXd& x0,
                        const OptimizerOptions& opts) {
  const Eigen::Index n = x0.size();
  MinimizeResult res;
  res.x = x0;
  res.f = fn(x0);
  res.n_evaluations = 1;
  if (is_failed(res.f)) return res;

  auto gradient = [&](const Eigen::VectorXd& x) {
    res.n_evaluations += 2 * n;
    return fd_gradient(fn, x, opts.fd_step, opts.parallel_gradient);
  };

  Eigen::VectorXd g = gradient(res.x);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history;  // (s, y)

  auto two_loop = [&](const Eigen::VectorXd& grad) {
    Eigen::VectorXd q = grad;
    std::vector<double> alpha(history.size());
    for (std::size_t i = history.size(); i-- > 0;) {
      const auto& [s, y] = history[i];
      const double rho = 1.0 / y.dot(s);
      alpha[i] = rho * s.dot(q);
      q -= alpha[i] * y;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const auto& [s, y] = history[i];
      const double rho = 1.0 / y.dot(s);
      const double beta = rho * y.dot(q);
      q += (alpha[i] - beta) * s;
    }
    return q;
  };

  bool restarted = false;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    if (opts.verbose) res.trace.push_back(res.f);
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      return res;
    }

    Eigen::VectorXd dir = -two_loop(g);
    double slope = dir.dot(g);
    if (!(slope < 0.0) || !dir.allFinite()) {
      dir = -g;
      slope = dir.dot(g);
      history.clear();
    }

    // Armijo backtracking
    double step = (iter == 0 && history.empty())
                      ? std::min(1.0, 1.0 / std::max(1.0, g.norm()))
                      : 1.0;
    double f_new = kFailedObjective;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = res.x + step * dir;
      f_new = fn(x_new);
      ++res.n_evaluations;
      if (!is_failed(f_new) && f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!history.empty() && !restarted) {
        // retry from a fresh steepest-descent state once
        history.clear();
        restarted = true;
        continue;
      }
      return res;  // line search exhausted; best point so far
    }
    restarted = false;

    Eigen::VectorXd g_new = gradient(x_new);
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (std::isfinite(sy) && sy > 1e-12 * s.norm() * y.norm() &&
        y.allFinite()) {
      history.emplace_back(s, y);
      if (static_cast<int>(history.size()) > opts.memory) {
        history.pop_front();
      }
    }

    const double delta = std::abs(res.f - f_new);
    res.x = std::move(x_new);
    res.f = f_new;
    g = std::move(g_new);
    if (delta <= opts.rel_tol * std::max(1.0, std::abs(res.f))) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

double nll(const UnconstrainedParams& uparams, const TimeSeries& series,
           const Bijection& bij, const QuadratureRule& rule,
           const PredictOptions& predict_opts) {
  try {
    const ModelParams params = uparams.to_params();
    const double value = filter_nll(series, params, bij, rule, predict_opts);
    return std::isfinite(value) ? value : kFailedObjective;
  } catch (const NumericalError&) {
    return kFailedObjective;
  } catch (const std::invalid_argument&) {
    return kFailedObjective;
  }
}

std::vector<ModelParams> default_starts(const Bijection& bij, int count) {
  const double m0v_grid[3] = {bij.inverse(10.0), bij.inverse(5.0),
                              bij.inverse(20.0)};
  const double ell_grid[2] = {1.5, 0.5};
  std::vector<ModelParams> starts;
  for (double m0v : m0v_grid) {
    for (double ell : ell_grid) {
      starts.emplace_back(0.1, 0.1, 0.1, ell, 3.0, m0v);
    }
  }
  if (count < 1) count = 1;
  if (count < static_cast<int>(starts.size())) starts.resize(count);
  return starts;
}

FitResult fit(const TimeSeries& series, const Bijection& bij,
              const QuadratureRule& rule,
              const std::vector<ModelParams>& starts,
              const OptimizerOptions& opts, const PinMap& pins,
              const PredictOptions& predict_opts) {
  if (starts.empty()) throw std::invalid_argument("need at least one start");
  const Reparam reparam(pins);
  if (reparam.free_indices.empty()) {
    throw std::invalid_argument("all parameters pinned; nothing to fit");
  }

  Objective objective = [&](const Eigen::VectorXd& x) -> double {
    try {
      const ModelParams params = reparam.to_params(x);
      const double value = filter_nll(series, params, bij, rule, predict_opts);
      return std::isfinite(value) ? value : kFailedObjective;
    } catch (const NumericalError&) {
      return kFailedObjective;
    } catch (const std::invalid_argument&) {
      return kFailedObjective;
    }
  };

  bool have_best = false;
  FitResult best{starts.front(), kFailedObjective, 0, false, 0, {}};
  long total_evals = 0;
  std::ostringstream failures;

  for (std::size_t s = 0; s < starts.size(); ++s) {
    ModelParams start = starts[s];
    // pinned coordinates take their pin value regardless of the start
    const Eigen::VectorXd x0 = reparam.to_free([&] {
      auto vals = Reparam::to_array(start);
      for (int i = 0; i < kNumParams; ++i) {
        if (reparam.pinned[i]) vals[i] = reparam.pin_value[i];
      }
      // guard the log map for free coordinates
      for (int i : reparam.free_indices) {
        if (i != 5 && vals[i] <= 0.0) {
          throw std::invalid_argument("free start value must be positive");
        }
      }
      return ModelParams(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]);
    }());

    const MinimizeResult r = minimize(objective, x0, opts);
    total_evals += r.n_evaluations;
    if (is_failed(r.f)) {
      failures << "start " << s << ": objective failed numerically\n";
      continue;
    }
    if (!have_best || r.f < best.nll) {
      have_best = true;
      best.params = reparam.to_params(r.x);
      best.nll = r.f;
      best.converged = r.converged;
      best.start_index = static_cast<int>(s);
      best.trace = r.trace;
    }
  }
  best.n_evaluations = total_evals;
  if (!have_best) {
    throw std::runtime_error("all optimization starts failed:\n" +
                             failures.str());
  }
  return best;
}

}  // namespace chirpgp
