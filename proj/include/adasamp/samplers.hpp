#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "adasamp/error.hpp"
#include "adasamp/problems.hpp"
#include "adasamp/rng.hpp"

namespace adasamp {

/// Probability vector over the n components, with every entry >= floor.
struct SimplexDistribution {
  Vector probs;
  double floor = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(probs.size()); }
  double operator[](std::size_t i) const { return probs[static_cast<Eigen::Index>(i)]; }

  bool feasible(double sum_tol = 1e-12) const {
    if (probs.size() == 0 || !probs.allFinite()) return false;
    if (std::abs(probs.sum() - 1.0) > sum_tol) return false;
    const double lower = floor * (1.0 - 1e-12);
    return (probs.array() >= lower).all();
  }
};

inline SimplexDistribution uniform_dist(std::size_t n) {
  if (n == 0) throw Fault("uniform distribution needs n >= 1");
  return {Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)), 0.0};
}

/// p_i = L_i / sum_j L_j.
inline SimplexDistribution importance_dist(const Vector& smoothness) {
  if (smoothness.size() == 0) throw Fault("importance distribution needs n >= 1");
  if (!smoothness.allFinite() || (smoothness.array() < 0.0).any())
    throw Fault("smoothness constants must be finite and non-negative");
  const double total = smoothness.sum();
  if (!(total > 0.0)) throw Fault("importance distribution undefined: all L_i are zero");
  return {smoothness / total, 0.0};
}

namespace detail {

// |grad f_i(x) - grad f_i(w)| for every i; w == nullptr means |grad f_i(x)|.
inline Vector grad_diff_norms(const FiniteSumProblem& problem, const Vector& x, const Vector* w) {
  const auto n = static_cast<Eigen::Index>(problem.n());
  Vector norms(n);
  Vector gx, gw;
  for (Eigen::Index i = 0; i < n; ++i) {
    problem.component_grad(static_cast<std::size_t>(i), x, gx);
    if (w != nullptr) {
      problem.component_grad(static_cast<std::size_t>(i), *w, gw);
      gx -= gw;
    }
    norms[i] = gx.norm();
  }
  return norms;
}

inline SimplexDistribution proportional_or_uniform(const Vector& norms) {
  if ((norms.array() < 1e-15).all()) return uniform_dist(static_cast<std::size_t>(norms.size()));
  return {norms / norms.sum(), 0.0};
}

}  // namespace detail

/// Minimizer of the effective variance at (x, w): p_i proportional to
/// |grad f_i(x) - grad f_i(w)|. Falls back to uniform when every difference
/// is below 1e-15.
inline SimplexDistribution oracle_dist(const FiniteSumProblem& problem, const Vector& x,
                                       const Vector& w) {
  return detail::proportional_or_uniform(detail::grad_diff_norms(problem, x, &w));
}

/// Control-variate-free variant used by SGD: p_i proportional to |grad f_i(x)|.
inline SimplexDistribution oracle_dist(const FiniteSumProblem& problem, const Vector& x) {
  return detail::proportional_or_uniform(detail::grad_diff_norms(problem, x, nullptr));
}

struct Draw {
  std::size_t index;
  double prob;
};

/// Inverse-CDF draw. Never returns an index with zero probability.
inline Draw draw(const SimplexDistribution& dist, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double p = dist[i];
    if (p <= 0.0) continue;
    last_positive = i;
    cum += p;
    if (u < cum) return {i, p};
  }
  // u landed in the rounding gap above the accumulated sum.
  return {last_positive, dist[last_positive]};
}

// ---------------------------------------------------------------------------
// AdaOSMD

struct ExpertState {
  SimplexDistribution dist;
  double rate = 0.0;
};

/// What the optimizer reports back after drawing `index` with probability
/// `prob_used` from the mixture: a_value = |grad f_i(x) - grad f_i(w)|^2.
struct SamplerFeedback {
  std::size_t index = 0;
  double prob_used = 0.0;
  double a_value = 0.0;
};

struct AdaOsmdState {
  std::vector<ExpertState> experts;
  Vector meta_weights;
  double meta_rate = 0.0;
  double alpha = 0.0;
  std::size_t horizon = 0;
  double abar1 = 0.0;
  std::size_t saturations = 0;

  std::size_t n() const { return experts.front().dist.size(); }
  double floor() const { return alpha / static_cast<double>(n()); }
};

struct ExpertRateGrid {
  std::vector<double> rates;
  std::size_t count = 0;
};

/// Geometric grid of expert learning rates,
///   rate_e = 2^(e-1) * alpha^3 / (n^3 abar1) * sqrt(log n / (2T)),  e = 1..E,
///   E = floor(1/2 log2(1 + 4 log(n/alpha) (T-1) / log n)) + 1.
/// `n` is real-valued so the closed form can be evaluated off the integers.
inline ExpertRateGrid expert_rate_grid(double n, std::size_t horizon, double alpha, double abar1) {
  if (!(n >= 2.0)) throw Fault("expert rate grid needs n >= 2");
  if (horizon < 2) throw Fault("expert rate grid needs T >= 2");
  if (!(abar1 > 0.0) || !std::isfinite(abar1)) throw Fault("abar1 must be positive and finite");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Fault("alpha must lie in (0, 1]");

  const double T = static_cast<double>(horizon);
  const double log_n = std::log(n);
  const double spread = 1.0 + 4.0 * std::log(n / alpha) * (T - 1.0) / log_n;
  const auto count = static_cast<std::size_t>(std::floor(0.5 * std::log2(spread))) + 1;

  const double base = alpha * alpha * alpha / (n * n * n * abar1) * std::sqrt(log_n / (2.0 * T));
  ExpertRateGrid grid;
  grid.count = count;
  grid.rates.reserve(count);
  for (std::size_t e = 0; e < count; ++e) grid.rates.push_back(std::ldexp(base, static_cast<int>(e)));
  return grid;
}

/// E experts at the floored uniform point, prior weights
/// theta_e = (1 + 1/E) / (e (e + 1)) and meta rate gamma = (alpha/n) sqrt(8 / (T abar1)).
inline AdaOsmdState adaosmd_init(std::size_t n, std::size_t horizon, double alpha, double abar1) {
  const double nd = static_cast<double>(n);
  const ExpertRateGrid grid = expert_rate_grid(nd, horizon, alpha, abar1);
  const std::size_t E = grid.count;

  AdaOsmdState state;
  state.alpha = alpha;
  state.horizon = horizon;
  state.abar1 = abar1;
  state.meta_rate = alpha / nd * std::sqrt(8.0 / (static_cast<double>(horizon) * abar1));
  state.meta_weights.resize(static_cast<Eigen::Index>(E));
  const double scale = 1.0 + 1.0 / static_cast<double>(E);
  for (std::size_t e = 1; e <= E; ++e) {
    const double ed = static_cast<double>(e);
    state.meta_weights[static_cast<Eigen::Index>(e - 1)] = scale / (ed * (ed + 1.0));
  }
  SimplexDistribution start = uniform_dist(n);
  start.floor = alpha / nd;
  state.experts.reserve(E);
  for (double rate : grid.rates) state.experts.push_back({start, rate});
  return state;
}

/// Mixture sum_e theta_e p_e.
inline SimplexDistribution adaosmd_current(const AdaOsmdState& state) {
  Vector mix = Vector::Zero(static_cast<Eigen::Index>(state.n()));
  for (std::size_t e = 0; e < state.experts.size(); ++e)
    mix += state.meta_weights[static_cast<Eigen::Index>(e)] * state.experts[e].dist.probs;
  return {mix, state.floor()};
}

/// KL (unnormalized negative entropy Bregman) projection of a positive point
/// onto {p in simplex : p_i >= alpha/n}, by sorting and thresholding.
///
/// Coordinates whose ascending rank is below the threshold rank i* are set to
/// alpha/n; the rest are rescaled to fill the remaining mass.
inline Vector project_floored_simplex(const Vector& point, double alpha) {
  const auto n = point.size();
  if (n == 0) throw Fault("cannot project an empty point");
  if (!point.allFinite() || (point.array() <= 0.0).any())
    throw Fault("projection input must be finite and strictly positive");
  const double nd = static_cast<double>(n);
  const double floor = alpha / nd;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return point[a] < point[b]; });

  // tail[k] = sum of the sorted values at ranks k..n-1
  std::vector<double> tail(static_cast<std::size_t>(n) + 1, 0.0);
  for (Eigen::Index k = n - 1; k >= 0; --k)
    tail[static_cast<std::size_t>(k)] = tail[static_cast<std::size_t>(k) + 1] + point[order[static_cast<std::size_t>(k)]];

  // 0-based rank k corresponds to i = k + 1.
  Eigen::Index threshold = -1;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double v = point[order[static_cast<std::size_t>(k)]] * (1.0 - static_cast<double>(k) / nd * alpha);
    const double u = floor * tail[static_cast<std::size_t>(k)];
    if (v > u) {
      threshold = k;
      break;
    }
  }
  // Only possible at alpha = 1, where the feasible set is the uniform point.
  if (threshold < 0) return Vector::Constant(n, 1.0 / nd);

  Vector out(n);
  const double scale = (1.0 - static_cast<double>(threshold) / nd * alpha) / tail[static_cast<std::size_t>(threshold)];
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index idx = order[static_cast<std::size_t>(k)];
    out[idx] = k < threshold ? floor : scale * point[idx];
  }
  return out;
}

struct ExpertStepResult {
  ExpertState expert;
  bool saturated = false;
};

/// One mirror-descent step of a single expert. The sampled coordinate is
/// scaled by exp(rate * a / (n^2 * mix_prob * p_e^2)), i.e. a step along the
/// negative sampling-loss gradient estimate, then projected back onto the
/// floored simplex. The exponent is clamped at 700.
inline ExpertStepResult osmd_expert_step(const ExpertState& expert, const SamplerFeedback& fb,
                                         double mix_prob, double alpha) {
  constexpr double kMaxExponent = 700.0;
  const std::size_t n = expert.dist.size();
  if (fb.index >= n) throw Fault("feedback index out of range");
  if (!(fb.a_value >= 0.0) || !std::isfinite(fb.a_value))
    throw Fault("feedback a_value must be finite and >= 0");
  if (!(mix_prob > 0.0)) throw Fault("mixture probability must be positive");

  const auto i = static_cast<Eigen::Index>(fb.index);
  const double nd = static_cast<double>(n);
  const double pe = expert.dist.probs[i];
  double exponent = expert.rate * fb.a_value / (nd * nd * mix_prob * pe * pe);

  ExpertStepResult result{expert, false};
  if (!(exponent <= kMaxExponent)) {
    exponent = kMaxExponent;
    result.saturated = true;
  }
  Vector tilde = expert.dist.probs;
  tilde[i] = pe * std::exp(exponent);
  result.expert.dist.probs = project_floored_simplex(tilde, alpha);
  result.expert.dist.floor = alpha / nd;
  return result;
}

/// Unbiased estimate of the sampling loss of expert `e`:
/// a / (n^2 * mix_prob * p_{e,i}).
inline double sampling_loss_estimate(const ExpertState& expert, const SamplerFeedback& fb,
                                     double mix_prob) {
  const double nd = static_cast<double>(expert.dist.size());
  return fb.a_value / (nd * nd * mix_prob * expert.dist[fb.index]);
}

/// Steps every expert on the feedback and reweights them by
/// theta_e <- theta_e exp(-gamma * loss_e), renormalized.
inline AdaOsmdState adaosmd_update(const AdaOsmdState& state, const SamplerFeedback& fb) {
  const double floor = state.floor();
  if (fb.index >= state.n()) throw Fault("feedback index out of range");
  if (fb.prob_used < floor * (1.0 - 1e-12))
    throw Fault("feedback probability " + std::to_string(fb.prob_used) +
                " is below the mixture floor " + std::to_string(floor));

  AdaOsmdState next = state;
  const std::size_t E = state.experts.size();
  Vector losses(static_cast<Eigen::Index>(E));
  for (std::size_t e = 0; e < E; ++e) {
    losses[static_cast<Eigen::Index>(e)] = sampling_loss_estimate(state.experts[e], fb, fb.prob_used);
    ExpertStepResult stepped = osmd_expert_step(state.experts[e], fb, fb.prob_used, state.alpha);
    next.experts[e] = std::move(stepped.expert);
    if (stepped.saturated) ++next.saturations;
  }

  // Shifting by the smallest loss leaves the normalized weights unchanged.
  const double shift = losses.minCoeff();
  Vector w(static_cast<Eigen::Index>(E));
  for (Eigen::Index e = 0; e < w.size(); ++e)
    w[e] = state.meta_weights[e] * std::exp(-state.meta_rate * (losses[e] - shift));
  next.meta_weights = w / w.sum();
  return next;
}

}  // namespace adasamp
