#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "adasamp/error.hpp"
#include "adasamp/metrics.hpp"
#include "adasamp/optimizer_state.hpp"
#include "adasamp/problems.hpp"
#include "adasamp/rng.hpp"
#include "adasamp/samplers.hpp"

namespace adasamp {

/// Scratch buffers reused across steps, plus what the last step reported.
struct StepWorkspace {
  Vector gx;
  Vector gw;
  Vector acc;
  std::vector<SamplerFeedback> feedback;
  bool refreshed = false;
};

namespace detail {

// Draws `batch` indices i.i.d. from dist and accumulates
// sum_b (1/(n p_b)) (grad f_b(x) - grad f_b(w)) into ws.acc; with w == nullptr
// the plain component gradient is used. Feedback is recorded in draw order.
inline void accumulate_batch(const FiniteSumProblem& problem, const SimplexDistribution& dist,
                             const Vector& x, const Vector* w, Rng& rng, std::size_t batch,
                             StepWorkspace& ws) {
  if (batch == 0) throw Fault("batch size must be >= 1");
  const double nd = static_cast<double>(problem.n());
  ws.feedback.clear();
  ws.acc.setZero(static_cast<Eigen::Index>(problem.dim()));
  for (std::size_t b = 0; b < batch; ++b) {
    const Draw pick = draw(dist, rng);
    problem.component_grad(pick.index, x, ws.gx);
    if (w != nullptr) {
      problem.component_grad(pick.index, *w, ws.gw);
      ws.gx -= ws.gw;
    }
    ws.feedback.push_back({pick.index, pick.prob, ws.gx.squaredNorm()});
    ws.acc += (1.0 / (nd * pick.prob)) * ws.gx;
  }
  if (batch > 1) ws.acc /= static_cast<double>(batch);
}

inline void check_step_finite(const Vector& g) {
  if (!g.allFinite()) throw DivergenceError("stochastic gradient estimate is not finite");
}

}  // namespace detail

/// x <- x - eta (1/(n p_i)) grad f_i(x), averaged over the batch.
inline void sgd_step(SgdState& s, const FiniteSumProblem& problem, const SimplexDistribution& dist,
                     Rng& rng, StepWorkspace& ws, std::size_t batch = 1) {
  detail::accumulate_batch(problem, dist, s.x, nullptr, rng, batch, ws);
  detail::check_step_finite(ws.acc);
  s.x -= s.eta * ws.acc;
  ws.refreshed = false;
}

/// One loopless-SVRG step. The index is drawn before the anchor coin, both
/// from `rng`; on success the anchor moves to the pre-step iterate.
inline void lsvrg_step(LsvrgState& s, const FiniteSumProblem& problem,
                       const SimplexDistribution& dist, Rng& rng, StepWorkspace& ws,
                       std::size_t batch = 1) {
  detail::accumulate_batch(problem, dist, s.x, &s.w, rng, batch, ws);
  ws.acc += s.full_grad_w;
  detail::check_step_finite(ws.acc);
  const bool refresh = rng.uniform() < s.rho;
  if (refresh) s.w = s.x;
  s.x -= s.eta * ws.acc;
  if (refresh) s.full_grad_w = problem.full_grad(s.w);
  ws.refreshed = refresh;
}

/// One loopless-Katyusha step from the coupling point s.x:
///   z' = (eta kappa x + z - (eta/L) g) / (1 + eta kappa)
///   v' = x + theta1 (z' - z)
///   w' = v (pre-step) with probability rho.
/// Afterwards s.x is recomputed as the coupling of (z', w', v').
inline void lkatyusha_step(LkatyushaState& s, const FiniteSumProblem& problem,
                           const SimplexDistribution& dist, Rng& rng, StepWorkspace& ws,
                           std::size_t batch = 1) {
  if (!(s.L > 0.0)) throw Fault("L-Katyusha needs L > 0");
  detail::accumulate_batch(problem, dist, s.x, &s.w, rng, batch, ws);
  ws.acc += s.full_grad_w;
  detail::check_step_finite(ws.acc);

  const double ek = s.eta * s.kappa;
  Vector z_next = (ek * s.x + s.z - (s.eta / s.L) * ws.acc) / (1.0 + ek);
  Vector v_next = s.x + s.theta1 * (z_next - s.z);
  const bool refresh = rng.uniform() < s.rho;
  if (refresh) {
    s.w = s.v;
    s.full_grad_w = problem.full_grad(s.w);
  }
  s.z = std::move(z_next);
  s.v = std::move(v_next);
  s.x = s.coupling();
  ws.refreshed = refresh;
}

// ---------------------------------------------------------------------------
// Sampling strategies as seen by the run loop.

class FixedSampler {
 public:
  explicit FixedSampler(SimplexDistribution dist) : dist_(std::move(dist)) {}
  const SimplexDistribution& prepare(const FiniteSumProblem&, const Vector&, const Vector*) {
    return dist_;
  }
  void observe(const std::vector<SamplerFeedback>&) {}

 private:
  SimplexDistribution dist_;
};

/// Recomputes the variance-minimizing distribution every step (O(n d)).
class OracleSampler {
 public:
  const SimplexDistribution& prepare(const FiniteSumProblem& problem, const Vector& x,
                                     const Vector* w) {
    current_ = w != nullptr ? oracle_dist(problem, x, *w) : oracle_dist(problem, x);
    return current_;
  }
  void observe(const std::vector<SamplerFeedback>&) {}

 private:
  SimplexDistribution current_;
};

class AdaptiveSampler {
 public:
  explicit AdaptiveSampler(AdaOsmdState state) : state_(std::move(state)) {}

  const SimplexDistribution& prepare(const FiniteSumProblem&, const Vector&, const Vector*) {
    current_ = adaosmd_current(state_);
    return current_;
  }

  void observe(const std::vector<SamplerFeedback>& feedback) {
    for (const auto& fb : feedback) state_ = adaosmd_update(state_, fb);
  }

  const AdaOsmdState& state() const { return state_; }

 private:
  AdaOsmdState state_;
  SimplexDistribution current_;
};

using Sampler = std::variant<FixedSampler, OracleSampler, AdaptiveSampler>;

// ---------------------------------------------------------------------------
// Run configuration and driver.

enum class Algorithm { sgd, lsvrg, lkatyusha };
enum class SamplerKind { uniform, importance, oracle, adaosmd };

/// How abar1 = max_i |grad f_i(x0)| enters the AdaOSMD tuning. `squared`
/// uses the squared norm, matching the units of the a-values.
enum class AbarMode { norm, squared };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::sgd: return "sgd";
    case Algorithm::lsvrg: return "lsvrg";
    case Algorithm::lkatyusha: return "lkatyusha";
  }
  return "?";
}

inline std::string_view to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::uniform: return "uniform";
    case SamplerKind::importance: return "importance";
    case SamplerKind::oracle: return "oracle";
    case SamplerKind::adaosmd: return "adaosmd";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "sgd") return Algorithm::sgd;
  if (s == "lsvrg") return Algorithm::lsvrg;
  if (s == "lkatyusha") return Algorithm::lkatyusha;
  throw Fault("unknown algorithm '" + std::string(s) + "'");
}

inline SamplerKind parse_sampler(std::string_view s) {
  if (s == "uniform") return SamplerKind::uniform;
  if (s == "importance") return SamplerKind::importance;
  if (s == "oracle") return SamplerKind::oracle;
  if (s == "adaosmd") return SamplerKind::adaosmd;
  throw Fault("unknown sampler '" + std::string(s) + "'");
}

struct RunConfig {
  Algorithm algorithm = Algorithm::lsvrg;
  SamplerKind sampler = SamplerKind::uniform;
  std::size_t T = 1;
  /// Required for sgd/lsvrg; L-Katyusha defaults to theta2 / ((1 + theta2) theta1).
  std::optional<double> eta;
  /// Defaults to 1/n.
  std::optional<double> rho;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  bool average_iterates = false;

  double alpha = 0.4;
  AbarMode abar_mode = AbarMode::norm;

  // L-Katyusha overrides; defaults follow the strongly convex tuning.
  std::optional<double> theta1;
  std::optional<double> theta2;
  std::optional<double> L;
};

/// One CSV row. Row 0 describes the start point; row t > 0 the step that
/// produced x^t (index/prob of its first draw, effective variance of the
/// distribution it used, whether the anchor moved).
struct IterationTrace {
  std::size_t iter = 0;
  double subopt = 0.0;
  double v_eff = 0.0;
  std::int64_t index = -1;
  double prob = 0.0;
  bool refresh = false;
  std::int64_t nanos = 0;
  // Optional columns; NaN when not requested or not defined for the algorithm.
  double v_sampling = std::numeric_limits<double>::quiet_NaN();
  double dist_D = std::numeric_limits<double>::quiet_NaN();
  double psi = std::numeric_limits<double>::quiet_NaN();
};

struct RunOptions {
  /// Start point; zeros when empty.
  Vector x0;
  /// Rows at t = 0, k, 2k, ... and t = T.
  std::size_t record_every = 1;
  bool record_v_eff = true;
  /// Wall-clock column; off by default so traces are reproducible bytewise.
  bool record_timing = false;
  /// Subtracted from F(x^t); 0 when absent.
  std::optional<double> optimal_value;
  /// Sampling variance V = V_e - |grad F(x) - grad F(w)|^2 per row.
  bool record_v_sampling = false;
  /// D(w) and, for L-Katyusha, the potential Psi. Both need `reference`.
  bool record_D = false;
  bool record_psi = false;
  const Minimizer* reference = nullptr;
  std::function<void(const IterationTrace&)> sink;
};

struct RunResult {
  std::vector<IterationTrace> trace;
  Vector x_final;
  std::optional<Vector> x_average;
  std::size_t saturations = 0;
};

/// Resolved L-Katyusha parameters for a given problem and sampler.
struct KatyushaParams {
  double L, kappa, theta1, theta2, eta;
};

inline KatyushaParams katyusha_params(const FiniteSumProblem& problem, const RunConfig& cfg) {
  KatyushaParams k{};
  if (cfg.L) {
    k.L = *cfg.L;
  } else {
    switch (cfg.sampler) {
      case SamplerKind::adaosmd:
        k.L = 0.4 * problem.max_smoothness() + 0.6 * problem.mean_smoothness();
        break;
      case SamplerKind::importance:
      case SamplerKind::oracle:
        k.L = problem.mean_smoothness();
        break;
      case SamplerKind::uniform:
        k.L = problem.max_smoothness();
        break;
    }
  }
  if (!(k.L > 0.0)) throw Fault("L-Katyusha needs L > 0");
  k.kappa = problem.strong_convexity() / k.L;
  k.theta2 = cfg.theta2.value_or(0.5);
  const double nd = static_cast<double>(problem.n());
  k.theta1 = cfg.theta1.value_or(std::min(std::sqrt(2.0 * k.kappa * nd / 3.0), 0.5));
  if (!(k.theta1 > 0.0))
    throw Fault("L-Katyusha default theta1 is 0 (problem not strongly convex); set theta1");
  if (k.theta1 + k.theta2 > 1.0) throw Fault("L-Katyusha needs theta1 + theta2 <= 1");
  k.eta = cfg.eta.value_or(k.theta2 / ((1.0 + k.theta2) * k.theta1));
  return k;
}

/// abar1 = max_i |grad f_i(x0)| (or its square).
inline double initial_abar(const FiniteSumProblem& problem, const Vector& x0, AbarMode mode) {
  double best = 0.0;
  Vector g;
  for (std::size_t i = 0; i < problem.n(); ++i) {
    problem.component_grad(i, x0, g);
    best = std::max(best, mode == AbarMode::squared ? g.squaredNorm() : g.norm());
  }
  return best;
}

inline Sampler make_sampler(const RunConfig& cfg, const FiniteSumProblem& problem,
                            const Vector& x0) {
  switch (cfg.sampler) {
    case SamplerKind::uniform:
      return FixedSampler(uniform_dist(problem.n()));
    case SamplerKind::importance:
      return FixedSampler(importance_dist(problem.smoothness_constants()));
    case SamplerKind::oracle:
      return OracleSampler{};
    case SamplerKind::adaosmd: {
      const double abar = initial_abar(problem, x0, cfg.abar_mode);
      return AdaptiveSampler(adaosmd_init(problem.n(), cfg.T * cfg.batch, cfg.alpha, abar));
    }
  }
  throw Fault("unhandled sampler kind");
}

namespace detail {

// Iterate bundle behind a uniform interface for the run loop.
class AnyState {
 public:
  AnyState(const RunConfig& cfg, const FiniteSumProblem& problem, const Vector& x0)
      : algorithm_(cfg.algorithm) {
    const double rho = cfg.rho.value_or(1.0 / static_cast<double>(problem.n()));
    if (!(rho > 0.0 && rho <= 1.0)) throw Fault("rho must lie in (0, 1]");
    switch (algorithm_) {
      case Algorithm::sgd:
        if (!cfg.eta) throw Fault("sgd needs eta");
        sgd_ = SgdState{x0, *cfg.eta};
        break;
      case Algorithm::lsvrg:
        if (!cfg.eta) throw Fault("lsvrg needs eta");
        lsvrg_ = LsvrgState::start(problem, x0, *cfg.eta, rho);
        break;
      case Algorithm::lkatyusha: {
        const KatyushaParams k = katyusha_params(problem, cfg);
        katyusha_ = LkatyushaState::start(problem, x0, k.theta1, k.theta2, k.kappa, k.L, k.eta, rho);
        break;
      }
    }
  }

  const Vector& x() const {
    switch (algorithm_) {
      case Algorithm::sgd: return sgd_.x;
      case Algorithm::lsvrg: return lsvrg_.x;
      case Algorithm::lkatyusha: return katyusha_.x;
    }
    return sgd_.x;
  }

  const LkatyushaState* katyusha() const {
    return algorithm_ == Algorithm::lkatyusha ? &katyusha_ : nullptr;
  }

  const Vector* anchor() const {
    switch (algorithm_) {
      case Algorithm::sgd: return nullptr;
      case Algorithm::lsvrg: return &lsvrg_.w;
      case Algorithm::lkatyusha: return &katyusha_.w;
    }
    return nullptr;
  }

  void step(const FiniteSumProblem& problem, const SimplexDistribution& dist, Rng& rng,
            StepWorkspace& ws, std::size_t batch) {
    switch (algorithm_) {
      case Algorithm::sgd: sgd_step(sgd_, problem, dist, rng, ws, batch); break;
      case Algorithm::lsvrg: lsvrg_step(lsvrg_, problem, dist, rng, ws, batch); break;
      case Algorithm::lkatyusha: lkatyusha_step(katyusha_, problem, dist, rng, ws, batch); break;
    }
  }

 private:
  Algorithm algorithm_;
  SgdState sgd_;
  LsvrgState lsvrg_;
  LkatyushaState katyusha_;
};

}  // namespace detail

/// Runs `cfg.T` steps. Output is a pure function of (cfg, problem, options)
/// unless timing is recorded.
///
/// Throws DivergenceError when the iterate stops being finite or when a
/// recorded F(x^t) exceeds 1e12 max(|F(x^0)|, 1).
inline RunResult run(const RunConfig& cfg, const FiniteSumProblem& problem,
                     const RunOptions& options = {}) {
  if (options.record_every == 0) throw Fault("record_every must be >= 1");
  if (cfg.batch == 0) throw Fault("batch must be >= 1");
  if ((options.record_D || options.record_psi) && options.reference == nullptr)
    throw Fault("recording D or Psi needs the exact minimizer");
  const Vector x0 = options.x0.size() == 0 ? Vector::Zero(static_cast<Eigen::Index>(problem.dim()))
                                           : options.x0;
  const double f_star = options.optimal_value.value_or(0.0);
  const double f0 = problem.full_value(x0);
  const double guard = 1e12 * std::max(std::abs(f0), 1.0);

  RunResult result;
  const auto clock_start = std::chrono::steady_clock::now();
  auto elapsed = [&]() -> std::int64_t {
    if (!options.record_timing) return 0;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                                clock_start)
        .count();
  };
  auto emit = [&](const IterationTrace& row) {
    result.trace.push_back(row);
    if (options.sink) options.sink(row);
  };

  if (cfg.T == 0) {
    IterationTrace row;
    row.subopt = f0 - f_star;
    row.nanos = elapsed();
    emit(row);
    result.x_final = x0;
    return result;
  }

  detail::AnyState state(cfg, problem, x0);
  Sampler sampler = make_sampler(cfg, problem, x0);
  Rng rng(cfg.seed);
  StepWorkspace ws;
  Vector running_sum;
  if (cfg.average_iterates) running_sum = Vector::Zero(x0.size());
  const bool want_variance = options.record_v_eff || options.record_v_sampling;

  auto prepare = [&]() -> const SimplexDistribution& {
    return std::visit([&](auto& s) -> const SimplexDistribution& {
      return s.prepare(problem, state.x(), state.anchor());
    }, sampler);
  };
  // Variance columns describe the distribution about to be used at the current state.
  auto fill_variance = [&](const SimplexDistribution& dist, IterationTrace& row) {
    if (!want_variance) return;
    const VarianceReport r = detail::variance_report(problem, dist, state.x(), state.anchor());
    if (options.record_v_eff) row.v_eff = r.v_effective;
    if (options.record_v_sampling) row.v_sampling = r.v_sampling;
  };
  // Anchor-based columns describe the state after the step.
  auto fill_state_metrics = [&](IterationTrace& row) {
    if (options.record_D && state.anchor() != nullptr)
      row.dist_D = dist_D(problem, *state.anchor(), *options.reference);
    if (options.record_psi && state.katyusha() != nullptr)
      row.psi = lyapunov(problem, *state.katyusha(), *options.reference).Psi;
  };

  {
    IterationTrace row;
    row.subopt = f0 - f_star;
    fill_variance(prepare(), row);
    fill_state_metrics(row);
    row.nanos = elapsed();
    emit(row);
  }

  for (std::size_t t = 1; t <= cfg.T; ++t) {
    const bool record = t % options.record_every == 0 || t == cfg.T;
    const SimplexDistribution& dist = prepare();
    IterationTrace row;
    if (record) fill_variance(dist, row);
    state.step(problem, dist, rng, ws, cfg.batch);
    std::visit([&](auto& s) { s.observe(ws.feedback); }, sampler);

    if (!state.x().allFinite())
      throw DivergenceError("iterate became non-finite at step " + std::to_string(t));
    if (cfg.average_iterates) running_sum += state.x();

    if (record) {
      const double f = problem.full_value(state.x());
      if (!(f <= guard))
        throw DivergenceError("objective " + std::to_string(f) +
                              " exceeded divergence guard at step " + std::to_string(t));
      const SamplerFeedback& first = ws.feedback.front();
      row.iter = t;
      row.subopt = f - f_star;
      row.index = static_cast<std::int64_t>(first.index);
      row.prob = first.prob_used;
      row.refresh = ws.refreshed;
      fill_state_metrics(row);
      row.nanos = elapsed();
      emit(row);
    }
  }

  result.x_final = state.x();
  if (cfg.average_iterates) result.x_average = running_sum / static_cast<double>(cfg.T);
  if (const auto* ada = std::get_if<AdaptiveSampler>(&sampler))
    result.saturations = ada->state().saturations;
  return result;
}

}  // namespace adasamp
