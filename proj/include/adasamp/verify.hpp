#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "adasamp/metrics.hpp"
#include "adasamp/problems.hpp"
#include "adasamp/rng.hpp"
#include "adasamp/samplers.hpp"

// Property suites backing `adasamp verify`. Each check recomputes the quantity
// under test from first principles (enumeration over outcomes, dense grid
// search) rather than through the library routine it checks.

namespace adasamp::verify {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::uint64_t seed = 0;
  std::size_t cases = 0;
  /// Largest observed error measure (relative error or constraint violation).
  double worst = 0.0;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Random instances

/// Least squares with N(0,1) features/labels, or logistic with {0,1} labels
/// and ridge 0.1, chosen by coin flip.
inline std::unique_ptr<FiniteSumProblem> random_problem(Rng& rng, std::size_t n, std::size_t d) {
  DenseDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.resize(static_cast<Eigen::Index>(n));
  const bool logistic = rng.uniform() < 0.5;
  // Per-row scales spread the smoothness constants.
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    const double scale = std::exp(rng.normal());
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.features(i, j) = scale * rng.normal();
    ds.labels[i] = logistic ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : rng.normal(0.0, 3.0);
  }
  if (logistic) return std::make_unique<LogisticProblem>(std::move(ds), 0.1);
  return std::make_unique<LeastSquaresProblem>(std::move(ds));
}

inline Vector random_point(Rng& rng, std::size_t d, double sd = 1.0) {
  Vector x(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = rng.normal(0.0, sd);
  return x;
}

/// Uniform point on the simplex (normalized exponentials).
inline Vector random_simplex(Rng& rng, std::size_t n) {
  Vector p(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = -std::log(1.0 - rng.uniform());
  return p / p.sum();
}

/// Strictly positive, skewed distribution (log-normal weights).
inline SimplexDistribution random_feasible_dist(Rng& rng, std::size_t n) {
  Vector p(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = std::exp(1.5 * rng.normal());
  return {p / p.sum(), 0.0};
}

// ---------------------------------------------------------------------------
// Independent oracles

/// The n possible values of the variance-reduced estimator, one per index,
/// built directly from component gradients.
inline std::vector<Vector> enumerate_estimator(const FiniteSumProblem& problem, const Vector& p,
                                               const Vector& x, const Vector& w) {
  const std::size_t n = problem.n();
  Vector mean_w = Vector::Zero(static_cast<Eigen::Index>(problem.dim()));
  for (std::size_t i = 0; i < n; ++i) mean_w += problem.component_grad(i, w);
  mean_w /= static_cast<double>(n);
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double weight = 1.0 / (static_cast<double>(n) * p[static_cast<Eigen::Index>(i)]);
    out.push_back(weight * (problem.component_grad(i, x) - problem.component_grad(i, w)) + mean_w);
  }
  return out;
}

/// V_e by direct summation.
inline double brute_effective_variance(const FiniteSumProblem& problem, const Vector& p, const Vector& x,
                                       const Vector& w) {
  const double n = static_cast<double>(problem.n());
  double sum = 0.0;
  for (std::size_t i = 0; i < problem.n(); ++i) {
    const double sq = (problem.component_grad(i, x) - problem.component_grad(i, w)).squaredNorm();
    sum += sq / p[static_cast<Eigen::Index>(i)];
  }
  return sum / (n * n);
}

/// Objective minimized by the projection: sum_i q_i log(q_i / t_i) over the
/// simplex (the generalized KL reduces to this when sum q = 1).
inline double kl_objective(const Vector& q, const Vector& tilde) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) s += q[i] * std::log(q[i] / tilde[i]);
  return s;
}

/// argmin of KL(q || tilde) over {q in simplex, q_i >= alpha/n} for n in {2, 3}:
/// grid of step `step`, then a finer grid (step/100) around the best cell.
inline Vector grid_kl_projection(const Vector& tilde, double alpha, double step = 1e-3) {
  const auto n = tilde.size();
  if (n != 2 && n != 3) throw Fault("grid KL projection supports n in {2, 3}");
  const double floor = alpha / static_cast<double>(n);

  auto search = [&](double lo1, double hi1, double lo2, double hi2, double h) {
    Vector best;
    double best_val = std::numeric_limits<double>::infinity();
    Vector q(n);
    const auto k1 = static_cast<long>(std::floor((hi1 - lo1) / h + 1e-9));
    for (long a = 0; a <= k1; ++a) {
      q[0] = lo1 + static_cast<double>(a) * h;
      if (q[0] < floor) continue;
      if (n == 2) {
        q[1] = 1.0 - q[0];
        if (q[1] < floor) continue;
        const double v = kl_objective(q, tilde);
        if (v < best_val) best_val = v, best = q;
        continue;
      }
      const auto k2 = static_cast<long>(std::floor((hi2 - lo2) / h + 1e-9));
      for (long b = 0; b <= k2; ++b) {
        q[1] = lo2 + static_cast<double>(b) * h;
        q[2] = 1.0 - q[0] - q[1];
        if (q[1] < floor || q[2] < floor) continue;
        const double v = kl_objective(q, tilde);
        if (v < best_val) best_val = v, best = q;
      }
    }
    return best;
  };

  const double lo = std::ceil(floor / step - 1e-9) * step;
  Vector coarse = search(lo, 1.0, lo, 1.0, step);
  const double fine = step / 100.0;
  const double lo1 = std::max(floor, coarse[0] - 2 * step);
  const double lo2 = std::max(floor, coarse[1] - 2 * step);
  Vector refined = search(lo1, coarse[0] + 2 * step, lo2, coarse[1] + 2 * step, fine);
  return refined.size() ? refined : coarse;
}

// ---------------------------------------------------------------------------
// Suites

/// sum_i p_i g_i == grad F(x), relative error <= 1e-12.
inline SuiteResult unbiasedness(std::uint64_t seed, std::size_t cases = 200) {
  SuiteResult res{"unbiasedness", true, seed, cases, 0.0, {}};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = 1 + rng.index(10);
    const std::size_t d = 1 + rng.index(5);
    auto problem = random_problem(rng, n, d);
    const SimplexDistribution dist = random_feasible_dist(rng, n);
    const Vector x = random_point(rng, d);
    const Vector w = random_point(rng, d);
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(d));
    const auto g = enumerate_estimator(*problem, dist.probs, x, w);
    for (std::size_t i = 0; i < n; ++i) mean += dist[i] * g[i];
    const Vector truth = problem->full_grad(x);
    const double rel = (mean - truth).norm() / truth.norm();
    res.worst = std::max(res.worst, rel);
    if (!(rel <= 1e-12)) {
      res.passed = false;
      res.detail = "case " + std::to_string(c) + ": relative error " + std::to_string(rel);
    }
  }
  return res;
}

/// V_e(p) - |grad F(x) - grad F(w)|^2 == sum_i p_i |g_i - grad F(x)|^2, rel <= 1e-10.
inline SuiteResult variance_identity(std::uint64_t seed, std::size_t cases = 200) {
  SuiteResult res{"variance", true, seed, cases, 0.0, {}};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = 1 + rng.index(10);
    const std::size_t d = 1 + rng.index(5);
    auto problem = random_problem(rng, n, d);
    const SimplexDistribution dist = random_feasible_dist(rng, n);
    const Vector x = random_point(rng, d);
    const Vector w = random_point(rng, d);

    const VarianceReport closed = sampling_variance(*problem, dist, x, w);
    const Vector grad = problem->full_grad(x);
    const auto g = enumerate_estimator(*problem, dist.probs, x, w);
    double brute = 0.0;
    for (std::size_t i = 0; i < n; ++i) brute += dist[i] * (g[i] - grad).squaredNorm();

    const double scale = std::max(std::abs(brute), closed.v_effective);
    const double rel = scale == 0.0 ? 0.0 : std::abs(closed.v_sampling - brute) / scale;
    res.worst = std::max(res.worst, rel);
    if (!(rel <= 1e-10)) {
      res.passed = false;
      res.detail = "case " + std::to_string(c) + ": relative error " + std::to_string(rel);
    }
  }
  return res;
}

/// V_e(oracle) <= V_e(q) + 1e-9 for q in {uniform, p^IS, 1000 random simplex points}.
inline SuiteResult oracle_optimality(std::uint64_t seed, std::size_t cases = 50,
                                     std::size_t random_points = 1000) {
  SuiteResult res{"oracle", true, seed, cases, 0.0, {}};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = 2 + rng.index(19);
    const std::size_t d = 1 + rng.index(5);
    auto problem = random_problem(rng, n, d);
    const Vector x = random_point(rng, d);
    const Vector w = random_point(rng, d);
    const SimplexDistribution oracle = oracle_dist(*problem, x, w);
    const double best = brute_effective_variance(*problem, oracle.probs, x, w);

    std::vector<Vector> candidates = {uniform_dist(n).probs,
                                      importance_dist(problem->smoothness_constants()).probs};
    for (std::size_t k = 0; k < random_points; ++k) candidates.push_back(random_simplex(rng, n));
    for (const auto& q : candidates) {
      const double v = brute_effective_variance(*problem, q, x, w);
      const double violation = best - v;
      res.worst = std::max(res.worst, violation);
      if (violation > 1e-9) {
        res.passed = false;
        res.detail = "case " + std::to_string(c) + ": candidate beats oracle by " + std::to_string(violation);
      }
    }
  }
  return res;
}

/// Sort/threshold projection vs dense-grid KL minimization, n in {2,3},
/// alpha in {0.1, 0.4}; per-coordinate error <= 2e-3.
inline SuiteResult projection(std::uint64_t seed, std::size_t cases = 100,
                              std::vector<std::size_t> sizes = {2, 3}) {
  SuiteResult res{"projection", true, seed, 0, 0.0, {}};
  Rng rng(seed);
  for (std::size_t n : sizes) {
    for (double alpha : {0.1, 0.4}) {
      for (std::size_t c = 0; c < cases; ++c) {
        Vector tilde(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < tilde.size(); ++i) tilde[i] = std::exp(1.5 * rng.normal());
        const Vector fast = project_floored_simplex(tilde, alpha);
        const Vector grid = grid_kl_projection(tilde, alpha);
        const double err = (fast - grid).cwiseAbs().maxCoeff();
        res.worst = std::max(res.worst, err);
        ++res.cases;
        if (!(err <= 2e-3)) {
          res.passed = false;
          res.detail = "n=" + std::to_string(n) + " alpha=" + std::to_string(alpha) + " case " +
                       std::to_string(c) + ": max coordinate error " + std::to_string(err);
        }
      }
    }
  }
  return res;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"unbiasedness", "variance", "oracle", "projection"};
  return names;
}

/// Runs the named suite ("all" runs every suite). Throws Fault on unknown names.
inline std::vector<SuiteResult> run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "unbiasedness") return {unbiasedness(seed)};
  if (name == "variance") return {variance_identity(seed)};
  if (name == "oracle") return {oracle_optimality(seed)};
  if (name == "projection") return {projection(seed)};
  if (name == "all") {
    std::vector<SuiteResult> out;
    for (const auto& s : suite_names()) out.push_back(run_suite(s, seed).front());
    return out;
  }
  throw Fault("unknown verify suite '" + name + "'");
}

}  // namespace adasamp::verify
