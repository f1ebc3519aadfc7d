#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "adasamp/error.hpp"
#include "adasamp/optimizer_state.hpp"
#include "adasamp/problems.hpp"
#include "adasamp/samplers.hpp"

// Quantities the convergence analysis is phrased in. Anything that needs x*
// takes the Minimizer explicitly; callers compute it once per problem.

namespace adasamp {

struct VarianceReport {
  double v_effective = 0.0;
  double v_sampling = 0.0;
  double grad_diff_norm_sq = 0.0;
};

struct LyapunovReport {
  double Z = 0.0;
  double V = 0.0;
  double W = 0.0;
  double Psi = 0.0;
};

namespace detail {

// Shared by effective_variance and sampling_variance so both see the same
// gradient differences. w == nullptr measures |grad f_i(x)| (SGD).
inline VarianceReport variance_report(const FiniteSumProblem& problem,
                                      const SimplexDistribution& dist, const Vector& x,
                                      const Vector* w) {
  const std::size_t n = problem.n();
  if (dist.size() != n) throw Fault("distribution size does not match problem");
  const double nd = static_cast<double>(n);
  Vector gx, gw;
  Vector mean_diff = Vector::Zero(static_cast<Eigen::Index>(problem.dim()));
  double weighted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    problem.component_grad(i, x, gx);
    if (w != nullptr) {
      problem.component_grad(i, *w, gw);
      gx -= gw;
    }
    mean_diff += gx;
    const double sq = gx.squaredNorm();
    if (sq == 0.0) continue;
    const double p = dist[i];
    if (!(p > 0.0))
      throw Fault("distribution has zero mass on component " + std::to_string(i) +
                  " whose gradient difference is nonzero");
    weighted += sq / p;
  }
  mean_diff /= nd;
  VarianceReport r;
  r.v_effective = weighted / (nd * nd);
  r.grad_diff_norm_sq = mean_diff.squaredNorm();
  r.v_sampling = r.v_effective - r.grad_diff_norm_sq;
  return r;
}

}  // namespace detail

/// V_e(p) = (1/n^2) sum_i |grad f_i(x) - grad f_i(w)|^2 / p_i.
inline double effective_variance(const FiniteSumProblem& problem, const SimplexDistribution& dist,
                                 const Vector& x, const Vector& w) {
  return detail::variance_report(problem, dist, x, &w).v_effective;
}

/// Effective variance of the plain importance-weighted SGD estimator.
inline double effective_variance(const FiniteSumProblem& problem, const SimplexDistribution& dist,
                                 const Vector& x) {
  return detail::variance_report(problem, dist, x, nullptr).v_effective;
}

/// V(p) = V_e(p) - |grad F(x) - grad F(w)|^2, the variance of the
/// variance-reduced estimator under p.
inline VarianceReport sampling_variance(const FiniteSumProblem& problem,
                                        const SimplexDistribution& dist, const Vector& x,
                                        const Vector& w) {
  return detail::variance_report(problem, dist, x, &w);
}

/// D = (1/n) sum_i |grad f_i(w) - grad f_i(x*)|^2 / L_i.
inline double dist_D(const FiniteSumProblem& problem, const Vector& w, const Minimizer& opt) {
  const std::size_t n = problem.n();
  Vector gw, gs;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    problem.component_grad(i, w, gw);
    problem.component_grad(i, opt.x, gs);
    const double sq = (gw - gs).squaredNorm();
    const double L = problem.component_smoothness(i);
    if (L == 0.0) {
      if (sq != 0.0)
        throw Fault("component " + std::to_string(i) +
                    " has L_i = 0 but a nonzero gradient difference");
      continue;
    }
    sum += sq / L;
  }
  return sum / static_cast<double>(n);
}

/// Z = L(1 + eta kappa)/(2 eta) |z - x*|^2, V = (F(v) - F*)/theta1,
/// W = theta2 (1 + theta1)/(rho theta1) (F(w) - F*), Psi = Z + V + W.
inline LyapunovReport lyapunov(const FiniteSumProblem& problem, const LkatyushaState& s,
                               const Minimizer& opt) {
  if (!(s.theta1 > 0.0)) throw Fault("lyapunov needs theta1 > 0");
  if (!(s.rho > 0.0)) throw Fault("lyapunov needs rho > 0");
  if (!(s.eta > 0.0)) throw Fault("lyapunov needs eta > 0");
  LyapunovReport r;
  r.Z = s.L * (1.0 + s.eta * s.kappa) / (2.0 * s.eta) * (s.z - opt.x).squaredNorm();
  r.V = (problem.full_value(s.v) - opt.value) / s.theta1;
  r.W = s.theta2 * (1.0 + s.theta1) / (s.rho * s.theta1) * (problem.full_value(s.w) - opt.value);
  r.Psi = r.Z + r.V + r.W;
  return r;
}

/// sigma*^2 = (1/n) sum_i |grad f_i(x*)|^2.
inline double opt_heterogeneity(const FiniteSumProblem& problem, const Minimizer& opt) {
  Vector g;
  double sum = 0.0;
  for (std::size_t i = 0; i < problem.n(); ++i) {
    problem.component_grad(i, opt.x, g);
    sum += g.squaredNorm();
  }
  return sum / static_cast<double>(problem.n());
}

}  // namespace adasamp
