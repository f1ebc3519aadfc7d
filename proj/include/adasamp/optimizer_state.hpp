#pragma once

#include "adasamp/problems.hpp"

namespace adasamp {

struct SgdState {
  Vector x;
  double eta = 0.0;
};

/// Loopless SVRG iterate. full_grad_w always holds grad F(w).
struct LsvrgState {
  Vector x;
  Vector w;
  Vector full_grad_w;
  double eta = 0.0;
  double rho = 1.0;

  static LsvrgState start(const FiniteSumProblem& problem, const Vector& x0, double eta,
                          double rho) {
    return {x0, x0, problem.full_grad(x0), eta, rho};
  }
};

/// Loopless Katyusha iterate. x is kept equal to the coupling
/// theta1 z + theta2 w + (1 - theta1 - theta2) v of the stored vectors.
struct LkatyushaState {
  Vector x;
  Vector z;
  Vector v;
  Vector w;
  Vector full_grad_w;
  double theta1 = 0.5;
  double theta2 = 0.5;
  double kappa = 0.0;
  double L = 1.0;
  double eta = 1.0;
  double rho = 1.0;

  Vector coupling() const { return theta1 * z + theta2 * w + (1.0 - theta1 - theta2) * v; }

  static LkatyushaState start(const FiniteSumProblem& problem, const Vector& x0, double theta1,
                              double theta2, double kappa, double L, double eta, double rho) {
    LkatyushaState s{x0, x0, x0, x0, problem.full_grad(x0), theta1, theta2, kappa, L, eta, rho};
    s.x = s.coupling();
    return s;
  }
};

}  // namespace adasamp
