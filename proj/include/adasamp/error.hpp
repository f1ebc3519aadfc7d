#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace adasamp {

// Precondition or contract violation on caller-supplied input.
class Fault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative oracle (exact minimizer) failed to reach its tolerance.
class ConvergenceError : public Fault {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Fault(describe(what, residual)), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  static std::string describe(const std::string& what, double residual) {
    std::ostringstream out;
    out << what << " (residual norm " << residual << ")";
    return out.str();
  }

  double residual_;
};

// A run blew up: objective grew past the divergence guard or became non-finite.
class DivergenceError : public Fault {
 public:
  using Fault::Fault;
};

}  // namespace adasamp
