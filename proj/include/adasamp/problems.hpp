#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "adasamp/error.hpp"

namespace adasamp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// n rows of features with one label each.
struct DenseDataset {
  Matrix features;
  Vector labels;

  std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(features.cols()); }

  void validate() const {
    if (features.rows() < 1 || features.cols() < 1)
      throw Fault("dataset must have n >= 1 and d >= 1");
    if (labels.size() != features.rows())
      throw Fault("dataset has " + std::to_string(features.rows()) + " rows but " +
                  std::to_string(labels.size()) + " labels");
    if (!features.allFinite() || !labels.allFinite())
      throw Fault("dataset contains non-finite entries");
  }
};

struct Minimizer {
  Vector x;
  double value = 0.0;
};

/// F(x) = (1/n) sum_i f_i(x) with per-component smoothness constants.
///
/// Implementations are immutable after construction and safe to evaluate
/// concurrently. full_value/full_grad are the arithmetic means of the
/// component quantities, summed in index order.
class FiniteSumProblem {
 public:
  virtual ~FiniteSumProblem() = default;

  virtual std::size_t n() const = 0;
  virtual std::size_t dim() const = 0;

  double component_value(std::size_t i, const Vector& x) const {
    check_index(i);
    check_point(x);
    return value_unchecked(i, x);
  }

  Vector component_grad(std::size_t i, const Vector& x) const {
    check_index(i);
    check_point(x);
    Vector g(dim());
    grad_unchecked(i, x, g);
    return g;
  }

  /// Writes grad f_i(x) into `out` (resized as needed).
  void component_grad(std::size_t i, const Vector& x, Vector& out) const {
    check_index(i);
    check_point(x);
    out.resize(static_cast<Eigen::Index>(dim()));
    grad_unchecked(i, x, out);
  }

  double full_value(const Vector& x) const {
    check_point(x);
    double sum = 0.0;
    for (std::size_t i = 0; i < n(); ++i) sum += value_unchecked(i, x);
    return sum / static_cast<double>(n());
  }

  Vector full_grad(const Vector& x) const {
    check_point(x);
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(dim()));
    Vector g(dim());
    for (std::size_t i = 0; i < n(); ++i) {
      grad_unchecked(i, x, g);
      sum += g;
    }
    return sum / static_cast<double>(n());
  }

  double component_smoothness(std::size_t i) const {
    check_index(i);
    return smoothness_unchecked(i);
  }

  Vector smoothness_constants() const {
    Vector L(static_cast<Eigen::Index>(n()));
    for (std::size_t i = 0; i < n(); ++i) L[static_cast<Eigen::Index>(i)] = smoothness_unchecked(i);
    return L;
  }

  double mean_smoothness() const { return smoothness_constants().mean(); }
  double max_smoothness() const { return smoothness_constants().maxCoeff(); }

  /// Certified bound on the Lipschitz constant of grad F; reported as L-bar.
  double full_smoothness() const { return mean_smoothness(); }

  /// mu for F, or 0 when F is only weakly convex.
  virtual double strong_convexity() const = 0;

  virtual Minimizer exact_minimizer() const = 0;

 protected:
  virtual double value_unchecked(std::size_t i, const Vector& x) const = 0;
  virtual void grad_unchecked(std::size_t i, const Vector& x, Vector& out) const = 0;
  virtual double smoothness_unchecked(std::size_t i) const = 0;

  void check_index(std::size_t i) const {
    if (i >= n())
      throw Fault("component index " + std::to_string(i) + " out of range [0, " +
                  std::to_string(n()) + ")");
  }

  void check_point(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != dim())
      throw Fault("point has dimension " + std::to_string(x.size()) + ", expected " +
                  std::to_string(dim()));
    if (!x.allFinite()) throw Fault("point has non-finite entries");
  }
};

/// f_i(x) = 1/2 (b_i - <a_i, x>)^2, L_i = |a_i|^2.
class LeastSquaresProblem final : public FiniteSumProblem {
 public:
  explicit LeastSquaresProblem(DenseDataset data) : data_(std::move(data)) {
    data_.validate();
    row_norm_sq_ = data_.features.rowwise().squaredNorm();
    const Matrix gram = gram_matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    mu_ = std::max(0.0, eig.eigenvalues()[0]);
  }

  std::size_t n() const override { return data_.n(); }
  std::size_t dim() const override { return data_.d(); }
  const DenseDataset& data() const { return data_; }

  double strong_convexity() const override { return mu_; }

  /// Solves the normal equations (1/n) A^T A x = (1/n) A^T b with a
  /// rank-revealing factorization, then polishes with iterative refinement.
  Minimizer exact_minimizer() const override {
    const auto& A = data_.features;
    const auto& b = data_.labels;
    const double inv_n = 1.0 / static_cast<double>(n());
    const Eigen::MatrixXd gram = gram_matrix();
    const Vector rhs = inv_n * (A.transpose() * b);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
    Vector x = cod.solve(rhs);

    const double tol = 1e-10 * std::max(1.0, rhs.norm());
    double residual = full_grad(x).norm();
    for (int k = 0; k < 5 && residual > tol; ++k) {
      x -= cod.solve(full_grad(x));
      residual = full_grad(x).norm();
    }
    if (!(residual <= tol))
      throw ConvergenceError("least-squares normal-equation solve did not reach tolerance",
                             residual);
    return {x, full_value(x)};
  }

 protected:
  double value_unchecked(std::size_t i, const Vector& x) const override {
    const auto row = static_cast<Eigen::Index>(i);
    const double r = data_.labels[row] - data_.features.row(row).dot(x);
    return 0.5 * r * r;
  }

  void grad_unchecked(std::size_t i, const Vector& x, Vector& out) const override {
    const auto row = static_cast<Eigen::Index>(i);
    const double r = data_.features.row(row).dot(x) - data_.labels[row];
    out.noalias() = r * data_.features.row(row).transpose();
  }

  double smoothness_unchecked(std::size_t i) const override {
    return row_norm_sq_[static_cast<Eigen::Index>(i)];
  }

 private:
  Eigen::MatrixXd gram_matrix() const {
    return (data_.features.transpose() * data_.features) / static_cast<double>(n());
  }

  DenseDataset data_;
  Vector row_norm_sq_;
  double mu_ = 0.0;
};

/// Binary cross-entropy with the ridge term placed on every component:
/// f_i(x) = -[y_i log p_i + (1 - y_i) log(1 - p_i)] + (mu/2)|x|^2,
/// p_i = 1 / (1 + exp(-<x, z_i>)), L_i = |z_i|^2 / 4 + mu.
class LogisticProblem final : public FiniteSumProblem {
 public:
  LogisticProblem(DenseDataset data, double ridge) : data_(std::move(data)), ridge_(ridge) {
    data_.validate();
    if (!(ridge_ >= 0.0) || !std::isfinite(ridge_)) throw Fault("ridge must be finite and >= 0");
    for (Eigen::Index i = 0; i < data_.labels.size(); ++i) {
      const double y = data_.labels[i];
      if (y != 0.0 && y != 1.0)
        throw Fault("logistic labels must be 0 or 1 (row " + std::to_string(i) + ")");
    }
    row_norm_sq_ = data_.features.rowwise().squaredNorm();
  }

  std::size_t n() const override { return data_.n(); }
  std::size_t dim() const override { return data_.d(); }
  const DenseDataset& data() const { return data_; }
  double ridge() const { return ridge_; }

  double strong_convexity() const override { return ridge_; }

  /// Damped Newton with Armijo backtracking until |grad F| <= 1e-10.
  Minimizer exact_minimizer() const override {
    constexpr double kTol = 1e-10;
    constexpr int kMaxIter = 500;
    const auto& Z = data_.features;
    const auto d = static_cast<Eigen::Index>(dim());
    const double inv_n = 1.0 / static_cast<double>(n());

    Vector x = Vector::Zero(d);
    double fx = full_value(x);
    Vector g = full_grad(x);
    for (int it = 0; it < kMaxIter && g.norm() > kTol; ++it) {
      Eigen::MatrixXd H = ridge_ * Eigen::MatrixXd::Identity(d, d);
      for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        const double p = sigmoid(Z.row(i).dot(x));
        H.noalias() += (inv_n * p * (1.0 - p)) * Z.row(i).transpose() * Z.row(i);
      }
      // Tiny shift keeps the factorization defined when ridge is 0 and Z is rank deficient.
      H.diagonal().array() += 1e-14;
      Vector step = H.ldlt().solve(g);
      if (!step.allFinite() || step.dot(g) <= 0.0) step = g;

      double t = 1.0;
      Vector candidate = x - step;
      double fc = full_value(candidate);
      // Close to the optimum F is flat to rounding; accept a full step that shrinks the gradient.
      if (std::abs(fc - fx) <= 1e-14 * std::max(1.0, std::abs(fx))) {
        Vector gc = full_grad(candidate);
        if (gc.norm() < g.norm()) {
          x = std::move(candidate);
          fx = fc;
          g = std::move(gc);
          continue;
        }
      }
      while (fc > fx - 1e-4 * t * g.dot(step) && t > 1e-20) {
        t *= 0.5;
        candidate = x - t * step;
        fc = full_value(candidate);
      }
      if (t <= 1e-20) break;
      x = std::move(candidate);
      fx = fc;
      g = full_grad(x);
    }
    const double residual = g.norm();
    if (!(residual <= kTol))
      throw ConvergenceError("logistic minimizer did not converge", residual);
    return {x, fx};
  }

 protected:
  double value_unchecked(std::size_t i, const Vector& x) const override {
    const auto row = static_cast<Eigen::Index>(i);
    const double m = data_.features.row(row).dot(x);
    // -y log p - (1-y) log(1-p) = softplus(m) - y m
    return softplus(m) - data_.labels[row] * m + 0.5 * ridge_ * x.squaredNorm();
  }

  void grad_unchecked(std::size_t i, const Vector& x, Vector& out) const override {
    const auto row = static_cast<Eigen::Index>(i);
    const double m = data_.features.row(row).dot(x);
    out.noalias() = (sigmoid(m) - data_.labels[row]) * data_.features.row(row).transpose();
    out.noalias() += ridge_ * x;
  }

  double smoothness_unchecked(std::size_t i) const override {
    return 0.25 * row_norm_sq_[static_cast<Eigen::Index>(i)] + ridge_;
  }

 private:
  static double sigmoid(double m) {
    if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
    const double e = std::exp(m);
    return e / (1.0 + e);
  }

  static double softplus(double m) {
    return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
  }

  DenseDataset data_;
  double ridge_;
  Vector row_norm_sq_;
};

}  // namespace adasamp
