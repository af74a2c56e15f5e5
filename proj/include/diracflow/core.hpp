// Shared vocabulary of the diracflow library: dense vector/matrix aliases,
// the exception hierarchy, numerical rank utilities and finite differences.

#ifndef DIRACFLOW_CORE_HPP
#define DIRACFLOW_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace diracflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using VectorField = std::function<Vec(const Vec&)>;
using ScalarField = std::function<double(const Vec&)>;
using MatrixField = std::function<Mat(const Vec&)>;

/// Root of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition on an argument does not hold.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A map was evaluated outside the region where it is defined
/// (antipodal points, rotation angle pi, failed Newton inversion, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative solve did not converge or met a singular linear system.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, int iterations = 0,
              double residual = std::numeric_limits<double>::quiet_NaN(),
              double condition = std::numeric_limits<double>::quiet_NaN())
      : Error(what), iterations_(iterations), residual_(residual), condition_(condition) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }
  /// Condition estimate of the last Jacobian, NaN when not computed.
  double condition() const noexcept { return condition_; }

 private:
  int iterations_;
  double residual_;
  double condition_;
};

/// Invalid user configuration (CLI / JSON layer).
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require_same_size(Eigen::Index a, Eigen::Index b, const std::string& what) {
  if (a != b) {
    throw DimensionError(what + ": dimension mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

inline Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

inline double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

inline double inf_norm(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Default relative threshold for rank decisions.
inline constexpr double kRankTol = 1e-10;

/// Numerical rank: singular values above rel_tol * sigma_max.
inline Eigen::Index numerical_rank(const Mat& a, double rel_tol = kRankTol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

/// Orthonormal basis of ker(a) as columns.
inline Mat null_space(const Mat& a, double rel_tol = kRankTol) {
  const Eigen::Index n = a.cols();
  if (a.rows() == 0) return Mat::Identity(n, n);
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > rel_tol * s(0)) ++r;
    }
  }
  return svd.matrixV().rightCols(n - r);
}

/// Orthonormal basis of the column space of a.
inline Mat column_basis(const Mat& a, double rel_tol = kRankTol) {
  if (a.cols() == 0) return Mat(a.rows(), 0);
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > rel_tol * s(0)) ++r;
    }
  }
  return svd.matrixU().leftCols(r);
}

inline Mat hstack(const Mat& a, const Mat& b) {
  require_same_size(a.rows(), b.rows(), "hstack");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

/// span(inner) is contained in span(outer), decided by rank of the concatenation.
inline bool span_contains(const Mat& outer, const Mat& inner, double rel_tol = kRankTol) {
  if (inner.cols() == 0) return true;
  const Mat qo = column_basis(outer, rel_tol);
  const Mat qi = column_basis(inner, rel_tol);
  if (qi.cols() == 0) return true;
  return numerical_rank(hstack(qo, qi), rel_tol) == qo.cols();
}

inline bool same_span(const Mat& a, const Mat& b, double rel_tol = kRankTol) {
  return span_contains(a, b, rel_tol) && span_contains(b, a, rel_tol);
}

/// 2-norm condition number; infinity for rank-deficient or empty input.
inline double condition_number(const Mat& a) {
  if (a.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

/// Step used by central differences: rel_step * max(1, ||x||).
inline double fd_step_for(const Vec& x, double rel_step) {
  return rel_step * std::max(1.0, x.norm());
}

/// Jacobian of f at x by second-order central differences.
inline Mat jacobian_central(const VectorField& f, const Vec& x, double rel_step = 1e-6) {
  const double h = fd_step_for(x, rel_step);
  Vec xp = x;
  Mat jac;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp(j) = x(j) + h;
    const Vec fp = f(xp);
    xp(j) = x(j) - h;
    const Vec fm = f(xp);
    xp(j) = x(j);
    if (j == 0) jac.resize(fp.size(), x.size());
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  if (x.size() == 0) jac.resize(f(x).size(), 0);
  return jac;
}

/// Gradient of a scalar field by the fourth-order five-point stencil. Exact up to
/// roundoff for polynomials of degree <= 4, which covers the bundled constraints.
inline Vec gradient_5pt(const ScalarField& f, const Vec& x, double rel_step = 1e-3) {
  const double h = fd_step_for(x, rel_step);
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    auto at = [&](double s) {
      xp(j) = x(j) + s * h;
      return f(xp);
    };
    g(j) = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h);
    xp(j) = x(j);
  }
  return g;
}

/// Canonical symplectic matrix [[0, I], [-I, 0]] of size 2n, so that
/// (dq ^ dp)(u, w) = u^T J w.
inline Mat canonical_symplectic(Eigen::Index n) {
  Mat j = Mat::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n).setIdentity();
  j.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return j;
}

}  // namespace diracflow

#endif  // DIRACFLOW_CORE_HPP
