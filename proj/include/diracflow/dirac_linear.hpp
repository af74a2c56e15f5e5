// Linear Dirac structures on V = R^n: subspaces of V (+) V* with the symmetric
// pairing <<(v1,a1),(v2,a2)>> = <a1,v2> + <a2,v1>.
//
// Subspaces are stored as basis matrices with 2n rows; the first n rows hold the
// vector part v, the last n rows the covector part a. Equality and containment
// are decided by numerical rank of concatenated bases.
//
// Two-form convention: a matrix W represents the form with w(u, v) = <W u, v>,
// so the musical map is w_flat(u) = W u. Bivectors act as sharp(a) = L a.

#ifndef DIRACFLOW_DIRAC_LINEAR_HPP
#define DIRACFLOW_DIRAC_LINEAR_HPP

#include <string>
#include <utility>
#include <vector>

#include "diracflow/core.hpp"

namespace diracflow::dirac {

/// Element (v, a) of V (+) V*.
struct PairedVector {
  Vec v;
  Vec a;

  PairedVector(Vec v_, Vec a_) : v(std::move(v_)), a(std::move(a_)) {
    require_same_size(v.size(), a.size(), "PairedVector");
    if (v.size() < 1) throw DimensionError("PairedVector: dimension must be >= 1");
  }

  Eigen::Index dim() const { return v.size(); }
  Vec stacked() const { return concat(v, a); }
};

/// <<p1, p2>> = <a1, v2> + <a2, v1>.
inline double pairing(const PairedVector& p1, const PairedVector& p2) {
  require_same_size(p1.dim(), p2.dim(), "pairing");
  return p1.a.dot(p2.v) + p2.a.dot(p1.v);
}

/// Gram matrix of the pairing on R^{2n}: [[0, I], [I, 0]].
inline Mat pairing_matrix(Eigen::Index n) {
  Mat g = Mat::Zero(2 * n, 2 * n);
  g.topRightCorner(n, n).setIdentity();
  g.bottomLeftCorner(n, n).setIdentity();
  return g;
}

class Subspace {
 public:
  /// basis: 2n x k matrix whose columns must be linearly independent.
  Subspace(Mat basis, Eigen::Index ambient_dim) : basis_(std::move(basis)), n_(ambient_dim) {
    if (n_ < 1) throw DimensionError("Subspace: ambient dimension must be >= 1");
    if (basis_.cols() == 0) basis_.resize(2 * n_, 0);
    require_same_size(basis_.rows(), 2 * n_, "Subspace basis rows");
    if (numerical_rank(basis_) != basis_.cols()) {
      throw ArgumentError("Subspace: basis vectors are linearly dependent");
    }
  }

  /// Span of arbitrary (possibly dependent) columns; an orthonormal basis is extracted.
  static Subspace span_of(const Mat& columns, Eigen::Index ambient_dim) {
    require_same_size(columns.rows(), 2 * ambient_dim, "Subspace::span_of");
    return Subspace(column_basis(columns), ambient_dim);
  }

  static Subspace from_pairs(const std::vector<PairedVector>& pairs, Eigen::Index ambient_dim) {
    Mat b(2 * ambient_dim, static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      require_same_size(pairs[i].dim(), ambient_dim, "Subspace::from_pairs");
      b.col(static_cast<Eigen::Index>(i)) = pairs[i].stacked();
    }
    return Subspace(std::move(b), ambient_dim);
  }

  static Subspace zero(Eigen::Index n) { return Subspace(Mat(2 * n, 0), n); }
  static Subspace full(Eigen::Index n) { return Subspace(Mat::Identity(2 * n, 2 * n), n); }

  const Mat& basis() const { return basis_; }
  Eigen::Index ambient_dim() const { return n_; }
  Eigen::Index dim() const { return basis_.cols(); }

  auto vector_part() const { return basis_.topRows(n_); }
  auto covector_part() const { return basis_.bottomRows(n_); }

  bool contains(const Subspace& other) const {
    require_same_size(n_, other.n_, "Subspace::contains");
    return span_contains(basis_, other.basis_);
  }

  bool contains(const PairedVector& p) const {
    require_same_size(n_, p.dim(), "Subspace::contains");
    return span_contains(basis_, p.stacked());
  }

  bool same_as(const Subspace& other) const { return contains(other) && other.contains(*this); }

 private:
  Mat basis_;
  Eigen::Index n_;
};

/// U-perp: everything pairing to zero with all of U.
inline Subspace orthogonal_complement(const Subspace& u) {
  const Eigen::Index n = u.ambient_dim();
  if (u.dim() == 0) return Subspace::full(n);
  const Mat constraints = u.basis().transpose() * pairing_matrix(n);
  return Subspace(null_space(constraints), n);
}

enum class SubspaceKind { isotropic, coisotropic, dirac, none };

inline std::string to_string(SubspaceKind k) {
  switch (k) {
    case SubspaceKind::isotropic: return "isotropic";
    case SubspaceKind::coisotropic: return "coisotropic";
    case SubspaceKind::dirac: return "dirac";
    case SubspaceKind::none: return "none";
  }
  return "none";
}

/// Dirac takes precedence: a Dirac structure is both isotropic and coisotropic.
inline SubspaceKind classify(const Subspace& u) {
  const Subspace perp = orthogonal_complement(u);
  const bool iso = perp.contains(u);
  const bool coiso = u.contains(perp);
  if (iso && u.dim() == u.ambient_dim()) return SubspaceKind::dirac;
  if (iso) return SubspaceKind::isotropic;
  if (coiso) return SubspaceKind::coisotropic;
  return SubspaceKind::none;
}

class LinearDiracStructure {
 public:
  explicit LinearDiracStructure(Subspace s) : subspace_(std::move(s)) {
    if (classify(subspace_) != SubspaceKind::dirac) {
      throw ArgumentError("LinearDiracStructure: subspace is not maximally isotropic");
    }
  }

  const Subspace& subspace() const { return subspace_; }
  Eigen::Index ambient_dim() const { return subspace_.ambient_dim(); }
  bool contains(const PairedVector& p) const { return subspace_.contains(p); }

 private:
  Subspace subspace_;
};

namespace detail {

inline void require_skew(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) throw DimensionError(std::string(what) + ": matrix must be square");
  if (inf_norm(Mat(m + m.transpose())) > 1e-12) {
    throw ArgumentError(std::string(what) + ": matrix is not skew-symmetric");
  }
}

inline void require_independent(const Mat& f, const char* what) {
  if (numerical_rank(f) != f.cols()) {
    throw ArgumentError(std::string(what) + ": basis vectors are linearly dependent");
  }
}

}  // namespace detail

/// D_F = F (+) F°. f_basis: n x k, columns independent (k may be 0).
inline LinearDiracStructure from_subspace(const Mat& f_basis) {
  const Eigen::Index n = f_basis.rows();
  detail::require_independent(f_basis, "from_subspace");
  const Mat annihilator = null_space(f_basis.transpose());
  Mat b = Mat::Zero(2 * n, f_basis.cols() + annihilator.cols());
  b.topLeftCorner(n, f_basis.cols()) = f_basis;
  b.bottomRightCorner(n, annihilator.cols()) = annihilator;
  return LinearDiracStructure(Subspace(std::move(b), n));
}

/// Graph {(v, W v)} of a skew two-form.
inline LinearDiracStructure from_two_form(const Mat& omega) {
  detail::require_skew(omega, "from_two_form");
  const Eigen::Index n = omega.rows();
  Mat b(2 * n, n);
  b << Mat::Identity(n, n), omega;
  return LinearDiracStructure(Subspace(std::move(b), n));
}

/// Graph {(L a, a)} of a skew bivector.
inline LinearDiracStructure from_bivector(const Mat& lambda) {
  detail::require_skew(lambda, "from_bivector");
  const Eigen::Index n = lambda.rows();
  Mat b(2 * n, n);
  b << lambda, Mat::Identity(n, n);
  return LinearDiracStructure(Subspace(std::move(b), n));
}

/// D_{F,w} = {(u, a) : u in F, a(v) = w(u, v) for all v in F}.
/// omega_on_f is k x k in the coordinates of f_basis: w(f_i, f_j) = omega_on_f(j, i).
inline LinearDiracStructure from_pair(const Mat& f_basis, const Mat& omega_on_f) {
  const Eigen::Index n = f_basis.rows();
  const Eigen::Index k = f_basis.cols();
  detail::require_independent(f_basis, "from_pair");
  require_same_size(omega_on_f.rows(), k, "from_pair omega");
  detail::require_skew(omega_on_f, "from_pair");
  const Mat annihilator = null_space(f_basis.transpose());
  Mat b = Mat::Zero(2 * n, k + annihilator.cols());
  if (k > 0) {
    // a_i = F (F^T F)^{-1} W e_i satisfies F^T a_i = W e_i.
    const Mat gram = f_basis.transpose() * f_basis;
    b.topLeftCorner(n, k) = f_basis;
    b.bottomLeftCorner(n, k) = f_basis * gram.ldlt().solve(omega_on_f);
  }
  b.bottomRightCorner(n, annihilator.cols()) = annihilator;
  return LinearDiracStructure(Subspace(std::move(b), n));
}

/// D_{L,F*} = {(v, a) : a in F*, b(v) = L(b, a) for all b in F*} for a codistribution
/// F* (n x k basis) and skew bivector L with L(b, a) = b^T L a.
inline LinearDiracStructure from_codistribution(const Mat& lambda, const Mat& fstar_basis) {
  detail::require_skew(lambda, "from_codistribution");
  detail::require_independent(fstar_basis, "from_codistribution");
  const Eigen::Index n = lambda.rows();
  require_same_size(fstar_basis.rows(), n, "from_codistribution");
  const Mat annihilator = null_space(fstar_basis.transpose());
  const Eigen::Index k = fstar_basis.cols();
  Mat b = Mat::Zero(2 * n, k + annihilator.cols());
  b.topLeftCorner(n, k) = lambda * fstar_basis;
  b.bottomLeftCorner(n, k) = fstar_basis;
  b.topRightCorner(n, annihilator.cols()) = annihilator;
  return LinearDiracStructure(Subspace(std::move(b), n));
}

/// The pair (F_D, w_D) determining a Dirac structure: F_D is the projection onto V
/// (orthonormal basis) and w_D(u, v) = a(v) for u (+) a in D, in F_D coordinates
/// with the from_pair convention.
struct FormOnSubspace {
  Mat f_basis;
  Mat omega;
};

inline FormOnSubspace recover_pair(const LinearDiracStructure& d) {
  const Mat top = d.subspace().vector_part();
  const Mat bottom = d.subspace().covector_part();
  FormOnSubspace out;
  out.f_basis = column_basis(top);
  const Eigen::Index k = out.f_basis.cols();
  out.omega.resize(k, k);
  if (k == 0) return out;
  const Eigen::CompleteOrthogonalDecomposition<Mat> cod(top);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Vec coeffs = cod.solve(Vec(out.f_basis.col(i)));
    const Vec alpha = bottom * coeffs;
    out.omega.col(i) = out.f_basis.transpose() * alpha;
  }
  return out;
}

}  // namespace diracflow::dirac

#endif  // DIRACFLOW_DIRAC_LINEAR_HPP
