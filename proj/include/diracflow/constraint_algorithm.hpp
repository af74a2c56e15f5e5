// Constraint algorithm for implicit systems that are affine in multipliers:
//
//   xdot = drift(x) + ports(x) lambda,   Phi^a(x) = 0.
//
// Each level differentiates the current constraints along the vector field,
// solves the determined multiplier components and appends the lambda-independent
// remainder as secondary constraints. Stabilization is reached when a level adds
// nothing new.

#ifndef DIRACFLOW_CONSTRAINT_ALGORITHM_HPP
#define DIRACFLOW_CONSTRAINT_ALGORITHM_HPP

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diracflow/core.hpp"
#include "diracflow/newton.hpp"

namespace diracflow::constraint {

/// Raised when no sample can be projected onto the current constraint set.
class EmptyConstraintSetError : public Error {
 public:
  using Error::Error;
};

struct ImplicitSystem {
  std::string name;
  Eigen::Index dim = 0;
  VectorField drift;
  /// n x m; leave empty for m = 0.
  MatrixField ports;
  Eigen::Index num_ports = 0;
  std::vector<ScalarField> constraints;
  /// Optional analytic Jacobian of the stacked constraints; numeric otherwise.
  MatrixField constraint_jacobian;
  ScalarField hamiltonian;
  /// Seeds for the feasible-point search (projected onto each constraint set).
  std::vector<Vec> seeds;

  Mat ports_at(const Vec& x) const {
    if (num_ports == 0 || !ports) return Mat(dim, 0);
    Mat b = ports(x);
    require_same_size(b.rows(), dim, "ImplicitSystem ports rows");
    require_same_size(b.cols(), num_ports, "ImplicitSystem ports cols");
    return b;
  }

  void validate() const {
    if (dim < 1) throw ArgumentError("ImplicitSystem: dim must be >= 1");
    if (!drift) throw ArgumentError("ImplicitSystem: drift is required");
    if (num_ports > dim) throw ArgumentError("ImplicitSystem: more ports than dimensions");
    if (num_ports > 0 && !ports) throw ArgumentError("ImplicitSystem: ports function missing");
  }
};

inline Vec constraint_values(const std::vector<ScalarField>& cs, const Vec& x) {
  Vec v(static_cast<Eigen::Index>(cs.size()));
  for (std::size_t i = 0; i < cs.size(); ++i) v(static_cast<Eigen::Index>(i)) = cs[i](x);
  return v;
}

inline Mat constraint_gradients(const std::vector<ScalarField>& cs, const Vec& x) {
  Mat g(static_cast<Eigen::Index>(cs.size()), x.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    g.row(static_cast<Eigen::Index>(i)) = gradient_5pt(cs[i], x).transpose();
  }
  return g;
}

/// Newton projection (minimum-norm Gauss-Newton steps) of seed onto {cs = 0}.
inline std::optional<Vec> project_onto(const std::vector<ScalarField>& cs, const Vec& seed,
                                       double tol = 1e-12) {
  if (cs.empty()) return seed;
  SolverConfig cfg;
  cfg.newton_tol = tol;
  cfg.allow_rank_deficient = true;
  cfg.max_iter = 60;
  try {
    return newton_solve([&cs](const Vec& x) { return constraint_values(cs, x); }, seed, cfg).z;
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// Tangency data at x: A = dPhi ports, b = dPhi drift, so the tangency conditions read
/// A lambda + b = 0.
struct Tangency {
  Mat a;
  Vec b;
};

struct ConstraintLevel {
  int index = 0;
  std::vector<ScalarField> constraints;
  /// Rank of dPhi ports at the reference sample.
  Eigen::Index multiplier_rank = 0;
  /// Constraints appended by the step that produced this level.
  std::size_t new_constraints = 0;
  /// A singular value sat within two decades of the rank threshold.
  bool rank_ambiguous = false;
  std::vector<Vec> feasible_samples;
};

namespace detail {

struct RankSplit {
  Eigen::Index rank = 0;
  bool ambiguous = false;
};

inline RankSplit rank_split(const Eigen::VectorXd& sv, double rel_tol) {
  RankSplit out;
  if (sv.size() == 0 || sv(0) < 1e-13) return out;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    const double ratio = sv(i) / sv(0);
    if (ratio > rel_tol) ++out.rank;
    if (ratio > rel_tol * 1e-2 && ratio < rel_tol * 1e2) out.ambiguous = true;
  }
  return out;
}

}  // namespace detail

class ConstraintAlgorithm {
 public:
  explicit ConstraintAlgorithm(ImplicitSystem sys, double rank_tol = kRankTol)
      : sys_(std::make_shared<const ImplicitSystem>(std::move(sys))), rank_tol_(rank_tol) {
    sys_->validate();
  }

  const ImplicitSystem& system() const { return *sys_; }

  Tangency tangency(const std::vector<ScalarField>& cs, const Vec& x) const {
    return tangency_of(*sys_, cs, x);
  }

  static Tangency tangency_of(const ImplicitSystem& sys, const std::vector<ScalarField>& cs,
                              const Vec& x) {
    Mat g;
    if (sys.constraint_jacobian && cs.size() == sys.constraints.size()) {
      g = sys.constraint_jacobian(x);
    } else if (sys.constraint_jacobian && cs.size() > sys.constraints.size()) {
      // analytic rows for the primary constraints, numeric rows for the rest
      g.resize(static_cast<Eigen::Index>(cs.size()), x.size());
      const auto np = static_cast<Eigen::Index>(sys.constraints.size());
      g.topRows(np) = sys.constraint_jacobian(x);
      const std::vector<ScalarField> rest(cs.begin() + np, cs.end());
      g.bottomRows(g.rows() - np) = constraint_gradients(rest, x);
    } else {
      g = constraint_gradients(cs, x);
    }
    return {g * sys.ports_at(x), g * sys.drift(x)};
  }

  /// Least-squares multipliers lambda = -A^+ b with the pseudo-inverse truncated at rank.
  static Vec solve_multipliers(const Tangency& t, Eigen::Index rank) {
    if (t.a.cols() == 0) return Vec(0);
    if (rank == 0 || t.a.rows() == 0) return Vec::Zero(t.a.cols());
    Eigen::JacobiSVD<Mat> svd(t.a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const Mat ur = svd.matrixU().leftCols(rank);
    const Mat vr = svd.matrixV().leftCols(rank);
    const Vec coeffs = (ur.transpose() * t.b).cwiseQuotient(s.head(rank));
    return -vr * coeffs;
  }

  /// Projects the seeds onto the given constraints; throws when none succeeds.
  std::vector<Vec> feasible_samples(const std::vector<ScalarField>& cs,
                                    const std::vector<Vec>& seeds) const {
    std::vector<Vec> out;
    for (const Vec& s : seeds) {
      require_same_size(s.size(), sys_->dim, "seed");
      if (auto x = project_onto(cs, s)) out.push_back(std::move(*x));
    }
    if (out.empty()) {
      throw EmptyConstraintSetError(sys_->name +
                                    ": no feasible points found on the constraint set");
    }
    return out;
  }

  /// One level of the algorithm: tangency of every current constraint along
  /// drift + ports lambda, split into determined multipliers and new constraints.
  ConstraintLevel step(const ConstraintLevel& level) const {
    const std::vector<Vec>& seeds =
        level.feasible_samples.empty() ? sys_->seeds : level.feasible_samples;
    if (seeds.empty()) throw ArgumentError(sys_->name + ": no seeds for sampling");
    const std::vector<Vec> samples = feasible_samples(level.constraints, seeds);

    ConstraintLevel next;
    next.index = level.index + 1;
    next.constraints = level.constraints;
    if (level.constraints.empty()) {
      next.feasible_samples = samples;
      return next;
    }

    const Vec& x_ref = samples.front();
    const Tangency t_ref = tangency(level.constraints, x_ref);
    const Eigen::Index c = t_ref.a.rows();
    Eigen::Index rank = 0;
    Mat left_null = Mat::Identity(c, c);
    if (t_ref.a.cols() > 0) {
      Eigen::JacobiSVD<Mat> svd(t_ref.a, Eigen::ComputeFullU);
      const detail::RankSplit split = detail::rank_split(svd.singularValues(), rank_tol_);
      rank = split.rank;
      next.rank_ambiguous = split.ambiguous;
      left_null = svd.matrixU().rightCols(c - rank);
    }
    next.multiplier_rank = rank;

    // psi_j(x) = u_j^T (I - U_r U_r^T)(x) b(x), u_j spanning the left null space at x_ref.
    const auto self = *this;
    const std::vector<ScalarField> current = level.constraints;
    std::vector<ScalarField> candidates;
    for (Eigen::Index j = 0; j < left_null.cols(); ++j) {
      const Vec u = left_null.col(j);
      candidates.push_back([self, current, u, rank](const Vec& x) {
        const Tangency t = self.tangency(current, x);
        Vec residual = t.b;
        if (rank > 0) {
          Eigen::JacobiSVD<Mat> svd(t.a, Eigen::ComputeThinU);
          const Mat ur = svd.matrixU().leftCols(rank);
          residual -= ur * (ur.transpose() * t.b);
        }
        return u.dot(residual);
      });
    }

    // Keep only candidates that do not already vanish on the current set.
    for (const ScalarField& psi : candidates) {
      double worst = 0.0;
      for (const Vec& x : samples) worst = std::max(worst, std::abs(psi(x)));
      if (worst > 1e-8) {
        next.constraints.push_back(psi);
        ++next.new_constraints;
      }
    }
    next.feasible_samples = next.new_constraints > 0 ? feasible_samples(next.constraints, samples)
                                                     : samples;
    return next;
  }

 private:
  std::shared_ptr<const ImplicitSystem> sys_;
  double rank_tol_;
};

struct StabilizedSystem {
  std::shared_ptr<const ImplicitSystem> system;
  std::vector<ScalarField> final_constraints;
  Eigen::Index multiplier_rank = 0;
  bool terminated = false;
  /// Number of constraint-algorithm steps performed on a non-trivial constraint set.
  int levels = 0;
  std::vector<ConstraintLevel> history;

  Vec multipliers(const Vec& x) const {
    if (final_constraints.empty()) return Vec::Zero(system->num_ports);
    const Tangency t = ConstraintAlgorithm::tangency_of(*system, final_constraints, x);
    return ConstraintAlgorithm::solve_multipliers(t, multiplier_rank);
  }

  /// Closed-loop field drift + ports lambda(x) on the final constraint set.
  Vec vector_field(const Vec& x) const {
    Vec f = system->drift(x);
    if (system->num_ports > 0) f += system->ports_at(x) * multipliers(x);
    return f;
  }

  Vec constraint_values(const Vec& x) const {
    return constraint::constraint_values(final_constraints, x);
  }

  /// max_a |dPhi_f^a (drift + ports lambda)| at x.
  double tangency_defect(const Vec& x) const {
    if (final_constraints.empty()) return 0.0;
    const Tangency t = ConstraintAlgorithm::tangency_of(*system, final_constraints, x);
    const Vec lam = multipliers(x);
    return inf_norm(Vec(t.a * lam + t.b));
  }
};

/// Iterates the constraint algorithm until no new constraint appears or max_levels
/// steps have been taken. A non-terminated result is returned with terminated=false.
inline StabilizedSystem run(const ImplicitSystem& sys, int max_levels) {
  if (max_levels < 1) throw ArgumentError("constraint run: max_levels must be >= 1");
  ConstraintAlgorithm algo(sys);
  StabilizedSystem out;
  out.system = std::make_shared<const ImplicitSystem>(sys);

  // Constraints that vanish with zero gradient at every seed carry no information.
  ConstraintLevel level;
  level.index = 0;
  for (const ScalarField& phi : sys.constraints) {
    bool trivial = !sys.seeds.empty();
    for (const Vec& s : sys.seeds) {
      if (std::abs(phi(s)) > 1e-12 || inf_norm(gradient_5pt(phi, s)) > 1e-12) {
        trivial = false;
        break;
      }
    }
    if (!trivial) level.constraints.push_back(phi);
  }
  out.history.push_back(level);

  if (level.constraints.empty()) {
    out.terminated = true;
    out.levels = 0;
    out.final_constraints = {};
    out.multiplier_rank = 0;
    return out;
  }
  if (level.constraints.size() != sys.constraints.size()) {
    // drop the analytic Jacobian: its rows no longer line up with the kept constraints
    auto copy = sys;
    copy.constraint_jacobian = nullptr;
    copy.constraints = level.constraints;
    algo = ConstraintAlgorithm(copy);
    out.system = std::make_shared<const ImplicitSystem>(copy);
  }

  for (int k = 1; k <= max_levels; ++k) {
    ConstraintLevel next = algo.step(level);
    out.levels = k;
    out.history.push_back(next);
    const bool done = next.new_constraints == 0;
    level = std::move(next);
    if (done) {
      out.terminated = true;
      break;
    }
  }
  out.final_constraints = level.constraints;
  out.multiplier_rank = level.multiplier_rank;
  if (!out.terminated) {
    // rank of the last level's own tangency system
    const Vec& x = level.feasible_samples.front();
    const Tangency t = algo.tangency(level.constraints, x);
    out.multiplier_rank = t.a.cols() > 0 ? numerical_rank(t.a) : 0;
  }
  return out;
}

}  // namespace diracflow::constraint

#endif  // DIRACFLOW_CONSTRAINT_ALGORITHM_HPP
