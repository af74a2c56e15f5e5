// Discretization maps R_d : TM -> M x M and their inverses.
//
// Points are given in chart or embedding coordinates: R^n for the theta family,
// the unit sphere embedded in R^n, SO(3) as row-major 9-vectors, and T*Q = R^{2n}
// with (q, p) stacked for the cotangent lifts. A DiscretizationMap on T*Q takes a
// TangentVector with base (q, p) and vel (qdot, pdot) and returns the pair
// ((q0, p0), (q1, p1)).

#ifndef DIRACFLOW_DISCRETIZATION_MAPS_HPP
#define DIRACFLOW_DISCRETIZATION_MAPS_HPP

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "diracflow/core.hpp"
#include "diracflow/newton.hpp"

namespace diracflow::maps {

struct TangentVector {
  Vec base;
  Vec vel;
};

struct PointPair {
  Vec first;
  Vec second;
};

/// Local coordinates (q, p, qdot, pdot) of T(T*Q).
struct CotangentState {
  Vec q;
  Vec p;
  Vec qdot;
  Vec pdot;

  TangentVector as_tangent() const {
    require_same_size(q.size(), p.size(), "CotangentState");
    require_same_size(q.size(), qdot.size(), "CotangentState");
    require_same_size(q.size(), pdot.size(), "CotangentState");
    return {concat(q, p), concat(qdot, pdot)};
  }

  static CotangentState from_tangent(const TangentVector& t) {
    const Eigen::Index n = t.base.size() / 2;
    return {t.base.head(n), t.base.tail(n), t.vel.head(n), t.vel.tail(n)};
  }
};

using MapParams = std::map<std::string, double>;

class DiscretizationMap {
 public:
  using ForwardFn = std::function<PointPair(const TangentVector&)>;
  using InverseFn = std::function<TangentVector(const PointPair&)>;

  DiscretizationMap(std::string name, MapParams params, ForwardFn forward, InverseFn inverse,
                    double validity_radius = std::numeric_limits<double>::infinity())
      : name_(std::move(name)),
        params_(std::move(params)),
        forward_(std::move(forward)),
        inverse_(std::move(inverse)),
        validity_radius_(validity_radius) {}

  PointPair forward(const TangentVector& t) const {
    require_same_size(t.base.size(), t.vel.size(), name_ + " forward");
    return forward_(t);
  }

  TangentVector inverse(const PointPair& pp) const {
    require_same_size(pp.first.size(), pp.second.size(), name_ + " inverse");
    return inverse_(pp);
  }

  const std::string& name() const { return name_; }
  const MapParams& params() const { return params_; }
  double param(const std::string& key) const {
    const auto it = params_.find(key);
    if (it == params_.end()) throw ArgumentError(name_ + ": no parameter '" + key + "'");
    return it->second;
  }
  /// Largest ||vel|| of the inverse for which results are trusted.
  double validity_radius() const { return validity_radius_; }

 private:
  std::string name_;
  MapParams params_;
  ForwardFn forward_;
  InverseFn inverse_;
  double validity_radius_;
};

// ---------------------------------------------------------------------------
// Property probes shared by tests and diagnostics.

/// ||R_d(0_x) - (x, x)||_inf.
inline double d1_defect(const DiscretizationMap& rd, const Vec& x) {
  const PointPair pp = rd.forward({x, Vec::Zero(x.size())});
  return std::max(inf_norm(Vec(pp.first - x)), inf_norm(Vec(pp.second - x)));
}

/// ||d/ds [R^2 - R^1](s v)|_{s=0} - v||_inf by central differences.
inline double d2_defect(const DiscretizationMap& rd, const Vec& x, const Vec& v,
                        double step = 1e-4) {
  auto diff = [&](double s) {
    const PointPair pp = rd.forward({x, s * v});
    return Vec(pp.second - pp.first);
  };
  const Vec deriv = (diff(step) - diff(-step)) / (2.0 * step);
  return inf_norm(Vec(deriv - v));
}

/// ||inverse(forward(t)) - t||_inf over base and velocity.
inline double roundtrip_defect(const DiscretizationMap& rd, const TangentVector& t) {
  const TangentVector back = rd.inverse(rd.forward(t));
  return std::max(inf_norm(Vec(back.base - t.base)), inf_norm(Vec(back.vel - t.vel)));
}

// ---------------------------------------------------------------------------
// Maps on R^n.

/// R_d(x, v) = (x - theta v, x + (1 - theta) v).
inline DiscretizationMap theta_map(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw ArgumentError("theta_map: theta must lie in [0, 1]");
  return DiscretizationMap(
      "theta", {{"theta", theta}},
      [theta](const TangentVector& t) {
        return PointPair{t.base - theta * t.vel, t.base + (1.0 - theta) * t.vel};
      },
      [theta](const PointPair& pp) {
        const Vec d = pp.second - pp.first;
        return TangentVector{pp.first + theta * d, d};
      });
}

inline DiscretizationMap midpoint_map() { return theta_map(0.5); }

// ---------------------------------------------------------------------------
// Maps on the unit sphere S^{n-1} in R^n.

namespace detail {

inline void require_on_sphere(const TangentVector& t, const char* what) {
  if (std::abs(t.base.norm() - 1.0) > 1e-10) {
    throw ArgumentError(std::string(what) + ": base point is not on the unit sphere");
  }
  if (std::abs(t.base.dot(t.vel)) > 1e-10) {
    throw ArgumentError(std::string(what) + ": velocity is not tangent to the sphere");
  }
}

inline double sinc(double x) {
  return std::abs(x) < 1e-6 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
}

}  // namespace detail

/// Normalized midpoint split ((x - v/2)/|x - v/2|, (x + v/2)/|x + v/2|).
inline DiscretizationMap sphere_midpoint_map() {
  return DiscretizationMap(
      "sphere_midpoint", {},
      [](const TangentVector& t) {
        detail::require_on_sphere(t, "sphere_midpoint_map");
        const Vec a = t.base - 0.5 * t.vel;
        const Vec b = t.base + 0.5 * t.vel;
        return PointPair{a / a.norm(), b / b.norm()};
      },
      [](const PointPair& pp) {
        const Vec s = pp.first + pp.second;
        const double ns = s.norm();
        if (ns < 1e-12) {
          throw DomainError("sphere_midpoint_map inverse: antipodal points");
        }
        return TangentVector{s / ns, 2.0 * (pp.second - pp.first) / ns};
      });
}

/// Riemannian exponential with the first factor fixed:
/// (x, xi) -> (x, x cos|xi| + sin|xi| xi / |xi|); inverse through the sphere log.
inline DiscretizationMap sphere_exp_map() {
  return DiscretizationMap(
      "sphere_exp", {},
      [](const TangentVector& t) {
        detail::require_on_sphere(t, "sphere_exp_map");
        const double r = t.vel.norm();
        return PointPair{t.base, t.base * std::cos(r) + detail::sinc(r) * t.vel};
      },
      [](const PointPair& pp) {
        const Vec& x = pp.first;
        const Vec& y = pp.second;
        // P_x(y - x) = y - x <x, y> for unit x.
        const Vec w = (y - x) - x * x.dot(y - x);
        const double nw = w.norm();
        if (nw < 1e-14) {
          throw DomainError("sphere_exp_map inverse: log undefined for y = +-x");
        }
        // atan2(sin, cos) equals arccos<x, y> on the sphere and stays accurate near 0.
        const double angle = std::atan2(nw, x.dot(y));
        return TangentVector{x, angle * w / nw};
      },
      std::numbers::pi);
}

// ---------------------------------------------------------------------------
// SO(3).

namespace so3 {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w(2), w(1), w(2), 0.0, -w(0), -w(1), w(0), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

/// Rodrigues formula with series below angle 1e-6.
inline Mat3 exp(const Mat3& xi_hat) {
  const Vec3 w = vee(xi_hat);
  const double th = w.norm();
  double a;
  double b;
  if (th < 1e-6) {
    a = 1.0 - th * th / 6.0;
    b = 0.5 - th * th / 24.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / (th * th);
  }
  return Mat3::Identity() + a * xi_hat + b * xi_hat * xi_hat;
}

/// Principal matrix logarithm; undefined at rotation angle pi.
inline Mat3 log(const Mat3& r) {
  const Vec3 s = 0.5 * vee(r - r.transpose());  // sin(th) * axis
  const double c = 0.5 * (r.trace() - 1.0);
  const double th = std::atan2(s.norm(), c);
  if (std::numbers::pi - th < 1e-7) {
    throw DomainError("so3::log: rotation angle pi, logarithm undefined");
  }
  const double factor = th < 1e-6 ? 1.0 + th * th / 6.0 : th / std::sin(th);
  return hat(factor * s);
}

inline Mat3 unflatten(const Vec& v) {
  if (v.size() != 9) throw DimensionError("SO(3) element must have 9 entries");
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = v(3 * i + j);
  return m;
}

inline Vec flatten(const Mat3& m) {
  Vec v(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v(3 * i + j) = m(i, j);
  return v;
}

inline bool is_rotation(const Mat3& g, double tol = 1e-10) {
  return inf_norm(Mat(g.transpose() * g - Mat3::Identity())) <= tol &&
         std::abs(g.determinant() - 1.0) <= tol;
}

}  // namespace so3

/// (g, v_g) -> (g exp(-theta xi), g exp((1 - theta) xi)) with xi = g^{-1} v_g.
inline DiscretizationMap lie_group_theta_map(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw ArgumentError("lie_group_theta_map: theta must lie in [0, 1]");
  }
  return DiscretizationMap(
      "so3_theta", {{"theta", theta}},
      [theta](const TangentVector& t) {
        const so3::Mat3 g = so3::unflatten(t.base);
        if (!so3::is_rotation(g)) throw ArgumentError("lie_group_theta_map: base is not in SO(3)");
        const so3::Mat3 xi = g.transpose() * so3::unflatten(t.vel);
        if (inf_norm(Mat(xi + xi.transpose())) > 1e-10) {
          throw ArgumentError("lie_group_theta_map: velocity is not left-translated skew");
        }
        return PointPair{so3::flatten(g * so3::exp(-theta * xi)),
                         so3::flatten(g * so3::exp((1.0 - theta) * xi))};
      },
      [theta](const PointPair& pp) {
        const so3::Mat3 g1 = so3::unflatten(pp.first);
        const so3::Mat3 g2 = so3::unflatten(pp.second);
        const so3::Mat3 xi = so3::log(g1.transpose() * g2);
        const so3::Mat3 g = g1 * so3::exp(theta * xi);
        return TangentVector{so3::flatten(g), so3::flatten(g * xi)};
      },
      std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Cotangent lifts to T*Q, Q = R^n.

/// Closed-form lift of the midpoint rule:
/// (q, p, qdot, pdot) -> ((q - qdot/2, p - pdot/2), (q + qdot/2, p + pdot/2)).
inline DiscretizationMap cotangent_lift_midpoint() {
  return DiscretizationMap(
      "cotangent_midpoint", {{"theta", 0.5}},
      [](const TangentVector& t) {
        return PointPair{t.base - 0.5 * t.vel, t.base + 0.5 * t.vel};
      },
      [](const PointPair& pp) {
        return TangentVector{0.5 * (pp.first + pp.second), pp.second - pp.first};
      });
}

/// Jacobian of (q, v) -> (R^1(q, v), R^2(q, v)) in the block layout
/// [[dR1/dq, dR1/dv], [dR2/dq, dR2/dv]].
inline Mat map_jacobian(const DiscretizationMap& rd, const Vec& q, const Vec& v,
                        double rel_step = 1e-6) {
  const Eigen::Index n = q.size();
  return jacobian_central(
      [&rd, n](const Vec& z) {
        const PointPair pp = rd.forward({z.head(n), z.tail(n)});
        return concat(pp.first, pp.second);
      },
      concat(q, v), rel_step);
}

namespace detail {

inline Eigen::FullPivLU<Mat> checked_lu(const Mat& jac, const std::string& name) {
  Eigen::FullPivLU<Mat> lu(jac);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw DomainError("cotangent lift of " + name + ": singular Jacobian at evaluation point");
  }
  return lu;
}

}  // namespace detail

/// Generic lift R_d^{T*} = Phi^{-1} o hat(R_d) o alpha_Q built from three maps:
///   alpha_Q^{-1}: (q, p, qdot, pdot) -> covector (pdot, p) at (q, qdot) in TQ;
///   hat(R_d) = (T R_d^{-1})^*: push the covector with the inverse-transpose Jacobian;
///   Phi^{-1}: (q0, q1, P0, P1) -> ((q0, -P0), (q1, P1)).
inline DiscretizationMap cotangent_lift_generic(const DiscretizationMap& rd) {
  MapParams params = rd.params();
  return DiscretizationMap(
      "cotangent_" + rd.name(), params,
      [rd](const TangentVector& t) {
        const CotangentState s = CotangentState::from_tangent(t);
        const Eigen::Index n = s.q.size();
        const PointPair base_pair = rd.forward({s.q, s.qdot});
        const Mat jac = map_jacobian(rd, s.q, s.qdot);
        const auto lu = detail::checked_lu(jac.transpose(), rd.name());
        const Vec big_p = lu.solve(concat(s.pdot, s.p));
        return PointPair{concat(base_pair.first, -big_p.head(n)),
                         concat(base_pair.second, big_p.tail(n))};
      },
      [rd](const PointPair& pp) {
        const Eigen::Index n = pp.first.size() / 2;
        const TangentVector qv = rd.inverse({pp.first.head(n), pp.second.head(n)});
        const Mat jac = map_jacobian(rd, qv.base, qv.vel);
        detail::checked_lu(jac, rd.name());
        const Vec covec = jac.transpose() * concat(Vec(-pp.first.tail(n)), pp.second.tail(n));
        // covec = (pdot, p)
        return TangentVector{concat(qv.base, covec.tail(n)), concat(qv.vel, covec.head(n))};
      },
      rd.validity_radius());
}

/// Canonical two-form d_T omega_Q = dq ^ dpdot + dqdot ^ dp on T(T*Q) in the layout
/// (q, p, qdot, pdot), as a matrix W with form(u, w) = u^T W w.
inline Mat tangent_lift_form(Eigen::Index n) {
  Mat w = Mat::Zero(4 * n, 4 * n);
  const Mat id = Mat::Identity(n, n);
  w.block(0, 3 * n, n, n) = id;       // dq ^ dpdot
  w.block(3 * n, 0, n, n) = -id;
  w.block(2 * n, n, n, n) = id;       // dqdot ^ dp
  w.block(n, 2 * n, n, n) = -id;
  return w;
}

/// Omega_12 = pr_2^* omega_Q - pr_1^* omega_Q on T*Q x T*Q, layout (q0, p0, q1, p1).
inline Mat product_form(Eigen::Index n) {
  Mat w = Mat::Zero(4 * n, 4 * n);
  w.topLeftCorner(2 * n, 2 * n) = -canonical_symplectic(n);
  w.bottomRightCorner(2 * n, 2 * n) = canonical_symplectic(n);
  return w;
}

/// ||A^T Omega_12 A - d_T omega_Q||_inf for the Jacobian A of a map on T(T*Q) at t.
inline double lift_symplecticity_defect(const DiscretizationMap& lift, const TangentVector& t,
                                        double rel_step = 1e-5) {
  const Eigen::Index n2 = t.base.size();
  const Eigen::Index n = n2 / 2;
  const Mat a = jacobian_central(
      [&lift, n2](const Vec& z) {
        const PointPair pp = lift.forward({z.head(n2), z.tail(n2)});
        return concat(pp.first, pp.second);
      },
      concat(t.base, t.vel), rel_step);
  return inf_norm(Mat(a.transpose() * product_form(n) * a - tangent_lift_form(n)));
}

// ---------------------------------------------------------------------------
// Projected map on a constraint submanifold M0 = {c = 0} of M.

/// R_d^{M0} = (P x P) o R_d o T i_{M0}. In embedding coordinates the tangent
/// inclusion is the identity; `constraint` describes M0 and is used by the inverse
/// (Gauss-Newton over (x, v) with c(x) = 0 and Dc(x) v = 0) and by the sample check.
inline DiscretizationMap projected_map(const DiscretizationMap& rd, VectorField projector,
                                       VectorField constraint, const std::vector<Vec>& samples,
                                       SolverConfig inverse_cfg = {}) {
  for (const Vec& x : samples) {
    if (inf_norm(constraint(x)) > 1e-10) {
      throw ArgumentError("projected_map: sample point is not on M0");
    }
    if (inf_norm(Vec(projector(x) - x)) > 1e-10) {
      throw ArgumentError("projected_map: projector does not fix M0 samples");
    }
  }
  inverse_cfg.newton_tol = std::max(inverse_cfg.newton_tol, 1e-13);
  auto forward = [rd, projector](const TangentVector& t) {
    const PointPair pp = rd.forward(t);
    return PointPair{projector(pp.first), projector(pp.second)};
  };
  auto inverse = [rd, forward, constraint, inverse_cfg](const PointPair& pp) {
    const Eigen::Index n = pp.first.size();
    const TangentVector guess = rd.inverse(pp);
    auto residual = [&](const Vec& z) {
      const Vec x = z.head(n);
      const Vec v = z.tail(n);
      const PointPair img = forward({x, v});
      const Vec cx = constraint(x);
      const Mat dc = jacobian_central(constraint, x);
      Vec r(2 * n + 2 * cx.size());
      r << img.first - pp.first, img.second - pp.second, cx, dc * v;
      return r;
    };
    try {
      const NewtonResult sol = newton_solve(residual, concat(guess.base, guess.vel), inverse_cfg);
      return TangentVector{sol.z.head(n), sol.z.tail(n)};
    } catch (const SolverError& e) {
      throw DomainError(std::string("projected_map inverse out of domain: ") + e.what());
    }
  };
  return DiscretizationMap("projected_" + rd.name(), rd.params(), forward, inverse,
                           rd.validity_radius());
}

// ---------------------------------------------------------------------------

/// I_TQ(q, p, mu_q, mu_p) = (q, mu_p, -mu_q, p) on 4n-vectors.
inline Vec legendre_interchange(const Vec& state) {
  if (state.size() % 4 != 0) throw DimensionError("legendre_interchange: size must be 4n");
  const Eigen::Index n = state.size() / 4;
  Vec out(state.size());
  out << state.segment(0, n), state.segment(3 * n, n), -state.segment(2 * n, n),
      state.segment(n, n);
  return out;
}

inline Vec legendre_interchange_inverse(const Vec& image) {
  if (image.size() % 4 != 0) throw DimensionError("legendre_interchange: size must be 4n");
  const Eigen::Index n = image.size() / 4;
  Vec out(image.size());
  out << image.segment(0, n), image.segment(3 * n, n), -image.segment(2 * n, n),
      image.segment(n, n);
  return out;
}

}  // namespace diracflow::maps

#endif  // DIRACFLOW_DISCRETIZATION_MAPS_HPP
