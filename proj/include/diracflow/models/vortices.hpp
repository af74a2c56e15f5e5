// Planar point vortices.
//
// State q = (x_1..x_n, y_1..y_n). The Lagrangian is L = <alpha(q), qdot> - H_dyn(q)
// with alpha_i dq^i = -1/2 Gamma_i y^i dx^i + 1/2 Gamma_i x^i dy^i. The energy
//   H(q) = 1/(4 pi) sum_{j != k} Gamma_j Gamma_k log(l_jk^2)
// is reported as printed; the dynamics are generated by H_dyn = H / 2, the
// log-distance normalization under which the Euler-Lagrange equations reproduce
// the classical velocities
//   xdot^i = -1/(2 pi) sum_j Gamma_j (y^i - y^j) / l_ij^2,
//   ydot^i =  1/(2 pi) sum_j Gamma_j (x^i - x^j) / l_ij^2.

#ifndef DIRACFLOW_MODELS_VORTICES_HPP
#define DIRACFLOW_MODELS_VORTICES_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "diracflow/constraint_algorithm.hpp"
#include "diracflow/core.hpp"
#include "diracflow/newton.hpp"

namespace diracflow::models {

class VortexSystem {
 public:
  /// Generator scale: the dynamics use H_dyn = kDynamicsScale * H.
  static constexpr double kDynamicsScale = 0.5;
  static constexpr double kMinDistance = 1e-8;

  explicit VortexSystem(Vec gamma) : gamma_(std::move(gamma)) {
    if (gamma_.size() < 1) throw ArgumentError("VortexSystem: need at least one vortex");
    for (Eigen::Index j = 0; j < gamma_.size(); ++j) {
      if (gamma_(j) == 0.0) throw ArgumentError("VortexSystem: circulations must be nonzero");
    }
  }

  /// Four-vortex leapfrogging benchmark: x = (-1, 1, -1, 1), y = (2, 2, -2, -2),
  /// Gamma = (1, 1, -1, -1).
  static VortexSystem leapfrog() { return VortexSystem((Vec(4) << 1.0, 1.0, -1.0, -1.0).finished()); }

  static Vec leapfrog_initial_state() {
    return (Vec(8) << -1.0, 1.0, -1.0, 1.0, 2.0, 2.0, -2.0, -2.0).finished();
  }

  Eigen::Index count() const { return gamma_.size(); }
  Eigen::Index config_dim() const { return 2 * gamma_.size(); }
  const Vec& gamma() const { return gamma_; }

  void check_distinct(const Vec& q) const {
    require_same_size(q.size(), config_dim(), "VortexSystem state");
    const Eigen::Index n = count();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = std::hypot(q(i) - q(j), q(n + i) - q(n + j));
        if (!(d >= kMinDistance)) {
          throw DomainError("VortexSystem: coincident vortices " + std::to_string(i + 1) + " and " +
                            std::to_string(j + 1));
        }
      }
    }
  }

  /// Velocities (xdot, ydot) of the classical point-vortex equations.
  Vec velocity(const Vec& q) const {
    check_distinct(q);
    const Eigen::Index n = count();
    Vec v = Vec::Zero(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = q(i) - q(j);
        const double dy = q(n + i) - q(n + j);
        const double l2 = dx * dx + dy * dy;
        v(i) -= gamma_(j) * dy / l2;
        v(n + i) += gamma_(j) * dx / l2;
      }
    }
    return v / (2.0 * std::numbers::pi);
  }

  /// Complex form f with conj(zdot^j) = f(z)^j, f(z)^j = 1/(2 pi i) sum_{l != j} Gamma_l / (z^j - z^l).
  Eigen::VectorXcd complex_field(const Eigen::VectorXcd& z) const {
    const Eigen::Index n = count();
    require_same_size(z.size(), n, "complex_field");
    const std::complex<double> coeff = 1.0 / (2.0 * std::numbers::pi * std::complex<double>(0.0, 1.0));
    Eigen::VectorXcd f = Eigen::VectorXcd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index l = 0; l < n; ++l) {
        if (l == j) continue;
        const std::complex<double> dz = z(j) - z(l);
        if (std::abs(dz) < kMinDistance) throw DomainError("complex_field: coincident vortices");
        f(j) += gamma_(l) / dz;
      }
    }
    return coeff * f;
  }

  Eigen::VectorXcd to_complex(const Vec& q) const {
    const Eigen::Index n = count();
    Eigen::VectorXcd z(n);
    for (Eigen::Index j = 0; j < n; ++j) z(j) = {q(j), q(n + j)};
    return z;
  }

  Vec from_complex(const Eigen::VectorXcd& z) const {
    const Eigen::Index n = count();
    Vec q(2 * n);
    for (Eigen::Index j = 0; j < n; ++j) {
      q(j) = z(j).real();
      q(n + j) = z(j).imag();
    }
    return q;
  }

  double energy(const Vec& q) const {
    check_distinct(q);
    const Eigen::Index n = count();
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < n; ++k) {
        if (j == k) continue;
        const double dx = q(j) - q(k);
        const double dy = q(n + j) - q(n + k);
        s += gamma_(j) * gamma_(k) * std::log(dx * dx + dy * dy);
      }
    }
    return s / (4.0 * std::numbers::pi);
  }

  /// Gradient of the printed energy H.
  Vec energy_gradient(const Vec& q) const {
    check_distinct(q);
    const Eigen::Index n = count();
    Vec g = Vec::Zero(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < n; ++k) {
        if (k == i) continue;
        const double dx = q(i) - q(k);
        const double dy = q(n + i) - q(n + k);
        const double l2 = dx * dx + dy * dy;
        // each unordered pair appears twice in the j != k sum
        g(i) += gamma_(i) * gamma_(k) * 4.0 * dx / l2;
        g(n + i) += gamma_(i) * gamma_(k) * 4.0 * dy / l2;
      }
    }
    return g / (4.0 * std::numbers::pi);
  }

  double dynamics_energy(const Vec& q) const { return kDynamicsScale * energy(q); }
  Vec dynamics_gradient(const Vec& q) const { return kDynamicsScale * energy_gradient(q); }

  /// alpha(q) as a covector in the (x, y) layout.
  Vec alpha(const Vec& q) const {
    require_same_size(q.size(), config_dim(), "alpha");
    const Eigen::Index n = count();
    Vec a(2 * n);
    a.head(n) = -0.5 * gamma_.cwiseProduct(q.tail(n));
    a.tail(n) = 0.5 * gamma_.cwiseProduct(q.head(n));
    return a;
  }

  /// Constant Jacobian D alpha with entries d alpha_i / d q^j.
  Mat alpha_jacobian() const {
    const Eigen::Index n = count();
    Mat d = Mat::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      d(i, n + i) = -0.5 * gamma_(i);
      d(n + i, i) = 0.5 * gamma_(i);
    }
    return d;
  }

  /// d alpha = sum_i Gamma_i dx^i ^ dy^i as the matrix W = D alpha^T - D alpha.
  Mat dalpha() const {
    const Mat d = alpha_jacobian();
    return d.transpose() - d;
  }

  /// Residual D alpha qdot - D alpha^T qdot + dH_dyn of the Euler-Lagrange equations.
  Vec euler_lagrange_residual(const Vec& q, const Vec& qdot) const {
    const Mat d = alpha_jacobian();
    return d * qdot - d.transpose() * qdot + dynamics_gradient(q);
  }

  /// Deterministic well-separated configurations used as constraint-algorithm seeds.
  std::vector<Vec> sample_configurations(int count_samples = 3) const {
    std::vector<Vec> out;
    const Eigen::Index n = count();
    for (int s = 0; s < count_samples; ++s) {
      Vec q(2 * n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double ang = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n) +
                           0.37 * s;
        const double r = 1.0 + 0.25 * static_cast<double>(j) + 0.1 * s;
        q(j) = r * std::cos(ang);
        q(n + j) = r * std::sin(ang);
      }
      out.push_back(q);
    }
    return out;
  }

 private:
  Vec gamma_;
};

/// S0 on T*R^{2n} (state (q, p)) as a multiplier-affine implicit system: the
/// multiplier u plays qdot, pdot = D alpha^T u - dH_dyn, constraint p - alpha(q) = 0.
inline constraint::ImplicitSystem vortex_S0(const VortexSystem& sys) {
  const Eigen::Index d = sys.config_dim();
  constraint::ImplicitSystem out;
  out.name = "vortices";
  out.dim = 2 * d;
  out.num_ports = d;
  out.drift = [sys, d](const Vec& x) {
    Vec f = Vec::Zero(2 * d);
    f.tail(d) = -sys.dynamics_gradient(x.head(d));
    return f;
  };
  const Mat da = sys.alpha_jacobian();
  out.ports = [d, da](const Vec&) {
    Mat b(2 * d, d);
    b << Mat::Identity(d, d), da.transpose();
    return b;
  };
  for (Eigen::Index i = 0; i < d; ++i) {
    out.constraints.push_back([sys, d, i](const Vec& x) { return x(d + i) - sys.alpha(x.head(d))(i); });
  }
  out.constraint_jacobian = [d, da](const Vec&) {
    Mat g(d, 2 * d);
    g << -da, Mat::Identity(d, d);
    return g;
  };
  out.hamiltonian = [sys, d](const Vec& x) { return sys.energy(x.head(d)); };
  for (const Vec& q : sys.sample_configurations()) {
    out.seeds.push_back(concat(q, Vec(sys.alpha(q) + Vec::Constant(d, 0.05))));
  }
  return out;
}

namespace vortex {

/// Method 1 (cotangent-lifted midpoint on T*Q) as a one-step map on (q, p). Solves
///   p_k = alpha(qbar) - h/2 (D alpha^T v - dH_dyn(qbar)),  v = (q_{k+1} - q_k)/h
/// for q_{k+1}, then p_{k+1} = alpha(qbar) + h/2 (D alpha^T v - dH_dyn(qbar)).
struct Method1Result {
  Vec q;
  Vec p;
  int iterations = 0;
  double residual_norm = 0.0;
};

inline Vec method1_momentum_defect(const VortexSystem& sys, double h, const Vec& qk, const Vec& pk,
                                   const Vec& q1) {
  const Vec qbar = 0.5 * (qk + q1);
  const Vec v = (q1 - qk) / h;
  const Vec force = sys.alpha_jacobian().transpose() * v - sys.dynamics_gradient(qbar);
  return sys.alpha(qbar) - 0.5 * h * force - pk;
}

inline Method1Result method1_step(const VortexSystem& sys, double h, const Vec& qk, const Vec& pk,
                                  const SolverConfig& cfg, const Vec& guess) {
  const NewtonResult sol = newton_solve(
      [&](const Vec& q1) { return method1_momentum_defect(sys, h, qk, pk, q1); }, guess, cfg);
  const Vec& q1 = sol.z;
  const Vec qbar = 0.5 * (qk + q1);
  const Vec v = (q1 - qk) / h;
  const Vec force = sys.alpha_jacobian().transpose() * v - sys.dynamics_gradient(qbar);
  return {q1, sys.alpha(qbar) + 0.5 * h * force, sol.iterations, sol.residual_norm};
}

/// Initial momentum p_0 = -D_1 L_d(q_0, q_1) that makes the one-step map reproduce q_1.
inline Vec method1_initial_momentum(const VortexSystem& sys, double h, const Vec& q0, const Vec& q1) {
  const Vec qbar = 0.5 * (q0 + q1);
  const Vec v = (q1 - q0) / h;
  const Vec force = sys.alpha_jacobian().transpose() * v - sys.dynamics_gradient(qbar);
  return sys.alpha(qbar) - 0.5 * h * force;
}

/// Discrete Lagrangian L_d(q0, q1) = h L((q0 + q1)/2, (q1 - q0)/h).
inline double discrete_lagrangian(const VortexSystem& sys, double h, const Vec& q0, const Vec& q1) {
  const Vec qbar = 0.5 * (q0 + q1);
  const Vec v = (q1 - q0) / h;
  return h * (sys.alpha(qbar).dot(v) - sys.dynamics_energy(qbar));
}

/// Method 2 on the chart q of M_f = {p = alpha(q)} with the theta map:
///   (q_{k+1} - q_k)/h = X(q_k + theta (q_{k+1} - q_k)),  X the classical vortex field.
/// theta = 1/2 is the implicit midpoint rule.
inline NewtonResult method2_step(const VortexSystem& sys, double theta, double h, const Vec& qk,
                                 const SolverConfig& cfg) {
  return newton_solve(
      [&](const Vec& q1) { return Vec((q1 - qk) / h - sys.velocity(qk + theta * (q1 - qk))); }, qk,
      cfg);
}

/// Residual of conj(z_{k+2}) = conj(z_k) + h (f(z_{k+1/2}) + f(z_{k+3/2})) in real layout.
inline double two_step_defect(const VortexSystem& sys, double h, const Vec& q0, const Vec& q1,
                              const Vec& q2) {
  const Eigen::VectorXcd z0 = sys.to_complex(q0);
  const Eigen::VectorXcd z1 = sys.to_complex(q1);
  const Eigen::VectorXcd z2 = sys.to_complex(q2);
  const Eigen::VectorXcd lhs = z2.conjugate();
  const Eigen::VectorXcd rhs =
      z0.conjugate() + h * (sys.complex_field(0.5 * (z0 + z1)) + sys.complex_field(0.5 * (z1 + z2)));
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

/// Residual of conj(z_{k+1}) = conj(z_k) + h f(z_{k+1/2}).
inline double midpoint_defect(const VortexSystem& sys, double h, const Vec& q0, const Vec& q1) {
  const Eigen::VectorXcd z0 = sys.to_complex(q0);
  const Eigen::VectorXcd z1 = sys.to_complex(q1);
  const Eigen::VectorXcd rhs = z0.conjugate() + h * sys.complex_field(0.5 * (z0 + z1));
  return (z1.conjugate() - rhs).cwiseAbs().maxCoeff();
}

}  // namespace vortex

}  // namespace diracflow::models

#endif  // DIRACFLOW_MODELS_VORTICES_HPP
