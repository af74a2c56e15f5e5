// Port-Hamiltonian systems xdot = J(x) dH(x) + B(x) u, y = B^T(x) dH(x), in open
// mode (u exogenous) or closed mode (B^T dH = 0 enforced, u a multiplier).

#ifndef DIRACFLOW_MODELS_PORT_HAMILTONIAN_HPP
#define DIRACFLOW_MODELS_PORT_HAMILTONIAN_HPP

#include <string>

#include "diracflow/constraint_algorithm.hpp"
#include "diracflow/core.hpp"
#include "diracflow/dirac_linear.hpp"
#include "diracflow/discretization_maps.hpp"
#include "diracflow/newton.hpp"

namespace diracflow::models {

enum class PortMode { open, closed };

struct PortHamiltonianSystem {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  MatrixField J;
  MatrixField B;  // may be empty when m = 0
  ScalarField H;
  VectorField dH;
  PortMode mode = PortMode::open;

  Mat B_at(const Vec& x) const {
    if (m == 0 || !B) return Mat(n, 0);
    Mat b = B(x);
    require_same_size(b.rows(), n, "PortHamiltonianSystem B rows");
    require_same_size(b.cols(), m, "PortHamiltonianSystem B cols");
    return b;
  }

  Mat J_at(const Vec& x) const {
    Mat j = J(x);
    require_same_size(j.rows(), n, "PortHamiltonianSystem J");
    require_same_size(j.cols(), n, "PortHamiltonianSystem J");
    return j;
  }

  Vec dH_at(const Vec& x) const { return dH ? dH(x) : gradient_5pt(H, x); }

  Vec output(const Vec& x) const { return B_at(x).transpose() * dH_at(x); }

  /// Throws unless J is skew (1e-10) at every sample.
  void validate(const std::vector<Vec>& samples) const {
    if (n < 1) throw ArgumentError("PortHamiltonianSystem: n must be >= 1");
    if (m < 0 || m > n) throw ArgumentError("PortHamiltonianSystem: need 0 <= m <= n");
    if (!J || !H) throw ArgumentError("PortHamiltonianSystem: J and H are required");
    for (const Vec& x : samples) {
      const Mat j = J_at(x);
      if (inf_norm(Mat(j + j.transpose())) > 1e-10) {
        throw ArgumentError("PortHamiltonianSystem: J is not skew-symmetric at a sample point");
      }
    }
  }
};

/// Fiber of D_{D,B} = {(J a + B u, a)} at x: basis [[J, B], [I, 0]].
inline dirac::Subspace open_structure(const PortHamiltonianSystem& ph, const Vec& x) {
  const Mat j = ph.J_at(x);
  const Mat b = ph.B_at(x);
  Mat basis = Mat::Zero(2 * ph.n, ph.n + b.cols());
  basis.topLeftCorner(ph.n, ph.n) = j;
  basis.bottomLeftCorner(ph.n, ph.n).setIdentity();
  basis.topRightCorner(ph.n, b.cols()) = b;
  return dirac::Subspace::span_of(basis, ph.n);
}

/// Fiber of D^(c)_{D,B} = {(J a + B u, a) : B^T a = 0}: basis [[J N, B], [N, 0]], N = ker B^T.
inline dirac::Subspace closed_structure(const PortHamiltonianSystem& ph, const Vec& x) {
  const Mat j = ph.J_at(x);
  const Mat b = ph.B_at(x);
  const Mat nb = b.cols() > 0 ? null_space(b.transpose()) : Mat(Mat::Identity(ph.n, ph.n));
  Mat basis = Mat::Zero(2 * ph.n, nb.cols() + b.cols());
  basis.topLeftCorner(ph.n, nb.cols()) = j * nb;
  basis.bottomLeftCorner(ph.n, nb.cols()) = nb;
  basis.topRightCorner(ph.n, b.cols()) = b;
  return dirac::Subspace::span_of(basis, ph.n);
}

struct OpenResidual {
  Vec residual;   // R_d^{-1}(x_k, x_{k+1}) - h B u - h J dH at xbar
  Vec y;          // B^T(xbar) dH(xbar)
  Vec xbar;
  Vec increment;  // velocity part of R_d^{-1}(x_k, x_{k+1})
  Vec dH;
};

inline OpenResidual ph_open_discrete_residual(const PortHamiltonianSystem& ph,
                                              const maps::DiscretizationMap& rd, double h,
                                              const Vec& xk, const Vec& xk1, const Vec& u) {
  require_same_size(u.size(), ph.m, "ph_open_discrete_residual u");
  const maps::TangentVector t = rd.inverse({xk, xk1});
  OpenResidual out;
  out.xbar = t.base;
  out.increment = t.vel;
  out.dH = ph.dH_at(t.base);
  const Mat b = ph.B_at(t.base);
  out.y = b.transpose() * out.dH;
  out.residual = t.vel - h * (b * u) - h * (ph.J_at(t.base) * out.dH);
  return out;
}

/// Stacked (n + m) residual with unknowns (x_{k+1}, u).
inline Vec ph_closed_discrete_residual(const PortHamiltonianSystem& ph,
                                       const maps::DiscretizationMap& rd, double h, const Vec& xk,
                                       const Vec& xk1, const Vec& u) {
  const OpenResidual r = ph_open_discrete_residual(ph, rd, h, xk, xk1, u);
  return concat(r.residual, r.y);
}

struct PortStep {
  Vec next;
  Vec u;
  Vec y;
  int iterations = 0;
  double residual_norm = 0.0;
};

inline PortStep ph_open_step(const PortHamiltonianSystem& ph, const maps::DiscretizationMap& rd,
                             double h, const Vec& xk, const Vec& u, const SolverConfig& cfg) {
  const NewtonResult sol = newton_solve(
      [&](const Vec& x1) { return ph_open_discrete_residual(ph, rd, h, xk, x1, u).residual; }, xk,
      cfg);
  const OpenResidual r = ph_open_discrete_residual(ph, rd, h, xk, sol.z, u);
  return {sol.z, u, r.y, sol.iterations, sol.residual_norm};
}

inline PortStep ph_closed_step(const PortHamiltonianSystem& ph, const maps::DiscretizationMap& rd,
                               double h, const Vec& xk, const SolverConfig& cfg,
                               const Vec& u_guess = Vec()) {
  const Eigen::Index n = ph.n;
  const Vec ug = u_guess.size() == ph.m ? u_guess : Vec(Vec::Zero(ph.m));
  const NewtonResult sol = newton_solve(
      [&](const Vec& z) {
        return ph_closed_discrete_residual(ph, rd, h, xk, z.head(n), z.tail(ph.m));
      },
      concat(xk, ug), cfg);
  const Vec x1 = sol.z.head(n);
  const Vec u = sol.z.tail(ph.m);
  const OpenResidual r = ph_open_discrete_residual(ph, rd, h, xk, x1, u);
  return {x1, u, r.y, sol.iterations, sol.residual_norm};
}

/// Closed mode as an implicit system: drift J dH, ports B, constraints (B^T dH)_l.
inline constraint::ImplicitSystem ph_closed_implicit_system(const PortHamiltonianSystem& ph,
                                                             std::vector<Vec> seeds,
                                                             std::string name = "ph_closed") {
  constraint::ImplicitSystem s;
  s.name = std::move(name);
  s.dim = ph.n;
  s.num_ports = ph.m;
  s.drift = [ph](const Vec& x) { return Vec(ph.J_at(x) * ph.dH_at(x)); };
  s.ports = [ph](const Vec& x) { return ph.B_at(x); };
  for (Eigen::Index l = 0; l < ph.m; ++l) {
    s.constraints.push_back([ph, l](const Vec& x) { return ph.output(x)(l); });
  }
  s.hamiltonian = ph.H;
  s.seeds = std::move(seeds);
  return s;
}

/// Open mode with u = 0 as an implicit system (no ports, no constraints).
inline constraint::ImplicitSystem ph_open_implicit_system(const PortHamiltonianSystem& ph) {
  constraint::ImplicitSystem s;
  s.name = "ph_open";
  s.dim = ph.n;
  s.drift = [ph](const Vec& x) { return Vec(ph.J_at(x) * ph.dH_at(x)); };
  s.hamiltonian = ph.H;
  return s;
}

/// Forced nonlinear oscillator on R^2: J canonical, H = 1/2 p^2 + 1/2 q^2 + 1/4 beta q^4,
/// B = (0, 1)^T so u acts as a force and y = p is the collocated velocity.
inline PortHamiltonianSystem forced_oscillator(double beta = 0.0) {
  PortHamiltonianSystem ph;
  ph.n = 2;
  ph.m = 1;
  ph.J = [](const Vec&) { return canonical_symplectic(1); };
  ph.B = [](const Vec&) { return Mat((Mat(2, 1) << 0.0, 1.0).finished()); };
  ph.H = [beta](const Vec& x) {
    return 0.5 * x(1) * x(1) + 0.5 * x(0) * x(0) + 0.25 * beta * std::pow(x(0), 4);
  };
  ph.dH = [beta](const Vec& x) {
    return Vec((Vec(2) << x(0) + beta * std::pow(x(0), 3), x(1)).finished());
  };
  ph.mode = PortMode::open;
  return ph;
}

}  // namespace diracflow::models

#endif  // DIRACFLOW_MODELS_PORT_HAMILTONIAN_HPP
