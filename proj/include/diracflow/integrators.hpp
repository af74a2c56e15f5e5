// One-step maps for implicit systems.
//
// Method 1 discretizes S0 directly: (1/h) R_d^{-1}(x_k, x_{k+1}) in S0.
// Method 2 first runs the constraint algorithm and then discretizes the closed-loop
// field on the final constraint set with a map adapted to it.

#ifndef DIRACFLOW_INTEGRATORS_HPP
#define DIRACFLOW_INTEGRATORS_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "diracflow/constraint_algorithm.hpp"
#include "diracflow/core.hpp"
#include "diracflow/discretization_maps.hpp"
#include "diracflow/newton.hpp"

namespace diracflow {

struct StepResult {
  Vec next_state;
  /// Multipliers or port values u solved for alongside the state.
  Vec aux;
  /// Port outputs y, when the scheme defines them.
  Vec outputs;
  int newton_iters = 0;
  double residual_norm = 0.0;
  /// Constraint residual the scheme enforces (NaN: evaluate on next_state instead).
  double constraint_residual = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void check_step_size(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ArgumentError("step size h must be > 0");
}

inline void check_validity(const maps::DiscretizationMap& rd, const Vec& vel) {
  const double r = vel.norm();
  if (r > rd.validity_radius()) {
    throw DomainError(rd.name() + ": step increment " + std::to_string(r) +
                      " exceeds the map's validity radius " + std::to_string(rd.validity_radius()));
  }
}

}  // namespace detail

/// Method 1. Unknowns (x_{k+1}, u); residuals
///   (1/h) vel(R_d^{-1}(x_k, x_{k+1})) - drift(xbar) - ports(xbar) u,  Phi(xbar).
inline StepResult method1_step(const constraint::ImplicitSystem& sys,
                               const maps::DiscretizationMap& rd, double h, const Vec& xk,
                               const SolverConfig& cfg, const Vec& u_guess = Vec()) {
  detail::check_step_size(h);
  require_same_size(xk.size(), sys.dim, "method1_step state");
  const Eigen::Index n = sys.dim;
  const Eigen::Index m = sys.num_ports;
  auto residual = [&](const Vec& z) {
    const maps::TangentVector t = rd.inverse({xk, z.head(n)});
    Vec r(n + static_cast<Eigen::Index>(sys.constraints.size()));
    Vec dyn = t.vel / h - sys.drift(t.base);
    if (m > 0) dyn -= sys.ports_at(t.base) * z.tail(m);
    r.head(n) = dyn;
    for (std::size_t a = 0; a < sys.constraints.size(); ++a) {
      r(n + static_cast<Eigen::Index>(a)) = sys.constraints[a](t.base);
    }
    return r;
  };
  const Vec ug = u_guess.size() == m ? u_guess : Vec(Vec::Zero(m));
  // Explicit Euler predictor: some inverses (the sphere log) are singular at x_{k+1} = x_k.
  const Vec predictor = xk + h * sys.drift(xk);
  const NewtonResult sol =
      newton_solve(residual, concat(predictor.allFinite() ? predictor : xk, ug), cfg);
  StepResult out;
  out.next_state = sol.z.head(n);
  out.aux = sol.z.tail(m);
  out.newton_iters = sol.iterations;
  out.residual_norm = sol.residual_norm;
  const maps::TangentVector t = rd.inverse({xk, out.next_state});
  detail::check_validity(rd, t.vel);
  if (!sys.constraints.empty()) {
    out.constraint_residual = inf_norm(constraint::constraint_values(sys.constraints, t.base));
  }
  return out;
}

/// Method 2 in forward form on the final constraint set M_f: solve
///   R^1(xbar, h X(xbar)) = x_k,  Phi_f(xbar) = 0
/// for the internal point xbar (Gauss-Newton on the consistent overdetermined system),
/// then x_{k+1} = R^2(xbar, h X(xbar)) with X the closed-loop field of stab.
/// rd_on_mf must map into M_f (e.g. a projected map).
inline StepResult method2_step(const constraint::StabilizedSystem& stab,
                               const maps::DiscretizationMap& rd_on_mf, double h, const Vec& xk,
                               const SolverConfig& cfg) {
  detail::check_step_size(h);
  const Eigen::Index n = stab.system->dim;
  require_same_size(xk.size(), n, "method2_step state");
  const double start_defect = inf_norm(stab.constraint_values(xk));
  if (start_defect > std::max(1e3 * cfg.newton_tol, 1e-9)) {
    throw ArgumentError("method2_step: x_k is not on the final constraint set (residual " +
                        std::to_string(start_defect) + ")");
  }
  const auto c = static_cast<Eigen::Index>(stab.final_constraints.size());
  auto residual = [&](const Vec& xbar) {
    const Vec vel = h * stab.vector_field(xbar);
    const maps::PointPair pp = rd_on_mf.forward({xbar, vel});
    Vec r(n + c);
    r.head(n) = pp.first - xk;
    r.tail(c) = stab.constraint_values(xbar);
    return r;
  };
  const NewtonResult sol = newton_solve(residual, xk, cfg);
  const Vec vel = h * stab.vector_field(sol.z);
  detail::check_validity(rd_on_mf, vel);
  StepResult out;
  out.next_state = rd_on_mf.forward({sol.z, vel}).second;
  out.aux = stab.multipliers(sol.z);
  out.newton_iters = sol.iterations;
  out.residual_norm = sol.residual_norm;
  out.constraint_residual = inf_norm(stab.constraint_values(out.next_state));
  return out;
}

/// Coordinates on the final constraint set: embed maps chart points into M_f and
/// tangent maps an ambient tangent vector at embed(y) to chart velocities.
struct Chart {
  Eigen::Index dim = 0;
  VectorField embed;
  std::function<Vec(const Vec& y, const Vec& ambient_velocity)> tangent;
};

/// Closed-loop field of stab pulled back to a chart, as an unconstrained implicit
/// system; Method 2 on the chart is then method1_step on this system.
inline constraint::ImplicitSystem reduce_to_chart(const constraint::StabilizedSystem& stab,
                                                  const Chart& chart) {
  constraint::ImplicitSystem s;
  s.name = stab.system->name + "_chart";
  s.dim = chart.dim;
  const auto st = stab;
  s.drift = [st, chart](const Vec& y) {
    const Vec x = chart.embed(y);
    return chart.tangent(y, st.vector_field(x));
  };
  if (stab.system->hamiltonian) {
    const auto ham = stab.system->hamiltonian;
    s.hamiltonian = [ham, chart](const Vec& y) { return ham(chart.embed(y)); };
  }
  return s;
}

/// Derivatives of a Lagrangian L(q, qdot).
struct LagrangianData {
  Eigen::Index dim = 0;
  std::function<Vec(const Vec& q, const Vec& v)> dL_dq;
  std::function<Vec(const Vec& q, const Vec& v)> dL_dv;

  /// Numeric (5-point) derivatives of L.
  static LagrangianData from_lagrangian(Eigen::Index dim,
                                        std::function<double(const Vec&, const Vec&)> lag) {
    LagrangianData d;
    d.dim = dim;
    d.dL_dq = [lag](const Vec& q, const Vec& v) {
      return gradient_5pt([&](const Vec& z) { return lag(z, v); }, q);
    };
    d.dL_dv = [lag](const Vec& q, const Vec& v) {
      return gradient_5pt([&](const Vec& z) { return lag(q, z); }, v);
    };
    return d;
  }
};

/// Midpoint discretization of the canonical Lagrangian Dirac system on T*Q:
///   (p_k + p_{k+1})/2 = dL/dqdot(qbar, v),  (p_{k+1} - p_k)/h = dL/dq(qbar, v),
/// with qbar = (q_k + q_{k+1})/2 and v = (q_{k+1} - q_k)/h. State x = (q, p).
inline StepResult lagrangian_midpoint_step(const LagrangianData& lag, double h, const Vec& xk,
                                           const SolverConfig& cfg) {
  detail::check_step_size(h);
  const Eigen::Index n = lag.dim;
  require_same_size(xk.size(), 2 * n, "lagrangian_midpoint_step state");
  const Vec q0 = xk.head(n);
  const Vec p0 = xk.tail(n);
  auto residual = [&](const Vec& z) {
    const Vec q1 = z.head(n);
    const Vec p1 = z.tail(n);
    const Vec qbar = 0.5 * (q0 + q1);
    const Vec v = (q1 - q0) / h;
    Vec r(2 * n);
    r.head(n) = 0.5 * (p0 + p1) - lag.dL_dv(qbar, v);
    r.tail(n) = (p1 - p0) / h - lag.dL_dq(qbar, v);
    return r;
  };
  const NewtonResult sol = newton_solve(residual, xk, cfg);
  StepResult out;
  out.next_state = sol.z;
  out.newton_iters = sol.iterations;
  out.residual_norm = sol.residual_norm;
  return out;
}

/// Explicit midpoint rule x + h f(x + h/2 f(x)).
inline Vec rk2_step(const VectorField& f, double h, const Vec& x) {
  return x + h * f(x + 0.5 * h * f(x));
}

using Stepper = std::function<StepResult(const Vec& x, int step_index)>;

struct Observables {
  ScalarField energy;
  /// Constraint residual of a state (used when a step does not report its own).
  ScalarField constraint;
};

struct Trajectory {
  double h = 0.0;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> energy;
  std::vector<double> constraint_residual;
  std::vector<int> newton_iters;
  std::vector<double> residual_norm;

  std::size_t size() const { return states.size(); }
};

/// A step failed; carries the index of the failing step and the partial trajectory.
class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, int step_index, Trajectory partial, bool numerical)
      : Error(what), step_index_(step_index), partial_(std::move(partial)), numerical_(numerical) {}
  int step_index() const noexcept { return step_index_; }
  const Trajectory& partial() const noexcept { return partial_; }
  /// True for solver and domain failures, false for argument errors.
  bool numerical() const noexcept { return numerical_; }

 private:
  int step_index_;
  Trajectory partial_;
  bool numerical_;
};

inline Trajectory run_trajectory(const Stepper& stepper, const Vec& x0, double h, int steps,
                                 const Observables& obs) {
  detail::check_step_size(h);
  if (steps < 0) throw ArgumentError("run_trajectory: steps must be >= 0");
  Trajectory tr;
  tr.h = h;
  auto record = [&](int k, const Vec& x, double cres, int iters, double rnorm) {
    tr.times.push_back(h * k);
    tr.states.push_back(x);
    tr.energy.push_back(obs.energy ? obs.energy(x) : std::nan(""));
    if (std::isnan(cres) && obs.constraint) cres = obs.constraint(x);
    tr.constraint_residual.push_back(std::isnan(cres) ? 0.0 : cres);
    tr.newton_iters.push_back(iters);
    tr.residual_norm.push_back(rnorm);
  };
  record(0, x0, std::nan(""), 0, 0.0);
  Vec x = x0;
  for (int k = 0; k < steps; ++k) {
    StepResult r;
    try {
      r = stepper(x, k);
    } catch (const ArgumentError& e) {
      throw StepFailure("step " + std::to_string(k + 1) + ": " + e.what(), k + 1, tr, false);
    } catch (const Error& e) {
      throw StepFailure("step " + std::to_string(k + 1) + ": " + e.what(), k + 1, tr, true);
    }
    if (!r.next_state.allFinite()) {
      throw StepFailure("step " + std::to_string(k + 1) + ": non-finite state", k + 1, tr, true);
    }
    x = r.next_state;
    record(k + 1, x, r.constraint_residual, r.newton_iters, r.residual_norm);
  }
  return tr;
}

}  // namespace diracflow

#endif  // DIRACFLOW_INTEGRATORS_HPP
