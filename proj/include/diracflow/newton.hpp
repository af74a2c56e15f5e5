// Damped Newton iteration with finite-difference Jacobians. Every scheme in the
// library is implicit, so all per-step residuals go through newton_solve.

#ifndef DIRACFLOW_NEWTON_HPP
#define DIRACFLOW_NEWTON_HPP

#include <cmath>
#include <sstream>
#include <string>

#include "diracflow/core.hpp"

namespace diracflow {

enum class Damping { none, backtracking };

struct SolverConfig {
  double newton_tol = 1e-12;  // on the residual infinity norm
  int max_iter = 50;
  double fd_step = 1e-6;
  Damping damping = Damping::backtracking;
  int max_halvings = 8;
  /// Take minimum-norm steps when the Jacobian is rank deficient (underdetermined
  /// projections) instead of reporting a singular system.
  bool allow_rank_deficient = false;

  void validate() const {
    if (!(newton_tol > 0.0)) throw ArgumentError("SolverConfig: newton_tol must be > 0");
    if (max_iter < 1) throw ArgumentError("SolverConfig: max_iter must be >= 1");
    if (!(fd_step > 0.0)) throw ArgumentError("SolverConfig: fd_step must be > 0");
    if (max_halvings < 0) throw ArgumentError("SolverConfig: max_halvings must be >= 0");
  }
};

struct NewtonResult {
  Vec z;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Solves residual(z) = 0 from guess. Square systems use Newton steps; systems with
/// more equations than unknowns use Gauss-Newton (least-squares) steps, which keep
/// quadratic convergence on consistent systems.
inline NewtonResult newton_solve(const VectorField& residual, const Vec& guess,
                                 const SolverConfig& cfg = {}) {
  cfg.validate();
  NewtonResult out;
  out.z = guess;
  Vec r = residual(out.z);
  if (r.size() < out.z.size() && !cfg.allow_rank_deficient) {
    throw DimensionError("newton_solve: fewer equations than unknowns");
  }
  auto check_finite = [&](const Vec& v, int iter) {
    if (!v.allFinite()) {
      throw SolverError("newton_solve: non-finite residual", iter);
    }
  };
  check_finite(r, 0);
  out.residual_norm = inf_norm(r);
  Mat jac;
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    if (out.residual_norm <= cfg.newton_tol) return out;

    jac = jacobian_central(residual, out.z, cfg.fd_step);
    Vec step;
    if (cfg.allow_rank_deficient) {
      const Eigen::CompleteOrthogonalDecomposition<Mat> cod(jac);
      step = -cod.solve(r);
    } else {
      Eigen::ColPivHouseholderQR<Mat> qr(jac);
      qr.setThreshold(1e-13);
      if (qr.rank() < jac.cols()) {
        throw SolverError("newton_solve: singular Jacobian", iter, out.residual_norm,
                          condition_number(jac));
      }
      step = -qr.solve(r);
    }
    if (!step.allFinite()) {
      throw SolverError("newton_solve: non-finite Newton step", iter, out.residual_norm,
                        condition_number(jac));
    }

    double scale = 1.0;
    Vec z_try = out.z + step;
    Vec r_try = residual(z_try);
    if (cfg.damping == Damping::backtracking) {
      const double merit = r.norm();
      int halvings = 0;
      while ((!r_try.allFinite() || r_try.norm() >= merit) && halvings < cfg.max_halvings) {
        scale *= 0.5;
        z_try = out.z + scale * step;
        r_try = residual(z_try);
        ++halvings;
      }
    }
    check_finite(r_try, iter + 1);
    out.z = std::move(z_try);
    r = std::move(r_try);
    out.residual_norm = inf_norm(r);
    out.iterations = iter + 1;
  }
  if (out.residual_norm <= cfg.newton_tol) return out;
  std::ostringstream msg;
  msg << "newton_solve: no convergence after " << cfg.max_iter << " iterations (residual "
      << out.residual_norm << ")";
  throw SolverError(msg.str(), out.iterations, out.residual_norm,
                    jac.size() ? condition_number(jac) : std::nan(""));
}

}  // namespace diracflow

#endif  // DIRACFLOW_NEWTON_HPP
