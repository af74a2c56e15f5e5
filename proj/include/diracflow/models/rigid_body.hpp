// Free rigid body restricted to the unit sphere: xidot = xi x I^{-1} xi with
// H(xi) = 1/2 xi . I^{-1} xi and the linear Poisson bivector Lambda_xi = hat(xi).

#ifndef DIRACFLOW_MODELS_RIGID_BODY_HPP
#define DIRACFLOW_MODELS_RIGID_BODY_HPP

#include "diracflow/constraint_algorithm.hpp"
#include "diracflow/core.hpp"
#include "diracflow/discretization_maps.hpp"
#include "diracflow/newton.hpp"

namespace diracflow::models {

class RigidBody {
 public:
  explicit RigidBody(Eigen::Vector3d inertia = Eigen::Vector3d(1.0, 2.0, 3.0)) : inertia_(inertia) {
    if (!(inertia_.minCoeff() > 0.0)) throw ArgumentError("RigidBody: principal moments must be > 0");
  }

  const Eigen::Vector3d& inertia() const { return inertia_; }

  Eigen::Vector3d inverse_inertia_times(const Vec& xi) const {
    require_same_size(xi.size(), 3, "RigidBody state");
    return xi.cwiseQuotient(Vec(inertia_));
  }

  double energy(const Vec& xi) const { return 0.5 * xi.dot(Vec(inverse_inertia_times(xi))); }

  Vec energy_gradient(const Vec& xi) const { return inverse_inertia_times(xi); }

  Vec field(const Vec& xi) const {
    const Eigen::Vector3d x = xi;
    return x.cross(inverse_inertia_times(xi));
  }

  /// Lambda_xi as a matrix acting on covectors: Lambda_xi dH = xi x dH.
  Mat bivector(const Vec& xi) const { return maps::so3::hat(Eigen::Vector3d(xi)); }

  /// Simplified midpoint residual
  /// (xi1 - xi0)/h - (xi0 + xi1)/2 x I^{-1}((xi0 + xi1)/||xi0 + xi1||).
  Vec step_residual(double h, const Vec& xi0, const Vec& xi1) const {
    const Eigen::Vector3d s = xi0 + xi1;
    const double ns = s.norm();
    if (ns < 1e-12) throw DomainError("rigid body step: antipodal states");
    const Eigen::Vector3d mid = 0.5 * s;
    const Eigen::Vector3d rhs = mid.cross(inverse_inertia_times(Vec(s / ns)));
    return (xi1 - xi0) / h - Vec(rhs);
  }

  NewtonResult step(double h, const Vec& xi0, const SolverConfig& cfg) const {
    return newton_solve([&](const Vec& xi1) { return step_residual(h, xi0, xi1); }, xi0, cfg);
  }

  /// The ODE as an implicit system on R^3 with no ports or constraints; used with
  /// the sphere midpoint map by the generic Method 1.
  constraint::ImplicitSystem implicit_system() const {
    constraint::ImplicitSystem s;
    s.name = "rigid_body";
    s.dim = 3;
    const RigidBody self = *this;
    s.drift = [self](const Vec& xi) { return self.field(xi); };
    s.hamiltonian = [self](const Vec& xi) { return self.energy(xi); };
    return s;
  }

 private:
  Eigen::Vector3d inertia_;
};

}  // namespace diracflow::models

#endif  // DIRACFLOW_MODELS_RIGID_BODY_HPP
