#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "diracflow/models/nonholonomic.hpp"
#include "diracflow/models/port_hamiltonian.hpp"
#include "diracflow/models/rigid_body.hpp"
#include "diracflow/models/vortices.hpp"

using namespace diracflow;
using namespace diracflow::models;

TEST(Vortices, BenchmarkEnergyAndVelocity) {
  const VortexSystem sys = VortexSystem::leapfrog();
  const Vec q = VortexSystem::leapfrog_initial_state();
  EXPECT_NEAR(sys.energy(q), -std::log(80.0) / std::numbers::pi, 1e-12);
  const Vec u = sys.velocity(q);
  const double s = 1.0 / (2.0 * std::numbers::pi);
  EXPECT_NEAR(u(0), 0.45 * s, 1e-14);  // x-velocity of vortex 1
  EXPECT_NEAR(u(4), -0.4 * s, 1e-14);  // y-velocity of vortex 1
}

TEST(Vortices, GradientsAndComplexForm) {
  const VortexSystem sys = VortexSystem::leapfrog();
  const Vec q = VortexSystem::leapfrog_initial_state() + Vec::LinSpaced(8, 0.0, 0.07);
  const Vec g = gradient_5pt([&](const Vec& z) { return sys.energy(z); }, q);
  EXPECT_LT(inf_norm(Vec(sys.energy_gradient(q) - g)), 1e-9);
  EXPECT_LT(inf_norm(Vec(sys.from_complex(sys.to_complex(q)) - q)), 0.0 + 1e-15);
  // Gamma_i zdot_i conj = f_i(z): compare the two field forms.
  const Eigen::VectorXcd f = sys.complex_field(sys.to_complex(q));
  const Vec v = sys.velocity(q);
  EXPECT_NEAR(f(0).real(), v(0), 1e-13);
  EXPECT_NEAR(f(0).imag(), -v(4), 1e-13);
}

TEST(Vortices, DalphaIsSkewAndEulerLagrangeVanishesOnFlow) {
  const VortexSystem sys = VortexSystem::leapfrog();
  const Mat w = sys.dalpha();
  EXPECT_LT(inf_norm(Mat(w + w.transpose())), 0.0 + 1e-15);
  EXPECT_EQ(numerical_rank(w), 8);
  const Vec q = VortexSystem::leapfrog_initial_state();
  EXPECT_LT(inf_norm(sys.euler_lagrange_residual(q, sys.velocity(q))), 1e-12);
}

TEST(Vortices, RejectsCoincidentVortices) {
  const VortexSystem sys = VortexSystem::leapfrog();
  Vec q = VortexSystem::leapfrog_initial_state();
  q(1) = q(0);
  q(5) = q(4);
  EXPECT_THROW(sys.check_distinct(q), DomainError);
  EXPECT_THROW(sys.energy(Vec::Zero(6)), DimensionError);
}

TEST(RigidBody, FieldPreservesCasimirAndEnergy) {
  const RigidBody rb;
  const Vec xi = (Vec(3) << 0.6, 0.0, 0.8).finished();
  const Vec f = rb.field(xi);
  EXPECT_NEAR(xi.dot(f), 0.0, 1e-15);
  EXPECT_NEAR(rb.energy_gradient(xi).dot(f), 0.0, 1e-15);
  EXPECT_LT(inf_norm(Vec(rb.bivector(xi) * rb.energy_gradient(xi) - f)), 1e-15);
  EXPECT_THROW(RigidBody(Eigen::Vector3d(1, -1, 2)), ArgumentError);
}

TEST(RigidBody, MidpointStepConservesBoth) {
  const RigidBody rb;
  Vec xi = (Vec(3) << 0.6, 0.0, 0.8).finished();
  const double h0 = rb.energy(xi);
  for (int k = 0; k < 200; ++k) xi = rb.step(0.2, xi, {}).z;
  EXPECT_NEAR(xi.norm(), 1.0, 1e-12);
  EXPECT_NEAR(rb.energy(xi), h0, 1e-12);
  EXPECT_THROW(rb.step_residual(0.1, xi, Vec(-xi)), DomainError);
}

TEST(PortHamiltonian, OpenPowerIdentityNonlinear) {
  const PortHamiltonianSystem ph = forced_oscillator(1.0);
  const auto rd = maps::midpoint_map();
  Vec x = (Vec(2) << 0.8, -0.1).finished();
  for (int k = 0; k < 20; ++k) {
    const Vec u = Vec::Constant(1, std::sin(0.3 * k));
    const PortStep st = ph_open_step(ph, rd, 0.1, x, u, {});
    const OpenResidual r = ph_open_discrete_residual(ph, rd, 0.1, x, st.next, u);
    EXPECT_NEAR(0.1 * r.y.dot(u), r.dH.dot(r.increment), 1e-10);
    x = st.next;
  }
}

TEST(PortHamiltonian, StructuresClassify) {
  const PortHamiltonianSystem ph = forced_oscillator(0.5);
  const Vec x = (Vec(2) << 0.3, 0.4).finished();
  EXPECT_EQ(dirac::classify(open_structure(ph, x)), dirac::SubspaceKind::coisotropic);
  EXPECT_EQ(dirac::classify(closed_structure(ph, x)), dirac::SubspaceKind::dirac);
}

TEST(PortHamiltonian, ValidateRejectsNonSkewJ) {
  PortHamiltonianSystem ph = forced_oscillator();
  ph.J = [](const Vec&) { return Mat(Mat::Identity(2, 2)); };
  EXPECT_THROW(ph.validate({Vec::Zero(2)}), ArgumentError);
}

TEST(Nonholonomic, ParticleData) {
  const NonholonomicSystem nh = nonholonomic_particle(0.5);
  const Vec q = (Vec(3) << 0.2, 0.5, -0.1).finished();
  const Vec p = nh.project(q, (Vec(3) << 1.0, 0.3, -0.4).finished());
  EXPECT_LT(inf_norm(nh.constraint(q, p)), 1e-15);
  EXPECT_NEAR(nh.C(q)(0, 0), 1.0 + 0.25, 1e-15);
  EXPECT_NEAR(nh.multipliers(q, p)(0), particle_multiplier(0.5, q, p), 1e-10);
  // The multiplier keeps the constraint tangent: d/dt (pz - y px) = 0.
  const Vec f = nh.force(q, p, nh.multipliers(q, p));
  const Vec qdot = nh.ginv(q) * p;
  EXPECT_NEAR(f(2) - qdot(1) * p(0) - q(1) * f(0), 0.0, 1e-10);
}

TEST(Nonholonomic, MethodsStayOnConstraint) {
  const NonholonomicSystem nh = nonholonomic_particle(0.5);
  const Vec x0 = (Vec(6) << 0.0, 0.5, 0.0, 1.0, 0.5, 0.5).finished();
  Vec x1 = x0;
  Vec x2 = x0;
  for (int k = 0; k < 50; ++k) {
    const NonholonomicStep a = nonholonomic_method1_step(nh, 0.05, x1, {});
    EXPECT_LT(inf_norm(nh.constraint(Vec(0.5 * (x1 + a.next)))), 1e-11);
    x1 = a.next;
    x2 = nonholonomic_method2_step(nh, 0.05, x2, {}).next;
    EXPECT_LT(inf_norm(nh.constraint(x2)), 1e-11);
  }
  EXPECT_LT(inf_norm(Vec(x1 - x2)), 1e-2);
  Vec off = x0;
  off(5) += 0.1;
  EXPECT_THROW(nonholonomic_method2_step(nh, 0.05, off, {}), ArgumentError);
}
