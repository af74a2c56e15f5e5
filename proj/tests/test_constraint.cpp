#include <gtest/gtest.h>

#include "diracflow/constraint_algorithm.hpp"
#include "diracflow/models/nonholonomic.hpp"
#include "diracflow/models/port_hamiltonian.hpp"
#include "diracflow/models/vortices.hpp"

using namespace diracflow;
using namespace diracflow::constraint;

namespace {

// qdot = v, vdot = u, q = 0: the hidden constraint v = 0 appears at level 1 and
// the multiplier u is fixed at level 2.
ImplicitSystem double_integrator() {
  ImplicitSystem s;
  s.name = "double_integrator";
  s.dim = 2;
  s.num_ports = 1;
  s.drift = [](const Vec& x) { return Vec((Vec(2) << x(1), 0.0).finished()); };
  s.ports = [](const Vec&) { return Mat((Mat(2, 1) << 0.0, 1.0).finished()); };
  s.constraints = {[](const Vec& x) { return x(0); }};
  s.seeds = {(Vec(2) << 0.3, 0.5).finished(), (Vec(2) << -0.2, 1.0).finished()};
  return s;
}

}  // namespace

TEST(ConstraintAlgorithm, VorticesStabilizeAfterOneStep) {
  const auto sys = models::vortex_S0(models::VortexSystem::leapfrog());
  const StabilizedSystem stab = run(sys, 10);
  EXPECT_TRUE(stab.terminated);
  EXPECT_EQ(stab.levels, 1);
  EXPECT_EQ(stab.multiplier_rank, 8);
  EXPECT_EQ(stab.final_constraints.size(), 8u);
  for (const Vec& x : stab.history.back().feasible_samples) {
    EXPECT_LT(stab.tangency_defect(x), 1e-9);
  }
}

TEST(ConstraintAlgorithm, VortexClosedLoopFieldIsClassical) {
  const models::VortexSystem sys = models::VortexSystem::leapfrog();
  const StabilizedSystem stab = run(models::vortex_S0(sys), 10);
  const Vec q = models::VortexSystem::leapfrog_initial_state();
  const Vec x = concat(q, sys.alpha(q));
  const Vec f = stab.vector_field(x);
  EXPECT_LT(inf_norm(Vec(f.head(8) - sys.velocity(q))), 1e-9);
}

TEST(ConstraintAlgorithm, HiddenConstraintNeedsTwoLevels) {
  const StabilizedSystem stab = run(double_integrator(), 10);
  EXPECT_TRUE(stab.terminated);
  EXPECT_EQ(stab.levels, 2);
  EXPECT_EQ(stab.final_constraints.size(), 2u);
  EXPECT_EQ(stab.history[1].new_constraints, 1u);
  const Vec on = Vec::Zero(2);
  EXPECT_LT(inf_norm(stab.constraint_values(on)), 1e-12);
  const Vec off = (Vec(2) << 0.0, 0.4).finished();
  EXPECT_GT(inf_norm(stab.constraint_values(off)), 0.1);
}

TEST(ConstraintAlgorithm, NotTerminatedWithinBudget) {
  const StabilizedSystem stab = run(double_integrator(), 1);
  EXPECT_FALSE(stab.terminated);
  EXPECT_EQ(stab.levels, 1);
}

TEST(ConstraintAlgorithm, EmptyConstraintSetIsReported) {
  ImplicitSystem s;
  s.name = "inconsistent";
  s.dim = 1;
  s.drift = [](const Vec&) { return Vec(Vec::Zero(1)); };
  s.constraints = {[](const Vec& x) { return x(0); }, [](const Vec& x) { return x(0) - 1.0; }};
  s.seeds = {Vec::Constant(1, 0.3)};
  EXPECT_THROW(run(s, 5), EmptyConstraintSetError);
}

TEST(ConstraintAlgorithm, UnconstrainedSystemHasNoLevels) {
  ImplicitSystem s;
  s.name = "free";
  s.dim = 2;
  s.drift = [](const Vec& x) { return x; };
  const StabilizedSystem stab = run(s, 3);
  EXPECT_TRUE(stab.terminated);
  EXPECT_EQ(stab.levels, 0);
  EXPECT_THROW(run(s, 0), ArgumentError);
}

TEST(ConstraintAlgorithm, NonholonomicMultipliersMatchClosedForm) {
  const double k = 0.7;
  const models::NonholonomicSystem nh = models::nonholonomic_particle(k);
  const StabilizedSystem stab = run(nh.implicit_system(), 10);
  EXPECT_EQ(stab.levels, 1);
  for (const Vec& x : nh.sample_points(20, 3)) {
    const double expected = models::particle_multiplier(k, x.head(3), x.tail(3));
    EXPECT_NEAR(stab.multipliers(x)(0), expected, 1e-10);
    EXPECT_NEAR(nh.multipliers(x.head(3), x.tail(3))(0), expected, 1e-10);
  }
}

TEST(ConstraintAlgorithm, ProjectOnto) {
  const std::vector<ScalarField> cs = {[](const Vec& x) { return x.squaredNorm() - 1.0; }};
  const auto p = project_onto(cs, (Vec(2) << 2.0, 0.0).finished());
  ASSERT_TRUE(p.has_value());
  EXPECT_NEAR(p->norm(), 1.0, 1e-12);
}
