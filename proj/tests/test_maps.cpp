#include <gtest/gtest.h>

#include <cmath>

#include "diracflow/discretization_maps.hpp"

using namespace diracflow;
using namespace diracflow::maps;

namespace {

Vec unit(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v / v.norm();
}

Vec tangent_at(const Vec& x, const Vec& w) { return w - x * x.dot(w); }

}  // namespace

TEST(ThetaMap, Properties) {
  const Vec x = (Vec(3) << 0.3, -1.0, 2.0).finished();
  const Vec v = (Vec(3) << 0.1, 0.4, -0.2).finished();
  for (double th : {0.0, 0.3, 0.5, 1.0}) {
    const DiscretizationMap rd = theta_map(th);
    EXPECT_LT(d1_defect(rd, x), 1e-15);
    EXPECT_LT(d2_defect(rd, x, v), 1e-10);
    EXPECT_LT(roundtrip_defect(rd, {x, v}), 1e-14);
  }
  const PointPair pp = theta_map(0.25).forward({x, v});
  EXPECT_LT(inf_norm(Vec(pp.first - (x - 0.25 * v))), 1e-15);
  EXPECT_THROW(theta_map(1.5), ArgumentError);
  EXPECT_DOUBLE_EQ(midpoint_map().param("theta"), 0.5);
}

TEST(SphereMaps, StayOnSphereAndInvert) {
  const Vec x = unit({1, 2, 2});
  const Vec v = tangent_at(x, (Vec(3) << 0.2, -0.1, 0.3).finished());
  for (const DiscretizationMap& rd : {sphere_midpoint_map(), sphere_exp_map()}) {
    const PointPair pp = rd.forward({x, v});
    EXPECT_NEAR(pp.first.norm(), 1.0, 1e-14);
    EXPECT_NEAR(pp.second.norm(), 1.0, 1e-14);
    EXPECT_LT(d1_defect(rd, x), 1e-15);
    EXPECT_LT(d2_defect(rd, x, v), 1e-8);
    EXPECT_LT(roundtrip_defect(rd, {x, v}), 1e-12) << rd.name();
  }
  EXPECT_THROW(sphere_midpoint_map().forward({Vec::Ones(3), Vec::Zero(3)}), ArgumentError);
  EXPECT_THROW(sphere_midpoint_map().inverse({x, Vec(-x)}), DomainError);
  EXPECT_THROW(sphere_exp_map().inverse({x, x}), DomainError);
}

TEST(SphereExp, SmallAngleAccuracy) {
  const Vec x = unit({0, 0, 1});
  const Vec v = (Vec(3) << 1e-9, 0, 0).finished();
  const TangentVector back = sphere_exp_map().inverse(sphere_exp_map().forward({x, v}));
  EXPECT_NEAR(back.vel(0), 1e-9, 1e-22);
}

TEST(So3, ExpLogAndThetaMap) {
  const so3::Vec3 w(0.3, -0.2, 0.9);
  const so3::Mat3 r = so3::exp(so3::hat(w));
  EXPECT_TRUE(so3::is_rotation(r));
  EXPECT_LT(inf_norm(Mat(so3::log(r) - so3::hat(w))), 1e-13);
  EXPECT_THROW(so3::log(so3::exp(so3::hat(so3::Vec3(std::numbers::pi, 0, 0)))), DomainError);

  const DiscretizationMap rd = lie_group_theta_map(0.5);
  const Vec g = so3::flatten(r);
  const Vec vg = so3::flatten(r * so3::hat(so3::Vec3(0.1, 0.2, -0.05)));
  const PointPair pp = rd.forward({g, vg});
  EXPECT_TRUE(so3::is_rotation(so3::unflatten(pp.first)));
  EXPECT_TRUE(so3::is_rotation(so3::unflatten(pp.second)));
  EXPECT_LT(roundtrip_defect(rd, {g, vg}), 1e-12);
  EXPECT_LT(d1_defect(rd, g), 1e-15);
}

TEST(CotangentLift, GenericMidpointMatchesClosedForm) {
  const DiscretizationMap generic = cotangent_lift_generic(theta_map(0.5));
  const DiscretizationMap closed = cotangent_lift_midpoint();
  const Vec base = (Vec(4) << 0.2, -0.4, 1.1, 0.3).finished();
  const Vec vel = (Vec(4) << 0.5, 0.1, -0.7, 0.2).finished();
  const PointPair a = generic.forward({base, vel});
  const PointPair b = closed.forward({base, vel});
  EXPECT_LT(inf_norm(Vec(a.first - b.first)), 1e-8);
  EXPECT_LT(inf_norm(Vec(a.second - b.second)), 1e-8);
  EXPECT_LT(roundtrip_defect(generic, {base, vel}), 1e-8);
}

TEST(CotangentLift, GenericLiftIsSymplectic) {
  const Vec base = (Vec(2) << 0.4, -0.2).finished();
  const Vec vel = (Vec(2) << 0.3, 0.6).finished();
  for (double th : {0.0, 0.3, 0.7}) {
    const DiscretizationMap lift = cotangent_lift_generic(theta_map(th));
    EXPECT_LT(lift_symplecticity_defect(lift, {base, vel}), 1e-6) << th;
    EXPECT_LT(d1_defect(lift, base), 1e-10);
  }
}

TEST(LegendreInterchange, RoundTrip) {
  const Vec s = (Vec(8) << 1, 2, 3, 4, 5, 6, 7, 8).finished();
  const Vec img = legendre_interchange(s);
  // (q, p, mu_q, mu_p) -> (q, mu_p, -mu_q, p)
  EXPECT_DOUBLE_EQ(img(2), 7.0);
  EXPECT_DOUBLE_EQ(img(4), -5.0);
  EXPECT_LT(inf_norm(Vec(legendre_interchange_inverse(img) - s)), 0.0 + 1e-15);
  EXPECT_THROW(legendre_interchange(Vec::Zero(6)), DimensionError);
}

TEST(ProjectedMap, MapsIntoSubmanifold) {
  // M0 = {x_2 = x_1^2} in R^2, projection along x_2.
  const VectorField proj = [](const Vec& x) { return Vec((Vec(2) << x(0), x(0) * x(0)).finished()); };
  const VectorField c = [](const Vec& x) { return Vec(Vec::Constant(1, x(1) - x(0) * x(0))); };
  const Vec x0 = (Vec(2) << 0.5, 0.25).finished();
  const DiscretizationMap rd = projected_map(midpoint_map(), proj, c, {x0});
  const Vec v = (Vec(2) << 0.2, 0.2).finished();  // tangent: dx2 = 2 x1 dx1
  const PointPair pp = rd.forward({x0, v});
  EXPECT_LT(inf_norm(c(pp.first)), 1e-15);
  EXPECT_LT(inf_norm(c(pp.second)), 1e-15);
  const TangentVector back = rd.inverse(pp);
  EXPECT_LT(inf_norm(c(back.base)), 1e-10);
  const PointPair again = rd.forward(back);
  EXPECT_LT(inf_norm(Vec(again.second - pp.second)), 1e-10);
  EXPECT_THROW(projected_map(midpoint_map(), proj, c, {Vec(Vec::Ones(2) * 3.0)}), ArgumentError);
}
