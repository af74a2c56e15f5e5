#include <gtest/gtest.h>

#include "diracflow/dirac_linear.hpp"

using namespace diracflow;
using namespace diracflow::dirac;

namespace {

Mat skew3() {
  Mat w(3, 3);
  w << 0, 1.5, -0.3, -1.5, 0, 2.0, 0.3, -2.0, 0;
  return w;
}

}  // namespace

TEST(Pairing, IsSymmetricBilinear) {
  const PairedVector p1(Vec::Unit(2, 0), Vec::Unit(2, 1));
  const PairedVector p2(Vec::Unit(2, 1), Vec::Unit(2, 1));
  EXPECT_DOUBLE_EQ(pairing(p1, p2), 1.0);
  EXPECT_DOUBLE_EQ(pairing(p1, p2), pairing(p2, p1));
  EXPECT_THROW(PairedVector(Vec::Zero(2), Vec::Zero(3)), DimensionError);
}

TEST(Subspace, RejectsDependentBasis) {
  Mat b(4, 2);
  b << 1, 2, 0, 0, 1, 2, 0, 0;
  EXPECT_THROW(Subspace(b, 2), ArgumentError);
  EXPECT_EQ(Subspace::span_of(b, 2).dim(), 1);
}

TEST(Subspace, OrthogonalComplementDimension) {
  Mat b(6, 2);
  b.setZero();
  b(0, 0) = 1;
  b(4, 1) = 1;
  const Subspace u(b, 3);
  EXPECT_EQ(orthogonal_complement(u).dim(), 4);
  EXPECT_EQ(orthogonal_complement(Subspace::zero(3)).dim(), 6);
  EXPECT_EQ(orthogonal_complement(Subspace::full(3)).dim(), 0);
}

TEST(Classify, DistinguishesKinds) {
  Mat iso(4, 1);
  iso << 1, 0, 0, 0;
  EXPECT_EQ(classify(Subspace(iso, 2)), SubspaceKind::isotropic);
  EXPECT_EQ(classify(Subspace::full(2)), SubspaceKind::coisotropic);
  Mat mixed(4, 1);
  mixed << 1, 0, 1, 0;  // pairs to 2 with itself
  EXPECT_EQ(classify(Subspace(mixed, 2)), SubspaceKind::none);
  EXPECT_EQ(to_string(SubspaceKind::dirac), "dirac");
}

TEST(Constructors, TwoFormAndBivectorGraphsAreDirac) {
  const Mat w = skew3();
  const LinearDiracStructure d = from_two_form(w);
  const Vec v = (Vec(3) << 1, -2, 0.5).finished();
  EXPECT_TRUE(d.contains(PairedVector(v, w * v)));
  EXPECT_FALSE(d.contains(PairedVector(v, -w * v)));
  const LinearDiracStructure db = from_bivector(w);
  EXPECT_TRUE(db.contains(PairedVector(w * v, v)));
  EXPECT_THROW(from_two_form(Mat::Identity(3, 3)), ArgumentError);
}

TEST(Constructors, SubspaceAndCodistribution) {
  Mat f(3, 1);
  f << 1, 1, 0;
  const LinearDiracStructure d = from_subspace(f);
  EXPECT_TRUE(d.contains(PairedVector(f.col(0), Vec::Unit(3, 2))));
  EXPECT_FALSE(d.contains(PairedVector(f.col(0), Vec::Unit(3, 0))));
  const LinearDiracStructure dc = from_codistribution(skew3(), f);
  EXPECT_EQ(dc.subspace().dim(), 3);
}

TEST(Constructors, PairRoundTrip) {
  Mat f(3, 2);
  f << 1, 0, 0, 1, 1, 1;
  Mat w(2, 2);
  w << 0, 0.7, -0.7, 0;
  const LinearDiracStructure d = from_pair(f, w);
  const FormOnSubspace rec = recover_pair(d);
  ASSERT_EQ(rec.f_basis.cols(), 2);
  EXPECT_TRUE(same_span(rec.f_basis, f));
  // The recovered structure rebuilds the same subspace.
  EXPECT_TRUE(from_pair(rec.f_basis, rec.omega).subspace().same_as(d.subspace()));
}

TEST(Constructors, NonDiracSubspaceRejected) {
  EXPECT_THROW(LinearDiracStructure(Subspace::full(2)), ArgumentError);
}
