// Mechanical systems with linear nonholonomic constraints mu(q) qdot = 0 and
// Hamiltonian H(q, p) = 1/2 p^T g^{-1}(q) p + V(q). State x = (q, p).

#ifndef DIRACFLOW_MODELS_NONHOLONOMIC_HPP
#define DIRACFLOW_MODELS_NONHOLONOMIC_HPP

#include <functional>
#include <random>
#include <string>

#include "diracflow/constraint_algorithm.hpp"
#include "diracflow/core.hpp"
#include "diracflow/models/port_hamiltonian.hpp"
#include "diracflow/newton.hpp"

namespace diracflow::models {

/// 5-point derivative dF/dq^k of a matrix-valued function.
inline Mat matrix_partial(const MatrixField& f, const Vec& q, Eigen::Index k, double rel = 1e-3) {
  const double hk = rel * std::max(1.0, std::abs(q(k)));
  Vec qp = q;
  auto at = [&](double s) {
    qp(k) = q(k) + s;
    return f(qp);
  };
  return (-at(2 * hk) + 8.0 * at(hk) - 8.0 * at(-hk) + at(-2 * hk)) / (12.0 * hk);
}

struct NonholonomicSystem {
  std::string name = "nonholonomic";
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  MatrixField g;
  ScalarField V;
  VectorField dV;  // optional; numeric gradient of V otherwise
  MatrixField mu;  // m x n, rows mu^a

  Mat ginv(const Vec& q) const {
    const Mat gq = g(q);
    require_same_size(gq.rows(), n, "NonholonomicSystem metric");
    return gq.llt().solve(Mat::Identity(n, n));
  }

  Mat mu_at(const Vec& q) const {
    const Mat mq = mu(q);
    require_same_size(mq.rows(), m, "NonholonomicSystem mu rows");
    require_same_size(mq.cols(), n, "NonholonomicSystem mu cols");
    return mq;
  }

  double potential(const Vec& q) const { return V ? V(q) : 0.0; }

  Vec potential_gradient(const Vec& q) const {
    if (dV) return dV(q);
    if (V) return gradient_5pt(V, q);
    return Vec::Zero(n);
  }

  double energy(const Vec& q, const Vec& p) const {
    return 0.5 * p.dot(ginv(q) * p) + potential(q);
  }
  double energy(const Vec& x) const { return energy(x.head(n), x.tail(n)); }

  /// dH/dq = 1/2 p^T (d g^{-1}/dq^i) p + dV/dq^i.
  Vec energy_q(const Vec& q, const Vec& p) const {
    Vec out = potential_gradient(q);
    const MatrixField gi = [this](const Vec& z) { return ginv(z); };
    for (Eigen::Index i = 0; i < n; ++i) out(i) += 0.5 * p.dot(matrix_partial(gi, q, i) * p);
    return out;
  }

  Vec energy_gradient(const Vec& x) const {
    const Vec q = x.head(n);
    const Vec p = x.tail(n);
    return concat(energy_q(q, p), Vec(ginv(q) * p));
  }

  /// Phi(q, p) = mu g^{-1} p.
  Vec constraint(const Vec& q, const Vec& p) const { return mu_at(q) * (ginv(q) * p); }
  Vec constraint(const Vec& x) const { return constraint(x.head(n), x.tail(n)); }

  /// C = mu g^{-1} mu^T.
  Mat C(const Vec& q) const {
    const Mat mq = mu_at(q);
    return mq * ginv(q) * mq.transpose();
  }

  Eigen::LDLT<Mat> checked_C(const Vec& q) const {
    const Mat c = C(q);
    if (condition_number(c) > 1e12) {
      throw DomainError(name + ": constraint matrix C is singular (condition " +
                        std::to_string(condition_number(c)) + ")");
    }
    return c.ldlt();
  }

  /// P(a) = a - mu^T C^{-1} mu g^{-1} a.
  Vec project(const Vec& q, const Vec& a) const {
    const Mat mq = mu_at(q);
    return a - mq.transpose() * checked_C(q).solve(mq * (ginv(q) * a));
  }

  /// Closed-form multipliers of the nonholonomic equations on M0.
  Vec multipliers(const Vec& q, const Vec& p) const {
    const Mat gi = ginv(q);
    const Mat mq = mu_at(q);
    const Mat mg = mq * gi;
    const Vec qdot = gi * p;
    const MatrixField mgf = [this](const Vec& z) { return Mat(mu_at(z) * ginv(z)); };
    const MatrixField gif = [this](const Vec& z) { return ginv(z); };
    Vec rhs = mg * potential_gradient(q);
    Vec half_dg(n);
    for (Eigen::Index j = 0; j < n; ++j) half_dg(j) = 0.5 * p.dot(matrix_partial(gif, q, j) * p);
    rhs += mg * half_dg;
    for (Eigen::Index k = 0; k < n; ++k) rhs -= qdot(k) * (matrix_partial(mgf, q, k) * p);
    return checked_C(q).solve(rhs);
  }

  /// pdot = -dH/dq + mu^T lambda.
  Vec force(const Vec& q, const Vec& p, const Vec& lambda) const {
    return -energy_q(q, p) + mu_at(q).transpose() * lambda;
  }

  /// Equivalent closed port-Hamiltonian system: J canonical, B = [0; mu^T].
  PortHamiltonianSystem closed_port_hamiltonian() const {
    PortHamiltonianSystem ph;
    ph.n = 2 * n;
    ph.m = m;
    const Eigen::Index nn = n;
    ph.J = [nn](const Vec&) { return canonical_symplectic(nn); };
    const NonholonomicSystem self = *this;
    ph.B = [self](const Vec& x) {
      Mat b = Mat::Zero(2 * self.n, self.m);
      b.bottomRows(self.n) = self.mu_at(x.head(self.n)).transpose();
      return b;
    };
    ph.H = [self](const Vec& x) { return self.energy(x); };
    ph.dH = [self](const Vec& x) { return self.energy_gradient(x); };
    ph.mode = PortMode::closed;
    return ph;
  }

  /// Samples (q, P(p)) on M0 from a deterministic pseudo-random stream.
  std::vector<Vec> sample_points(int count, unsigned seed = 7, double scale = 1.0) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    std::vector<Vec> out;
    for (int s = 0; s < count; ++s) {
      Vec q(n), p(n);
      for (Eigen::Index i = 0; i < n; ++i) q(i) = dist(rng);
      for (Eigen::Index i = 0; i < n; ++i) p(i) = dist(rng);
      out.push_back(concat(q, project(q, p)));
    }
    return out;
  }

  constraint::ImplicitSystem implicit_system(int seeds = 4) const {
    constraint::ImplicitSystem s = ph_closed_implicit_system(closed_port_hamiltonian(), {}, name);
    for (const Vec& x : sample_points(seeds, 11)) {
      s.seeds.push_back(x + Vec::Constant(x.size(), 0.01));
    }
    return s;
  }
};

/// Nonholonomic particle on R^3: g = I, mu = (-y, 0, 1) (constraint zdot = y xdot),
/// V = k (x^2 + y^2).
inline NonholonomicSystem nonholonomic_particle(double k = 0.0) {
  NonholonomicSystem s;
  s.name = "nonholonomic_particle";
  s.n = 3;
  s.m = 1;
  s.g = [](const Vec&) { return Mat(Mat::Identity(3, 3)); };
  s.V = [k](const Vec& q) { return k * (q(0) * q(0) + q(1) * q(1)); };
  s.dV = [k](const Vec& q) { return Vec((Vec(3) << 2 * k * q(0), 2 * k * q(1), 0.0).finished()); };
  s.mu = [](const Vec& q) { return Mat((Mat(1, 3) << -q(1), 0.0, 1.0).finished()); };
  return s;
}

/// Particle multiplier by hand: lambda = (p_x p_y - 2 k x y) / (1 + y^2).
inline double particle_multiplier(double k, const Vec& q, const Vec& p) {
  const double y = q(1);
  return (-2.0 * k * q(0) * y + p(0) * p(1)) / (1.0 + y * y);
}

/// Method 1 residual (2n + m), divided-difference form with midpoint arguments.
inline Vec nonholonomic_method1_residual(const NonholonomicSystem& s, double h, const Vec& xk,
                                         const Vec& xk1, const Vec& lambda) {
  const Eigen::Index n = s.n;
  const Vec qm = 0.5 * (xk.head(n) + xk1.head(n));
  const Vec pm = 0.5 * (xk.tail(n) + xk1.tail(n));
  Vec r(2 * n + s.m);
  r.head(n) = (xk1.head(n) - xk.head(n)) / h - s.ginv(qm) * pm;
  r.segment(n, n) = (xk1.tail(n) - xk.tail(n)) / h - s.force(qm, pm, lambda);
  r.tail(s.m) = s.constraint(qm, pm);
  return r;
}

struct NonholonomicStep {
  Vec next;
  Vec lambda;
  int iterations = 0;
  double residual_norm = 0.0;
};

inline NonholonomicStep nonholonomic_method1_step(const NonholonomicSystem& s, double h,
                                                  const Vec& xk, const SolverConfig& cfg) {
  const Eigen::Index d = 2 * s.n;
  const NewtonResult sol = newton_solve(
      [&](const Vec& z) { return nonholonomic_method1_residual(s, h, xk, z.head(d), z.tail(s.m)); },
      concat(xk, Vec(Vec::Zero(s.m))), cfg);
  return {sol.z.head(d), sol.z.tail(s.m), sol.iterations, sol.residual_norm};
}

/// Internal-point residual of the projected-midpoint scheme. Unknowns (q, p, nu):
///   q_k = q - h/2 g^{-1}(q) p,
///   p_k = (p - h/2 F(q, p)) - mu(q_k)^T nu   (equivalent to p_k = P_{q_k}(...) on M0),
///   0 = mu(q) g^{-1}(q) p,
/// with F = -dH/dq + mu^T lambda(q, p).
inline Vec nonholonomic_method2_residual(const NonholonomicSystem& s, double h, const Vec& xk,
                                         const Vec& z) {
  const Eigen::Index n = s.n;
  const Vec qk = xk.head(n);
  const Vec pk = xk.tail(n);
  const Vec q = z.head(n);
  const Vec p = z.segment(n, n);
  const Vec nu = z.tail(s.m);
  const Vec f = s.force(q, p, s.multipliers(q, p));
  Vec r(2 * n + s.m);
  r.head(n) = q - 0.5 * h * (s.ginv(q) * p) - qk;
  r.segment(n, n) = p - 0.5 * h * f - s.mu_at(qk).transpose() * nu - pk;
  r.tail(s.m) = s.constraint(q, p);
  return r;
}

inline NonholonomicStep nonholonomic_method2_step(const NonholonomicSystem& s, double h,
                                                  const Vec& xk, const SolverConfig& cfg) {
  const Eigen::Index n = s.n;
  if (inf_norm(s.constraint(xk)) > std::max(1e3 * cfg.newton_tol, 1e-9)) {
    throw ArgumentError(s.name + ": Method 2 requires a starting point on M0");
  }
  const NewtonResult sol = newton_solve(
      [&](const Vec& z) { return nonholonomic_method2_residual(s, h, xk, z); },
      concat(xk, Vec(Vec::Zero(s.m))), cfg);
  const Vec q = sol.z.head(n);
  const Vec p = sol.z.segment(n, n);
  const Vec lambda = s.multipliers(q, p);
  const Vec f = s.force(q, p, lambda);
  const Vec q1 = q + 0.5 * h * (s.ginv(q) * p);
  const Vec p1 = s.project(q1, Vec(p + 0.5 * h * f));
  return {concat(q1, p1), lambda, sol.iterations, sol.residual_norm};
}

}  // namespace diracflow::models

#endif  // DIRACFLOW_MODELS_NONHOLONOMIC_HPP
