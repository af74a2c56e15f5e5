// Numerical checks of structural properties of discrete flows.

#ifndef DIRACFLOW_DIAGNOSTICS_HPP
#define DIRACFLOW_DIAGNOSTICS_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "diracflow/core.hpp"
#include "diracflow/models/vortices.hpp"
#include "diracflow/newton.hpp"

namespace diracflow::diagnostics {

/// A two-form w(u, v) = u^T W(x) v, constant or state dependent.
class TwoForm {
 public:
  explicit TwoForm(MatrixField at) : at_(std::move(at)) {}
  static TwoForm constant(Mat w) {
    return TwoForm([w = std::move(w)](const Vec&) { return w; });
  }

  Mat at(const Vec& x) const {
    Mat w = at_(x);
    if (w.rows() != w.cols() || w.rows() != x.size()) {
      throw DimensionError("TwoForm: matrix does not match the state dimension");
    }
    if (inf_norm(Mat(w + w.transpose())) > 1e-12) throw ArgumentError("TwoForm: not skew");
    return w;
  }

 private:
  MatrixField at_;
};

struct FlowProbe {
  VectorField step;  // x_k -> x_{k+1}
  Vec base;
  double fd_step = 1e-5;
};

/// Solver settings for maps probed by finite differences: the solve must be far
/// more accurate than the probe step.
inline SolverConfig probing_config(SolverConfig cfg = {}) {
  cfg.newton_tol = std::min(cfg.newton_tol, 1e-14);
  cfg.max_iter = std::max(cfg.max_iter, 100);
  return cfg;
}

/// ||A^T W(x_{k+1}) A - W(x_k)||_inf with A the central-difference Jacobian of the step.
inline double symplectic_check(const FlowProbe& probe, const TwoForm& form) {
  const Mat a = jacobian_central(probe.step, probe.base, probe.fd_step);
  const Vec next = probe.step(probe.base);
  return inf_norm(Mat(a.transpose() * form.at(next) * a - form.at(probe.base)));
}

/// d alpha-preservation residual of the vortex theta-scheme on the chart q, at the
/// four-vortex benchmark configuration.
inline double theta_counterexample(double theta, double h = 0.5, double fd_step = 1e-5,
                                   const SolverConfig& cfg = probing_config()) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw ArgumentError("theta_counterexample: theta must lie in [0, 1]");
  }
  const models::VortexSystem sys = models::VortexSystem::leapfrog();
  FlowProbe probe;
  probe.base = models::VortexSystem::leapfrog_initial_state();
  probe.fd_step = fd_step;
  probe.step = [&](const Vec& q) { return models::vortex::method2_step(sys, theta, h, q, cfg).z; };
  return symplectic_check(probe, TwoForm::constant(sys.dalpha()));
}

struct DriftSummary {
  std::vector<double> series;  // H(t_k) - H(t_0)
  double max_abs = 0.0;
  double slope = 0.0;  // least-squares slope against t
  double intercept = 0.0;
  double final_abs = 0.0;
};

inline DriftSummary energy_drift(const std::vector<double>& times, const std::vector<double>& h) {
  if (times.empty() || times.size() != h.size()) {
    throw ArgumentError("energy_drift: need matching nonempty time and energy series");
  }
  DriftSummary out;
  const double h0 = h.front();
  double st = 0.0, sd = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double d = h[k] - h0;
    out.series.push_back(d);
    out.max_abs = std::max(out.max_abs, std::abs(d));
    st += times[k];
    sd += d;
  }
  out.final_abs = std::abs(out.series.back());
  const double nn = static_cast<double>(h.size());
  const double tm = st / nn;
  const double dm = sd / nn;
  double stt = 0.0, std_ = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    stt += (times[k] - tm) * (times[k] - tm);
    std_ += (times[k] - tm) * (out.series[k] - dm);
  }
  out.slope = stt > 0.0 ? std_ / stt : 0.0;
  out.intercept = dm - out.slope * tm;
  return out;
}

struct OrderFit {
  double slope = 0.0;
  bool monotone = true;
  std::vector<double> errors;
};

/// Least-squares slope of log(error) against log(h).
inline OrderFit convergence_order(const std::vector<double>& hs, const std::vector<double>& errors) {
  if (hs.size() < 3 || hs.size() != errors.size()) {
    throw ArgumentError("convergence_order: need at least 3 step sizes with matching errors");
  }
  OrderFit out;
  out.errors = errors;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (!(hs[i] > 0.0) || !(errors[i] > 0.0)) {
      throw ArgumentError("convergence_order: step sizes and errors must be positive");
    }
    lx.push_back(std::log(hs[i]));
    ly.push_back(std::log(errors[i]));
  }
  for (std::size_t i = 1; i < hs.size(); ++i) {
    const bool shrinking_h = hs[i] < hs[i - 1];
    if ((errors[i] < errors[i - 1]) != shrinking_h) out.monotone = false;
  }
  const double nn = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / nn;
    my += ly[i] / nn;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  out.slope = sxy / sxx;
  return out;
}

/// Errors at final time T of `solve(h)` against `reference` for each h, then the fit.
inline OrderFit convergence_order(const std::function<Vec(double)>& solve, const Vec& reference,
                                  const std::vector<double>& hs) {
  std::vector<double> errors;
  for (double h : hs) errors.push_back(inf_norm(Vec(solve(h) - reference)));
  return convergence_order(hs, errors);
}

}  // namespace diracflow::diagnostics

#endif  // DIRACFLOW_DIAGNOSTICS_HPP
