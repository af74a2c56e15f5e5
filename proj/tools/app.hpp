// Run configuration, model registry and command implementations behind the
// diracflow executable.

#ifndef DIRACFLOW_TOOLS_APP_HPP
#define DIRACFLOW_TOOLS_APP_HPP

#include <algorithm>
#include <charconv>
#include <limits>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "diracflow/constraint_algorithm.hpp"
#include "diracflow/diagnostics.hpp"
#include "diracflow/dirac_linear.hpp"
#include "diracflow/discretization_maps.hpp"
#include "diracflow/integrators.hpp"
#include "diracflow/models/nonholonomic.hpp"
#include "diracflow/models/port_hamiltonian.hpp"
#include "diracflow/models/rigid_body.hpp"
#include "diracflow/models/vortices.hpp"

namespace diracflow::app {

using json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kNumerical = 3 };

// ---------------------------------------------------------------------------
// Formatting

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Configuration

struct MapSpec {
  std::string name;
  double theta = 0.5;
};

struct RunConfig {
  std::string model;
  json params = json::object();
  std::string method;
  MapSpec map;
  double h = 0.0;
  int steps = 0;
  SolverConfig solver;
  Vec initial_state;
  std::vector<Vec> inputs;
  std::string output;
};

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

inline double get_number(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  if (!j.at(key).is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
  return j.at(key).get<double>();
}

inline Vec to_vec(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Mat to_mat(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a nonempty nested array");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(where + ": ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(where + ": entries must be numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

inline json from_vec(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json from_mat(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(from_vec(m.row(r).transpose()));
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Registry: models, default parameters and the method/map compatibility table.

inline const std::map<std::string, std::map<std::string, std::vector<std::string>>>&
compatibility() {
  static const std::map<std::string, std::map<std::string, std::vector<std::string>>> table = {
      {"vortices",
       {{"method1", {"midpoint"}},
        {"method2", {"midpoint", "theta"}},
        {"lagrangian_midpoint", {"midpoint"}},
        {"rk2", {"none"}}}},
      {"rigid_body", {{"method1", {"sphere_midpoint"}}, {"rk2", {"none"}}}},
      {"ph_open", {{"method1", {"midpoint", "theta"}}, {"rk2", {"none"}}}},
      {"ph_closed",
       {{"method1", {"midpoint", "theta"}}, {"method2", {"midpoint"}}, {"rk2", {"none"}}}},
      {"nonholonomic_particle",
       {{"method1", {"midpoint"}}, {"method2", {"midpoint"}}, {"rk2", {"none"}}}},
  };
  return table;
}

inline json default_params(const std::string& model) {
  if (model == "vortices") return {{"gamma", {1.0, 1.0, -1.0, -1.0}}};
  if (model == "rigid_body") return {{"inertia", {1.0, 2.0, 3.0}}};
  if (model == "ph_open") {
    return {{"J", {{0.0, 1.0}, {-1.0, 0.0}}}, {"B", {{0.0}, {1.0}}}, {"Q", {{1.0, 0.0}, {0.0, 1.0}}}};
  }
  if (model == "ph_closed") {
    // two unit oscillators (q1, q2, p1, p2) whose momenta are forced equal
    return {{"J",
             {{0.0, 0.0, 1.0, 0.0}, {0.0, 0.0, 0.0, 1.0}, {-1.0, 0.0, 0.0, 0.0}, {0.0, -1.0, 0.0, 0.0}}},
            {"B", {{0.0}, {0.0}, {1.0}, {-1.0}}},
            {"Q", {{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}, {0.0, 0.0, 1.0, 0.0}, {0.0, 0.0, 0.0, 1.0}}}};
  }
  if (model == "nonholonomic_particle") return {{"potential", 0.0}};
  throw ConfigError("unknown model '" + model + "'");
}

inline Vec default_initial_state(const std::string& model, const json& params) {
  if (model == "vortices") {
    const Vec gamma = detail::to_vec(params.at("gamma"), "gamma");
    if (gamma.size() == 4) return models::VortexSystem::leapfrog_initial_state();
    throw ConfigError("vortices: initial_state is required unless there are four vortices");
  }
  if (model == "rigid_body") return (Vec(3) << 0.6, 0.0, 0.8).finished();
  if (model == "ph_open") {
    const Eigen::Index n = detail::to_mat(params.at("J"), "J").rows();
    Vec x = Vec::Zero(n);
    x(0) = 1.0;
    return x;
  }
  if (model == "ph_closed") {
    const Eigen::Index n = detail::to_mat(params.at("J"), "J").rows();
    if (n == 4) return (Vec(4) << 1.0, 0.0, 0.5, 0.5).finished();
    throw ConfigError("ph_closed: initial_state is required for non-default J");
  }
  if (model == "nonholonomic_particle") return (Vec(6) << 0.0, 0.5, 0.0, 1.0, 0.5, 0.5).finished();
  throw ConfigError("unknown model '" + model + "'");
}

inline std::string default_map(const std::string& model, const std::string& method) {
  if (method == "rk2") return "none";
  if (model == "rigid_body") return "sphere_midpoint";
  return "midpoint";
}

inline RunConfig parse_config(const json& j) {
  detail::require_keys(j, {"model", "method", "map", "h", "steps", "solver", "initial_state", "inputs",
                           "output", "theta"},
                       "config");
  RunConfig c;
  if (!j.contains("model")) throw ConfigError("config: missing 'model'");
  const json& jm = j.at("model");
  if (jm.is_string()) {
    c.model = jm.get<std::string>();
  } else {
    detail::require_keys(jm, {"name", "params"}, "model");
    if (!jm.contains("name") || !jm.at("name").is_string()) throw ConfigError("model: missing 'name'");
    c.model = jm.at("name").get<std::string>();
    if (jm.contains("params")) c.params = jm.at("params");
  }
  if (!compatibility().count(c.model)) throw ConfigError("unknown model '" + c.model + "'");
  json params = default_params(c.model);
  if (!c.params.is_object()) throw ConfigError("model.params must be an object");
  for (const auto& [k, v] : c.params.items()) {
    if (!params.contains(k)) throw ConfigError("model " + c.model + ": unknown parameter '" + k + "'");
    params[k] = v;
  }
  c.params = params;

  if (!j.contains("method") || !j.at("method").is_string()) throw ConfigError("config: missing 'method'");
  c.method = j.at("method").get<std::string>();
  const auto& methods = compatibility().at(c.model);
  if (!methods.count(c.method)) {
    throw ConfigError("method '" + c.method + "' is not supported for model '" + c.model + "'");
  }

  c.map.name = default_map(c.model, c.method);
  if (j.contains("map")) {
    const json& jmap = j.at("map");
    if (jmap.is_string()) {
      c.map.name = jmap.get<std::string>();
    } else {
      detail::require_keys(jmap, {"name", "params", "theta"}, "map");
      if (jmap.contains("name")) c.map.name = jmap.at("name").get<std::string>();
      if (jmap.contains("theta")) c.map.theta = detail::get_number(jmap, "theta", "map");
      if (jmap.contains("params")) {
        detail::require_keys(jmap.at("params"), {"theta"}, "map.params");
        if (jmap.at("params").contains("theta")) {
          c.map.theta = detail::get_number(jmap.at("params"), "theta", "map.params");
        }
      }
    }
  }
  if (j.contains("theta")) c.map.theta = detail::get_number(j, "theta", "config");
  const auto& maps_ok = methods.at(c.method);
  if (std::find(maps_ok.begin(), maps_ok.end(), c.map.name) == maps_ok.end()) {
    throw ConfigError("map '" + c.map.name + "' is not supported for model '" + c.model +
                      "' with method '" + c.method + "'");
  }
  if (c.map.name == "midpoint") c.map.theta = 0.5;
  if (!(c.map.theta >= 0.0 && c.map.theta <= 1.0)) throw ConfigError("map theta must lie in [0, 1]");

  c.h = detail::get_number(j, "h", "config");
  if (!(c.h > 0.0) || !std::isfinite(c.h)) throw ConfigError("config: h must be > 0");
  if (!j.contains("steps") || !j.at("steps").is_number_integer()) {
    throw ConfigError("config: 'steps' must be an integer");
  }
  c.steps = j.at("steps").get<int>();
  if (c.steps < 0) throw ConfigError("config: steps must be >= 0");

  if (j.contains("solver")) {
    const json& js = j.at("solver");
    detail::require_keys(js, {"newton_tol", "max_iter", "fd_step", "damping", "max_halvings"}, "solver");
    if (js.contains("newton_tol")) c.solver.newton_tol = detail::get_number(js, "newton_tol", "solver");
    if (js.contains("max_iter")) c.solver.max_iter = js.at("max_iter").get<int>();
    if (js.contains("fd_step")) c.solver.fd_step = detail::get_number(js, "fd_step", "solver");
    if (js.contains("max_halvings")) c.solver.max_halvings = js.at("max_halvings").get<int>();
    if (js.contains("damping")) {
      const std::string d = js.at("damping").get<std::string>();
      if (d == "none") {
        c.solver.damping = Damping::none;
      } else if (d == "backtracking") {
        c.solver.damping = Damping::backtracking;
      } else {
        throw ConfigError("solver.damping must be 'none' or 'backtracking'");
      }
    }
  }
  try {
    c.solver.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }

  c.initial_state = j.contains("initial_state") ? detail::to_vec(j.at("initial_state"), "initial_state")
                                                : default_initial_state(c.model, c.params);
  if (j.contains("inputs")) {
    if (c.model != "ph_open") throw ConfigError("'inputs' applies to model ph_open only");
    if (!j.at("inputs").is_array()) throw ConfigError("inputs must be an array");
    for (const json& u : j.at("inputs")) c.inputs.push_back(detail::to_vec(u, "inputs entry"));
  }
  if (j.contains("output")) c.output = j.at("output").get<std::string>();
  return c;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"name", c.model}, {"params", c.params}};
  j["method"] = c.method;
  j["map"] = {{"name", c.map.name}, {"params", {{"theta", c.map.theta}}}};
  j["h"] = c.h;
  j["steps"] = c.steps;
  j["solver"] = {{"newton_tol", c.solver.newton_tol},
                 {"max_iter", c.solver.max_iter},
                 {"fd_step", c.solver.fd_step},
                 {"damping", c.solver.damping == Damping::none ? "none" : "backtracking"},
                 {"max_halvings", c.solver.max_halvings}};
  j["initial_state"] = detail::from_vec(c.initial_state);
  if (!c.inputs.empty()) {
    json u = json::array();
    for (const Vec& v : c.inputs) u.push_back(detail::from_vec(v));
    j["inputs"] = u;
  }
  if (!c.output.empty()) j["output"] = c.output;
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Simulations

/// Everything needed to run and probe one configured scheme.
struct Simulation {
  std::vector<std::string> columns;
  Vec x0;  // internal initial state
  Stepper stepper;
  Observables obs;
  VectorField observe;  // internal state -> output columns
  json self_start;      // null unless a self-start was used
  /// Canonical or structural two-form preserved by the one-step map, when defined.
  std::optional<Mat> form;
  std::string form_name;
  /// One-step map with a caller-chosen solver (for finite-difference probing).
  std::function<Vec(const Vec&, const SolverConfig&)> step_map;
};

namespace detail {

inline std::vector<std::string> indexed(const std::string& stem, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= n; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

inline Vec identity(const Vec& x) { return x; }

inline maps::DiscretizationMap rn_map(const MapSpec& m) { return maps::theta_map(m.theta); }

inline models::PortHamiltonianSystem linear_ph(const json& params, models::PortMode mode) {
  const Mat jm = to_mat(params.at("J"), "J");
  const Mat q = to_mat(params.at("Q"), "Q");
  const Mat b = to_mat(params.at("B"), "B");
  const Eigen::Index n = jm.rows();
  if (jm.cols() != n || q.rows() != n || q.cols() != n || b.rows() != n) {
    throw ConfigError("port-Hamiltonian parameters: J, Q must be n x n and B n x m");
  }
  if (inf_norm(Mat(jm + jm.transpose())) > 1e-10) throw ConfigError("J must be skew-symmetric");
  if (inf_norm(Mat(q - q.transpose())) > 1e-12) throw ConfigError("Q must be symmetric");
  if (numerical_rank(b) != b.cols()) throw ConfigError("B must have full column rank");
  models::PortHamiltonianSystem ph;
  ph.n = n;
  ph.m = b.cols();
  ph.J = [jm](const Vec&) { return jm; };
  ph.B = [b](const Vec&) { return b; };
  ph.H = [q](const Vec& x) { return 0.5 * x.dot(q * x); };
  ph.dH = [q](const Vec& x) { return Vec(q * x); };
  ph.mode = mode;
  return ph;
}

inline Simulation vortex_simulation(const RunConfig& c) {
  const models::VortexSystem sys(to_vec(c.params.at("gamma"), "gamma"));
  const Eigen::Index d = sys.config_dim();
  if (c.initial_state.size() != d) {
    throw ConfigError("vortices: initial_state needs " + std::to_string(d) + " entries (x..., y...)");
  }
  sys.check_distinct(c.initial_state);
  Simulation s;
  s.columns = indexed("x", sys.count());
  for (const auto& y : indexed("y", sys.count())) s.columns.push_back(y);
  s.obs.energy = [sys, d](const Vec& x) { return sys.energy(x.head(d)); };
  s.observe = [d](const Vec& x) { return Vec(x.head(d)); };
  const double h = c.h;
  const SolverConfig cfg = c.solver;
  const VectorField field = [sys](const Vec& q) { return sys.velocity(q); };

  if (c.method == "rk2") {
    s.x0 = c.initial_state;
    s.stepper = [field, h](const Vec& q, int) {
      StepResult r;
      r.next_state = rk2_step(field, h, q);
      return r;
    };
    s.step_map = [field, h](const Vec& q, const SolverConfig&) { return rk2_step(field, h, q); };
    return s;
  }
  if (c.method == "method2") {
    const double theta = c.map.theta;
    s.x0 = c.initial_state;
    s.stepper = [sys, theta, h, cfg](const Vec& q, int) {
      const NewtonResult sol = models::vortex::method2_step(sys, theta, h, q, cfg);
      StepResult r;
      r.next_state = sol.z;
      r.newton_iters = sol.iterations;
      r.residual_norm = sol.residual_norm;
      r.constraint_residual = 0.0;  // p = alpha(q) holds by construction on the chart
      return r;
    };
    s.step_map = [sys, theta, h](const Vec& q, const SolverConfig& sc) {
      return models::vortex::method2_step(sys, theta, h, q, sc).z;
    };
    s.form = sys.dalpha();
    s.form_name = "dalpha";
    return s;
  }
  // method1 and lagrangian_midpoint share the one-step (q, p) form; both need a
  // starting momentum, obtained from an RK2 self-start q_1.
  const Vec q0 = c.initial_state;
  const Vec q1 = rk2_step(field, h, q0);
  const Vec p0 = models::vortex::method1_initial_momentum(sys, h, q0, q1);
  s.x0 = concat(q0, p0);
  s.self_start = {{"method", "rk2"},
                  {"reason", "two-step position scheme is not self-starting"},
                  {"q1", from_vec(q1)},
                  {"p0", from_vec(p0)}};
  auto midpoint_constraint = [sys, d](const Vec& x0, const Vec& x1) {
    const Vec qm = 0.5 * (x0.head(d) + x1.head(d));
    const Vec pm = 0.5 * (x0.tail(d) + x1.tail(d));
    return inf_norm(Vec(pm - sys.alpha(qm)));
  };
  if (c.method == "method1") {
    auto step = [sys, h, d, q1](const Vec& x, const SolverConfig& sc, int k) {
      const Vec guess = k == 0 ? q1 : Vec(x.head(d));
      return models::vortex::method1_step(sys, h, x.head(d), x.tail(d), sc, guess);
    };
    s.stepper = [step, cfg, midpoint_constraint](const Vec& x, int k) {
      const auto res = step(x, cfg, k);
      StepResult r;
      r.next_state = concat(res.q, res.p);
      r.newton_iters = res.iterations;
      r.residual_norm = res.residual_norm;
      r.constraint_residual = midpoint_constraint(x, r.next_state);
      return r;
    };
    s.step_map = [step](const Vec& x, const SolverConfig& sc) {
      const auto res = step(x, sc, 1);
      return concat(res.q, res.p);
    };
  } else {
    LagrangianData lag;
    lag.dim = d;
    const Mat da = sys.alpha_jacobian();
    lag.dL_dq = [sys, da](const Vec& q, const Vec& v) {
      return Vec(da.transpose() * v - sys.dynamics_gradient(q));
    };
    lag.dL_dv = [sys](const Vec& q, const Vec&) { return sys.alpha(q); };
    s.stepper = [lag, h, cfg, midpoint_constraint](const Vec& x, int) {
      StepResult r = lagrangian_midpoint_step(lag, h, x, cfg);
      r.constraint_residual = midpoint_constraint(x, r.next_state);
      return r;
    };
    s.step_map = [lag, h](const Vec& x, const SolverConfig& sc) {
      return lagrangian_midpoint_step(lag, h, x, sc).next_state;
    };
  }
  s.form = canonical_symplectic(d);
  s.form_name = "canonical";
  return s;
}

inline Simulation rigid_body_simulation(const RunConfig& c) {
  const Vec in = to_vec(c.params.at("inertia"), "inertia");
  if (in.size() != 3) throw ConfigError("rigid_body: inertia needs 3 entries");
  if (!(in.minCoeff() > 0.0)) throw ConfigError("rigid_body: inertia entries must be > 0");
  const models::RigidBody rb(Eigen::Vector3d(in(0), in(1), in(2)));
  if (c.initial_state.size() != 3) throw ConfigError("rigid_body: initial_state needs 3 entries");
  if (std::abs(c.initial_state.norm() - 1.0) > 1e-10) {
    throw ConfigError("rigid_body: initial_state must be a unit vector");
  }
  Simulation s;
  s.columns = {"xi1", "xi2", "xi3"};
  s.x0 = c.initial_state;
  s.obs.energy = [rb](const Vec& x) { return rb.energy(x); };
  s.obs.constraint = [](const Vec& x) { return std::abs(x.norm() - 1.0); };
  s.observe = identity;
  const double h = c.h;
  const SolverConfig cfg = c.solver;
  if (c.method == "rk2") {
    const VectorField f = [rb](const Vec& x) { return rb.field(x); };
    s.stepper = [f, h](const Vec& x, int) {
      StepResult r;
      r.next_state = rk2_step(f, h, x);
      return r;
    };
    s.step_map = [f, h](const Vec& x, const SolverConfig&) { return rk2_step(f, h, x); };
    return s;
  }
  const maps::DiscretizationMap rd = maps::sphere_midpoint_map();
  const constraint::ImplicitSystem sys = rb.implicit_system();
  s.stepper = [sys, rd, h, cfg](const Vec& x, int) { return method1_step(sys, rd, h, x, cfg); };
  s.step_map = [sys, rd, h](const Vec& x, const SolverConfig& sc) {
    return method1_step(sys, rd, h, x, sc).next_state;
  };
  return s;
}

inline Simulation ph_simulation(const RunConfig& c) {
  const bool closed = c.model == "ph_closed";
  const models::PortHamiltonianSystem ph =
      linear_ph(c.params, closed ? models::PortMode::closed : models::PortMode::open);
  if (c.initial_state.size() != ph.n) {
    throw ConfigError(c.model + ": initial_state needs " + std::to_string(ph.n) + " entries");
  }
  Simulation s;
  s.columns = indexed("x", ph.n);
  s.x0 = c.initial_state;
  s.obs.energy = ph.H;
  s.observe = identity;
  const double h = c.h;
  const SolverConfig cfg = c.solver;
  const maps::DiscretizationMap rd = rn_map(c.map);
  const Mat jm = ph.J_at(c.initial_state);
  if (std::abs(jm.determinant()) > 1e-12) {
    s.form = Mat(jm.inverse());
    s.form_name = "inverse_J";
  }

  if (!closed) {
    if (!c.inputs.empty() && static_cast<int>(c.inputs.size()) < c.steps) {
      throw ConfigError("ph_open: inputs has fewer entries than steps");
    }
    for (const Vec& u : c.inputs) {
      if (u.size() != ph.m) throw ConfigError("ph_open: each input needs " + std::to_string(ph.m) + " entries");
    }
    const std::vector<Vec> inputs = c.inputs;
    const Eigen::Index m = ph.m;
    auto input_at = [inputs, m](int k) {
      return inputs.empty() ? Vec(Vec::Zero(m)) : inputs[static_cast<std::size_t>(k)];
    };
    if (c.method == "rk2") {
      s.stepper = [ph, h, input_at](const Vec& x, int k) {
        const Vec u = input_at(k);
        const VectorField f = [&](const Vec& z) {
          return Vec(ph.J_at(z) * ph.dH_at(z) + ph.B_at(z) * u);
        };
        StepResult r;
        r.next_state = rk2_step(f, h, x);
        r.aux = u;
        return r;
      };
      s.step_map = [ph, h](const Vec& x, const SolverConfig&) {
        const VectorField f = [&](const Vec& z) { return Vec(ph.J_at(z) * ph.dH_at(z)); };
        return rk2_step(f, h, x);
      };
      return s;
    }
    s.stepper = [ph, rd, h, cfg, input_at](const Vec& x, int k) {
      const models::PortStep ps = models::ph_open_step(ph, rd, h, x, input_at(k), cfg);
      StepResult r;
      r.next_state = ps.next;
      r.aux = ps.u;
      r.outputs = ps.y;
      r.newton_iters = ps.iterations;
      r.residual_norm = ps.residual_norm;
      return r;
    };
    s.step_map = [ph, rd, h](const Vec& x, const SolverConfig& sc) {
      return models::ph_open_step(ph, rd, h, x, Vec::Zero(ph.m), sc).next;
    };
    return s;
  }

  s.obs.constraint = [ph](const Vec& x) { return inf_norm(ph.output(x)); };
  const constraint::ImplicitSystem isys = models::ph_closed_implicit_system(ph, {c.initial_state});
  if (c.method == "method1") {
    s.stepper = [ph, rd, h, cfg](const Vec& x, int) {
      const models::PortStep ps = models::ph_closed_step(ph, rd, h, x, cfg);
      StepResult r;
      r.next_state = ps.next;
      r.aux = ps.u;
      r.newton_iters = ps.iterations;
      r.residual_norm = ps.residual_norm;
      const maps::TangentVector t = rd.inverse({x, ps.next});
      r.constraint_residual = inf_norm(ph.output(t.base));
      return r;
    };
    s.step_map = [ph, rd, h](const Vec& x, const SolverConfig& sc) {
      return models::ph_closed_step(ph, rd, h, x, sc).next;
    };
    return s;
  }
  const constraint::StabilizedSystem stab = constraint::run(isys, 10);
  if (!stab.terminated) throw ConfigError("ph_closed: constraint algorithm did not terminate");
  if (inf_norm(stab.constraint_values(c.initial_state)) > 1e-9) {
    throw ConfigError("ph_closed: initial_state is not on the final constraint set");
  }
  s.obs.constraint = [stab](const Vec& x) { return inf_norm(stab.constraint_values(x)); };
  const auto cs = stab.final_constraints;
  const VectorField projector = [cs](const Vec& x) {
    auto p = constraint::project_onto(cs, x);
    if (!p) throw DomainError("ph_closed: projection onto the constraint set failed");
    return *p;
  };
  const VectorField cvals = [cs](const Vec& x) { return constraint::constraint_values(cs, x); };
  const maps::DiscretizationMap rdf = maps::projected_map(rd, projector, cvals, {c.initial_state});
  if (c.method == "rk2") {
    s.stepper = [stab, h](const Vec& x, int) {
      StepResult r;
      r.next_state = rk2_step([&](const Vec& z) { return stab.vector_field(z); }, h, x);
      return r;
    };
    s.step_map = [stab, h](const Vec& x, const SolverConfig&) {
      return rk2_step([&](const Vec& z) { return stab.vector_field(z); }, h, x);
    };
    return s;
  }
  s.stepper = [stab, rdf, h, cfg](const Vec& x, int) { return method2_step(stab, rdf, h, x, cfg); };
  s.step_map = [stab, rdf, h](const Vec& x, const SolverConfig& sc) {
    return method2_step(stab, rdf, h, x, sc).next_state;
  };
  return s;
}

inline Simulation nonholonomic_simulation(const RunConfig& c) {
  const double k = get_number(c.params, "potential", "nonholonomic_particle params");
  const models::NonholonomicSystem nh = models::nonholonomic_particle(k);
  if (c.initial_state.size() != 6) {
    throw ConfigError("nonholonomic_particle: initial_state needs 6 entries (x, y, z, px, py, pz)");
  }
  Simulation s;
  s.columns = {"x", "y", "z", "px", "py", "pz"};
  s.x0 = c.initial_state;
  s.obs.energy = [nh](const Vec& x) { return nh.energy(x); };
  s.obs.constraint = [nh](const Vec& x) { return inf_norm(nh.constraint(x)); };
  s.observe = identity;
  const double h = c.h;
  const SolverConfig cfg = c.solver;
  if (c.method != "method1" && inf_norm(nh.constraint(c.initial_state)) > 1e-9) {
    throw ConfigError("nonholonomic_particle: initial_state violates the constraint pz = y px");
  }
  if (c.method == "rk2") {
    const VectorField f = [nh](const Vec& x) {
      const Vec q = x.head(3);
      const Vec p = x.tail(3);
      return concat(Vec(nh.ginv(q) * p), nh.force(q, p, nh.multipliers(q, p)));
    };
    s.stepper = [f, h](const Vec& x, int) {
      StepResult r;
      r.next_state = rk2_step(f, h, x);
      return r;
    };
    s.step_map = [f, h](const Vec& x, const SolverConfig&) { return rk2_step(f, h, x); };
    return s;
  }
  if (c.method == "method1") {
    s.stepper = [nh, h, cfg](const Vec& x, int) {
      const models::NonholonomicStep st = models::nonholonomic_method1_step(nh, h, x, cfg);
      StepResult r;
      r.next_state = st.next;
      r.aux = st.lambda;
      r.newton_iters = st.iterations;
      r.residual_norm = st.residual_norm;
      const Vec xm = 0.5 * (x + st.next);
      r.constraint_residual = inf_norm(nh.constraint(xm));
      return r;
    };
    s.step_map = [nh, h](const Vec& x, const SolverConfig& sc) {
      return models::nonholonomic_method1_step(nh, h, x, sc).next;
    };
    return s;
  }
  s.stepper = [nh, h, cfg](const Vec& x, int) {
    const models::NonholonomicStep st = models::nonholonomic_method2_step(nh, h, x, cfg);
    StepResult r;
    r.next_state = st.next;
    r.aux = st.lambda;
    r.newton_iters = st.iterations;
    r.residual_norm = st.residual_norm;
    return r;
  };
  s.step_map = [nh, h](const Vec& x, const SolverConfig& sc) {
    return models::nonholonomic_method2_step(nh, h, x, sc).next;
  };
  return s;
}

}  // namespace detail

inline Simulation build_simulation(const RunConfig& c) {
  try {
    if (c.model == "vortices") return detail::vortex_simulation(c);
    if (c.model == "rigid_body") return detail::rigid_body_simulation(c);
    if (c.model == "ph_open" || c.model == "ph_closed") return detail::ph_simulation(c);
    if (c.model == "nonholonomic_particle") return detail::nonholonomic_simulation(c);
  } catch (const json::exception& e) {
    throw ConfigError(c.model + ": " + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(c.model + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(c.model + ": " + e.what());
  }
  throw ConfigError("unknown model '" + c.model + "'");
}

// ---------------------------------------------------------------------------
// Output

inline void write_csv(std::ostream& out, const Simulation& sim, const Trajectory& tr) {
  out << "step,t";
  for (const auto& c : sim.columns) out << ',' << c;
  out << ",H,constraint_residual,newton_iters\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out << k << ',' << format_double(tr.times[k]);
    const Vec y = sim.observe(tr.states[k]);
    for (Eigen::Index i = 0; i < y.size(); ++i) out << ',' << format_double(y(i));
    out << ',' << format_double(tr.energy[k]) << ',' << format_double(tr.constraint_residual[k]) << ','
        << tr.newton_iters[k] << '\n';
  }
}

struct RunOutcome {
  Trajectory trajectory;
  std::optional<json> error;  // {step, message, kind}
  int exit_code = kOk;
};

inline RunOutcome run(const RunConfig& c, const Simulation& sim) {
  RunOutcome out;
  try {
    out.trajectory = run_trajectory(sim.stepper, sim.x0, c.h, c.steps, sim.obs);
  } catch (const StepFailure& f) {
    out.trajectory = f.partial();
    out.error = json{{"step", f.step_index()},
                     {"message", f.what()},
                     {"kind", f.numerical() ? "numerical" : "argument"}};
    out.exit_code = f.numerical() ? kNumerical : kUsage;
  }
  return out;
}

inline json meta_json(const RunConfig& c, const Simulation& sim, const RunOutcome& r) {
  json m;
  m["config"] = to_json(c);
  m["columns"] = sim.columns;
  m["self_start"] = sim.self_start;
  m["rows"] = r.trajectory.size();
  m["steps_completed"] = r.trajectory.size() == 0 ? 0 : r.trajectory.size() - 1;
  m["error"] = r.error ? *r.error : json(nullptr);
  return m;
}

inline int thread_cap() {
  int cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("DIRACFLOW_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) cap = v;
    } catch (const std::exception&) {
      throw ConfigError("DIRACFLOW_THREADS must be a positive integer");
    }
  }
  return cap;
}

/// Runs jobs [0, n) with at most `cap` concurrent threads; results are stored by index.
template <class Fn>
void parallel_for(std::size_t n, int cap, Fn&& fn) {
  std::size_t next = 0;
  while (next < n) {
    std::vector<std::thread> pool;
    for (int t = 0; t < cap && next < n; ++t, ++next) pool.emplace_back(fn, next);
    for (auto& th : pool) th.join();
  }
}

// ---------------------------------------------------------------------------
// Checks

struct CheckReport {
  json body;
  bool pass = false;
};

inline const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = {
      "symplectic", "dalpha", "energy", "constraints", "order", "dirac", "constraint-algorithm"};
  return names;
}

struct CheckOptions {
  std::optional<double> threshold;
  std::optional<double> expect_order;
};

namespace detail {

inline CheckReport report(const std::string& test, double residual, double threshold, bool pass,
                          json extra = json::object()) {
  CheckReport r;
  r.body = {{"test", test}, {"residual", residual}, {"threshold", threshold}, {"pass", pass}};
  for (const auto& [k, v] : extra.items()) r.body[k] = v;
  r.pass = pass;
  return r;
}

inline constraint::ImplicitSystem implicit_for(const RunConfig& c) {
  if (c.model == "vortices") {
    return models::vortex_S0(models::VortexSystem(to_vec(c.params.at("gamma"), "gamma")));
  }
  if (c.model == "nonholonomic_particle") {
    return models::nonholonomic_particle(c.params.at("potential").get<double>()).implicit_system();
  }
  if (c.model == "ph_closed") {
    const auto ph = linear_ph(c.params, models::PortMode::closed);
    std::vector<Vec> seeds = {c.initial_state};
    for (int s = 1; s <= 3; ++s) seeds.push_back(c.initial_state + Vec::Constant(ph.n, 0.1 * s));
    return models::ph_closed_implicit_system(ph, seeds);
  }
  if (c.model == "ph_open") return models::ph_open_implicit_system(linear_ph(c.params, models::PortMode::open));
  return models::RigidBody().implicit_system();
}

}  // namespace detail

inline CheckReport run_check(const std::string& test, const RunConfig& c, const CheckOptions& opt) {
  const Simulation sim = build_simulation(c);
  if (test == "symplectic" || test == "dalpha") {
    if (!sim.form) throw ConfigError(test + ": no preserved two-form for this model/method");
    if (test == "dalpha" && sim.form_name != "dalpha") {
      throw ConfigError("dalpha: applies to vortices with method2");
    }
    const SolverConfig probe_cfg = diagnostics::probing_config(c.solver);
    diagnostics::FlowProbe probe;
    probe.base = sim.x0;
    probe.fd_step = 1e-5;
    const auto step_map = sim.step_map;
    probe.step = [step_map, probe_cfg](const Vec& x) { return step_map(x, probe_cfg); };
    const double res = diagnostics::symplectic_check(probe, diagnostics::TwoForm::constant(*sim.form));
    const double thr = opt.threshold.value_or(1e-6);
    return detail::report(test, res, thr, res <= thr, {{"form", sim.form_name}});
  }
  if (test == "energy") {
    const RunOutcome r = run(c, sim);
    if (r.error) throw SolverError(r.error->at("message").get<std::string>());
    const auto d = diagnostics::energy_drift(r.trajectory.times, r.trajectory.energy);
    const double thr = opt.threshold.value_or(1e-7);
    return detail::report(test, std::abs(d.slope), thr, std::abs(d.slope) <= thr,
                          {{"max_abs_drift", d.max_abs}, {"slope", d.slope}});
  }
  if (test == "constraints") {
    const RunOutcome r = run(c, sim);
    if (r.error) throw SolverError(r.error->at("message").get<std::string>());
    double worst = 0.0;
    for (double v : r.trajectory.constraint_residual) worst = std::max(worst, v);
    const double thr = opt.threshold.value_or(10.0 * c.solver.newton_tol);
    return detail::report(test, worst, thr, worst <= thr);
  }
  if (test == "order") {
    if (c.steps < 1) throw ConfigError("order: steps must be >= 1");
    const double t_end = c.h * c.steps;
    auto final_state = [&](double h, int steps) {
      RunConfig cc = c;
      cc.h = h;
      cc.steps = steps;
      if (!cc.inputs.empty()) cc.inputs.assign(static_cast<std::size_t>(steps), c.inputs.front());
      const Simulation s2 = build_simulation(cc);
      const RunOutcome r = run(cc, s2);
      if (r.error) throw SolverError(r.error->at("message").get<std::string>());
      return s2.observe(r.trajectory.states.back());
    };
    std::vector<double> hs;
    std::vector<double> errors;
    const Vec reference = final_state(c.h / 128.0, c.steps * 128);
    for (int level = 0; level < 4; ++level) {
      const int factor = 1 << level;
      hs.push_back(c.h / factor);
      errors.push_back(inf_norm(Vec(final_state(c.h / factor, c.steps * factor) - reference)));
    }
    const auto fit = diagnostics::convergence_order(hs, errors);
    const double expect = opt.expect_order.value_or(2.0);
    const double thr = opt.threshold.value_or(0.1);
    const bool pass = fit.monotone && std::abs(fit.slope - expect) <= thr;
    return detail::report(test, std::abs(fit.slope - expect), thr, pass,
                          {{"order", fit.slope},
                           {"expected", expect},
                           {"monotone", fit.monotone},
                           {"t_end", t_end},
                           {"errors", fit.errors}});
  }
  if (test == "dirac") {
    if (c.model != "ph_open" && c.model != "ph_closed") throw ConfigError("dirac: applies to ph models");
    const bool closed = c.model == "ph_closed";
    const auto ph = detail::linear_ph(c.params, closed ? models::PortMode::closed : models::PortMode::open);
    const std::string expected = closed ? "dirac" : "coisotropic";
    int mismatches = 0;
    std::string seen;
    for (int s = 0; s < 4; ++s) {
      const Vec x = c.initial_state + Vec::Constant(ph.n, 0.25 * s);
      const auto sub = closed ? models::closed_structure(ph, x) : models::open_structure(ph, x);
      seen = dirac::to_string(dirac::classify(sub));
      if (seen != expected) ++mismatches;
    }
    return detail::report(test, mismatches, 0.0, mismatches == 0,
                          {{"kind", seen}, {"expected", expected}});
  }
  if (test == "constraint-algorithm") {
    const auto sys = detail::implicit_for(c);
    const auto stab = constraint::run(sys, 10);
    double worst = 0.0;
    if (!stab.final_constraints.empty()) {
      for (const Vec& x : stab.history.back().feasible_samples) {
        worst = std::max(worst, stab.tangency_defect(x));
      }
    }
    const double thr = opt.threshold.value_or(1e-8);
    return detail::report(test, worst, thr, stab.terminated && worst <= thr,
                          {{"levels", stab.levels}, {"terminated", stab.terminated}});
  }
  throw ConfigError("unknown check '" + test + "'");
}

inline json constraint_report(const RunConfig& c) {
  const auto sys = detail::implicit_for(c);
  const auto stab = constraint::run(sys, 10);
  json levels = json::array();
  for (const auto& l : stab.history) {
    levels.push_back({{"index", l.index},
                      {"constraints", l.constraints.size()},
                      {"multiplier_rank", l.multiplier_rank},
                      {"new_constraints", l.new_constraints},
                      {"rank_ambiguous", l.rank_ambiguous}});
  }
  double worst = 0.0;
  if (!stab.final_constraints.empty()) {
    for (const Vec& x : stab.history.back().feasible_samples) {
      worst = std::max(worst, stab.tangency_defect(x));
    }
  }
  return {{"model", c.model},
          {"levels", stab.levels},
          {"terminated", stab.terminated},
          {"final_constraints", stab.final_constraints.size()},
          {"multiplier_rank", stab.multiplier_rank},
          {"tangency_defect", worst},
          {"history", levels}};
}

struct CompareResult {
  std::vector<std::string> labels;
  std::vector<double> times;
  std::vector<std::vector<double>> drift;  // per config
  std::optional<std::string> error;
  int exit_code = kOk;
};

/// Configs must agree on model, parameters, h, steps and initial state.
inline void check_comparable(const std::vector<RunConfig>& cs) {
  if (cs.empty()) throw ConfigError("compare: no configs given");
  const RunConfig& a = cs.front();
  for (const RunConfig& b : cs) {
    if (b.model != a.model || b.params != a.params) throw ConfigError("compare: configs differ in model");
    if (b.h != a.h || b.steps != a.steps) throw ConfigError("compare: configs differ in h or steps");
    if (b.initial_state.size() != a.initial_state.size() || b.initial_state != a.initial_state) {
      throw ConfigError("compare: configs differ in initial_state");
    }
  }
}

inline std::vector<std::string> compare_labels(const std::vector<RunConfig>& cs) {
  std::vector<std::string> labels;
  for (const RunConfig& c : cs) labels.push_back(c.method);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto dup = std::count(labels.begin(), labels.end(), cs[i].method);
    if (dup > 1) labels[i] = cs[i].method + "_" + cs[i].map.name + "_" + format_double(cs[i].map.theta);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int seen = 0;
    for (std::size_t j = 0; j < i; ++j) seen += labels[j] == labels[i];
    if (seen > 0) labels[i] += "_" + std::to_string(seen + 1);
  }
  return labels;
}

inline CompareResult compare(const std::vector<RunConfig>& cs, int threads) {
  check_comparable(cs);
  std::vector<Simulation> sims;
  for (const RunConfig& c : cs) sims.push_back(build_simulation(c));
  std::vector<RunOutcome> outcomes(cs.size());
  parallel_for(cs.size(), threads, [&](std::size_t i) { outcomes[i] = run(cs[i], sims[i]); });
  CompareResult out;
  out.labels = compare_labels(cs);
  std::size_t rows = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    rows = std::min(rows, outcomes[i].trajectory.size());
    if (outcomes[i].error && !out.error) {
      out.error = out.labels[i] + ": " + outcomes[i].error->at("message").get<std::string>();
      out.exit_code = outcomes[i].exit_code;
    }
  }
  if (rows == std::numeric_limits<std::size_t>::max()) rows = 0;
  for (std::size_t k = 0; k < rows; ++k) out.times.push_back(outcomes.front().trajectory.times[k]);
  for (const RunOutcome& o : outcomes) {
    std::vector<double> d;
    for (std::size_t k = 0; k < rows; ++k) d.push_back(o.trajectory.energy[k] - o.trajectory.energy[0]);
    out.drift.push_back(std::move(d));
  }
  return out;
}

inline void write_compare_csv(std::ostream& os, const CompareResult& r) {
  os << "step,t";
  for (const auto& l : r.labels) os << ',' << l;
  os << '\n';
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    os << k << ',' << format_double(r.times[k]);
    for (const auto& d : r.drift) os << ',' << format_double(d[k]);
    os << '\n';
  }
}

}  // namespace diracflow::app

#endif  // DIRACFLOW_TOOLS_APP_HPP
