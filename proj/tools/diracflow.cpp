// diracflow command-line front end.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "app.hpp"

namespace fs = std::filesystem;
using namespace diracflow;
using app::json;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string test;
  std::vector<std::string> configs;
  bool dump_config = false;
  std::optional<double> threshold;
  std::optional<double> expect;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
}

int cmd_simulate(const Options& o) {
  app::RunConfig c = app::load_config(o.config);
  if (!o.out.empty()) c.output = o.out;
  if (o.dump_config) {
    std::cout << app::to_json(c).dump(2) << '\n';
    return app::kOk;
  }
  if (c.output.empty()) throw ConfigError("simulate: no output path (--out or config 'output')");
  const app::Simulation sim = app::build_simulation(c);
  const app::RunOutcome r = app::run(c, sim);
  std::ostringstream csv;
  app::write_csv(csv, sim, r.trajectory);
  write_file(c.output, csv.str());
  write_file(c.output + ".meta.json", app::meta_json(c, sim, r).dump(2) + "\n");
  if (r.error) {
    std::cerr << "diracflow: " << r.error->at("message").get<std::string>() << " (partial output written)\n";
  }
  return r.exit_code;
}

int cmd_check(const Options& o) {
  const app::RunConfig c = app::load_config(o.config);
  if (o.dump_config) {
    std::cout << app::to_json(c).dump(2) << '\n';
    return app::kOk;
  }
  const auto& names = app::check_names();
  if (std::find(names.begin(), names.end(), o.test) == names.end()) {
    throw ConfigError("unknown check '" + o.test + "'");
  }
  const app::CheckReport rep = app::run_check(o.test, c, {o.threshold, o.expect});
  std::cout << rep.body.dump() << '\n';
  return rep.pass ? app::kOk : app::kCheckFailed;
}

int cmd_compare(const Options& o) {
  std::vector<app::RunConfig> cs;
  for (const auto& p : o.configs) cs.push_back(app::load_config(p));
  const app::CompareResult r = app::compare(cs, app::thread_cap());
  std::ostringstream csv;
  app::write_compare_csv(csv, r);
  write_file(o.out, csv.str());
  if (r.error) {
    std::cerr << "diracflow: " << *r.error << " (partial output written)\n";
    return r.exit_code;
  }
  return app::kOk;
}

int cmd_constraint(const Options& o) {
  const app::RunConfig c = app::load_config(o.config);
  if (o.dump_config) {
    std::cout << app::to_json(c).dump(2) << '\n';
    return app::kOk;
  }
  const json rep = app::constraint_report(c);
  std::cout << rep.dump(2) << '\n';
  return rep.at("terminated").get<bool>() ? app::kOk : app::kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"diracflow: structure-preserving integrators for implicit Hamiltonian systems"};
  cli.require_subcommand(1);
  Options o;

  auto* sim = cli.add_subcommand("simulate", "Run one configuration and write a trajectory CSV");
  sim->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", o.out, "Output CSV path");
  sim->add_flag("--dump-config", o.dump_config, "Print the effective configuration and exit");

  auto* chk = cli.add_subcommand("check", "Run a structural diagnostic and print a JSON report");
  chk->add_option("test", o.test, "symplectic|dalpha|energy|constraints|order|dirac|constraint-algorithm")
      ->required();
  chk->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  chk->add_option("--threshold", o.threshold, "Override the pass threshold");
  chk->add_option("--expect", o.expect, "Expected convergence order (order check)");
  chk->add_flag("--dump-config", o.dump_config, "Print the effective configuration and exit");

  auto* cmp = cli.add_subcommand("compare", "Energy drift H(t) - H(0) of several methods in one CSV");
  cmp->add_option("--configs", o.configs, "JSON run configurations")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", o.out, "Output CSV path")->required();

  auto* con = cli.add_subcommand("constraint", "Run the constraint algorithm and print its report");
  con->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  con->add_flag("--dump-config", o.dump_config, "Print the effective configuration and exit");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? app::kOk : app::kUsage;
  }

  try {
    if (*sim) return cmd_simulate(o);
    if (*chk) return cmd_check(o);
    if (*cmp) return cmd_compare(o);
    return cmd_constraint(o);
  } catch (const ConfigError& e) {
    std::cerr << "diracflow: " << e.what() << '\n';
    return app::kUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "diracflow: " << e.what() << '\n';
    return app::kUsage;
  } catch (const DimensionError& e) {
    std::cerr << "diracflow: " << e.what() << '\n';
    return app::kUsage;
  } catch (const Error& e) {
    std::cerr << "diracflow: numerical failure: " << e.what() << '\n';
    return app::kNumerical;
  } catch (const json::exception& e) {
    std::cerr << "diracflow: " << e.what() << '\n';
    return app::kUsage;
  }
}
