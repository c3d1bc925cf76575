#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nullext/cli.hpp"

namespace {

// flags shared by every subcommand; applied on top of the config file
struct Overrides {
  std::string config, metric, suite, field, function, out, csv;
  double m = -1, a = -1, step = -1, tol = -1, theta0 = -1;
  int grid = -1, jet_order = -1;
  long long seed = -1;
  std::vector<double> eps;
  bool timing = false;
};

void add_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "plain-text config (key = value)");
  cmd->add_option("--metric", o.metric, "kerr_bl, kerr_ingoing, schwarzschild, kerr_quotient, minkowski, ...");
  cmd->add_option("--m", o.m, "mass parameter");
  cmd->add_option("--a", o.a, "rotation parameter");
  cmd->add_option("--grid", o.grid, "nodes per axis");
  cmd->add_option("--jet-order", o.jet_order, "jet order");
  cmd->add_option("--step", o.step, "integrator step");
  cmd->add_option("--tol", o.tol, "override the default tolerance of the main checks");
  cmd->add_option("--seed", o.seed, "sampling seed");
  cmd->add_option("--out", o.out, "JSON report path (stdout when absent)");
  cmd->add_flag("--timing", o.timing, "record wall-clock time in the report");
}

nullext::RunConfig resolve(const std::string& command, const Overrides& o) {
  nullext::RunConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw nullext::UsageError("cannot read config " + o.config);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = nullext::parse_config_text(ss.str(), cfg);
  }
  cfg.command = command;
  if (!o.metric.empty()) cfg.metric = o.metric;
  if (!o.suite.empty()) cfg.suite = o.suite;
  if (!o.field.empty()) cfg.field = o.field;
  if (!o.function.empty()) cfg.function = o.function;
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.csv.empty()) cfg.csv = o.csv;
  if (o.m >= 0) cfg.m = o.m;
  if (o.a >= 0) cfg.a = o.a;
  if (o.step >= 0) cfg.step = o.step;
  if (o.tol >= 0) cfg.tol = o.tol;
  if (o.theta0 >= 0) cfg.theta0 = o.theta0;
  if (o.grid >= 0) cfg.grid = o.grid;
  if (o.jet_order >= 0) cfg.jet_order = o.jet_order;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.eps.empty()) cfg.eps = o.eps;
  if (o.timing) cfg.timing = true;
  if (command == "obstruction" && o.metric.empty()) cfg.metric = "kerr_quotient";
  if (command == "extend" && o.metric.empty() && cfg.metric == "kerr_bl") cfg.metric = "kerr_ingoing";
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nullext: Killing extension and pseudo-convexity experiments"};
  app.require_subcommand(1);
  Overrides o;

  auto* verify = app.add_subcommand("verify", "run a named verification suite");
  add_flags(verify, o);
  verify->add_option("--suite", o.suite, "curvature, ernst, quotient, weyl");

  auto* extend = app.add_subcommand("extend", "extend a vector field off a seed patch");
  add_flags(extend, o);
  extend->add_option("--field", o.field, "T, Z, Z_phi, perturbed (kerr_ingoing); T, rotation (minkowski)");

  auto* pconv = app.add_subcommand("pseudoconvex", "certify or refute pseudo-convexity of a level set");
  add_flags(pconv, o);
  pconv->add_option("--function", o.function, "null_plane, spacelike_plane, corner, cylinder_out, cylinder_in");

  auto* obst = app.add_subcommand("obstruction", "epsilon sweep and data-level obstruction certificate");
  add_flags(obst, o);
  obst->add_option("--eps", o.eps, "epsilon sweep")->delimiter(',');
  obst->add_option("--theta0", o.theta0, "polar angle of the base point");
  obst->add_option("--csv", o.csv, "CSV path for the sweep table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : nullext::exit_usage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  nullext::RunConfig cfg;
  try {
    cfg = resolve(command, o);
  } catch (const nullext::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return nullext::exit_usage;
  }
  return nullext::run_and_write(cfg);
}
