// One line per acceptance criterion; exit status 0 only when all ten hold.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "nullext/cli.hpp"

using nullext::Report;
using nullext::RunConfig;

namespace {

RunConfig make(const std::string& command) {
  RunConfig cfg;
  cfg.command = command;
  return cfg;
}

// all checks whose name starts with one of the prefixes
bool checks_pass(const Report& r, const std::vector<std::string>& prefixes, std::string& detail) {
  bool ok = true;
  int seen = 0;
  for (const auto& c : r.doc["checks"]) {
    const auto name = c["name"].get<std::string>();
    bool match = prefixes.empty();
    for (const auto& p : prefixes) match = match || name.rfind(p, 0) == 0;
    if (!match) continue;
    ++seen;
    if (!c["pass"].get<bool>()) {
      ok = false;
      detail += " " + name + "=" + c["value"].dump();
    }
  }
  if (seen == 0) {
    detail += " no matching checks";
    return false;
  }
  return ok;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome vacuum() {
  Outcome o{true, ""};
  double worst = 0;
  for (const char* metric : {"kerr_bl", "kerr_ingoing"})
    for (double a : {0.0, 0.5, 0.9}) {
      auto cfg = make("verify");
      cfg.metric = metric;
      cfg.a = a;
      cfg.grid = 6;
      const auto r = nullext::run_command(cfg);
      o.pass = checks_pass(r, {"ricci_over_riemann"}, o.detail) && o.pass;
      for (const auto& c : r.doc["checks"])
        if (c["name"] == "ricci_over_riemann") worst = std::max(worst, c["value"].get<double>());
    }
  o.detail = "max |Ric|/|Riem| = " + num(worst) + o.detail;
  return o;
}

Outcome single(RunConfig cfg, std::vector<std::string> prefixes, std::string label) {
  Outcome o;
  const auto r = nullext::run_command(cfg);
  o.pass = checks_pass(r, prefixes, o.detail);
  o.detail = label + o.detail;
  return o;
}

Outcome killing_extension() {
  Outcome o{true, "T and Z_phi at step 1e-3"};
  for (const char* field : {"T", "Z_phi"}) {
    auto cfg = make("extend");
    cfg.metric = "kerr_ingoing";
    cfg.field = field;
    cfg.step = 1e-3;
    const auto r = nullext::run_command(cfg);
    o.pass = checks_pass(r, {"sup_deformation", "convergence_ratio"}, o.detail) && o.pass;
  }
  return o;
}

Outcome pseudoconvexity() {
  Outcome o{true, "null plane, spacelike plane, corner"};
  for (const char* f : {"null_plane", "spacelike_plane", "corner"}) {
    auto cfg = make("pseudoconvex");
    cfg.function = f;
    const auto r = nullext::run_command(cfg);
    o.pass = checks_pass(r, {}, o.detail) && o.pass;
  }
  return o;
}

Outcome cascade() {
  Outcome o{true, "Killing T, Z and a non-Killing seed"};
  for (const char* field : {"T", "Z", "perturbed"}) {
    auto cfg = make("extend");
    cfg.metric = "kerr_ingoing";
    cfg.field = field;
    const auto r = nullext::run_command(cfg);
    o.pass = checks_pass(r, {"cascade_"}, o.detail) && o.pass;
  }
  return o;
}

Outcome sweep(const Report& r, double seconds) {
  Outcome o;
  o.pass = checks_pass(r, {"phi_ratio", "coefficients_bounded", "no_blowup"}, o.detail) && seconds <= 300;
  o.detail = "sweep " + num(seconds) + " s" + o.detail;
  return o;
}

Outcome determinism() {
  Outcome o{true, "verify, extend, pseudoconvex, obstruction"};
  std::vector<RunConfig> cfgs{make("verify"), make("extend"), make("pseudoconvex"), make("obstruction")};
  cfgs[0].suite = "ernst";
  cfgs[0].metric = "kerr_quotient";
  cfgs[1].metric = "kerr_ingoing";
  cfgs[3].eps = {0.1, 0.05};
  for (const auto& cfg : cfgs) {
    const auto a = nullext::run_command(cfg), b = nullext::run_command(cfg);
    if (a.dump() != b.dump() || a.csv != b.csv) {
      o.pass = false;
      o.detail += " " + cfg.command + " differs";
    }
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<std::string> titles{
      "vacuum Ricci on Kerr (two charts, three spins)",
      "quotient golden identities",
      "Ernst system and assembled metric",
      "Killing extension and fourth-order convergence",
      "transport, divergence and Weyl identities",
      "pseudo-convexity certificates",
      "signature cascade",
      "obstruction scaling sweep",
      "characteristic data certificate",
      "byte-identical reports",
  };
  auto obstruction_cfg = make("obstruction");
  obstruction_cfg.m = 1.0;
  obstruction_cfg.a = 0.5;
  Report obstruction;
  double obstruction_seconds = 0;
  std::vector<std::function<Outcome()>> runs{
      vacuum,
      [] {
        auto c = make("verify");
        c.metric = "kerr_quotient";
        c.suite = "quotient";
        return single(c, {}, "200 samples");
      },
      [] {
        auto c = make("verify");
        c.metric = "kerr_quotient";
        c.suite = "ernst";
        return single(c, {}, "grid and 200 random samples");
      },
      killing_extension,
      [] {
        auto c = make("verify");
        c.metric = "kerr_ingoing";
        c.suite = "weyl";
        return single(c, {}, "T, Z and a non-Killing seed");
      },
      pseudoconvexity,
      cascade,
      [&] {
        const auto t0 = std::chrono::steady_clock::now();
        obstruction = nullext::run_command(obstruction_cfg);
        obstruction_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return sweep(obstruction, obstruction_seconds);
      },
      [&] {
        Outcome o;
        o.pass = checks_pass(obstruction,
                             {"certificate_", "unperturbed_residual", "raychaudhuri", "conformal_factor_equation"},
                             o.detail);
        o.detail = "bump shear on a null plane" + o.detail;
        return o;
      },
      determinism,
  };

  int failed = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    Outcome o;
    try {
      o = runs[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2zu  %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", titles[i].c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
