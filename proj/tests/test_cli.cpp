#include "doctest.h"

#include "nullext/catalog.hpp"
#include "nullext/cli.hpp"
#include "nullext/geometry.hpp"

using namespace nullext;

TEST_CASE("config text: sections, comments, qualified keys") {
  const std::string text =
      "# sweep over the default point\n"
      "command = obstruction\n"
      "[kerr]\n"
      "m = 1.0\n"
      "a = 0.5   # rotation\n"
      "\n"
      "[sweep]\n"
      "eps = 0.1, 0.05\n"
      "run.seed = 11\n"
      "jet-order = 3\n";
  const auto cfg = parse_config_text(text);
  CHECK(cfg.command == "obstruction");
  CHECK(cfg.a == 0.5);
  CHECK(cfg.eps == std::vector<double>{0.1, 0.05});
  CHECK(cfg.seed == 11);
  CHECK(cfg.jet_order == 3);
  CHECK(cfg.metric == "kerr_bl");  // untouched default
}

TEST_CASE("config text: malformed input") {
  CHECK_THROWS_AS(parse_config_text("m 1\n"), UsageError);
  CHECK_THROWS_AS(parse_config_text("m = one\n"), UsageError);
  CHECK_THROWS_AS(parse_config_text("colour = red\n"), UsageError);
  CHECK_THROWS_AS(parse_config_text("[open\n"), UsageError);
  CHECK_THROWS_AS(parse_config_text("eps = 0.1,,0.2\n"), UsageError);
}

TEST_CASE("validation") {
  RunConfig cfg;
  cfg.command = "verify";
  CHECK_NOTHROW(validate(cfg));
  cfg.tol = -1;
  CHECK_THROWS_AS(validate(cfg), UsageError);
  cfg.tol = 0;
  cfg.eps = {0.1, 0.0};
  CHECK_THROWS_AS(validate(cfg), UsageError);
  cfg.eps = {0.1};
  cfg.jet_order = 9;
  CHECK_THROWS_AS(validate(cfg), UsageError);
}

TEST_CASE("unknown names are usage errors") {
  RunConfig cfg;
  cfg.command = "verify";
  cfg.suite = "everything";
  CHECK_THROWS_AS(run_command(cfg), UsageError);
  cfg.suite = "curvature";
  cfg.metric = "kerr_quotient";
  CHECK_THROWS_AS(run_command(cfg), UsageError);
  cfg.metric = "reissner";
  CHECK_THROWS(run_command(cfg));
  cfg.command = "teleport";
  CHECK_THROWS_AS(run_command(cfg), UsageError);
  cfg.command = "pseudoconvex";
  cfg.function = "sphere";
  CHECK_THROWS_AS(run_command(cfg), UsageError);
  cfg.command = "extend";
  cfg.metric = "kerr_ingoing";
  cfg.field = "W";
  CHECK_THROWS_AS(run_command(cfg), UsageError);
}

TEST_CASE("interior grid stays in the chart domain") {
  for (double a : {0.0, 0.5, 0.9}) {
    for (const char* name : {"kerr_bl", "kerr_ingoing"}) {
      const auto md = metric_by_name(name, 1.0, a);
      const auto pts = interior_grid(name, 1.0, a, 6);
      CHECK(pts.size() == 216);
      for (const auto& x : pts) CHECK_FALSE(md.domain_violation(x).has_value());
    }
  }
  CHECK_THROWS_AS(interior_grid("kerr_bl", 1.0, 0.5, 0), UsageError);
}

TEST_CASE("report layout and determinism") {
  RunConfig cfg;
  cfg.command = "verify";
  cfg.metric = "kerr_bl";
  cfg.grid = 3;
  cfg.seed = 5;
  const auto first = run_command(cfg);
  const auto second = run_command(cfg);
  CHECK(first.dump() == second.dump());
  const auto& doc = first.doc;
  CHECK(doc["schema_version"] == kSchemaVersion);
  CHECK(doc["config"]["seed"] == 5);
  CHECK(doc["metric"]["hash"] == metric_by_name("kerr_bl", 1.0, 0.5).hash());
  CHECK(doc["passed"] == true);
  CHECK(first.passed);
  for (const auto& c : doc["checks"]) {
    CHECK(c.contains("name"));
    CHECK(c.contains("value"));
    CHECK(c.contains("pass"));
  }
  CHECK_FALSE(doc.contains("wall_clock_s"));
}

TEST_CASE("metric hash follows the parameters") {
  RunConfig cfg;
  cfg.command = "verify";
  cfg.grid = 2;
  const auto h1 = run_command(cfg).doc["metric"]["hash"];
  cfg.a = 0.6;
  const auto h2 = run_command(cfg).doc["metric"]["hash"];
  CHECK(h1 != h2);
}

TEST_CASE("a failing tolerance flips the verdict") {
  RunConfig cfg;
  cfg.command = "verify";
  cfg.grid = 2;
  cfg.tol = 1e-30;
  const auto r = run_command(cfg);
  CHECK_FALSE(r.passed);
  CHECK(r.doc["passed"] == false);
}

TEST_CASE("pseudoconvex reports carry the certificate") {
  RunConfig cfg;
  cfg.command = "pseudoconvex";
  cfg.function = "corner";
  const auto r = run_command(cfg);
  CHECK(r.passed);
  CHECK(r.doc["results"]["verdict"] == "certified");
  CHECK(r.doc["results"]["A1"].get<double>() > 0);
  cfg.function = "null_plane";
  const auto n = run_command(cfg);
  CHECK(n.doc["results"]["verdict"] == "refuted");
  CHECK(n.doc["results"]["witness"].size() == 4);
}

TEST_CASE("obstruction csv columns") {
  RunConfig cfg;
  cfg.command = "obstruction";
  cfg.eps = {0.1, 0.05};
  const auto r = run_command(cfg);
  CHECK(r.passed);
  CHECK(r.csv.rfind("eps,phi,phi_bump,ratio,coefficient_ratio,blowup\n", 0) == 0);
  CHECK(std::count(r.csv.begin(), r.csv.end(), '\n') == 3);
}
