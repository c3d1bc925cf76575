#ifndef NULLEXT_CLI_HPP
#define NULLEXT_CLI_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace nullext {

inline constexpr int kSchemaVersion = 1;

// exit codes of the command line front-end
enum ExitCode : int { exit_pass = 0, exit_check_failed = 1, exit_usage = 2, exit_domain = 3 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string command;  // verify | extend | pseudoconvex | obstruction
  std::string metric = "kerr_bl";
  double m = 1.0, a = 0.5;
  std::string suite = "curvature";       // verify: curvature | ernst | quotient | weyl
  std::string field = "T";               // extend: vector field seeded on the patch
  std::string function = "null_plane";   // pseudoconvex: named defining function
  int grid = 0;                          // 0: command default
  int jet_order = 2;
  double step = 0;                       // 0: command default
  double tol = 0;                        // 0: per-check defaults
  std::uint64_t seed = 7;
  double theta0 = 0;                     // obstruction: 0 means pi / 3
  std::vector<double> eps{0.1, 0.05, 0.025};
  std::string out, csv;
  bool timing = false;  // adds wall-clock seconds; reports are then no longer reproducible
};

// "key = value" lines, '#' comments, "[section]" headers; keys may be qualified as section.key
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
void validate(const RunConfig& cfg);  // throws UsageError

struct Report {
  nlohmann::ordered_json doc;
  bool passed = true;
  std::string csv;  // sweep or profile table, empty when the command has none
  std::string dump() const;  // 2-space JSON and a trailing newline
};

Report cmd_verify(const RunConfig& cfg);
Report cmd_extend(const RunConfig& cfg);
Report cmd_pseudoconvex(const RunConfig& cfg);
Report cmd_obstruction(const RunConfig& cfg);
Report run_command(const RunConfig& cfg);

// runs, writes --out / --csv, prints a summary line per check; returns an ExitCode
int run_and_write(const RunConfig& cfg);

// interior sample grid of a named metric (n per varying axis); throws GeometryError if empty
std::vector<std::vector<double>> interior_grid(const std::string& metric, double m, double a, int n);

}  // namespace nullext

#endif
