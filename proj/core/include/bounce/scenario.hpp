#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bounce/types.hpp"

namespace bounce {

struct DomainSpec {
  std::string kind;  // disk | ellipse | smooth_rect
  int dim = 2;       // disk only
  double radius = 1.0;
  double a = 1.0, b = 1.0;
  int p = 4;
};

struct PotentialSpec {
  std::string kind = "zero";  // zero | linear | harmonic | gaussian_bump
  Vec g;
  double omega = 1.0;
  Vec center;
  double amplitude = 1.0;
  double width = 1.0;
};

struct InitSpec {
  double rx = -1.0, ry = -1.0;  // negative picks a fraction of the domain size;
                                // ry = 0 is meaningful: a flat loop along one axis
  double angle = 0.0;
  Vec center;  // empty uses the bounding-box center
};

struct OracleSpec {
  Vec start;     // empty uses the bounding-box center
  Vec direction; // empty uses +x
  double duration = 0.0;  // 0 derives several crossings
};

struct OutputSpec {
  std::string summary = "summary.json";
  std::string trace = "trace.jsonl";
  std::string samples = "samples.csv";
  std::string plot = "orbit.svg";
};

struct Scenario {
  std::string name = "scenario";
  int schema_version = 1;
  DomainSpec domain;
  double d0 = 0.0;  // 0 uses the domain default collar width
  PotentialSpec potential;
  double energy = 0.0;
  int nodes = 256;
  double eps_start = 1e-1;
  double eps_ratio = 0.5;
  double eps_floor = 1e-5;
  bool check_regularity = true;
  double grad_tol = 1e-8;
  unsigned long long seed = 0;
  int inits = 1;
  InitSpec init;
  OracleSpec oracle;
  OutputSpec output;
};

// Parses the sectioned key = value scenario format. Unknown sections or keys
// and malformed values raise ConfigError with the offending line.
Scenario parse_scenario_text(const std::string& text, const std::string& origin = "<string>");
Scenario parse_scenario_file(const std::string& path);

struct CliOverrides {
  std::optional<unsigned long long> seed;
  std::optional<double> eps_floor;
  std::optional<int> nodes;
  bool verbose = false;
};

struct RunSummary {
  std::string name;
  std::string status;  // converged | collapsed | failed
  int exit_code = 0;
  std::string message;
  int bounce_count = -1;
  double period = 0.0;
  std::vector<int> morse_history;
  bool audit_pass = false;
  std::string summary_json;  // full machine-readable document
  std::string trace_jsonl;   // one line per continuation record
  std::string samples_csv;   // orbit samples of the final orbit
};

// Full pipeline: continuation, bounce-time extraction, assembly, shooting
// refinement, verification, and bounds audit. Never writes files; the CLI
// persists the returned documents.
RunSummary run_scenario(const Scenario& sc, const CliOverrides& ovr = {});

// Event-driven integration only, from the configured oracle start state.
RunSummary run_oracle(const Scenario& sc, const CliOverrides& ovr = {});

// Closed-form bounds only.
RunSummary run_bounds(const Scenario& sc, const CliOverrides& ovr = {});

// Renders the SVG plot embedded in a summary document produced by
// run_scenario or run_oracle.
std::string render_summary_svg(const std::string& summary_json);

}  // namespace bounce
