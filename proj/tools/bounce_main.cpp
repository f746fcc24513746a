#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "bounce/errors.hpp"
#include "bounce/scenario.hpp"

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << content;
  if (!f.good()) throw std::runtime_error("write failed: " + path.string());
}

struct CommonArgs {
  std::string config;
  std::string out_dir = ".";
  unsigned long long seed = 0;
  double eps_floor = 0.0;
  int nodes = 0;
  bounce::CliOverrides ovr;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_solver_flags) {
  cmd->add_option("config", args.config, "scenario config file")->required();
  cmd->add_option("--out-dir", args.out_dir, "directory for output files");
  cmd->add_flag("--verbose", args.ovr.verbose, "progress to stderr");
  if (with_solver_flags) {
    cmd->add_option("--seed", args.seed, "override rng seed");
    cmd->add_option("--eps-floor", args.eps_floor, "override the eps floor");
    cmd->add_option("--nodes", args.nodes, "override the loop node count M");
  }
}

void finalize(const CLI::App* cmd, CommonArgs& args) {
  const auto given = [cmd](const std::string& name) {
    const CLI::Option* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--seed")) args.ovr.seed = args.seed;
  if (given("--eps-floor")) args.ovr.eps_floor = args.eps_floor;
  if (given("--nodes")) args.ovr.nodes = args.nodes;
}

int persist(const bounce::Scenario& sc, const bounce::RunSummary& sum, const std::string& out_dir,
            bool with_trace, bool with_orbit_files) {
  const fs::path base(out_dir);
  write_file(base / sc.output.summary, sum.summary_json);
  if (with_trace && !sum.trace_jsonl.empty()) write_file(base / sc.output.trace, sum.trace_jsonl);
  if (with_orbit_files && !sum.samples_csv.empty())
    write_file(base / sc.output.samples, sum.samples_csv);
  if (with_orbit_files) {
    try {
      const std::string svg = bounce::render_summary_svg(sum.summary_json);
      write_file(base / sc.output.plot, svg);
    } catch (const bounce::ConfigError&) {
      // No plot section (e.g. failed run): skip the image.
    }
  }
  std::cout << sum.name << ": " << sum.status << " (" << sum.message << ")\n";
  return sum.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"periodic bounce orbits of prescribed energy in smooth domains"};
  app.require_subcommand(1);

  CommonArgs solve_args, oracle_args, bounds_args;
  auto* solve_cmd = app.add_subcommand("solve", "run the full continuation pipeline");
  add_common(solve_cmd, solve_args, true);
  auto* oracle_cmd = app.add_subcommand("oracle", "event-driven integration only");
  add_common(oracle_cmd, oracle_args, true);
  auto* bounds_cmd = app.add_subcommand("bounds", "closed-form bounds only");
  add_common(bounds_cmd, bounds_args, false);

  std::string plot_summary, plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "render the SVG plot from a summary file");
  plot_cmd->add_option("summary", plot_summary, "summary.json from solve or oracle")->required();
  plot_cmd->add_option("out", plot_out, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) {
      finalize(solve_cmd, solve_args);
      const auto sc = bounce::parse_scenario_file(solve_args.config);
      const auto sum = bounce::run_scenario(sc, solve_args.ovr);
      return persist(sc, sum, solve_args.out_dir, true, true);
    }
    if (oracle_cmd->parsed()) {
      finalize(oracle_cmd, oracle_args);
      const auto sc = bounce::parse_scenario_file(oracle_args.config);
      const auto sum = bounce::run_oracle(sc, oracle_args.ovr);
      return persist(sc, sum, oracle_args.out_dir, false, true);
    }
    if (bounds_cmd->parsed()) {
      finalize(bounds_cmd, bounds_args);
      const auto sc = bounce::parse_scenario_file(bounds_args.config);
      const auto sum = bounce::run_bounds(sc, bounds_args.ovr);
      return persist(sc, sum, bounds_args.out_dir, false, false);
    }
    if (plot_cmd->parsed()) {
      std::ifstream f(plot_summary);
      if (!f) throw bounce::ConfigError("cannot open summary file: " + plot_summary);
      std::ostringstream buf;
      buf << f.rdbuf();
      write_file(plot_out, bounce::render_summary_svg(buf.str()));
      std::cout << "wrote " << plot_out << "\n";
      return 0;
    }
  } catch (const bounce::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
