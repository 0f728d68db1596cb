// Command-line front end for the UAV max-min throughput solver.
// Talks to the solver exclusively through the C API in uavmm.h.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uavmm.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

int exit_code(uavmm_status status) {
  switch (status) {
    case UAVMM_OK:
      return 0;
    case UAVMM_ERR_SOLVER:
      return kExitSolver;
    default:
      return kExitValidation;
  }
}

[[noreturn]] void die(uavmm_status status, const std::string& context) {
  std::cerr << "{\"error\": \"" << context << ": " << uavmm_last_error()
            << "\", \"code\": " << static_cast<int>(status) << "}\n";
  std::exit(exit_code(status));
}

std::string take_string(char* text) {
  std::string out = text ? text : "";
  uavmm_string_free(text);
  return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      std::cerr << "{\"error\": \"cannot write " << tmp.string()
                << "\", \"code\": 4}\n";
      std::exit(kExitValidation);
    }
    out << content;
  }
  fs::rename(tmp, path);
}

std::string read_file_or_die(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "{\"error\": \"cannot open " << path << "\", \"code\": 4}\n";
    std::exit(kExitValidation);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Scenario {
  uavmm_scenario* handle = nullptr;
  ~Scenario() { uavmm_scenario_free(handle); }
};

struct Result {
  uavmm_result* handle = nullptr;
  ~Result() { uavmm_result_free(handle); }
};

void load_scenario(const std::string& path, const std::vector<double>& theta,
                   Scenario& out) {
  uavmm_status status = uavmm_scenario_load(path.c_str(), &out.handle);
  if (status != UAVMM_OK) die(status, "loading " + path);
  if (!theta.empty()) {
    status = uavmm_scenario_set_mrr(out.handle, theta.data(),
                                    static_cast<int>(theta.size()));
    if (status != UAVMM_OK) die(status, "applying --theta");
  }
}

int kind_of(const std::string& name) {
  if (name == "proposed") return UAVMM_TRAJECTORY_PROPOSED;
  if (name == "fly-and-hover") return UAVMM_TRAJECTORY_FLY_AND_HOVER;
  if (name == "circular") return UAVMM_TRAJECTORY_CIRCULAR;
  return UAVMM_TRAJECTORY_STATIC;
}

Result solve_one(const Scenario& scenario, const std::string& trajectory,
                 const uavmm_bcd_options& options) {
  Result result;
  uavmm_status status;
  if (trajectory == "proposed") {
    status = uavmm_solve(scenario.handle, &options, &result.handle);
  } else {
    status = uavmm_solve_baseline(
        scenario.handle,
        static_cast<uavmm_trajectory_kind>(kind_of(trajectory)),
        &result.handle);
  }
  if (status != UAVMM_OK) die(status, "solving");
  return result;
}

std::string bundle_of(const Result& result) {
  char* text = nullptr;
  const uavmm_status status = uavmm_result_bundle_json(result.handle, &text);
  if (status != UAVMM_OK) die(status, "serializing result");
  return take_string(text);
}

std::string hash_of(const std::string& text) {
  char hex[17];
  uavmm_fnv1a_hex(text.c_str(), hex);
  return hex;
}

// Hash of a bundle with its timing field blanked; the embedded
// determinism_hash is already timing-free, so it is the comparator.
std::string bundle_hash(const std::string& bundle_json) {
  const std::string key = "\"determinism_hash\": \"";
  const size_t at = bundle_json.find(key);
  if (at == std::string::npos) return "";
  return bundle_json.substr(at + key.size(), 16);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV trajectory and OFDMA resource allocation optimizer"};
  app.set_version_flag("--version", uavmm_version());
  app.require_subcommand(1);

  std::string scenario_path, out_dir = ".", trajectory = "proposed";
  std::vector<double> theta;
  double sample_interval = 4.0;
  bool seedless = false;
  uavmm_bcd_options options;
  uavmm_bcd_options_init(&options);

  const auto add_solver_flags = [&](CLI::App* cmd) {
    cmd->add_option("--theta", theta,
                    "MRR override: one value for all users or a per-user list")
        ->delimiter(',');
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--l-max", options.l_max, "annealing steps");
    cmd->add_option("--epsilon", options.epsilon,
                    "relative improvement stopping threshold");
    cmd->add_option("--max-iterations", options.max_outer_iterations,
                    "outer iteration cap");
    cmd->add_flag("--constant-step",
                  [&](size_t) { options.constant_step_annealing = 1; },
                  "constant-step annealing schedule");
  };

  CLI::App* solve = app.add_subcommand("solve", "optimize one scenario");
  solve->add_option("scenario", scenario_path, "scenario JSON file")
      ->required();
  solve->add_option("--trajectory", trajectory, "trajectory pipeline")
      ->check(CLI::IsMember({"proposed", "circular", "static",
                             "fly-and-hover"}));
  solve->add_option("--sample-interval", sample_interval,
                    "trajectory CSV sampling step, seconds");
  solve->add_flag("--seedless", seedless,
                  "run twice and assert byte-identical results");
  add_solver_flags(solve);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "tabulate eta over an MRR or period grid");
  sweep->add_option("scenario", scenario_path, "scenario JSON file")
      ->required();
  std::vector<double> theta_grid, period_grid;
  std::string mode = "full";
  double slot_seconds = 0.5;
  sweep->add_option("--theta-grid", theta_grid, "homogeneous MRR grid")
      ->delimiter(',');
  sweep->add_option("--t-grid", period_grid, "period grid, seconds")
      ->delimiter(',');
  sweep->add_option("--slot-seconds", slot_seconds,
                    "slot duration used to derive N for --t-grid");
  sweep->add_option("--mode", mode, "fixed: freeze trajectories, full: re-run BCD")
      ->check(CLI::IsMember({"fixed", "full"}));
  add_solver_flags(sweep);

  CLI::App* baseline = app.add_subcommand(
      "baseline", "allocation-only solve on a fixed trajectory");
  baseline->add_option("scenario", scenario_path, "scenario JSON file")
      ->required();
  baseline
      ->add_option("--trajectory", trajectory, "baseline trajectory kind")
      ->check(CLI::IsMember({"circular", "static", "fly-and-hover"}))
      ->required();
  add_solver_flags(baseline);

  std::string bundle_path;
  CLI::App* validate =
      app.add_subcommand("validate", "re-check a stored result bundle");
  validate->add_option("bundle", bundle_path, "result bundle JSON file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) {
    const std::string text = read_file_or_die(bundle_path);
    const uavmm_status status = uavmm_validate_bundle(text.c_str());
    if (status != UAVMM_OK) die(status, "validating " + bundle_path);
    std::cout << "ok\n";
    return 0;
  }

  fs::create_directories(out_dir);

  if (solve->parsed() || baseline->parsed()) {
    if (baseline->parsed() && trajectory == "proposed") trajectory = "static";
    Scenario scenario;
    load_scenario(scenario_path, theta, scenario);
    Result result = solve_one(scenario, trajectory, options);
    const std::string bundle = bundle_of(result);
    if (seedless) {
      Result again = solve_one(scenario, trajectory, options);
      if (bundle_hash(bundle) != bundle_hash(bundle_of(again))) {
        std::cerr << "{\"error\": \"determinism check failed: result "
                     "bundles differ\", \"code\": 3}\n";
        return kExitSolver;
      }
    }
    write_atomic(fs::path(out_dir) / (trajectory + "_bundle.json"), bundle);
    char* csv = nullptr;
    const uavmm_status status = uavmm_result_trajectory_csv(
        result.handle, sample_interval, &csv);
    if (status != UAVMM_OK) die(status, "sampling trajectory");
    write_atomic(fs::path(out_dir) / (trajectory + "_trajectory.csv"),
                 take_string(csv));
    std::printf("eta %.12g bps/Hz (%s, %d iterations, %s)\n",
                uavmm_result_eta(result.handle), trajectory.c_str(),
                uavmm_result_iterations(result.handle),
                uavmm_result_termination(result.handle));
    return 0;
  }

  // sweep
  if (theta_grid.empty() == period_grid.empty()) {
    std::cerr << "{\"error\": \"sweep needs exactly one of --theta-grid or "
                 "--t-grid\", \"code\": 2}\n";
    return kExitValidation;
  }

  const std::vector<std::string> kinds = {"proposed", "fly-and-hover",
                                          "circular", "static"};
  const fs::path cache_dir = fs::path(out_dir) / "cells";
  fs::create_directories(cache_dir);

  // One solve per cell; finished cells are cached by the hash of their
  // full configuration so interrupted sweeps resume where they stopped.
  const auto cell_eta = [&](const Scenario& scenario,
                            const std::string& kind,
                            const std::string& config_key) -> std::string {
    const fs::path cache = cache_dir / ("cell_" + hash_of(config_key) + ".json");
    if (fs::exists(cache)) {
      const std::string cached = read_file_or_die(cache.string());
      if (uavmm_validate_bundle(cached.c_str()) == UAVMM_OK) {
        const std::string key = "\"eta_bps_per_hz\": ";
        const size_t at = cached.find(key);
        if (at != std::string::npos)
          return cached.substr(at + key.size(),
                               cached.find_first_of(",\n", at + key.size()) -
                                   at - key.size());
      }
    }
    Result result;
    uavmm_status status;
    if (kind == "proposed") {
      status = uavmm_solve(scenario.handle, &options, &result.handle);
    } else {
      status = uavmm_solve_baseline(
          scenario.handle,
          static_cast<uavmm_trajectory_kind>(kind_of(kind)), &result.handle);
    }
    if (status != UAVMM_OK) return "error";
    write_atomic(cache, bundle_of(result));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", uavmm_result_eta(result.handle));
    return buf;
  };

  std::ostringstream table;
  if (!theta_grid.empty() && mode == "fixed") {
    // Frozen trajectories need the library-side sweep (the proposed
    // trajectory is solved once and reused); cached as one table.
    Scenario scenario;
    load_scenario(scenario_path, theta, scenario);
    char* json = nullptr;
    uavmm_scenario_to_json(scenario.handle, &json);
    const std::string key =
        take_string(json) + "|fixed|" + hash_of(scenario_path);
    const fs::path cache = cache_dir / ("table_" + hash_of(key) + ".csv");
    if (fs::exists(cache)) {
      table << read_file_or_die(cache.string());
    } else {
      char* csv = nullptr;
      const uavmm_status status = uavmm_theta_sweep(
          scenario.handle, theta_grid.data(),
          static_cast<int>(theta_grid.size()), UAVMM_SWEEP_FIXED_TRAJECTORY,
          &options, &csv);
      if (status != UAVMM_OK) die(status, "sweeping");
      const std::string text = take_string(csv);
      write_atomic(cache, text);
      table << text;
    }
  } else {
    table << (theta_grid.empty() ? "period_s" : "theta");
    for (const auto& kind : kinds) table << ',' << kind;
    table << '\n';
    const std::vector<double>& grid =
        theta_grid.empty() ? period_grid : theta_grid;
    for (double value : grid) {
      Scenario scenario;
      load_scenario(scenario_path, theta, scenario);
      std::string label;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.12g", value);
      label = buf;
      if (theta_grid.empty()) {
        const int slots =
            std::max(2, static_cast<int>(std::lround(value / slot_seconds)));
        if (uavmm_scenario_set_period(scenario.handle, value, slots) !=
            UAVMM_OK)
          die(UAVMM_ERR_VALIDATION, "applying --t-grid value " + label);
      } else {
        const double t = value;
        if (uavmm_scenario_set_mrr(scenario.handle, &t, 1) != UAVMM_OK)
          die(UAVMM_ERR_VALIDATION, "applying --theta-grid value " + label);
      }
      char* json = nullptr;
      uavmm_scenario_to_json(scenario.handle, &json);
      const std::string scenario_text = take_string(json);
      table << label;
      for (const auto& kind : kinds)
        table << ','
              << cell_eta(scenario, kind, scenario_text + "|" + kind + "|" +
                                              std::to_string(options.l_max));
      table << '\n';
    }
  }
  write_atomic(fs::path(out_dir) / "sweep.csv", table.str());
  std::cout << table.str();
  return 0;
}
