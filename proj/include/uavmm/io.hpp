#pragma once

#include <string>
#include <vector>

#include "uavmm/bcd.hpp"
#include "uavmm/scenario.hpp"

namespace uavmm {

/// Scenario file schema (JSON, every key required, units in the key names):
///   {
///     "uav": {
///       "altitude_m": 500.0, "v_max_mps": 50.0, "p_max_w": 0.1,
///       "period_s": 270.0, "slots": 540, "bandwidth_hz": 1.0e7,
///       "noise_psd_dbm": -169.0, "ref_gain_db": -50.0
///     },
///     "users": [ {"x_m": 400.0, "y_m": 400.0, "mrr": 0.0}, ... ]
///   }
/// Unknown keys are rejected; duplicate user positions produce a warning.
struct ScenarioLoad {
  Scenario scenario;
  std::vector<std::string> warnings;
};

// Throws ValidationError with key context on parse/validation failures.
ScenarioLoad parse_scenario(const std::string& text);
ScenarioLoad load_scenario(const std::string& path);

// Canonical serialization: fixed key order, shortest round-trip number
// formatting; parse(scenario_to_json(sc)) reproduces sc bit-exactly.
std::string scenario_to_json(const Scenario& sc);

/// Everything a solve produces, in plot-ready form. `wall_time` and the
/// hash itself are excluded from the determinism hash.
struct ResultBundle {
  Scenario scenario;  // config echo
  Trajectory trajectory;
  Allocation allocation;
  double eta = 0.0;
  double dual_bound = 0.0;
  Eigen::VectorXd user_throughput;  // R_k, bps/Hz
  Eigen::MatrixXd slot_rates;       // r_k[n], bps/Hz, K x N
  std::vector<double> eta_history;
  int iterations = 0;
  std::string termination;
  double wall_time = 0.0;
  std::string tool_version;
  std::string determinism_hash;  // 64-bit FNV-1a of the canonical text, hex
};

ResultBundle make_bundle(const Scenario& sc, const SolveReport& report);

// Matrices serialize as flat row-major K x N arrays; the hash field is
// computed over the serialization with itself and wall_time_s blanked.
std::string bundle_to_json(const ResultBundle& bundle);
ResultBundle parse_bundle(const std::string& text);

// t_seconds,x_m,y_m rows at t = 0, interval, 2*interval, ... <= period,
// positions linearly interpolated between waypoints.
std::string trajectory_csv(const Scenario& sc, const Trajectory& traj,
                           double sample_interval);

// Write-to-temp-then-rename in the destination directory.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

std::string fnv1a_hex(const std::string& text);

}  // namespace uavmm
