#include "uavmm.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <new>
#include <string>

#include "uavmm/bcd.hpp"
#include "uavmm/io.hpp"
#include "uavmm/version.hpp"

struct uavmm_scenario {
  uavmm::Scenario scenario;
};

struct uavmm_result {
  uavmm::ResultBundle bundle;
};

namespace {

thread_local std::string g_last_error;

uavmm_status fail(uavmm_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

char* copy_string(const std::string& text) {
  char* out = new (std::nothrow) char[text.size() + 1];
  if (out) std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

uavmm_status run_guarded(const std::function<uavmm_status()>& body) {
  try {
    return body();
  } catch (const uavmm::ValidationError& e) {
    return fail(UAVMM_ERR_VALIDATION, e.what());
  } catch (const std::exception& e) {
    return fail(UAVMM_ERR_SOLVER, e.what());
  }
}

uavmm::BcdConfig to_config(const uavmm_bcd_options* options) {
  uavmm::BcdConfig config;
  if (options) {
    config.l_max = options->l_max;
    config.epsilon = options->epsilon;
    config.max_outer_iterations = options->max_outer_iterations;
    config.constant_step_annealing = options->constant_step_annealing != 0;
  }
  return config;
}

uavmm::SolveReport allocation_only_report(const uavmm::Scenario& sc,
                                          const uavmm::Trajectory& traj) {
  const uavmm::AllocationSolution sol =
      uavmm::solve_allocation(sc, traj, sc.mrr_vector());
  uavmm::SolveReport report;
  report.trajectory = traj;
  report.allocation = sol.allocation;
  report.eta = sol.eta;
  report.dual_bound = sol.dual_bound;
  report.kkt = sol.kkt;
  report.eta_history = {sol.eta};
  report.theta_temp_history = {sc.mrr_vector()};
  report.iterations = 1;
  report.termination = "allocation_only";
  return report;
}

}  // namespace

extern "C" {

const char* uavmm_version(void) { return UAVMM_VERSION_STRING; }

const char* uavmm_last_error(void) { return g_last_error.c_str(); }

void uavmm_string_free(char* text) { delete[] text; }

uavmm_status uavmm_scenario_parse(const char* json_text, uavmm_scenario** out) {
  if (!json_text || !out)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&] {
    auto load = uavmm::parse_scenario(json_text);
    *out = new uavmm_scenario{std::move(load.scenario)};
    return UAVMM_OK;
  });
}

uavmm_status uavmm_scenario_load(const char* path, uavmm_scenario** out) {
  if (!path || !out) return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&] {
    auto load = uavmm::load_scenario(path);
    *out = new uavmm_scenario{std::move(load.scenario)};
    return UAVMM_OK;
  });
}

void uavmm_scenario_free(uavmm_scenario* scenario) { delete scenario; }

int uavmm_scenario_user_count(const uavmm_scenario* scenario) {
  return scenario ? scenario->scenario.user_count() : 0;
}

int uavmm_scenario_slot_count(const uavmm_scenario* scenario) {
  return scenario ? scenario->scenario.uav.slots : 0;
}

uavmm_status uavmm_scenario_set_mrr(uavmm_scenario* scenario,
                                    const double* theta, int count) {
  if (!scenario || !theta || count < 1)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  const int users = scenario->scenario.user_count();
  if (count != 1 && count != users)
    return fail(UAVMM_ERR_INVALID_ARGUMENT,
                "mrr count must be 1 or the user count (" +
                    std::to_string(users) + ")");
  return run_guarded([&] {
    for (int k = 0; k < users; ++k)
      scenario->scenario.users[k].mrr = theta[count == 1 ? 0 : k];
    scenario->scenario.validate();
    return UAVMM_OK;
  });
}

uavmm_status uavmm_scenario_set_period(uavmm_scenario* scenario,
                                       double period_s, int slots) {
  if (!scenario) return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&] {
    scenario->scenario.uav.period = period_s;
    scenario->scenario.uav.slots = slots;
    scenario->scenario.validate();
    return UAVMM_OK;
  });
}

uavmm_status uavmm_scenario_to_json(const uavmm_scenario* scenario,
                                    char** out_text) {
  if (!scenario || !out_text)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&] {
    *out_text = copy_string(uavmm::scenario_to_json(scenario->scenario));
    return *out_text ? UAVMM_OK : fail(UAVMM_ERR_SOLVER, "out of memory");
  });
}

void uavmm_bcd_options_init(uavmm_bcd_options* options) {
  if (!options) return;
  const uavmm::BcdConfig defaults;
  options->l_max = defaults.l_max;
  options->epsilon = defaults.epsilon;
  options->max_outer_iterations = defaults.max_outer_iterations;
  options->constant_step_annealing = defaults.constant_step_annealing ? 1 : 0;
}

uavmm_status uavmm_solve(const uavmm_scenario* scenario,
                         const uavmm_bcd_options* options,
                         uavmm_result** out) {
  if (!scenario || !out)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&] {
    const uavmm::SolveReport report =
        uavmm::run_bcd(scenario->scenario, to_config(options));
    *out = new uavmm_result{uavmm::make_bundle(scenario->scenario, report)};
    return UAVMM_OK;
  });
}

uavmm_status uavmm_solve_baseline(const uavmm_scenario* scenario,
                                  uavmm_trajectory_kind kind,
                                  uavmm_result** out) {
  if (!scenario || !out)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  if (kind == UAVMM_TRAJECTORY_PROPOSED)
    return fail(UAVMM_ERR_INVALID_ARGUMENT,
                "use uavmm_solve for the proposed trajectory");
  return run_guarded([&] {
    const uavmm::Trajectory traj = uavmm::baseline_trajectory(
        scenario->scenario, static_cast<uavmm::TrajectoryKind>(kind));
    *out = new uavmm_result{uavmm::make_bundle(
        scenario->scenario,
        allocation_only_report(scenario->scenario, traj))};
    return UAVMM_OK;
  });
}

void uavmm_result_free(uavmm_result* result) { delete result; }

double uavmm_result_eta(const uavmm_result* result) {
  return result ? result->bundle.eta : 0.0;
}

double uavmm_result_dual_bound(const uavmm_result* result) {
  return result ? result->bundle.dual_bound : 0.0;
}

int uavmm_result_iterations(const uavmm_result* result) {
  return result ? result->bundle.iterations : 0;
}

const char* uavmm_result_termination(const uavmm_result* result) {
  return result ? result->bundle.termination.c_str() : "";
}

uavmm_status uavmm_result_trajectory(const uavmm_result* result, double* xy,
                                     int capacity, int* out_count) {
  if (!result || !xy || !out_count)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  const auto& waypoints = result->bundle.trajectory.waypoints;
  const int count = static_cast<int>(waypoints.size());
  if (capacity < 2 * count)
    return fail(UAVMM_ERR_INVALID_ARGUMENT,
                "capacity must be at least " + std::to_string(2 * count));
  for (int n = 0; n < count; ++n) {
    xy[2 * n] = waypoints[n].x();
    xy[2 * n + 1] = waypoints[n].y();
  }
  *out_count = count;
  return UAVMM_OK;
}

uavmm_status uavmm_result_bundle_json(const uavmm_result* result,
                                      char** out_text) {
  if (!result || !out_text)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&] {
    *out_text = copy_string(uavmm::bundle_to_json(result->bundle));
    return *out_text ? UAVMM_OK : fail(UAVMM_ERR_SOLVER, "out of memory");
  });
}

uavmm_status uavmm_result_trajectory_csv(const uavmm_result* result,
                                         double sample_interval_s,
                                         char** out_text) {
  if (!result || !out_text)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&] {
    *out_text = copy_string(uavmm::trajectory_csv(
        result->bundle.scenario, result->bundle.trajectory,
        sample_interval_s));
    return *out_text ? UAVMM_OK : fail(UAVMM_ERR_SOLVER, "out of memory");
  });
}

uavmm_status uavmm_theta_sweep(const uavmm_scenario* scenario,
                               const double* grid, int grid_len,
                               uavmm_sweep_mode mode,
                               const uavmm_bcd_options* options,
                               char** out_csv) {
  if (!scenario || !grid || grid_len < 1 || !out_csv)
    return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&] {
    const uavmm::SweepTable table = uavmm::theta_sweep(
        scenario->scenario, std::vector<double>(grid, grid + grid_len),
        mode == UAVMM_SWEEP_FULL_BCD ? uavmm::SweepMode::FullBcd
                                     : uavmm::SweepMode::FixedTrajectory,
        to_config(options));
    std::string csv = "theta";
    for (const auto kind : table.kinds)
      csv += std::string(",") + uavmm::trajectory_kind_name(kind);
    csv += "\n";
    char buf[64];
    for (size_t row = 0; row < table.grid.size(); ++row) {
      std::snprintf(buf, sizeof(buf), "%.17g", table.grid[row]);
      csv += buf;
      for (const auto& cell : table.cells[row]) {
        if (cell.ok) {
          std::snprintf(buf, sizeof(buf), ",%.17g", cell.eta);
          csv += buf;
        } else {
          csv += ",error";
        }
      }
      csv += "\n";
    }
    *out_csv = copy_string(csv);
    return *out_csv ? UAVMM_OK : fail(UAVMM_ERR_SOLVER, "out of memory");
  });
}

uavmm_status uavmm_validate_bundle(const char* json_text) {
  if (!json_text) return fail(UAVMM_ERR_INVALID_ARGUMENT, "null argument");
  return run_guarded([&]() -> uavmm_status {
    const uavmm::ResultBundle bundle = uavmm::parse_bundle(json_text);
    const double recomputed = uavmm::achieved_eta(
        bundle.scenario, bundle.trajectory, bundle.allocation,
        bundle.scenario.mrr_vector());
    if (std::abs(recomputed - bundle.eta) >
        1e-9 * std::max(1.0, std::abs(bundle.eta)))
      return fail(UAVMM_ERR_VALIDATION,
                  "stored eta " + std::to_string(bundle.eta) +
                      " does not match recomputed " +
                      std::to_string(recomputed));
    const uavmm::FeasibilityReport report = uavmm::check_feasibility(
        bundle.scenario, bundle.trajectory, bundle.allocation, bundle.eta);
    if (!report.feasible())
      return fail(UAVMM_ERR_VALIDATION,
                  "constraint \"" + report.violations.front().name +
                      "\" violated by " +
                      std::to_string(-report.worst_slack()));
    uavmm::ResultBundle rehashed = bundle;
    rehashed.wall_time = bundle.wall_time;
    const uavmm::ResultBundle reparsed =
        uavmm::parse_bundle(uavmm::bundle_to_json(rehashed));
    if (reparsed.determinism_hash != bundle.determinism_hash)
      return fail(UAVMM_ERR_VALIDATION, "determinism hash mismatch");
    return UAVMM_OK;
  });
}

void uavmm_fnv1a_hex(const char* text, char* hex_out) {
  if (!hex_out) return;
  const std::string hex = uavmm::fnv1a_hex(text ? text : "");
  std::memcpy(hex_out, hex.c_str(), hex.size() + 1);
}

}  // extern "C"
