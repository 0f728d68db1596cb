/* C interface to the UAV max-min throughput solver.
 *
 * All objects are opaque handles created and destroyed by this library.
 * Functions return UAVMM_OK on success; on failure they return a status
 * code and leave a human-readable message in uavmm_last_error() (stored
 * per thread). Strings returned through char** are heap-allocated and
 * must be released with uavmm_string_free().
 */
#ifndef UAVMM_H
#define UAVMM_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct uavmm_scenario uavmm_scenario;
typedef struct uavmm_result uavmm_result;

typedef enum uavmm_status {
  UAVMM_OK = 0,
  UAVMM_ERR_INVALID_ARGUMENT = 1,
  UAVMM_ERR_VALIDATION = 2,
  UAVMM_ERR_SOLVER = 3,
  UAVMM_ERR_IO = 4
} uavmm_status;

typedef enum uavmm_trajectory_kind {
  UAVMM_TRAJECTORY_PROPOSED = 0,
  UAVMM_TRAJECTORY_FLY_AND_HOVER = 1,
  UAVMM_TRAJECTORY_CIRCULAR = 2,
  UAVMM_TRAJECTORY_STATIC = 3
} uavmm_trajectory_kind;

typedef enum uavmm_sweep_mode {
  UAVMM_SWEEP_FIXED_TRAJECTORY = 0,
  UAVMM_SWEEP_FULL_BCD = 1
} uavmm_sweep_mode;

typedef struct uavmm_bcd_options {
  int l_max;                    /* annealing steps, default 10 */
  double epsilon;               /* relative improvement stop, default 1e-3 */
  int max_outer_iterations;     /* default 60 */
  int constant_step_annealing;  /* nonzero for the constant schedule */
} uavmm_bcd_options;

/* Library version, e.g. "0.1.0". */
const char* uavmm_version(void);

/* Message of the most recent failure on this thread; empty if none. */
const char* uavmm_last_error(void);

void uavmm_string_free(char* text);

/* ---- scenarios ------------------------------------------------------- */

uavmm_status uavmm_scenario_parse(const char* json_text, uavmm_scenario** out);
uavmm_status uavmm_scenario_load(const char* path, uavmm_scenario** out);
void uavmm_scenario_free(uavmm_scenario* scenario);

int uavmm_scenario_user_count(const uavmm_scenario* scenario);
int uavmm_scenario_slot_count(const uavmm_scenario* scenario);

/* count == 1 applies theta[0] to every user; otherwise count must equal
 * the user count. */
uavmm_status uavmm_scenario_set_mrr(uavmm_scenario* scenario,
                                    const double* theta, int count);
/* Changes the flight period (seconds) and slot count together. */
uavmm_status uavmm_scenario_set_period(uavmm_scenario* scenario,
                                       double period_s, int slots);
/* Canonical JSON text of the scenario. */
uavmm_status uavmm_scenario_to_json(const uavmm_scenario* scenario,
                                    char** out_text);

/* ---- solving --------------------------------------------------------- */

void uavmm_bcd_options_init(uavmm_bcd_options* options);

/* Joint trajectory + allocation optimization (the proposed pipeline). */
uavmm_status uavmm_solve(const uavmm_scenario* scenario,
                         const uavmm_bcd_options* options,
                         uavmm_result** out);

/* Allocation-only solve on a fixed baseline trajectory
 * (fly_and_hover | circular | static). */
uavmm_status uavmm_solve_baseline(const uavmm_scenario* scenario,
                                  uavmm_trajectory_kind kind,
                                  uavmm_result** out);

void uavmm_result_free(uavmm_result* result);

double uavmm_result_eta(const uavmm_result* result);
double uavmm_result_dual_bound(const uavmm_result* result);
int uavmm_result_iterations(const uavmm_result* result);
const char* uavmm_result_termination(const uavmm_result* result);

/* Copies the N waypoints as x0,y0,x1,y1,... into xy (capacity in doubles
 * must be at least 2N); returns the waypoint count through out_count. */
uavmm_status uavmm_result_trajectory(const uavmm_result* result, double* xy,
                                     int capacity, int* out_count);

/* Full result bundle as JSON (includes the determinism hash). */
uavmm_status uavmm_result_bundle_json(const uavmm_result* result,
                                      char** out_text);

/* Trajectory CSV (t_seconds,x_m,y_m) sampled every sample_interval_s. */
uavmm_status uavmm_result_trajectory_csv(const uavmm_result* result,
                                         double sample_interval_s,
                                         char** out_text);

/* ---- sweeps and validation ------------------------------------------ */

/* CSV table: header "theta,proposed,fly_and_hover,circular,static"; failed
 * cells carry the text "error". */
uavmm_status uavmm_theta_sweep(const uavmm_scenario* scenario,
                               const double* grid, int grid_len,
                               uavmm_sweep_mode mode,
                               const uavmm_bcd_options* options,
                               char** out_csv);

/* Re-checks a stored result bundle: parses it, recomputes eta from the
 * stored allocation and trajectory, and verifies feasibility and the
 * determinism hash. Returns UAVMM_ERR_VALIDATION with a message on any
 * mismatch. */
uavmm_status uavmm_validate_bundle(const char* json_text);

/* 64-bit FNV-1a of a string as 16 lowercase hex characters plus NUL;
 * hex_out must hold at least 17 bytes. */
void uavmm_fnv1a_hex(const char* text, char* hex_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* UAVMM_H */
