#ifndef DG_TRACER_H
#define DG_TRACER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible ABI call.
 */
typedef enum DgStatus {
  /**
   * Call succeeded.
   */
  DG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DG_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  DG_STATUS_INVALID_UTF8 = 2,
  /**
   * The configuration could not be parsed or resolved.
   */
  DG_STATUS_INVALID_CONFIG = 3,
  /**
   * The run itself failed (solver, guard or I/O error).
   */
  DG_STATUS_RUN_FAILED = 4,
  /**
   * A row index was past the end of the diagnostics series.
   */
  DG_STATUS_OUT_OF_RANGE = 5,
} DgStatus;

/**
 * Opaque handle to a completed run; create with [`dg_run_execute`], free
 * with [`dg_run_free`].
 */
typedef struct DgRun DgRun;

/**
 * One diagnostics row in C layout.
 */
typedef struct DgStepRow {
  uint64_t step;
  /**
   * Model time in seconds.
   */
  double t;
  /**
   * Global density integral.
   */
  double integral_rho;
  /**
   * Conserved tracer functional (∫ρm, or ∫ρ(X+2X₂) for the two-species
   * chemistry case).
   */
  double integral_rho_x;
  /**
   * Relative drift of `integral_rho_x` against the initial row.
   */
  double delta_rho_x_rel;
  double m_min;
  double m_max;
  uint64_t limited_cells;
  uint64_t unfixable_cells;
  /**
   * L2 error against the run's reference tracer; NaN when the run
   * records none.
   */
  double l2_error;
} DgStepRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread.
 *
 * The pointer stays valid until the next failing ABI call on the same
 * thread; copy the string if it must outlive that.
 *
 * # Safety
 *
 * Always safe to call; the returned pointer must not be freed.
 */
const char *dg_last_error_message(void);

/**
 * Runs one configured case and hands back an owned run handle.
 *
 * `config_json` uses the same keys as the CLI flags (`case`, `placement`,
 * `order`, `form`, `limiter`, `ne`, `nx`, `dt`, `steps`, `out_dir`); when
 * `out_dir` is set, diagnostics files are written as a side effect.
 *
 * # Safety
 *
 * `config_json` must point to a NUL-terminated string and `out_run` to a
 * writable pointer slot; both must be non-null. On `Ok` the caller owns
 * `*out_run` and must release it with [`dg_run_free`] exactly once.
 */
enum DgStatus dg_run_execute(const char *config_json, struct DgRun **out_run);

/**
 * Releases a run handle. Passing null is a no-op.
 *
 * # Safety
 *
 * `run` must be null or a pointer obtained from [`dg_run_execute`] that
 * has not been freed yet.
 */
void dg_run_free(struct DgRun *run);

/**
 * Number of diagnostics rows in the run (steps + 1); 0 for a null handle.
 *
 * # Safety
 *
 * `run` must be null or a live handle from [`dg_run_execute`].
 */
uint64_t dg_run_row_count(const struct DgRun *run);

/**
 * Copies diagnostics row `index` into `*out_row`.
 *
 * # Safety
 *
 * `run` must be a live handle from [`dg_run_execute`] and `out_row` a
 * writable, properly aligned [`DgStepRow`] slot.
 */
enum DgStatus dg_run_row(const struct DgRun *run, uint64_t index, struct DgStepRow *out_row);

/**
 * Largest relative drift of the conserved tracer functional over the run.
 *
 * # Safety
 *
 * `run` must be a live handle and `out` a writable double slot.
 */
enum DgStatus dg_run_max_delta(const struct DgRun *run, double *out);

/**
 * Smallest nodal mixing-ratio value seen over the whole run.
 *
 * # Safety
 *
 * `run` must be a live handle and `out` a writable double slot.
 */
enum DgStatus dg_run_min_mixing_ratio(const struct DgRun *run, double *out);

/**
 * Run metadata as an owned JSON string (configuration, solver policies,
 * mesh summary, version); null for a null handle.
 *
 * # Safety
 *
 * `run` must be null or a live handle. A non-null result must be released
 * with [`dg_string_free`] exactly once.
 */
char *dg_run_metadata_json(const struct DgRun *run);

/**
 * Library version string (package version plus git commit when known).
 *
 * # Safety
 *
 * Always safe to call. The result must be released with
 * [`dg_string_free`] exactly once.
 */
char *dg_version(void);

/**
 * Releases a string returned by this library. Passing null is a no-op.
 *
 * # Safety
 *
 * `s` must be null or an unfreed pointer returned by
 * [`dg_run_metadata_json`] or [`dg_version`].
 */
void dg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DG_TRACER_H */
