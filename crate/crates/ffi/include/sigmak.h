/* C interface of the sigmak cone calculus and conformal Neumann solver.
 * Generated from the Rust crate; edit the Rust source, not this file. */

#ifndef SIGMAK_H
#define SIGMAK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result class of every exported call.
 */
typedef enum SigmakStatus {
  /**
   * The call succeeded and all out-parameters are valid.
   */
  SigmakStatus_Ok = 0,
  /**
   * Null pointer, malformed JSON, or parameters outside their domain.
   */
  SigmakStatus_InvalidArgument = 1,
  /**
   * The evaluation point (or a solver iterate) left the admissible cone.
   */
  SigmakStatus_ConeViolation = 2,
  /**
   * The iteration ran but failed to converge within its budgets.
   */
  SigmakStatus_NumericalFailure = 3,
  /**
   * An internal invariant broke; the library state is still consistent.
   */
  SigmakStatus_Panic = 4,
} SigmakStatus;

/**
 * Completed solver run: continuation trace, residuals, margins, and the
 * discrete solution. Opaque; read it through the accessor functions and
 * release it with [`sigmak_report_free`].
 */
typedef struct SigmakReport SigmakReport;

/**
 * Description of the most recent failure on this thread, empty if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *sigmak_last_error_message(void);

/**
 * All elementary symmetric functions of `values[0..n]`, written to
 * `out[0..=n]` with `out[0] = 1`.
 *
 * # Safety
 * `values` must point to `n` readable doubles and `out` to `n + 1`
 * writable doubles.
 */
enum SigmakStatus sigmak_elem_sym_all(const double *values, uintptr_t n, double *out);

/**
 * Worst cone margin of `values[0..n]` for the order-`k` cone: the smallest
 * of the first `k` elementary symmetric functions. The point lies strictly
 * inside the cone exactly when the margin is positive.
 *
 * # Safety
 * `values` must point to `n` readable doubles and `out_margin` to one
 * writable double.
 */
enum SigmakStatus sigmak_cone_margin(const double *values,
                                     uintptr_t n,
                                     uintptr_t k,
                                     double *out_margin);

/**
 * Value of the deformed cone functional at `values[0..n]`.
 *
 * # Safety
 * `values` must point to `n` readable doubles and `out_value` to one
 * writable double.
 */
enum SigmakStatus sigmak_functional_value(uintptr_t n,
                                          uintptr_t k,
                                          double t,
                                          const double *values,
                                          double *out_value);

/**
 * Gradient of the deformed cone functional at `values[0..n]`, written to
 * `out_gradient[0..n]`.
 *
 * # Safety
 * `values` must point to `n` readable doubles and `out_gradient` to `n`
 * writable doubles.
 */
enum SigmakStatus sigmak_functional_gradient(uintptr_t n,
                                             uintptr_t k,
                                             double t,
                                             const double *values,
                                             double *out_gradient);

/**
 * Runs the continuation solver on a problem document (the JSON schema of
 * the `sigmak solve` command) and hands back an owned report handle.
 *
 * # Safety
 * `problem_json` must be a NUL-terminated UTF-8 string and `out_report` a
 * writable pointer slot.
 */
enum SigmakStatus sigmak_solve_json(const char *problem_json, struct SigmakReport **out_report);

/**
 * Serializes a report to a JSON string owned by the caller; release it
 * with [`sigmak_string_free`].
 *
 * # Safety
 * `report` must be a live handle from [`sigmak_solve_json`] and `out_json`
 * a writable pointer slot.
 */
enum SigmakStatus sigmak_report_to_json(const struct SigmakReport *report, char **out_json);

/**
 * Number of grid values in the report's discrete solution, 0 for null.
 *
 * # Safety
 * `report` must be null or a live handle from [`sigmak_solve_json`].
 */
uintptr_t sigmak_report_solution_len(const struct SigmakReport *report);

/**
 * Copies the discrete solution into `out[0..len]`; `len` must equal
 * [`sigmak_report_solution_len`].
 *
 * # Safety
 * `report` must be a live handle and `out` must point to `len` writable
 * doubles.
 */
enum SigmakStatus sigmak_report_solution_copy(const struct SigmakReport *report,
                                              double *out,
                                              uintptr_t len);

/**
 * Releases a report handle. Null is a no-op.
 *
 * # Safety
 * `report` must be null or an unreleased handle from [`sigmak_solve_json`].
 */
void sigmak_report_free(struct SigmakReport *report);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or an unreleased string from this library.
 */
void sigmak_string_free(char *s);

#endif  /* SIGMAK_H */
