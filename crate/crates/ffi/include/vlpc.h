#ifndef VLPC_H
#define VLPC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VlpcStatus {
  VLPC_STATUS_OK = 0,
  VLPC_STATUS_NULL_POINTER = 1,
  VLPC_STATUS_INVALID_ARGUMENT = 2,
  VLPC_STATUS_INFEASIBLE = 3,
  VLPC_STATUS_SOLVER_FAILURE = 4,
  VLPC_STATUS_PARSE_ERROR = 5,
  VLPC_STATUS_BUFFER_TOO_SMALL = 6,
  VLPC_STATUS_PANIC = 7,
} VlpcStatus;

typedef enum VlpcScheme {
  VLPC_SCHEME_PERFECT = 0,
  VLPC_SCHEME_BERNSTEIN = 1,
  VLPC_SCHEME_CVAR = 2,
} VlpcScheme;

typedef enum VlpcErrorModel {
  VLPC_ERROR_MODEL_GAUSSIAN = 0,
  VLPC_ERROR_MODEL_UNIFORM_ELLIPSE = 1,
  VLPC_ERROR_MODEL_TWO_POINT_MIXTURE = 2,
} VlpcErrorModel;

typedef enum VlpcChannel {
  VLPC_CHANNEL_LOS = 0,
  VLPC_CHANNEL_LOS_DIFFUSE = 1,
} VlpcChannel;

/**
 * Opaque allocation handle.
 */
typedef struct VlpcAllocation VlpcAllocation;

/**
 * Opaque scenario handle.
 */
typedef struct VlpcScenario VlpcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty when none. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *vlpc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vlpc_version(void);

/**
 * Built-in scenario with 3 to 6 LEDs.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle pointer.
 */
enum VlpcStatus vlpc_scenario_default(size_t num_leds, struct VlpcScenario **out);

/**
 * Parses a scenario from a NUL-terminated UTF-8 JSON document.
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` to writable storage.
 */
enum VlpcStatus vlpc_scenario_from_json(const char *json, struct VlpcScenario **out);

/**
 * Number of LEDs, or 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live scenario handle.
 */
size_t vlpc_scenario_num_leds(const struct VlpcScenario *s);

/**
 * # Safety
 * `s` must be null or a handle from this library that has not been freed.
 */
void vlpc_scenario_free(struct VlpcScenario *s);

/**
 * Solves the allocation program `scheme` (a [`VlpcScheme`] value) for rate target
 * `rate_bps` and outage probability `p_out` (ignored by the perfect scheme).
 *
 * # Safety
 * `s` must be a live scenario handle and `out` valid writable storage.
 */
enum VlpcStatus vlpc_solve(const struct VlpcScenario *s,
                           uint32_t scheme,
                           double rate_bps,
                           double p_out,
                           struct VlpcAllocation **out);

/**
 * # Safety
 * `a` must be null or a handle from this library that has not been freed.
 */
void vlpc_allocation_free(struct VlpcAllocation *a);

/**
 * Copies the positioning powers (W) into `buf`, which must hold `len` values.
 * `written` receives the LED count even when the buffer is too small.
 *
 * # Safety
 * `a` must be a live allocation handle; `buf` must be valid for `len` doubles.
 */
enum VlpcStatus vlpc_allocation_pilot_powers(const struct VlpcAllocation *a,
                                             double *buf,
                                             size_t len,
                                             size_t *written);

/**
 * Communication power on the serving LED, W; NaN for a null handle.
 *
 * # Safety
 * `a` must be null or a live allocation handle.
 */
double vlpc_allocation_comm_power(const struct VlpcAllocation *a);

/**
 * Tr(J⁻¹) in m²; NaN for a null handle.
 *
 * # Safety
 * `a` must be null or a live allocation handle.
 */
double vlpc_allocation_crlb(const struct VlpcAllocation *a);

/**
 * Index of the serving LED; `SIZE_MAX` for a null handle.
 *
 * # Safety
 * `a` must be null or a live allocation handle.
 */
size_t vlpc_allocation_serving_led(const struct VlpcAllocation *a);

/**
 * Monte Carlo outage probability of `a` over `n` error draws.
 *
 * # Safety
 * Handles must be live and `outage` must be valid writable storage.
 */
enum VlpcStatus vlpc_evaluate_outage(const struct VlpcScenario *s,
                                     const struct VlpcAllocation *a,
                                     uint32_t error_model,
                                     uint32_t channel,
                                     size_t n,
                                     uint64_t seed,
                                     double rate_bps,
                                     double *outage);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VLPC_H */
