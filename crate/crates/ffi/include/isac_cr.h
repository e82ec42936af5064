#ifndef ISAC_CR_H
#define ISAC_CR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsacStatus {
  ISAC_STATUS_OK = 0,
  ISAC_STATUS_NULL_POINTER = 1,
  ISAC_STATUS_INVALID_PARAMS = 2,
  // Threshold below the smallest achievable CRB.
  ISAC_STATUS_INFEASIBLE = 3,
  // The solver stopped at its iteration cap; the outcome is still usable.
  ISAC_STATUS_MAX_ITERATIONS = 4,
  ISAC_STATUS_BUFFER_TOO_SMALL = 5,
  ISAC_STATUS_INTERNAL = 6,
} IsacStatus;

// Values accepted wherever a function takes `scenario_id`.
typedef enum IsacScenario {
  ISAC_SCENARIO_POINT = 1,
  ISAC_SCENARIO_TRACE = 2,
  ISAC_SCENARIO_MAX_EIG = 3,
  ISAC_SCENARIO_LOG_DET = 4,
} IsacScenario;

// Communication channel and its decomposition.
typedef struct IsacChannel IsacChannel;

// Result of one solve.
typedef struct IsacOutcome IsacOutcome;

// System parameters; fill with [`isac_params_default`] and adjust.
typedef struct IsacParams {
  size_t m_tx;
  size_t n_rx_sense;
  size_t n_rx_comm;
  size_t cpi_len;
  double power;
  double noise_comm;
  double noise_sense;
  double reflect_re;
  double reflect_im;
  double target_angle;
  // Rician factor; `INFINITY` for pure line of sight.
  double rician_k;
  uint64_t seed;
} IsacParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *isac_last_error(void);

// Writes the built-in reference parameters to `out`.
//
// # Safety
// `out` must be null or point to writable memory for one `IsacParams`.
enum IsacStatus isac_params_default(struct IsacParams *out);

// Seeded Rician channel with line-of-sight angles `theta_rx`, `theta_tx`.
//
// # Safety
// `params` must point to a valid `IsacParams`; `out` to writable storage
// for one pointer.
enum IsacStatus isac_channel_rician(const struct IsacParams *params,
                                    double theta_rx,
                                    double theta_tx,
                                    struct IsacChannel **out);

// Channel from an `n_rx x m_tx` row-major matrix given as interleaved
// (re, im) pairs, `2 * n_rx * m_tx` doubles in total.
//
// # Safety
// `data` must point to `2 * n_rx * m_tx` readable doubles; `out` to
// writable storage for one pointer.
enum IsacStatus isac_channel_from_matrix(size_t n_rx,
                                         size_t m_tx,
                                         const double *data,
                                         struct IsacChannel **out);

// Rank of the channel, or 0 for a null handle.
//
// # Safety
// `ch` must be null or a live handle.
size_t isac_channel_rank(const struct IsacChannel *ch);

// # Safety
// `ch` must be null or a handle not yet freed.
void isac_channel_free(struct IsacChannel *ch);

// Smallest CRB achievable under the power budget (`ln` of it for log-det).
//
// # Safety
// `params` must point to a valid `IsacParams`; `out` to one writable double.
enum IsacStatus isac_crb_min(const struct IsacParams *params, int32_t scenario_id, double *out);

// Maximizes the rate subject to the scenario's CRB not exceeding `gamma`
// (`ln Γ` for log-det). On `Ok` and `MaxIterations` an outcome is written
// to `out`; on any other status `out` is set to null.
//
// # Safety
// `params` must point to a valid `IsacParams`, `ch` must be a live handle
// built for the same antenna counts, and `out` writable storage for one
// pointer.
enum IsacStatus isac_solve(const struct IsacParams *params,
                           const struct IsacChannel *ch,
                           int32_t scenario_id,
                           double gamma,
                           struct IsacOutcome **out);

// Achieved rate in bits per channel use, NaN for a null handle.
//
// # Safety
// `o` must be null or a live handle.
double isac_outcome_rate(const struct IsacOutcome *o);

// Achieved value of the scenario's CRB metric (`ln` for log-det), NaN for
// a null handle or unknown scenario.
//
// # Safety
// `o` must be null or a live handle.
double isac_outcome_crb(const struct IsacOutcome *o, int32_t scenario_id);

// Number of transmit antennas `M` of the covariance, 0 for null.
//
// # Safety
// `o` must be null or a live handle.
size_t isac_outcome_dim(const struct IsacOutcome *o);

// Copies the transmit covariance into `buf` as `M*M` row-major interleaved
// (re, im) pairs. `len` is the buffer length in doubles and must be at
// least `2*M*M`.
//
// # Safety
// `o` must be a live handle and `buf` point to `len` writable doubles.
enum IsacStatus isac_outcome_covariance(const struct IsacOutcome *o, double *buf, size_t len);

// Full outcome as a JSON document; free with [`isac_string_free`]. Null on
// failure.
//
// # Safety
// `o` must be null or a live handle.
char *isac_outcome_to_json(const struct IsacOutcome *o);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void isac_string_free(char *s);

// # Safety
// `o` must be null or a handle not yet freed.
void isac_outcome_free(struct IsacOutcome *o);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAC_CR_H */
