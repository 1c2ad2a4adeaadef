#ifndef RELAY_HARQ_H
#define RELAY_HARQ_H

/* Generated by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define RH_OK 0

#define RH_NULL_POINTER 1

#define RH_INVALID_ARGUMENT 2

#define RH_NO_CONVERGENCE 3

#define RH_UNSUPPORTED 4

#define RH_INFEASIBLE 5

#define RH_SEARCH_TOO_LARGE 6

#define RH_BUFFER_TOO_SMALL 7

#define RH_INTERNAL 8

#define RH_PANIC 9

#define RH_FADING_SLOW 0

#define RH_FADING_FAST 1

#define RH_STRATEGY_NON_CUMULATIVE 0

#define RH_STRATEGY_FULLY_CUMULATIVE 1

#define RH_STRATEGY_TYPE1 2

#define RH_STRATEGY_TYPE1_CUMULATIVE 3

#define RH_EXACT 0

#define RH_APPROX 1

// Opaque network handle.
typedef struct RhNetwork RhNetwork;

// Timing parameters in seconds. `tau_total <= 0` means no deadline: the
// deadline is then `q_sum` attempt slots.
typedef struct RhDelayParams {
  double tau_p;
  double tau_d;
  double tau_nack;
  double alpha;
  double tau_total;
} RhDelayParams;

// Ensemble statistics. `eta` and `avg_delay` are NaN when undefined.
typedef struct RhEnsembleSummary {
  uint64_t n_packets;
  uint64_t delivered;
  uint64_t dropped;
  uint64_t late;
  double p_drop;
  double p_deadline;
  double pdv;
  double eta;
  double avg_delay;
  double deadline;
} RhEnsembleSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *rh_last_error(void);

// Create a network from `n` LOS fractions, the rate in bits/s/Hz and the
// linear SNR.
//
// # Safety
// `los` must point to `n` readable doubles; `out` must be writable.
int32_t rh_network_new(const double *los,
                       uintptr_t n,
                       double rate,
                       double snr,
                       struct RhNetwork **out);

// Release a network. Null is ignored.
//
// # Safety
// `net` must come from `rh_network_new` and not be used afterwards.
void rh_network_free(struct RhNetwork *net);

// Number of hops, or 0 for a null handle.
//
// # Safety
// `net` must be null or a live handle.
uintptr_t rh_network_hop_count(const struct RhNetwork *net);

// Generalised Marcum-Q function `Q_m(a, b)`.
//
// # Safety
// `out` must be writable.
int32_t rh_marcum_q(uint32_t m, double a, double b, double *out);

// Packet-drop probability of an allocation.
//
// # Safety
// `q` must point to `len` readable values; `out` must be writable.
int32_t rh_pdp(const struct RhNetwork *net,
               const uint32_t *q,
               uintptr_t len,
               uint32_t fading_mode,
               uint32_t strategy_kind,
               uint32_t exactness_kind,
               double *out);

// Exhaustive search for the best allocation of `q_sum` attempts.
// `alloc_out` receives one entry per hop; `pdp_out` may be null.
//
// # Safety
// `alloc_out` must point to `len` writable values.
int32_t rh_exhaustive_search(const struct RhNetwork *net,
                             uint32_t q_sum,
                             uint32_t fading_mode,
                             uint32_t exactness_kind,
                             uint32_t strategy_kind,
                             uint32_t *alloc_out,
                             uintptr_t len,
                             double *pdp_out);

// Low-complexity allocation: Algorithm 1 for slow fading, FTML for fast
// fading. `pdp_out` receives the approximate PDP; `pdp_out` and
// `list_len_out` may be null.
//
// # Safety
// `alloc_out` must point to `len` writable values.
int32_t rh_list_search(const struct RhNetwork *net,
                       uint32_t q_sum,
                       uint32_t fading_mode,
                       uint32_t *alloc_out,
                       uintptr_t len,
                       double *pdp_out,
                       uintptr_t *list_len_out);

// Simulate `n_packets` packets and summarise them.
//
// # Safety
// `q` must point to `len` readable values; `delays` must be readable and
// `out` writable.
int32_t rh_run_ensemble(const struct RhNetwork *net,
                        const uint32_t *q,
                        uintptr_t len,
                        uint32_t fading_mode,
                        uint32_t strategy_kind,
                        const struct RhDelayParams *delays,
                        uint64_t n_packets,
                        uint64_t seed,
                        struct RhEnsembleSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELAY_HARQ_H */
