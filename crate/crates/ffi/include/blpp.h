#ifndef BLPP_H
#define BLPP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BlppStatus {
  BLPP_STATUS_OK = 0,
  BLPP_STATUS_INVALID_PARAMETER = 1,
  BLPP_STATUS_SHAPE_MISMATCH = 2,
  BLPP_STATUS_POLE_COLLISION = 3,
  BLPP_STATUS_CONVERGENCE = 4,
  BLPP_STATUS_PRECISION_LOSS = 5,
  BLPP_STATUS_TRUNCATION = 6,
  BLPP_STATUS_NON_DECAYING = 7,
  BLPP_STATUS_DISTRIBUTIONAL = 8,
  BLPP_STATUS_CONFIG = 9,
  BLPP_STATUS_INCOMPARABLE = 10,
  BLPP_STATUS_IO = 11,
  BLPP_STATUS_NULL_POINTER = 12,
  BLPP_STATUS_PANIC = 13,
} BlppStatus;

/*
 Brownian initial data.
 */
typedef struct BlppContinuumIc BlppContinuumIc;

/*
 Geometric parameters with column initial data.
 */
typedef struct BlppDiscreteModel BlppDiscreteModel;

/*
 A Monte Carlo frequency.
 */
typedef struct BlppEstimate {
  double value;
  double stderr;
  /*
   99% DKW half-width.
   */
  double band;
  uint64_t samples;
} BlppEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, `<crate version>+<git describe>`. Static storage.
 */
const char *blpp_version(void);

/*
 Message of the last failed call on this thread; empty after a success.
 Valid until the next call into the library on this thread.
 */
const char *blpp_last_error_message(void);

/*
 Narrow-wedge data: `X(0) = 0`, `-∞` elsewhere.

 # Safety
 `out` must be valid for a pointer write.
 */
enum BlppStatus blpp_ic_narrow_wedge(struct BlppContinuumIc **out);

/*
 Constant data `X = level`.

 # Safety
 `out` must be valid for a pointer write.
 */
enum BlppStatus blpp_ic_flat(double level, struct BlppContinuumIc **out);

/*
 Piecewise-linear data through `(t[i], x[i])`, `t` increasing from 0 to 1.

 # Safety
 `t` and `x` must point to `len` doubles; `out` must be valid for a pointer write.
 */
enum BlppStatus blpp_ic_piecewise_linear(const double *t,
                                         const double *x,
                                         size_t len,
                                         struct BlppContinuumIc **out);

/*
 # Safety
 `ic` must come from a `blpp_ic_*` constructor and not be used afterwards. Null is ignored.
 */
void blpp_ic_free(struct BlppContinuumIc *ic);

/*
 Geometric model with weight parameter `q`, walk parameter `theta` and
 column data `x[0..len]` (weakly increasing).

 # Safety
 `x` must point to `len` integers; `out` must be valid for a pointer write.
 */
enum BlppStatus blpp_discrete_model_new(double q,
                                        double theta,
                                        const int64_t *x,
                                        size_t len,
                                        struct BlppDiscreteModel **out);

/*
 # Safety
 `model` must come from [`blpp_discrete_model_new`] and not be used afterwards. Null is ignored.
 */
void blpp_discrete_model_free(struct BlppDiscreteModel *model);

/*
 `P(G(m, columns[i]) < levels[i] for all i)` by the Fredholm determinant.
 `certificate` may be null.

 # Safety
 `columns` and `levels` must point to `k` values; `value` must be writable.
 */
enum BlppStatus blpp_discrete_probability(const struct BlppDiscreteModel *model,
                                          uint32_t m,
                                          const uint64_t *columns,
                                          const int64_t *levels,
                                          size_t k,
                                          double *value,
                                          double *certificate);

/*
 Geometric kernel `K(n1, z1; n2, z2)` after `m` steps with its tail bound.
 `tail_bound` may be null.

 # Safety
 `value` must be writable.
 */
enum BlppStatus blpp_discrete_kernel(const struct BlppDiscreteModel *model,
                                     uint32_t m,
                                     uint64_t n1,
                                     int64_t z1,
                                     uint64_t n2,
                                     int64_t z2,
                                     double *value,
                                     double *tail_bound);

/*
 Monte Carlo frequency of the same event as [`blpp_discrete_probability`].

 # Safety
 `columns` and `levels` must point to `k` values; `estimate` must be writable.
 */
enum BlppStatus blpp_discrete_monte_carlo(const struct BlppDiscreteModel *model,
                                          uint32_t m,
                                          const uint64_t *columns,
                                          const int64_t *levels,
                                          size_t k,
                                          uint64_t samples,
                                          uint64_t seed,
                                          struct BlppEstimate *estimate);

/*
 `P(BLPP(X; (times[i], m)) <= thresholds[i] for all i)` by the Fredholm
 determinant. `nodes = 0` refines until successive values differ by less
 than `1e-4`; otherwise a fixed node count per slice is used. `seed` drives
 the simulated hypograph kernel of piecewise-linear data. `stderr` and
 `certificate` may be null.

 # Safety
 `times` and `thresholds` must point to `k` doubles; `value` must be writable.
 */
enum BlppStatus blpp_continuum_probability(const struct BlppContinuumIc *ic,
                                           uint32_t m,
                                           const double *times,
                                           const double *thresholds,
                                           size_t k,
                                           uint64_t nodes,
                                           uint64_t seed,
                                           double *value,
                                           double *stderr,
                                           double *certificate);

/*
 Direct Monte Carlo of the Brownian model on a time mesh, with the
 Brownian-bridge correction.

 # Safety
 `times` and `thresholds` must point to `k` doubles; `estimate` must be writable.
 */
enum BlppStatus blpp_continuum_monte_carlo(const struct BlppContinuumIc *ic,
                                           uint32_t m,
                                           const double *times,
                                           const double *thresholds,
                                           size_t k,
                                           uint64_t samples,
                                           double mesh,
                                           uint64_t seed,
                                           struct BlppEstimate *estimate);

/*
 Heat kernel `(2πt)^{-1/2} exp(-(x-y)²/2t)`.

 # Safety
 `value` must be writable.
 */
enum BlppStatus blpp_heat_kernel(double t, double x, double y, double *value);

/*
 `S_{m,t}(x, y)` for any integer `m` and real `t`.

 # Safety
 `value` must be writable.
 */
enum BlppStatus blpp_s_mt(int64_t m, double t, double x, double y, double *value);

/*
 Brownian extended kernel `K(t1, x; t2, y)`. Piecewise-linear data is
 simulated with `samples` paths; `stderr` may be null.

 # Safety
 `value` must be writable.
 */
enum BlppStatus blpp_extended_kernel(const struct BlppContinuumIc *ic,
                                     uint32_t m,
                                     double t1,
                                     double x,
                                     double t2,
                                     double y,
                                     uint64_t samples,
                                     uint64_t seed,
                                     double *value,
                                     double *stderr);

/*
 Run a named experiment (`"fredholm-continuum"`, `"mc-blpp"`, ...) from a
 JSON config and return its record as a JSON string. Free the string with
 [`blpp_string_free`]. `passed` may be null.

 # Safety
 `experiment` and `config_json` must be nul-terminated; `record_json` must be writable.
 */
enum BlppStatus blpp_run_experiment(const char *experiment,
                                    const char *config_json,
                                    char **record_json,
                                    bool *passed);

/*
 # Safety
 `s` must come from this library and not be used afterwards. Null is ignored.
 */
void blpp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLPP_H */
