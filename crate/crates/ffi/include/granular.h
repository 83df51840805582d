#ifndef GRANULAR_H
#define GRANULAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GranularStatus {
  GRANULAR_STATUS_OK = 0,
  // Null pointer, bad UTF-8, wrong buffer length or invalid input data.
  GRANULAR_STATUS_INVALID_ARGUMENT = 1,
  GRANULAR_STATUS_INVALID_CONFIG = 2,
  GRANULAR_STATUS_NUMERICAL = 3,
  GRANULAR_STATUS_IO = 4,
  GRANULAR_STATUS_PANIC = 5,
} GranularStatus;

// A simulation: configuration, current state and inner solver.
typedef struct GranularSim GranularSim;

// A padded, normalized linear system loaded from a bundle.
typedef struct GranularSystem GranularSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failed call on this thread ("" after a
// successful call). Valid until the next call into the library.
const char *granular_last_error(void);

// Library version as a static NUL-terminated string.
const char *granular_version(void);

// Creates a simulation from a JSON config (null for defaults) with bodies
// placed by the config's seed.
//
// # Safety
// `config_json` must be null or a NUL-terminated string; `out` must be a
// valid pointer.
enum GranularStatus granular_sim_new(const char *config_json, struct GranularSim **out);

// # Safety
// `sim` must be null or a handle from [`granular_sim_new`] not yet freed.
void granular_sim_free(struct GranularSim *sim);

// # Safety
// `sim` must be a valid handle.
size_t granular_sim_body_count(const struct GranularSim *sim);

// Advances by `steps` time steps. On failure the state is left at the
// last step that succeeded.
//
// # Safety
// `sim` must be a valid handle.
enum GranularStatus granular_sim_step(struct GranularSim *sim, size_t steps);

// Copies the `3 * body_count` positions into `out`.
//
// # Safety
// `sim` must be a valid handle and `out` must point to `len` doubles.
enum GranularStatus granular_sim_positions(const struct GranularSim *sim, double *out, size_t len);

// Copies the `3 * body_count` velocities into `out`.
//
// # Safety
// `sim` must be a valid handle and `out` must point to `len` doubles.
enum GranularStatus granular_sim_velocities(const struct GranularSim *sim, double *out, size_t len);

// # Safety
// `sim` must be a valid handle; `time` and `kinetic` must be valid pointers.
enum GranularStatus granular_sim_status(const struct GranularSim *sim,
                                        double *time,
                                        double *kinetic);

// Loads a bundle directory (`A.mtx`, `b.txt`, `meta.json`).
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be a valid pointer.
enum GranularStatus granular_system_load(const char *dir, struct GranularSystem **out);

// # Safety
// `sys` must be null or a handle from [`granular_system_load`] not yet freed.
void granular_system_free(struct GranularSystem *sys);

// # Safety
// `sys` must be a valid handle; the output pointers must be valid.
enum GranularStatus granular_system_dims(const struct GranularSystem *sys,
                                         size_t *n_qubits,
                                         size_t *original_dim);

// Solution of the original (unpadded, unnormalized) system through the
// direct solver; `out` holds `original_dim` doubles.
//
// # Safety
// `sys` must be a valid handle and `out` must point to `len` doubles.
enum GranularStatus granular_system_solve_direct(const struct GranularSystem *sys,
                                                 double *out,
                                                 size_t len);

// Trains VNLS on the system (`vnls_json` configures it, null for defaults)
// and writes the recovered solution of the original system to `out`.
// `fidelity` may be null.
//
// # Safety
// `sys` must be a valid handle, `vnls_json` null or NUL-terminated, `out`
// must point to `len` doubles and `fidelity` must be null or valid.
enum GranularStatus granular_system_solve_vnls(const struct GranularSystem *sys,
                                               const char *vnls_json,
                                               double *out,
                                               size_t len,
                                               double *fidelity);

// Number of Pauli strings with `|coefficient| > tau` (`tau = 0` counts every
// stored term).
//
// # Safety
// `sys` must be a valid handle and `count` a valid pointer.
enum GranularStatus granular_system_pauli_count(const struct GranularSystem *sys,
                                                double tau,
                                                size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRANULAR_H */
