#ifndef TACSIM_H
#define TACSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TacsimStatus {
  TACSIM_OK = 0,
  TACSIM_INVALID_ARGUMENT = 2,
  TACSIM_CONFIG = 3,
  TACSIM_IO = 4,
  TACSIM_SOLVER = 5,
  TACSIM_DIMENSION_MISMATCH = 7,
  TACSIM_NULL_POINTER = 8,
  TACSIM_BUFFER_TOO_SMALL = 9,
  TACSIM_PANIC = 10,
} TacsimStatus;

// Opaque simulation handle: a loaded scene and its current state.
typedef struct TacsimSim TacsimSim;

typedef struct TacsimImageMetrics {
  double ssim;
  double mae;
  double psnr;
} TacsimImageMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null if none. The pointer
// stays valid until the next failing call on this thread.
const char *tacsim_last_error(void);

// Library version as a static nul-terminated string.
const char *tacsim_version(void);

// Loads a scene configuration and places it at rest in `*out`.
//
// # Safety
// `config_path` must be a nul-terminated UTF-8 string; `out` must be writable.
enum TacsimStatus tacsim_sim_load(const char *config_path, struct TacsimSim **out);

// # Safety
// `sim` must come from [`tacsim_sim_load`] and not be used afterwards.
void tacsim_sim_free(struct TacsimSim *sim);

// Advances the simulation by `n_steps` time steps. On a solver failure the
// handle keeps the last successful state.
//
// # Safety
// `sim` must be a live handle.
enum TacsimStatus tacsim_sim_step(struct TacsimSim *sim, size_t n_steps);

// Number of steps configured in the scene's motion script.
//
// # Safety
// `sim` must be a live handle; `out` must be writable.
enum TacsimStatus tacsim_sim_scripted_steps(const struct TacsimSim *sim, size_t *out);

// Current simulated time in seconds and the number of completed steps.
//
// # Safety
// `sim` must be a live handle; `time` and `steps` must be writable.
enum TacsimStatus tacsim_sim_time(const struct TacsimSim *sim, double *time, uint64_t *steps);

// Vertex counts: gel vertices first, then indenter vertices.
//
// # Safety
// `sim` must be a live handle; `n_gel` and `n_total` must be writable.
enum TacsimStatus tacsim_sim_vertex_count(const struct TacsimSim *sim,
                                          size_t *n_gel,
                                          size_t *n_total);

// Copies positions as `x y z` triples into `out`, which holds `len` doubles
// and needs at least `3 * n_total`.
//
// # Safety
// `sim` must be a live handle; `out` must point to `len` writable doubles.
enum TacsimStatus tacsim_sim_positions(const struct TacsimSim *sim, double *out, size_t len);

// Height map dimensions of the current frame.
//
// # Safety
// `sim` must be a live handle; `width` and `height` must be writable.
enum TacsimStatus tacsim_sim_heightmap_size(const struct TacsimSim *sim,
                                            size_t *width,
                                            size_t *height);

// Copies the current height map, row-major, into `out`. Pixels outside the
// gel surface are NaN.
//
// # Safety
// `sim` must be a live handle; `out` must point to `len` writable doubles.
enum TacsimStatus tacsim_sim_heightmap(const struct TacsimSim *sim, double *out, size_t len);

// Copies the current pseudo-image as interleaved RGB8 into `out`, which
// needs `3 * width * height` bytes. Fails with `TACSIM_CONFIG` if the scene
// does not render images.
//
// # Safety
// `sim` must be a live handle; `out` must point to `len` writable bytes.
enum TacsimStatus tacsim_sim_image(const struct TacsimSim *sim, uint8_t *out, size_t len);

// SSIM, MAE and PSNR between two interleaved RGB8 images of equal size.
//
// # Safety
// `a` and `b` must each point to `3 * width * height` readable bytes; `out`
// must be writable.
enum TacsimStatus tacsim_image_metrics(const uint8_t *a,
                                       const uint8_t *b,
                                       size_t width,
                                       size_t height,
                                       struct TacsimImageMetrics *out);

// Composites a simulated image onto a real reference frame: adds the
// per-pixel difference between `sim` and `sim_ref` to `real_ref`. All four
// buffers are interleaved RGB8 of the same size.
//
// # Safety
// The three inputs must each point to `3 * width * height` readable bytes;
// `out` must point to `len` writable bytes.
enum TacsimStatus tacsim_composite(const uint8_t *sim,
                                   const uint8_t *sim_ref,
                                   const uint8_t *real_ref,
                                   size_t width,
                                   size_t height,
                                   uint8_t *out,
                                   size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TACSIM_H */
