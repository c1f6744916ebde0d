#ifndef COGDESK_H
#define COGDESK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum CgStatus {
  CG_STATUS_OK = 0,
  CG_STATUS_NULL_POINTER = 1,
  CG_STATUS_INVALID_ARGUMENT = 2,
  // Inverse kinematics target outside the annulus the arm can reach.
  CG_STATUS_UNREACHABLE = 3,
  CG_STATUS_BUFFER_SIZE = 4,
  // A Rust panic was caught at the boundary.
  CG_STATUS_INTERNAL = 5,
} CgStatus;

// Simulator plus its current state.
typedef struct CgSim CgSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// successful call. Valid until the next call on the same thread.
const char *cg_last_error(void);

// Creates a simulator from a TOML configuration (null for defaults) and
// resets it to `lift_bag` with seed 0.
//
// # Safety
// `config_toml` must be null or a NUL-terminated string; `out` must be
// writable.
enum CgStatus cg_sim_new(const char *config_toml, struct CgSim **out);

// # Safety
// `sim` must be null or a handle from [`cg_sim_new`] not yet freed.
void cg_sim_free(struct CgSim *sim);

// Resets to `task` (`lift_bag`, `block_handover` or `push_box`).
//
// # Safety
// `sim` must be a live handle and `task` a NUL-terminated string.
enum CgStatus cg_sim_reset(struct CgSim *sim, const char *task, uint64_t seed);

// Applies one action row: four joint targets (rad) then two gripper
// targets in [0, 1]. Writes 1 to `reward` once the task is solved.
//
// # Safety
// `sim` must be a live handle, `action` must point to 6 doubles and
// `reward` must be null or writable.
enum CgStatus cg_sim_step(struct CgSim *sim, const double *action, uint8_t *reward);

// Square render resolution in pixels.
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum CgStatus cg_sim_resolution(const struct CgSim *sim, uintptr_t *out);

// Renders the current state into `buf`, which must hold exactly
// resolution × resolution × 3 bytes.
//
// # Safety
// `sim` must be a live handle and `buf` valid for `len` bytes.
enum CgStatus cg_sim_render(const struct CgSim *sim, uint8_t *buf, uintptr_t len);

// Joint angles of both arms then both gripper openings.
//
// # Safety
// `sim` must be a live handle and `out` valid for 6 doubles.
enum CgStatus cg_sim_proprio(const struct CgSim *sim, double *out);

// End-effector position and distal link angle for `joints` of `arm`
// (0 left, 1 right).
//
// # Safety
// `joints` must point to 2 doubles, `position` to 2 writable doubles and
// `angle` must be null or writable.
enum CgStatus cg_fk(const struct CgSim *sim,
                    uint32_t arm,
                    const double *joints,
                    double *position,
                    double *angle);

// Joint angles placing the end effector of `arm` at `target`, using the
// arm's configured elbow branch. Returns `Unreachable` outside the
// workspace annulus.
//
// # Safety
// `target` must point to 2 doubles and `joints` to 2 writable doubles.
enum CgStatus cg_ik(const struct CgSim *sim, uint32_t arm, const double *target, double *joints);

// Colour-wheel colour of one flow vector (pixels per frame).
//
// # Safety
// `rgb` must point to 3 writable bytes.
enum CgStatus cg_flow_encode(double fx, double fy, double f_max, uint8_t *rgb);

// Inverse of [`cg_flow_encode`]. `valid` is false for colours off the
// wheel; the flow is then the nearest on-wheel estimate.
//
// # Safety
// `rgb` must point to 3 bytes, `flow` to 2 writable doubles and `valid`
// must be null or writable.
enum CgStatus cg_flow_decode(const uint8_t *rgb, double f_max, double *flow, bool *valid);

// PSNR in dB over all channels, capped at 100 for identical images.
//
// # Safety
// `a` and `b` must each hold height × width × 3 bytes; `out` writable.
enum CgStatus cg_psnr(const uint8_t *a,
                      const uint8_t *b,
                      uintptr_t height,
                      uintptr_t width,
                      double *out);

// Mean SSIM over channels with an 11×11 Gaussian window (σ = 1.5).
// Both sides must be at least 11 pixels.
//
// # Safety
// `a` and `b` must each hold height × width × 3 bytes; `out` writable.
enum CgStatus cg_ssim(const uint8_t *a,
                      const uint8_t *b,
                      uintptr_t height,
                      uintptr_t width,
                      double *out);

// Maps a hand pose in device coordinates to an end-effector target:
// `t1 · pose · t2`, with both transforms given as 9 row-major doubles.
// Null transforms select the default canvas mapping and the identity.
// `out` receives x, y, orientation and grip in [0, 1].
//
// # Safety
// `t1`, `t2` must be null or point to 9 doubles; `out` to 4 writable
// doubles.
enum CgStatus cg_retarget(const double *t1,
                          const double *t2,
                          double x,
                          double y,
                          double orientation,
                          double pinch,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COGDESK_H */
