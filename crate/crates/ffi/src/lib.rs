//! C ABI over the deterministic parts of cogdesk.
//!
//! Every function returns a [`CgStatus`]. On failure a message is kept in a
//! thread-local slot readable with [`cg_last_error`]. The simulator is an
//! opaque [`CgSim`] handle owned by the caller; release it with
//! [`cg_sim_free`]. Images are tightly packed row-major RGB8 buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cogdesk::eval::{psnr, ssim};
use cogdesk::flowcodec::{decode_pixel, encode_pixel};
use cogdesk::image::Rgb8Image;
use cogdesk::sim2d::kinematics::{forward_kinematics, inverse_kinematics};
use cogdesk::sim2d::{Action, Sim, SimConfig, SimState, TaskId};
use cogdesk::teleop::{retarget, Hand, HandPose, RetargetConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Inverse kinematics target outside the annulus the arm can reach.
    Unreachable = 3,
    BufferSize = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type FfiResult = Result<(), (CgStatus, String)>;

fn fail(status: CgStatus, msg: impl Into<String>) -> FfiResult {
    Err((status, msg.into()))
}

fn invalid(e: impl std::fmt::Display) -> (CgStatus, String) {
    (CgStatus::InvalidArgument, e.to_string())
}

fn guard(f: impl FnOnce() -> FfiResult) -> CgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CgStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CgStatus::Internal
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(CgStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Simulator plus its current state.
pub struct CgSim {
    sim: Sim,
    state: SimState,
}

/// Creates a simulator from a TOML configuration (null for defaults) and
/// resets it to `lift_bag` with seed 0.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cg_sim_new(config_toml: *const c_char, out: *mut *mut CgSim) -> CgStatus {
    guard(|| {
        non_null!(out);
        let cfg = if config_toml.is_null() {
            SimConfig::default()
        } else {
            let text = CStr::from_ptr(config_toml).to_str().map_err(invalid)?;
            SimConfig::from_toml_str(text).map_err(invalid)?
        };
        let sim = Sim::new(cfg).map_err(invalid)?;
        let state = sim.reset(TaskId::LiftBag, 0);
        *out = Box::into_raw(Box::new(CgSim { sim, state }));
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle from [`cg_sim_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cg_sim_free(sim: *mut CgSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Resets to `task` (`lift_bag`, `block_handover` or `push_box`).
///
/// # Safety
/// `sim` must be a live handle and `task` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cg_sim_reset(sim: *mut CgSim, task: *const c_char, seed: u64) -> CgStatus {
    guard(|| {
        non_null!(sim, task);
        let task: TaskId = CStr::from_ptr(task).to_str().map_err(invalid)?.parse().map_err(invalid)?;
        let s = &mut *sim;
        s.state = s.sim.reset(task, seed);
        Ok(())
    })
}

/// Applies one action row: four joint targets (rad) then two gripper
/// targets in [0, 1]. Writes 1 to `reward` once the task is solved.
///
/// # Safety
/// `sim` must be a live handle, `action` must point to 6 doubles and
/// `reward` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cg_sim_step(sim: *mut CgSim, action: *const f64, reward: *mut u8) -> CgStatus {
    guard(|| {
        non_null!(sim, action);
        let row = std::slice::from_raw_parts(action, 6);
        let a = Action::from_row(row);
        if !a.is_finite() {
            return fail(CgStatus::InvalidArgument, "action is not finite");
        }
        let s = &mut *sim;
        let (next, r) = s.sim.step_state(&s.state, &a);
        s.state = next;
        if !reward.is_null() {
            *reward = r;
        }
        Ok(())
    })
}

/// Square render resolution in pixels.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_sim_resolution(sim: *const CgSim, out: *mut usize) -> CgStatus {
    guard(|| {
        non_null!(sim, out);
        *out = (*sim).sim.config().resolution;
        Ok(())
    })
}

/// Renders the current state into `buf`, which must hold exactly
/// resolution × resolution × 3 bytes.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cg_sim_render(sim: *const CgSim, buf: *mut u8, len: usize) -> CgStatus {
    guard(|| {
        non_null!(sim, buf);
        let s = &*sim;
        let img = s.sim.render(&s.state);
        if len != img.as_raw().len() {
            return fail(CgStatus::BufferSize, format!("need {} bytes, got {len}", img.as_raw().len()));
        }
        std::ptr::copy_nonoverlapping(img.as_raw().as_ptr(), buf, len);
        Ok(())
    })
}

/// Joint angles of both arms then both gripper openings.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn cg_sim_proprio(sim: *const CgSim, out: *mut f64) -> CgStatus {
    guard(|| {
        non_null!(sim, out);
        let p = (*sim).state.proprio();
        std::ptr::copy_nonoverlapping(p.as_ptr(), out, 6);
        Ok(())
    })
}

fn arm_index(arm: u32) -> Result<usize, (CgStatus, String)> {
    match arm {
        0 | 1 => Ok(arm as usize),
        _ => Err((CgStatus::InvalidArgument, format!("arm must be 0 or 1, got {arm}"))),
    }
}

/// End-effector position and distal link angle for `joints` of `arm`
/// (0 left, 1 right).
///
/// # Safety
/// `joints` must point to 2 doubles, `position` to 2 writable doubles and
/// `angle` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cg_fk(
    sim: *const CgSim,
    arm: u32,
    joints: *const f64,
    position: *mut f64,
    angle: *mut f64,
) -> CgStatus {
    guard(|| {
        non_null!(sim, joints, position);
        let cfg = (*sim).sim.config().arm(arm_index(arm)?);
        let ee = forward_kinematics(cfg, [*joints, *joints.add(1)]);
        *position = ee.position[0];
        *position.add(1) = ee.position[1];
        if !angle.is_null() {
            *angle = ee.angle;
        }
        Ok(())
    })
}

/// Joint angles placing the end effector of `arm` at `target`, using the
/// arm's configured elbow branch. Returns `Unreachable` outside the
/// workspace annulus.
///
/// # Safety
/// `target` must point to 2 doubles and `joints` to 2 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cg_ik(sim: *const CgSim, arm: u32, target: *const f64, joints: *mut f64) -> CgStatus {
    guard(|| {
        non_null!(sim, target, joints);
        let cfg = (*sim).sim.config().arm(arm_index(arm)?);
        match inverse_kinematics(cfg, [*target, *target.add(1)]).joints() {
            Some(j) => {
                *joints = j[0];
                *joints.add(1) = j[1];
                Ok(())
            }
            None => fail(CgStatus::Unreachable, "target outside the reachable annulus"),
        }
    })
}

/// Colour-wheel colour of one flow vector (pixels per frame).
///
/// # Safety
/// `rgb` must point to 3 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cg_flow_encode(fx: f64, fy: f64, f_max: f64, rgb: *mut u8) -> CgStatus {
    guard(|| {
        non_null!(rgb);
        if !(f_max > 0.0 && f_max.is_finite()) || !fx.is_finite() || !fy.is_finite() {
            return fail(CgStatus::InvalidArgument, "flow and f_max must be finite, f_max > 0");
        }
        let c = encode_pixel([fx, fy], f_max);
        std::ptr::copy_nonoverlapping(c.as_ptr(), rgb, 3);
        Ok(())
    })
}

/// Inverse of [`cg_flow_encode`]. `valid` is false for colours off the
/// wheel; the flow is then the nearest on-wheel estimate.
///
/// # Safety
/// `rgb` must point to 3 bytes, `flow` to 2 writable doubles and `valid`
/// must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cg_flow_decode(rgb: *const u8, f_max: f64, flow: *mut f64, valid: *mut bool) -> CgStatus {
    guard(|| {
        non_null!(rgb, flow);
        if !(f_max > 0.0 && f_max.is_finite()) {
            return fail(CgStatus::InvalidArgument, "f_max must be finite and positive");
        }
        let d = decode_pixel([*rgb, *rgb.add(1), *rgb.add(2)], f_max);
        *flow = d.flow[0];
        *flow.add(1) = d.flow[1];
        if !valid.is_null() {
            *valid = d.valid;
        }
        Ok(())
    })
}

unsafe fn image_pair(a: *const u8, b: *const u8, height: usize, width: usize) -> Result<(Rgb8Image, Rgb8Image), (CgStatus, String)> {
    let len = height.checked_mul(width).and_then(|n| n.checked_mul(3)).ok_or_else(|| invalid("image too large"))?;
    let a = Rgb8Image::from_raw(height, width, std::slice::from_raw_parts(a, len).to_vec()).map_err(invalid)?;
    let b = Rgb8Image::from_raw(height, width, std::slice::from_raw_parts(b, len).to_vec()).map_err(invalid)?;
    Ok((a, b))
}

/// PSNR in dB over all channels, capped at 100 for identical images.
///
/// # Safety
/// `a` and `b` must each hold height × width × 3 bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_psnr(a: *const u8, b: *const u8, height: usize, width: usize, out: *mut f64) -> CgStatus {
    guard(|| {
        non_null!(a, b, out);
        let (a, b) = image_pair(a, b, height, width)?;
        *out = psnr(&a, &b).map_err(invalid)?;
        Ok(())
    })
}

/// Mean SSIM over channels with an 11×11 Gaussian window (σ = 1.5).
/// Both sides must be at least 11 pixels.
///
/// # Safety
/// `a` and `b` must each hold height × width × 3 bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_ssim(a: *const u8, b: *const u8, height: usize, width: usize, out: *mut f64) -> CgStatus {
    guard(|| {
        non_null!(a, b, out);
        let (a, b) = image_pair(a, b, height, width)?;
        *out = ssim(&a, &b).map_err(invalid)?;
        Ok(())
    })
}

/// Maps a hand pose in device coordinates to an end-effector target:
/// `t1 · pose · t2`, with both transforms given as 9 row-major doubles.
/// Null transforms select the default canvas mapping and the identity.
/// `out` receives x, y, orientation and grip in [0, 1].
///
/// # Safety
/// `t1`, `t2` must be null or point to 9 doubles; `out` to 4 writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn cg_retarget(
    t1: *const f64,
    t2: *const f64,
    x: f64,
    y: f64,
    orientation: f64,
    pinch: f64,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        non_null!(out);
        let mut cfg = RetargetConfig::default();
        let read = |p: *const f64| -> [[f64; 3]; 3] { std::array::from_fn(|r| std::array::from_fn(|c| *p.add(r * 3 + c))) };
        if !t1.is_null() {
            cfg.t1 = read(t1);
        }
        if !t2.is_null() {
            cfg.t2 = read(t2);
        }
        cfg.validate().map_err(invalid)?;
        let pose = HandPose { t: 0, hand: Hand::Left, position: [x, y], orientation, pinch };
        let Some(t) = retarget(&pose, &cfg) else {
            return fail(CgStatus::InvalidArgument, "pose or transform is not finite");
        };
        for (i, v) in [t.position[0], t.position[1], t.orientation, t.grip].into_iter().enumerate() {
            *out.add(i) = v;
        }
        Ok(())
    })
}
