use std::ffi::{CStr, CString};
use std::ptr;

use cogdesk::flowcodec::encode_pixel;
use cogdesk::sim2d::{Sim, SimConfig, TaskId};
use cogdesk_ffi::*;

fn last_error() -> String {
    let p = cg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_sim(toml: Option<&str>) -> *mut CgSim {
    let cfg = toml.map(|t| CString::new(t).unwrap());
    let mut sim = ptr::null_mut();
    let st = unsafe { cg_sim_new(cfg.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut sim) };
    assert_eq!(st, CgStatus::Ok);
    sim
}

#[test]
fn sim_handle_matches_library_rollout() {
    let sim = new_sim(Some("resolution = 32"));
    let task = CString::new("push_box").unwrap();
    assert_eq!(unsafe { cg_sim_reset(sim, task.as_ptr(), 7) }, CgStatus::Ok);
    assert!(cg_last_error().is_null());

    let lib = Sim::new(SimConfig { resolution: 32, ..Default::default() }).unwrap();
    let mut state = lib.reset(TaskId::PushBox, 7);
    let mut res = 0;
    unsafe { cg_sim_resolution(sim, &mut res) };
    assert_eq!(res, 32);
    let mut buf = vec![0u8; 32 * 32 * 3];
    for i in 0..20 {
        let row = [1.9 + 0.01 * i as f64, -1.5, 1.2, 1.5, 0.5, 1.0];
        let mut reward = 9u8;
        assert_eq!(unsafe { cg_sim_step(sim, row.as_ptr(), &mut reward) }, CgStatus::Ok);
        let out = lib.step(&state, &cogdesk::sim2d::Action::from_row(&row));
        state = out.state;
        assert_eq!(reward, out.reward);
        assert_eq!(unsafe { cg_sim_render(sim, buf.as_mut_ptr(), buf.len()) }, CgStatus::Ok);
        assert_eq!(buf.as_slice(), out.observation.as_raw());
    }
    let mut p = [0.0; 6];
    unsafe { cg_sim_proprio(sim, p.as_mut_ptr()) };
    assert_eq!(p, state.proprio());
    assert_eq!(unsafe { cg_sim_render(sim, buf.as_mut_ptr(), 5) }, CgStatus::BufferSize);
    unsafe { cg_sim_free(sim) };
}

#[test]
fn errors_are_reported_with_messages() {
    let mut sim = ptr::null_mut();
    let bad = CString::new("resolution = \"big\"").unwrap();
    assert_eq!(unsafe { cg_sim_new(bad.as_ptr(), &mut sim) }, CgStatus::InvalidArgument);
    assert!(sim.is_null());
    assert!(!last_error().is_empty());

    let sim = new_sim(None);
    let task = CString::new("juggle").unwrap();
    assert_eq!(unsafe { cg_sim_reset(sim, task.as_ptr(), 0) }, CgStatus::InvalidArgument);
    assert!(last_error().contains("juggle"));
    assert_eq!(unsafe { cg_sim_reset(sim, ptr::null(), 0) }, CgStatus::NullPointer);
    let nan = [f64::NAN; 6];
    assert_eq!(unsafe { cg_sim_step(sim, nan.as_ptr(), ptr::null_mut()) }, CgStatus::InvalidArgument);
    let mut j = [0.0; 2];
    assert_eq!(unsafe { cg_fk(sim, 2, j.as_ptr(), j.as_mut_ptr(), ptr::null_mut()) }, CgStatus::InvalidArgument);
    assert_eq!(unsafe { cg_ik(sim, 0, [9.0, 9.0].as_ptr(), j.as_mut_ptr()) }, CgStatus::Unreachable);
    unsafe { cg_sim_free(sim) };
    unsafe { cg_sim_free(ptr::null_mut()) };
}

#[test]
fn ik_inverts_fk() {
    let sim = new_sim(None);
    for arm in 0..2u32 {
        let joints = if arm == 0 { [1.2, -1.0] } else { [1.9, 1.0] };
        let (mut pos, mut ang) = ([0.0; 2], 0.0);
        assert_eq!(unsafe { cg_fk(sim, arm, joints.as_ptr(), pos.as_mut_ptr(), &mut ang) }, CgStatus::Ok);
        let mut back = [0.0; 2];
        assert_eq!(unsafe { cg_ik(sim, arm, pos.as_ptr(), back.as_mut_ptr()) }, CgStatus::Ok, "{}", last_error());
        let mut again = [0.0; 2];
        unsafe { cg_fk(sim, arm, back.as_ptr(), again.as_mut_ptr(), ptr::null_mut()) };
        assert!((again[0] - pos[0]).abs() < 1e-9 && (again[1] - pos[1]).abs() < 1e-9);
    }
    unsafe { cg_sim_free(sim) };
}

#[test]
fn flow_codec_round_trip() {
    let mut rgb = [0u8; 3];
    assert_eq!(unsafe { cg_flow_encode(0.0, 0.0, 4.0, rgb.as_mut_ptr()) }, CgStatus::Ok);
    assert_eq!(rgb, [255; 3]);
    assert_eq!(unsafe { cg_flow_encode(1.5, -2.0, 4.0, rgb.as_mut_ptr()) }, CgStatus::Ok);
    assert_eq!(rgb, encode_pixel([1.5, -2.0], 4.0));
    let (mut f, mut valid) = ([0.0; 2], false);
    assert_eq!(unsafe { cg_flow_decode(rgb.as_ptr(), 4.0, f.as_mut_ptr(), &mut valid) }, CgStatus::Ok);
    assert!(valid);
    assert!((f[0] - 1.5).abs() < 0.2 && (f[1] + 2.0).abs() < 0.2, "{f:?}");
    assert_eq!(unsafe { cg_flow_encode(1.0, 0.0, 0.0, rgb.as_mut_ptr()) }, CgStatus::InvalidArgument);
}

#[test]
fn image_metrics() {
    let a = vec![10u8; 12 * 12 * 3];
    let b = vec![11u8; 12 * 12 * 3];
    let mut v = 0.0;
    assert_eq!(unsafe { cg_psnr(a.as_ptr(), b.as_ptr(), 12, 12, &mut v) }, CgStatus::Ok);
    assert!((v - 48.1308036086791).abs() < 1e-9);
    assert_eq!(unsafe { cg_ssim(a.as_ptr(), a.as_ptr(), 12, 12, &mut v) }, CgStatus::Ok);
    assert!((v - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { cg_ssim(a.as_ptr(), b.as_ptr(), 4, 4, &mut v) }, CgStatus::InvalidArgument);
}

#[test]
fn retarget_worked_example() {
    let t1 = [0.01, 0.0, -3.2, 0.0, -0.01, 2.4, 0.0, 0.0, 1.0];
    let mut out = [0.0; 4];
    assert_eq!(unsafe { cg_retarget(t1.as_ptr(), ptr::null(), 400.0, 300.0, 0.0, 2.0, out.as_mut_ptr()) }, CgStatus::Ok);
    assert!((out[0] - 0.8).abs() < 1e-12 && (out[1] + 0.6).abs() < 1e-12);
    assert_eq!(out[3], 1.0);
    assert_eq!(
        unsafe { cg_retarget(ptr::null(), ptr::null(), f64::NAN, 0.0, 0.0, 0.0, out.as_mut_ptr()) },
        CgStatus::InvalidArgument
    );
}
