use std::ffi::{c_char, CStr};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dcyl_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; dcyl_last_error_length() + 1];
    assert_eq!(unsafe { dcyl_last_error_message(buf.as_mut_ptr(), buf.len()) }, DcylStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn walk_handle_round_trip() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { dcyl_geometry_cylinder(2, 5, &mut g) }, DcylStatus::Ok);
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { dcyl_walk_new(g, 3, &mut w) }, DcylStatus::Ok);
    assert_eq!(unsafe { dcyl_walk_advance(w, 1000) }, DcylStatus::Ok);
    let mut pos = [0i64; 3];
    assert_eq!(unsafe { dcyl_walk_position(w, pos.as_mut_ptr(), 3) }, DcylStatus::Ok);
    assert!(pos[..2].iter().all(|&c| (0..5).contains(&c)));
    assert!(pos[2].abs() <= 1000);
    // Same seed, same path.
    let mut w2 = ptr::null_mut();
    let mut pos2 = [0i64; 3];
    unsafe {
        dcyl_walk_new(g, 3, &mut w2);
        dcyl_walk_advance(w2, 1000);
        dcyl_walk_position(w2, pos2.as_mut_ptr(), 3);
        dcyl_walk_free(w);
        dcyl_walk_free(w2);
        dcyl_geometry_free(g);
    }
    assert_eq!(pos, pos2);
}

#[test]
fn errors_carry_status_and_message() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { dcyl_geometry_cylinder(2, 0, &mut g) }, DcylStatus::InvalidArgument);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { dcyl_geometry_cylinder(2, 3, ptr::null_mut()) }, DcylStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { dcyl_walk_advance(ptr::null_mut(), 1) }, DcylStatus::NullPointer);
    let origin = [0i64, 0];
    let mut cap = 0.0;
    assert_eq!(unsafe { dcyl_capacity(2, origin.as_ptr(), 1, 4, &mut cap) }, DcylStatus::Recurrent);
    let mut small = [0 as c_char; 2];
    assert_eq!(unsafe { dcyl_last_error_message(small.as_mut_ptr(), 2) }, DcylStatus::BufferTooSmall);
}

#[test]
fn numerical_entry_points() {
    let origin = [0i64, 0, 0];
    let mut cap = 0.0;
    assert_eq!(unsafe { dcyl_capacity(3, origin.as_ptr(), 1, 8, &mut cap) }, DcylStatus::Ok);
    // 1/g(0) in Z^3.
    assert!((cap - 1.0 / 1.516_386_059_151_978).abs() < 1e-3, "{cap}");
    let (mut tail, mut err) = (0.0, 0.0);
    assert_eq!(unsafe { dcyl_zeta_tail(0.5, 1.0, &mut tail, &mut err) }, DcylStatus::Ok);
    assert!(tail > 0.0 && tail < 1.0);
    let mut r = 1.0;
    assert_eq!(unsafe { dcyl_green_sum_residual(2, 3, &mut r) }, DcylStatus::Ok);
    assert!(r < 1e-10);
    let v = unsafe { CStr::from_ptr(dcyl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn disconnection_matches_core() {
    let mut g = ptr::null_mut();
    unsafe { dcyl_geometry_cylinder(2, 3, &mut g) };
    let (mut t, mut c) = (0u64, true);
    assert_eq!(unsafe { dcyl_disconnection_time(g, 11, 1 << 24, &mut t, &mut c) }, DcylStatus::Ok);
    unsafe { dcyl_geometry_free(g) };
    let geo = dcyl::Geometry::cylinder(2, 3).unwrap();
    let mut run = dcyl::walk::WalkRun::new(geo, geo.origin(), 11).unwrap();
    let (dt, _) = dcyl::disconnect::disconnection_time(&mut run, 1 << 24).unwrap();
    assert!(!c);
    assert_eq!(dt.outcome.time(), Some(t));
}

/// Compiles and runs the C smoke program against the generated header and
/// the static library.
#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("dcyl.h").exists());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    // The test binary sits in target/<profile>/deps; the static library one level up.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libdcyl_ffi.a");
    if !lib.exists() {
        eprintln!("static library not built at {}; skipping", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
