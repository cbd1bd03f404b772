use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use selfsim_ffi::*;

fn params(p: usize, q: usize) -> *mut SelfsimParams {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { selfsim_params_new(p, q, &mut h) }, SelfsimStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(selfsim_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(selfsim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn invalid_params_report_error() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { selfsim_params_new(0, 2, &mut h) }, SelfsimStatus::InvalidArgument);
    assert!(h.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { selfsim_params_new(2, 2, ptr::null_mut()) }, SelfsimStatus::NullPointer);
}

#[test]
fn null_handles_are_rejected() {
    let mut x = 0.0;
    assert_eq!(unsafe { selfsim_cone_slope(ptr::null(), &mut x) }, SelfsimStatus::NullPointer);
    assert_eq!(unsafe { selfsim_profile_len(ptr::null()) }, 0);
    unsafe {
        selfsim_profile_free(ptr::null_mut());
        selfsim_params_free(ptr::null_mut());
    }
}

#[test]
fn cone_slope_balanced_is_one() {
    let h = params(3, 3);
    let mut x = 0.0;
    assert_eq!(unsafe { selfsim_cone_slope(h, &mut x) }, SelfsimStatus::Ok);
    assert!((x - 1.0).abs() < 1e-15);
    unsafe { selfsim_params_free(h) };
}

#[test]
fn sphere_profile_and_density() {
    let h = params(1, 2);
    let mut prof = ptr::null_mut();
    assert_eq!(unsafe { selfsim_sphere_profile(h, 2.0, 200, &mut prof) }, SelfsimStatus::Ok);
    let n = unsafe { selfsim_profile_len(prof) };
    assert_eq!(n, 200);
    let mut pt = SelfsimPoint::default();
    for i in [0, n / 2, n - 1] {
        assert_eq!(unsafe { selfsim_profile_point(prof, i, &mut pt) }, SelfsimStatus::Ok);
        assert!((pt.r.hypot(pt.u) - 2.0).abs() < 1e-12);
    }
    assert_eq!(unsafe { selfsim_profile_point(prof, n, &mut pt) }, SelfsimStatus::InvalidArgument);
    // radius 2 in R^3 is the shrinking sphere at t = −1
    let (mut phi, mut tail) = (0.0, 1.0);
    assert_eq!(unsafe { selfsim_gaussian_density(prof, 0.0, 0.0, 0.0, -1.0, &mut phi, &mut tail) }, SelfsimStatus::Ok);
    assert!((phi - 4.0 / std::f64::consts::E).abs() < 1e-9, "{phi}");
    assert_eq!(tail, 0.0);
    assert_eq!(unsafe { selfsim_gaussian_density(prof, 0.0, 0.0, 0.0, 0.5, &mut phi, ptr::null_mut()) }, SelfsimStatus::InvalidArgument);
    unsafe {
        selfsim_profile_free(prof);
        selfsim_params_free(h);
    }
}

#[test]
fn expander_and_companion_profiles() {
    let h = params(2, 2);
    let (mut slope, mut err) = (0.0, 0.0);
    assert_eq!(unsafe { selfsim_expander_slope(h, 1.0, &mut slope, &mut err) }, SelfsimStatus::Ok);
    assert!(slope > 1.0 && err < 1e-6);
    let mut prof = ptr::null_mut();
    assert_eq!(unsafe { selfsim_expander_profile(h, 1.0, &mut prof) }, SelfsimStatus::Ok);
    let mut pt = SelfsimPoint::default();
    assert_eq!(unsafe { selfsim_profile_point(prof, 0, &mut pt) }, SelfsimStatus::Ok);
    assert!(pt.r < 1e-3 && (pt.u - 1.0).abs() < 1e-6);
    unsafe { selfsim_profile_free(prof) };
    let mut comp = ptr::null_mut();
    assert_eq!(unsafe { selfsim_companion_profile(h, &mut comp) }, SelfsimStatus::Ok);
    assert!(unsafe { selfsim_profile_len(comp) } > 10);
    unsafe {
        selfsim_profile_free(comp);
        selfsim_params_free(h);
    }
}

#[test]
fn shrinker_height_matches_profile_start() {
    let h = params(2, 2);
    let mut a = 0.0;
    assert_eq!(unsafe { selfsim_shrinker_height(h, 1, &mut a) }, SelfsimStatus::Ok);
    let mut prof = ptr::null_mut();
    assert_eq!(unsafe { selfsim_shrinker_profile(h, 1, &mut prof) }, SelfsimStatus::Ok);
    let mut pt = SelfsimPoint::default();
    assert_eq!(unsafe { selfsim_profile_point(prof, 0, &mut pt) }, SelfsimStatus::Ok);
    assert!((pt.u - a).abs() < 1e-6 * a);
    assert_eq!(unsafe { selfsim_shrinker_height(h, 0, &mut a) }, SelfsimStatus::InvalidArgument);
    unsafe {
        selfsim_profile_free(prof);
        selfsim_params_free(h);
    }
}

#[test]
fn header_lists_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/selfsim.h")).unwrap();
    for sym in [
        "selfsim_version",
        "selfsim_last_error",
        "selfsim_params_new",
        "selfsim_params_free",
        "selfsim_cone_slope",
        "selfsim_expander_slope",
        "selfsim_critical_angle",
        "selfsim_shrinker_height",
        "selfsim_shrinker_profile",
        "selfsim_expander_profile",
        "selfsim_companion_profile",
        "selfsim_sphere_profile",
        "selfsim_profile_len",
        "selfsim_profile_point",
        "selfsim_gaussian_density",
        "selfsim_profile_free",
        "SELFSIM_STATUS_OK",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
}

/// Compiles a C program against the header and static library when a C compiler is present.
#[test]
fn c_program_links_against_header() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).map(PathBuf::from).unwrap();
    let lib = profile_dir.join("libselfsim_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <math.h>
#include "selfsim.h"
int main(void) {
    SelfsimParams *p = NULL;
    if (selfsim_params_new(2, 2, &p) != SELFSIM_STATUS_OK) return 1;
    double slope = 0.0;
    if (selfsim_cone_slope(p, &slope) != SELFSIM_STATUS_OK || fabs(slope - 1.0) > 1e-15) return 2;
    SelfsimProfile *c = NULL;
    if (selfsim_sphere_profile(p, 1.0, 50, &c) != SELFSIM_STATUS_OK) return 3;
    SelfsimPoint pt;
    if (selfsim_profile_point(c, 0, &pt) != SELFSIM_STATUS_OK) return 4;
    if (selfsim_profile_point(c, 1000, &pt) != SELFSIM_STATUS_INVALID_ARGUMENT) return 5;
    printf("%s|%s\n", selfsim_version(), selfsim_last_error());
    selfsim_profile_free(c);
    selfsim_params_free(p);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")) && text.contains("out of range"), "{text}");
    let _ = std::fs::remove_dir_all(dir);
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("selfsim-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
