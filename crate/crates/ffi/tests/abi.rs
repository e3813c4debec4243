use std::ffi::{CStr, CString};
use std::ptr;

use bvflow_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        bvf_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn drift(decl: &str) -> *mut BvfDrift {
    let c = CString::new(decl).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { bvf_drift_new(c.as_ptr(), &mut d) }, BvfStatus::Ok, "{}", last_error());
    d
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(bvf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn drift_lifecycle_and_eval() {
    let d = drift("id = \"sign\"\nbeta = 0.5");
    unsafe {
        assert_eq!(bvf_drift_dimension(d), 1);
        let mut out = [0.0];
        assert_eq!(bvf_drift_eval(d, [0.3].as_ptr(), 1, out.as_mut_ptr()), BvfStatus::Ok);
        assert_eq!(out[0], 0.5);
        assert_eq!(bvf_drift_eval(d, [0.3, 0.1].as_ptr(), 2, out.as_mut_ptr()), BvfStatus::DimensionMismatch);
        bvf_drift_free(d);
        bvf_drift_free(ptr::null_mut());
    }
}

#[test]
fn unknown_id_is_parse_error_naming_it() {
    let c = CString::new("id = \"wobbly\"").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { bvf_drift_new(c.as_ptr(), &mut d) }, BvfStatus::Parse);
    assert!(d.is_null());
    assert!(last_error().contains("wobbly"));
}

#[test]
fn null_pointers_are_reported() {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { bvf_drift_new(ptr::null(), &mut d) }, BvfStatus::NullPointer);
    assert_eq!(unsafe { bvf_drift_eval(ptr::null(), ptr::null(), 1, ptr::null_mut()) }, BvfStatus::NullPointer);
    assert_eq!(unsafe { bvf_drift_dimension(ptr::null()) }, 0);
}

#[test]
fn kato_atoms_by_dimension() {
    let atom = |d: usize| {
        let loc = vec!["0.0"; d].join(", ");
        CString::new(format!("dimension = {d}\npositive = [{{ kind = \"atom\", location = [{loc}], mass = 1.0 }}]")).unwrap()
    };
    let mut vals = vec![0.0; bvf_kato_grid_len()];
    let mut k = false;
    unsafe {
        assert_eq!(bvf_kato_classify(atom(1).as_ptr(), &mut k, vals.as_mut_ptr(), vals.len()), BvfStatus::Ok);
        assert!(k);
        assert!(vals.iter().all(|v| v.is_finite()));
        assert_eq!(bvf_kato_classify(atom(3).as_ptr(), &mut k, ptr::null_mut(), 0), BvfStatus::Ok);
        assert!(!k);
        let mut short = [0.0; 2];
        assert_eq!(bvf_kato_classify(atom(1).as_ptr(), &mut k, short.as_mut_ptr(), 2), BvfStatus::BufferTooSmall);
    }
}

#[test]
fn simulate_derivative_and_girsanov() {
    let d = drift("id = \"sign\"\nbeta = 0.5");
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(bvf_simulate(d, [0.0].as_ptr(), 1, 1.0, 1e-3, 5, 0, &mut p), BvfStatus::Ok);
        let k = bvf_path_steps(p);
        assert_eq!(k, 1000);
        let mut states = vec![0.0; k + 1];
        assert_eq!(bvf_path_states(p, states.as_mut_ptr(), states.len()), BvfStatus::Ok);
        assert_eq!(states[0], 0.0);

        let mut y = ptr::null_mut();
        assert_eq!(bvf_derivative(d, p, &mut y), BvfStatus::Ok, "{}", last_error());
        let (mut yt, mut var) = ([0.0], 0.0);
        assert_eq!(bvf_derivative_terminal(y, yt.as_mut_ptr(), 1, &mut var), BvfStatus::Ok);
        assert!((yt[0] - var.exp()).abs() <= 1e-12 * yt[0]);
        let (mut holds, mut ratio) = (false, 0.0);
        assert_eq!(bvf_derivative_gronwall(y, &mut holds, &mut ratio), BvfStatus::Ok);
        assert!(holds && ratio <= 1.0 + 1e-6);

        let mut beta = 0.0;
        assert_eq!(bvf_girsanov_density(d, p, 64.0, &mut beta), BvfStatus::Ok);
        assert!(beta > 0.0 && beta.is_finite());
        assert_eq!(bvf_girsanov_density(d, p, -1.0, &mut beta), BvfStatus::InvalidArgument);

        bvf_derivative_free(y);
        bvf_path_free(p);
        bvf_drift_free(d);
    }
}

#[test]
fn missing_scenario_is_io_error() {
    let c = CString::new("/nonexistent/scenario.toml").unwrap();
    assert_eq!(unsafe { bvf_run_scenario(c.as_ptr(), ptr::null()) }, BvfStatus::Io);
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/bvflow.h");
    let src = std::env::temp_dir().join("bvflow_header_check.c");
    std::fs::write(&src, format!("#include \"{header}\"\nint main(void) {{ BvfStatus s = BVF_STATUS_OK; return (int)s; }}\n")).unwrap();
    match std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror"]).arg(&src).status() {
        Ok(s) => assert!(s.success()),
        Err(_) => eprintln!("no C compiler; skipped"),
    }
}
