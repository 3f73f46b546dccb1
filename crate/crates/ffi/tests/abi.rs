use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rsddej_ffi::*;

const CONFIG: &str = r#"{
  "schema_version": 1,
  "model": { "type": "linear", "dim": 2, "decay": 3.0, "delay_gain": 1.0, "jump_state_gain": -0.5, "diffusion": { "state": 0.5 } },
  "marks": { "rate": 0.5, "distribution": { "type": "constant", "value": [2.0, 1.0] } },
  "initial": { "type": "constant", "value": [1.0, 0.5] },
  "simulation": { "delay": 1.0, "step": 0.125, "horizon": 4.0, "paths": 2, "seed": 3 }
}"#;

fn last_error() -> String {
    let mut buf = [0 as c_char; 512];
    unsafe {
        rsddej_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn session() -> *mut RsddejSession {
    let json = CString::new(CONFIG).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { rsddej_session_from_json(json.as_ptr(), &mut s) },
        RsddejStatus::Ok
    );
    assert!(!s.is_null());
    s
}

fn copy(path: *const RsddejPath, field: RsddejField) -> Vec<f64> {
    let mut needed = 0;
    let st = unsafe { rsddej_path_copy(path, field as u32, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, RsddejStatus::BufferTooSmall);
    let mut buf = vec![0.0; needed];
    let mut written = 0;
    assert_eq!(
        unsafe { rsddej_path_copy(path, field as u32, buf.as_mut_ptr(), buf.len(), &mut written) },
        RsddejStatus::Ok
    );
    assert_eq!(written, needed);
    buf
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(rsddej_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn lambda_star_and_errors() {
    let mut l = 0.0;
    assert_eq!(
        unsafe { rsddej_solve_lambda_star(2.0, 1.0, 0.0, &mut l) },
        RsddejStatus::Ok
    );
    assert_eq!(l, 1.0);
    assert_eq!(
        unsafe { rsddej_solve_lambda_star(1.0, 2.0, 1.0, &mut l) },
        RsddejStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { rsddej_solve_lambda_star(2.0, 1.0, 1.0, ptr::null_mut()) },
        RsddejStatus::NullPointer
    );
    assert!(last_error().contains("out"));
}

#[test]
fn error_message_truncates_and_reports_length() {
    unsafe { rsddej_solve_lambda_star(2.0, 1.0, 1.0, ptr::null_mut()) };
    let full = unsafe { rsddej_last_error_message(ptr::null_mut(), 0) };
    let mut buf = [1 as c_char; 4];
    assert_eq!(unsafe { rsddej_last_error_message(buf.as_mut_ptr(), 4) }, full);
    assert_eq!(buf[3], 0);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 3);
}

#[test]
fn projection_matches_positive_and_negative_parts() {
    let pre = [-1.5, 0.0, 2.0, -0.0];
    let mut post = [9.0; 4];
    let mut dk = [9.0; 4];
    assert_eq!(
        unsafe { rsddej_project_and_regulate(pre.as_ptr(), 4, post.as_mut_ptr(), dk.as_mut_ptr()) },
        RsddejStatus::Ok
    );
    assert_eq!(post, [0.0, 0.0, 2.0, 0.0]);
    assert_eq!(dk, [1.5, 0.0, 0.0, 0.0]);
    for (p, k, x) in post.iter().zip(&dk).zip(&pre).map(|((p, k), x)| (p, k, x)) {
        assert_eq!(p - k, *x);
    }
}

#[test]
fn bad_json_is_config_error() {
    let json = CString::new("{\"schema_version\": 1}").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { rsddej_session_from_json(json.as_ptr(), &mut s) },
        RsddejStatus::Config
    );
    assert!(s.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn session_validate_and_simulate() {
    let s = session();
    let mut dim = 0;
    assert_eq!(unsafe { rsddej_session_dim(s, &mut dim) }, RsddejStatus::Ok);
    assert_eq!(dim, 2);

    let mut report = RsddejDissipativity {
        feasible: false,
        epsilon_sq: 0.0,
        alpha: 0.0,
        alpha1: 0.0,
        alpha2: 0.0,
        beta1: 0.0,
        beta2: 0.0,
        lambda_moment: 0.0,
        lambda_contraction: 0.0,
    };
    assert_eq!(unsafe { rsddej_session_validate(s, &mut report) }, RsddejStatus::Ok);
    assert!(report.feasible);
    assert!(report.lambda_moment > 0.0);

    let mut p = ptr::null_mut();
    assert_eq!(unsafe { rsddej_session_simulate(s, 1, &mut p) }, RsddejStatus::Ok);
    let (mut steps, mut d) = (0, 0);
    assert_eq!(unsafe { rsddej_path_shape(p, &mut steps, &mut d) }, RsddejStatus::Ok);
    assert_eq!((steps, d), (32, 2));
    let x = copy(p, RsddejField::X);
    let gamma = copy(p, RsddejField::Gamma);
    let k = copy(p, RsddejField::K);
    assert_eq!(x.len(), 33 * 2);
    assert!(x.iter().all(|v| *v >= 0.0));
    for i in 0..x.len() {
        assert!((gamma[i] + k[i] - x[i]).abs() < 1e-12);
    }
    let mut jumps = 0;
    assert_eq!(unsafe { rsddej_path_jump_count(p, &mut jumps) }, RsddejStatus::Ok);

    let mut again = ptr::null_mut();
    assert_eq!(unsafe { rsddej_session_simulate(s, 1, &mut again) }, RsddejStatus::Ok);
    assert_eq!(copy(again, RsddejField::X), x);

    let mut written = 0;
    let mut buf = [0.0; 1];
    assert_eq!(
        unsafe { rsddej_path_copy(p, 99, buf.as_mut_ptr(), 1, &mut written) },
        RsddejStatus::InvalidArgument
    );
    unsafe {
        rsddej_path_free(again);
        rsddej_path_free(p);
        rsddej_session_free(s);
        rsddej_session_free(ptr::null_mut());
        rsddej_path_free(ptr::null_mut());
    }
}

#[test]
fn run_experiment_writes_outputs() {
    let s = session();
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let cmd = CString::new("simulate").unwrap();
    assert_eq!(
        unsafe { rsddej_run_experiment(s, cmd.as_ptr(), out.as_ptr(), true, 9) },
        RsddejStatus::Ok
    );
    assert!(dir.path().join("paths.csv").exists());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 9"));

    let bad = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { rsddej_run_experiment(s, bad.as_ptr(), out.as_ptr(), false, 0) },
        RsddejStatus::InvalidArgument
    );
    unsafe { rsddej_session_free(s) };
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rsddej.h");
    assert!(header.exists());
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "rsddej_session_from_json",
        "rsddej_path_copy",
        "rsddej_run_experiment",
        "RSDDEJ_STATUS_PANIC",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(
        &src,
        "#include \"rsddej.h\"\nint main(void) { return rsddej_version() == 0; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found; skipping syntax check"),
    }
}
