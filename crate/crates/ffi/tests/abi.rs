use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use quenchlab_ffi::*;

fn unit() -> QlParams {
    QlParams { lambda: 1.0, mu: 1.0, p: 1.0, q: 1.0, alpha: 1.0, beta: 1.0 }
}

fn operator(n: usize) -> *mut QlOperator {
    let mut op = ptr::null_mut();
    let s = unsafe { ql_operator_new_1d(QlProfile::Epanechnikov, 0.5, -1.0, 1.0, n, &mut op) };
    assert_eq!(s, QlStatus::Ok);
    op
}

#[test]
fn quenching_run_through_the_abi() {
    let n = 41;
    let op = operator(n);
    assert_eq!(unsafe { ql_operator_len(op) }, n);
    let u0 = vec![0.4; n];
    let mut controls = unsafe {
        let mut c = std::mem::zeroed();
        assert_eq!(ql_controls_default(&mut c), QlStatus::Ok);
        c
    };
    controls.stop_floor = 1e-8;
    let mut run = ptr::null_mut();
    let s = unsafe { ql_integrate(op, &unit(), u0.as_ptr(), u0.as_ptr(), n, &controls, &mut run) };
    assert_eq!(s, QlStatus::Ok);
    assert_eq!(unsafe { ql_run_quenched(run) }, 1);

    let mut qt = QlQuenchTime::default();
    assert_eq!(unsafe { ql_run_quench_time(run, &mut qt) }, QlStatus::Ok);
    // Upper bound on T for u0 = 0.4, alpha = 1: T <= 0.4^2 / 2.
    assert!(qt.lower <= qt.estimate && qt.estimate <= qt.upper && qt.upper <= 0.08 + 1e-3);

    let mut kind = QlSimultaneity::Indeterminate;
    assert_eq!(unsafe { ql_run_classify(run, 0.05, &mut kind) }, QlStatus::Ok);
    assert_eq!(kind, QlSimultaneity::Simultaneous);

    let m = unsafe { ql_run_samples(run) };
    let mut times = vec![0.0; m];
    let mut mins = vec![0.0; m];
    let s = unsafe { ql_run_min_track(run, QlComponent::U, times.as_mut_ptr(), mins.as_mut_ptr(), m) };
    assert_eq!(s, QlStatus::Ok);
    assert!(mins[m - 1] < 1e-4 && times[0] == 0.0);
    let s = unsafe { ql_run_min_track(run, QlComponent::U, times.as_mut_ptr(), mins.as_mut_ptr(), m - 1) };
    assert_eq!(s, QlStatus::BufferTooSmall);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ql_run_report_json(run, &mut json) }, QlStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"verdict\":\"quench\""), "{text}");
    unsafe {
        ql_string_free(json);
        ql_run_free(run);
        ql_operator_free(op);
    }
}

#[test]
fn stationary_handles() {
    let n = 21;
    let op = operator(n);
    let p = QlParams { lambda: 0.005, mu: 0.005, ..unit() };
    let ones = vec![1.0; n];
    let mut st = ptr::null_mut();
    assert_eq!(unsafe { ql_stationary_solve(op, &p, ones.as_ptr(), ones.as_ptr(), n, &mut st) }, QlStatus::Ok);
    assert_eq!(unsafe { ql_stationary_converged(st) }, 1);
    assert!(unsafe { ql_stationary_residual(st) } < 1e-10);
    let (mut w, mut z) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { ql_stationary_copy(st, w.as_mut_ptr(), z.as_mut_ptr(), n) }, QlStatus::Ok);
    assert!(w.iter().chain(&z).all(|&x| x > 0.005 && x <= 1.0));

    let mut quenched = -1;
    let mut probed = ptr::null_mut();
    assert_eq!(unsafe { ql_stationary_probe(op, &p, &mut quenched, &mut probed) }, QlStatus::Ok);
    assert_eq!(quenched, 0);
    let (mut w2, mut z2) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { ql_stationary_copy(probed, w2.as_mut_ptr(), z2.as_mut_ptr(), n) }, QlStatus::Ok);
    assert!(w.iter().zip(&w2).all(|(a, b)| (a - b).abs() < 1e-8));
    unsafe {
        ql_stationary_free(st);
        ql_stationary_free(probed);
        ql_operator_free(op);
    }
}

#[test]
fn invalid_parameters_are_errors_not_panics() {
    let op = operator(11);
    let bad = QlParams { p: 0.0, ..unit() };
    let u = [0.5; 11];
    let mut run = ptr::null_mut();
    let s = unsafe { ql_integrate(op, &bad, u.as_ptr(), u.as_ptr(), 11, ptr::null(), &mut run) };
    assert_eq!(s, QlStatus::InvalidArgument);
    assert!(run.is_null());
    let msg = unsafe { CStr::from_ptr(ql_last_error_message()) }.to_string_lossy().into_owned();
    assert!(msg.contains("p must be > 0"), "{msg}");
    let s = unsafe { ql_integrate(op, &unit(), ptr::null(), u.as_ptr(), 11, ptr::null(), &mut run) };
    assert_eq!(s, QlStatus::NullPointer);
    unsafe { ql_operator_free(op) };
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("quenchlab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["ql_integrate", "ql_run_free", "ql_operator_new_1d", "QL_STATUS_OK", "typedef struct QlRun QlRun"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use_header.c");
    std::fs::write(
        &src,
        "#include \"quenchlab.h\"\nint main(void) { QlStatus s = QL_STATUS_OK; QlRun *r = 0; (void)r; return (int)s; }\n",
    )
    .unwrap();
    match Command::new(&cc)
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg(format!("-I{}", header.parent().unwrap().display()))
        .arg(&src)
        .status()
    {
        Ok(status) => assert!(status.success(), "C compiler rejected the header"),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}
