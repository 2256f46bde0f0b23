use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use robust_irt_ffi::*;

fn last_error() -> String {
    let p = rirt_last_error();
    assert!(!p.is_null(), "an error message was expected");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Deterministic two-bloc voting pattern with a few crossovers.
fn codes(n_leg: usize, n_bills: usize) -> Vec<i8> {
    let mut out = Vec::with_capacity(n_leg * n_bills);
    for i in 0..n_leg {
        for j in 0..n_bills {
            let left = i < n_leg / 2;
            let cut = (j % 7) as f64 / 7.0;
            let pos = i as f64 / n_leg as f64;
            let mut yea = if j % 2 == 0 { pos > cut } else { left };
            if (i * 31 + j * 17) % 23 == 0 {
                yea = !yea;
            }
            out.push(if (i + j) % 19 == 0 {
                RIRT_VOTE_MISSING
            } else if yea {
                RIRT_VOTE_YEA
            } else {
                RIRT_VOTE_NAY
            });
        }
    }
    out
}

fn votes(n_leg: usize, n_bills: usize) -> *mut RirtVotes {
    let c = codes(n_leg, n_bills);
    let mut v = ptr::null_mut();
    assert_eq!(unsafe { rirt_votes_new(c.as_ptr(), n_leg, n_bills, &mut v) }, RirtStatus::Ok);
    v
}

#[test]
fn fit_and_read_back() {
    let v = votes(24, 30);
    let (mut n, mut m) = (0, 0);
    assert_eq!(unsafe { rirt_votes_dims(v, &mut n, &mut m) }, RirtStatus::Ok);
    assert_eq!((n, m), (24, 30));

    let mut opts = rirt_fit_options_default();
    assert_eq!(opts.penalty, RIRT_PENALTY_L0);
    assert_eq!(opts.lambda, 3.0);
    opts.seed = 5;
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { rirt_fit(v, &opts, &mut fit) }, RirtStatus::Ok);

    let (mut fi, mut fj, mut k) = (0, 0, 0);
    assert_eq!(unsafe { rirt_fit_dims(fit, &mut fi, &mut fj, &mut k) }, RirtStatus::Ok);
    assert_eq!((fi, fj, k), (24, 30, 1));

    let mut theta = vec![0.0; 24];
    assert_eq!(unsafe { rirt_fit_theta(fit, theta.as_mut_ptr(), theta.len()) }, RirtStatus::Ok);
    let mean = theta.iter().sum::<f64>() / 24.0;
    let var = theta.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 24.0;
    assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);

    let mut alpha = vec![0.0; 30];
    let mut beta = vec![0.0; 30];
    assert_eq!(unsafe { rirt_fit_alpha(fit, alpha.as_mut_ptr(), 30) }, RirtStatus::Ok);
    assert_eq!(unsafe { rirt_fit_beta(fit, beta.as_mut_ptr(), 30) }, RirtStatus::Ok);
    assert!(alpha.iter().chain(&beta).all(|x| x.is_finite()));

    let nnz = unsafe { rirt_fit_gamma_nnz(fit) };
    let (mut rows, mut cols, mut vals) = (vec![0usize; nnz], vec![0usize; nnz], vec![0.0; nnz]);
    assert_eq!(
        unsafe { rirt_fit_gamma(fit, rows.as_mut_ptr(), cols.as_mut_ptr(), vals.as_mut_ptr(), nnz) },
        RirtStatus::Ok
    );
    assert!(vals.iter().all(|g| g.abs() > 3.0));

    let (mut iters, mut converged) = (0usize, 0i32);
    assert_eq!(unsafe { rirt_fit_status(fit, &mut iters, &mut converged) }, RirtStatus::Ok);
    assert!(iters >= 1);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rirt_fit_write_json(fit, cpath.as_ptr()) }, RirtStatus::Ok);
    let doc = robust_irt::io::read_fit_json(&path).unwrap();
    let back = doc.to_fit().unwrap();
    assert_eq!(back.state.theta, theta);
    assert_eq!(back.state.gamma.nnz(), nnz);

    unsafe {
        rirt_fit_free(fit);
        rirt_votes_free(v);
    }
}

#[test]
fn same_options_same_fit() {
    let v = votes(16, 20);
    let mut opts = rirt_fit_options_default();
    opts.penalty = RIRT_PENALTY_NONE;
    let mut thetas = Vec::new();
    for _ in 0..2 {
        let mut fit = ptr::null_mut();
        assert_eq!(unsafe { rirt_fit(v, &opts, &mut fit) }, RirtStatus::Ok);
        let mut theta = vec![0.0; 16];
        assert_eq!(unsafe { rirt_fit_theta(fit, theta.as_mut_ptr(), 16) }, RirtStatus::Ok);
        assert_eq!(unsafe { rirt_fit_gamma_nnz(fit) }, 0);
        thetas.push(theta);
        unsafe { rirt_fit_free(fit) };
    }
    assert_eq!(thetas[0], thetas[1]);
    unsafe { rirt_votes_free(v) };
}

#[test]
fn errors_are_reported() {
    rirt_clear_error();
    assert!(rirt_last_error().is_null());

    let mut v = ptr::null_mut();
    assert_eq!(unsafe { rirt_votes_new(ptr::null(), 2, 2, &mut v) }, RirtStatus::NullPointer);
    assert!(last_error().contains("votes"));

    let bad = [1i8, 0, 7, 1];
    assert_eq!(unsafe { rirt_votes_new(bad.as_ptr(), 2, 2, &mut v) }, RirtStatus::InvalidArgument);
    assert!(last_error().contains("vote code 7"));

    let missing = CString::new("/definitely/not/here.csv").unwrap();
    assert_eq!(unsafe { rirt_votes_read_csv(missing.as_ptr(), &mut v) }, RirtStatus::IoError);
    assert!(last_error().contains("/definitely/not/here.csv"));

    let v = votes(6, 5);
    let mut opts = rirt_fit_options_default();
    opts.penalty = 9;
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { rirt_fit(v, &opts, &mut fit) }, RirtStatus::InvalidArgument);
    assert!(fit.is_null());

    opts = rirt_fit_options_default();
    opts.dim = 0;
    assert_eq!(unsafe { rirt_fit(v, &opts, &mut fit) }, RirtStatus::InvalidArgument);

    opts = rirt_fit_options_default();
    opts.max_iter = 5;
    assert_eq!(unsafe { rirt_fit(v, &opts, &mut fit) }, RirtStatus::Ok);
    let mut small = [0.0; 2];
    assert_eq!(unsafe { rirt_fit_theta(fit, small.as_mut_ptr(), 2) }, RirtStatus::BufferTooSmall);
    assert_eq!(unsafe { rirt_fit_theta(fit, ptr::null_mut(), 6) }, RirtStatus::NullPointer);
    assert_eq!(unsafe { rirt_fit_theta(ptr::null(), small.as_mut_ptr(), 2) }, RirtStatus::NullPointer);
    assert_eq!(unsafe { rirt_fit_gamma_nnz(ptr::null()) }, 0);

    unsafe {
        rirt_fit_free(fit);
        rirt_votes_free(v);
        rirt_fit_free(ptr::null_mut());
        rirt_votes_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_per_thread() {
    let mut out = 0.0;
    assert_eq!(unsafe { rirt_lambda_from_pi(0.7, &mut out) }, RirtStatus::InvalidArgument);
    std::thread::spawn(|| assert!(rirt_last_error().is_null())).join().unwrap();
    assert!(!rirt_last_error().is_null());
}

#[test]
fn small_helpers() {
    let mut out = 0.0;
    let pi = 1.0 / (1.0 + 4.5f64.exp());
    assert_eq!(unsafe { rirt_lambda_from_pi(pi, &mut out) }, RirtStatus::Ok);
    assert!((out - 3.0).abs() < 1e-10);
    let version = unsafe { CStr::from_ptr(rirt_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/robust_irt.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["rirt_fit(", "rirt_votes_new(", "rirt_last_error(", "RirtStatus_Ok", "typedef struct RirtFit RirtFit"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Compile the header as C when a compiler is around.
    if let Ok(res) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() {
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
}
