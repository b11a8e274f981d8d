use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use ksdm::{rng, sampling, Family, Manifold, Mat, RadialKernel, ScoreModel, SteinKernel};
use ksdm_ffi::*;

const STEIN: &str = r#"{"manifold": {"kind": "stiefel", "N": 3, "r": 2},
  "family": {"kind": "matrix_fisher", "f": [[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]]},
  "kernel": {"family": "gaussian", "tau": 1.0}}"#;
const ESTIMATOR: &str = r#"{"manifold": {"kind": "stiefel", "N": 3, "r": 2},
  "family": "matrix_fisher", "kernel": {"family": "gaussian", "tau": 1.0}}"#;

fn row_major(points: &[Mat]) -> Vec<f64> {
    points.iter().flat_map(|p| p.transpose().as_slice().to_vec()).collect()
}

fn last_error() -> String {
    let p = ksdm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn stein() -> *mut KsdmStein {
    let json = CString::new(STEIN).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ksdm_stein_new(json.as_ptr(), &mut h) }, KsdmStatus::Ok);
    h
}

fn points(n: usize, seed: u64) -> Vec<Mat> {
    sampling::sample_uniform(&Manifold::stiefel(3, 2).unwrap(), n, &mut rng::stream(seed, 0)).unwrap()
}

#[test]
fn stein_handle_matches_the_library() {
    let h = stein();
    let (mut r, mut c) = (0, 0);
    assert_eq!(unsafe { ksdm_stein_point_shape(h, &mut r, &mut c) }, KsdmStatus::Ok);
    assert_eq!((r, c), (3, 2));

    let m = Manifold::stiefel(3, 2).unwrap();
    let f = Mat::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let sk = SteinKernel::new(ScoreModel::new(m, Family::MatrixFisher { f }).unwrap(), RadialKernel::Gaussian { tau: 1.0 });
    let pts = points(20, 1);
    let (x, y) = (row_major(&pts[..1]), row_major(&pts[1..2]));
    let mut k = 0.0;
    assert_eq!(unsafe { ksdm_stein_eval(h, x.as_ptr(), y.as_ptr(), &mut k) }, KsdmStatus::Ok);
    assert!((k - sk.closed(&pts[0], &pts[1]).unwrap()).abs() < 1e-12);

    let data = row_major(&pts);
    let (mut u, mut v) = (0.0, 0.0);
    assert_eq!(unsafe { ksdm_stein_stats(h, data.as_ptr(), 20, ptr::null(), &mut u, &mut v) }, KsdmStatus::Ok);
    let s = ksdm::WeightedSample::new(m, pts).unwrap();
    assert!((u - ksdm::ksdstats::u_stat(&sk, &s).unwrap()).abs() < 1e-12);
    assert!((v - ksdm::ksdstats::v_stat(&sk, &s).unwrap()).abs() < 1e-12);

    let mut res = KsdmGofResult::default();
    let st = unsafe { ksdm_stein_gof(h, data.as_ptr(), 20, ptr::null(), KsdmStatKind::V, 0.05, 500, 3, &mut res) };
    assert_eq!(st, KsdmStatus::Ok);
    assert!(res.p_value > 0.0 && res.p_value <= 1.0);
    assert_eq!(res.reject, res.statistic > res.quantile);
    unsafe { ksdm_stein_free(h) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ksdm_stein_new(ptr::null(), &mut h) }, KsdmStatus::NullPointer);
    let bad = CString::new(r#"{"manifold": {"kind": "stiefel", "N": 3, "r": 2}, "kernel": {"family": "gaussian", "tau": 1.0}}"#).unwrap();
    assert_eq!(unsafe { ksdm_stein_new(bad.as_ptr(), &mut h) }, KsdmStatus::Config);
    assert!(last_error().contains("family"), "{}", last_error());
    let uniform_spd = CString::new(r#"{"manifold": {"kind": "spd", "N": 2}, "family": {"kind": "uniform"}, "kernel": {"family": "gaussian", "tau": 1.0}}"#).unwrap();
    assert_eq!(unsafe { ksdm_stein_new(uniform_spd.as_ptr(), &mut h) }, KsdmStatus::Config);

    let h = stein();
    let not_orthonormal = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let mut k = 0.0;
    let st = unsafe { ksdm_stein_eval(h, not_orthonormal.as_ptr(), not_orthonormal.as_ptr(), &mut k) };
    assert_eq!(st, KsdmStatus::InvalidArgument);
    assert_eq!(unsafe { ksdm_stein_eval(h, ptr::null(), not_orthonormal.as_ptr(), &mut k) }, KsdmStatus::NullPointer);
    unsafe { ksdm_stein_free(h) };
    unsafe { ksdm_stein_free(ptr::null_mut()) };
}

#[test]
fn estimator_fits_and_tests() {
    let json = CString::new(ESTIMATOR).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ksdm_estimator_new(json.as_ptr(), &mut h) }, KsdmStatus::Ok);
    let mut dim = 0;
    assert_eq!(unsafe { ksdm_estimator_dim(h, &mut dim) }, KsdmStatus::Ok);
    assert_eq!(dim, 6);

    let pts = points(80, 2);
    let data = row_major(&pts);
    let mut theta = vec![0.0; 6];
    let mut info = KsdmFitInfo::default();
    let st = unsafe { ksdm_estimator_fit(h, data.as_ptr(), 80, ptr::null(), KsdmStatKind::V, theta.as_mut_ptr(), 6, &mut info) };
    assert_eq!(st, KsdmStatus::Ok);
    let ef = ksdm::ExponentialFamily::new(Manifold::stiefel(3, 2).unwrap(), ksdm::ExpFamilyKind::MatrixFisher).unwrap();
    let s = ksdm::WeightedSample::new(Manifold::stiefel(3, 2).unwrap(), pts).unwrap();
    let (_, sol) = ksdm::mksde::estimate(&ef, &RadialKernel::Gaussian { tau: 1.0 }, &s, ksdm::StatKind::V).unwrap();
    assert_eq!(theta, sol.theta_star);
    assert!(info.min_eigenvalue > 0.0);

    let st = unsafe { ksdm_estimator_fit(h, data.as_ptr(), 80, ptr::null(), KsdmStatKind::V, theta.as_mut_ptr(), 5, ptr::null_mut()) };
    assert_eq!(st, KsdmStatus::InvalidArgument);

    let mut res = KsdmGofResult::default();
    let st = unsafe { ksdm_estimator_gof(h, data.as_ptr(), 80, ptr::null(), KsdmStatKind::V, 0.05, 500, 4, false, &mut res) };
    assert_eq!(st, KsdmStatus::Ok);
    assert!(res.p_value > 0.0 && res.p_value <= 1.0);
    unsafe { ksdm_estimator_free(h) };
}

#[test]
fn indefinite_u_fit_reports_numeric_and_writes_stationary_point() {
    let json = CString::new(ESTIMATOR).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ksdm_estimator_new(json.as_ptr(), &mut h) }, KsdmStatus::Ok);
    let mut seen = false;
    for seed in 0..40 {
        let data = row_major(&points(4, seed));
        let mut theta = vec![f64::NAN; 6];
        let mut info = KsdmFitInfo::default();
        let st = unsafe { ksdm_estimator_fit(h, data.as_ptr(), 4, ptr::null(), KsdmStatKind::U, theta.as_mut_ptr(), 6, &mut info) };
        if st == KsdmStatus::Numeric {
            assert!(info.min_eigenvalue < 0.0);
            assert!(theta.iter().all(|t| t.is_finite()));
            assert!(last_error().contains("indefinite") || last_error().contains("convex"), "{}", last_error());
            let mut res = KsdmGofResult::default();
            let st = unsafe { ksdm_estimator_gof(h, data.as_ptr(), 4, ptr::null(), KsdmStatKind::U, 0.05, 200, 1, true, &mut res) };
            assert_eq!(st, KsdmStatus::Ok);
            assert!(res.nonconvex);
            seen = true;
            break;
        }
    }
    assert!(seen);
    unsafe { ksdm_estimator_free(h) };
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ksdm.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["ksdm_stein_new", "ksdm_stein_eval", "ksdm_stein_stats", "ksdm_estimator_fit", "ksdm_estimator_gof", "ksdm_last_error"] {
        assert!(text.contains(f), "{f} missing from the header");
    }
    let dir = tempfile_dir();
    let src = dir.join("check.c");
    std::fs::write(&src, "#include \"ksdm.h\"\nint main(void) { KsdmStein *h = 0; return ksdm_stein_new(\"{}\", &h) == KSDM_STATUS_OK; }\n").unwrap();
    match Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-I"]).arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include")).arg(&src).status() {
        Ok(s) => assert!(s.success()),
        Err(_) => eprintln!("no C compiler found, syntax check skipped"),
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("ksdm-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
