use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use kpgeom_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kpg_last_error_message()) }.to_string_lossy().into_owned()
}

const ORIGIN: [f64; 4] = [0.0; 4];
const E4: [f64; 4] = [0.0, 0.0, 0.0, 1.0];

#[test]
fn cone_moments_through_handles() {
    unsafe {
        let mut mu = ptr::null_mut();
        assert_eq!(kpg_sample_cone(ORIGIN.as_ptr(), E4.as_ptr(), 1.0, 100_000, 3, &mut mu), KpgStatus::Ok);
        assert_eq!(kpg_measure_len(mu), 100_000);
        let mut m = KpgMoments::default();
        assert_eq!(kpg_moments(mu, ORIGIN.as_ptr(), 1.0, &mut m), KpgStatus::Ok);
        assert!((m.eigenvalues[3] - 1.5).abs() < 0.05, "{m:?}");
        assert!((m.axis[3].abs() - 1.0).abs() < 1e-3);
        assert!((m.q[15] - 1.5).abs() < 0.05);
        assert_eq!(last_error(), "");

        let mut cone = ptr::null_mut();
        let mut gap = 0.0;
        assert_eq!(kpg_cone_from_moments(mu, ORIGIN.as_ptr(), 1.0, 0.5, &mut cone, &mut gap), KpgStatus::Ok);
        assert!(gap > 0.9);
        let (mut base, mut axis) = ([1.0; 4], [0.0; 4]);
        assert_eq!(kpg_cone_get(cone, base.as_mut_ptr(), axis.as_mut_ptr()), KpgStatus::Ok);
        assert_eq!(base, ORIGIN);
        assert!(axis[3] > 0.999);
        let mut exact = ptr::null_mut();
        assert_eq!(kpg_cone_new(ORIGIN.as_ptr(), E4.as_ptr(), &mut exact), KpgStatus::Ok);
        let mut d = 0.0;
        assert_eq!(kpg_cone_distance(exact, [1.0, 0.0, 0.0, 0.0].as_ptr(), &mut d), KpgStatus::Ok);
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        kpg_cone_free(exact);

        let (mut sa, mut sb) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(kpg_set_from_measure(mu, &mut sa), KpgStatus::Ok);
        assert_eq!(kpg_set_from_cone(cone, &mut sb), KpgStatus::Ok);
        let mut est = KpgEstimate::default();
        assert_eq!(kpg_relative_hausdorff(sa, sb, ORIGIN.as_ptr(), 1.0, &mut est), KpgStatus::Ok);
        assert!(est.value > 0.0 && est.value < 0.2, "{est:?}");

        let mut dev = 1.0;
        assert_eq!(kpg_doubling_deviation(mu, ORIGIN.as_ptr(), 1.0, &mut dev), KpgStatus::Ok);
        assert!(dev < 0.03, "{dev}");

        kpg_set_free(sa);
        kpg_set_free(sb);
        kpg_cone_free(cone);
        kpg_measure_free(mu);
    }
}

#[test]
fn plane_input_is_a_numerical_failure() {
    unsafe {
        // a cubic grid in {x4 = 0}
        let g: Vec<f64> = (-10..=10).map(|i| i as f64 / 10.0).collect();
        let mut pts = Vec::new();
        for &a in &g {
            for &b in &g {
                for &c in &g {
                    pts.extend([a, b, c, 0.0]);
                }
            }
        }
        let n = pts.len() / 4;
        let mut mu = ptr::null_mut();
        assert_eq!(kpg_measure_new(pts.as_ptr(), ptr::null(), n, 3, &mut mu), KpgStatus::Ok);
        let mut cone = ptr::null_mut();
        let st = kpg_cone_from_moments(mu, ORIGIN.as_ptr(), 1.0, 0.5, &mut cone, ptr::null_mut());
        assert_eq!(st, KpgStatus::Numerical);
        assert!(cone.is_null());
        assert!(last_error().contains("degenerate spectrum"), "{}", last_error());
        kpg_measure_free(mu);
    }
}

#[test]
fn bad_arguments_are_reported() {
    unsafe {
        let mut mu = ptr::null_mut();
        assert_eq!(kpg_measure_new(ptr::null(), ptr::null(), 3, 3, &mut mu), KpgStatus::NullPointer);
        assert!(last_error().contains("coords"));
        let neg = [0.0, 0.0, 0.0, 1.0];
        assert_eq!(kpg_measure_new(neg.as_ptr(), [-1.0].as_ptr(), 1, 3, &mut mu), KpgStatus::Invalid);
        assert!(mu.is_null());
        let mut c = ptr::null_mut();
        assert_eq!(kpg_cone_new(ORIGIN.as_ptr(), ORIGIN.as_ptr(), &mut c), KpgStatus::Invalid);
        assert_eq!(kpg_cone_distance(ptr::null(), ORIGIN.as_ptr(), &mut 0.0), KpgStatus::NullPointer);
        let path = CString::new("/nonexistent/measure.csv").unwrap();
        assert_eq!(kpg_measure_read(path.as_ptr(), &mut mu), KpgStatus::Io);
        assert_eq!(kpg_measure_len(ptr::null()), 0);
        kpg_measure_free(ptr::null_mut());
        kpg_cone_free(ptr::null_mut());
        kpg_set_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(kpg_cone_new(ORIGIN.as_ptr(), ORIGIN.as_ptr(), &mut c), KpgStatus::Invalid);
    }
    let other = std::thread::spawn(last_error).join().unwrap();
    assert_eq!(other, "");
    assert!(!last_error().is_empty());
}

#[test]
fn measure_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    std::fs::write(&p, "x1,x2,x3,x4,weight\n1,0,0,1,2\n0,1,0,-1,0.5\n").unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    unsafe {
        let mut mu = ptr::null_mut();
        assert_eq!(kpg_measure_read(path.as_ptr(), &mut mu), KpgStatus::Ok);
        assert_eq!(kpg_measure_len(mu), 2);
        kpg_measure_free(mu);
    }
}

#[test]
fn version_is_exposed() {
    let v = unsafe { CStr::from_ptr(kpg_version()) }.to_str().unwrap().to_string();
    assert!(v.starts_with("v0."), "{v}");
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/kpgeom.h")).unwrap();
    for f in ["kpg_measure_new", "kpg_moments", "kpg_relative_hausdorff", "kpg_last_error_message", "KPG_STATUS_NUMERICAL"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"kpgeom.h\"\nint main(void) { KpgMeasure *m = 0; KpgMoments q; double x[4] = {0};\n\
         KpgStatus s = kpg_moments(m, x, 1.0, &q); kpg_measure_free(m); return s == KPG_STATUS_NULL_POINTER ? 0 : 1; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; skipped the compile check"),
    }
}
