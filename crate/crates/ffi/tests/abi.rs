use std::ffi::{c_char, CStr, CString};
use std::ptr;

use uavlasov_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 512];
    let mut needed = 0usize;
    unsafe {
        assert_eq!(uav_last_error(buf.as_mut_ptr(), buf.len(), &mut needed), UavStatus::Ok);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn field(spec: &str) -> *mut UavField {
    let s = CString::new(spec).unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { uav_field_new(s.as_ptr(), &mut f) }, UavStatus::Ok);
    f
}

#[test]
fn unknown_field_reports_config_error() {
    let s = CString::new("no-such-field").unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { uav_field_new(s.as_ptr(), &mut f) }, UavStatus::Config);
    assert!(f.is_null());
    assert!(last_error().contains("no-such-field"));
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(uav_field_new(ptr::null(), ptr::null_mut()), UavStatus::NullPointer);
        let mut st = [0.0; 6];
        assert_eq!(
            uav_integrate(ptr::null(), UavScheme::Mrc, 0.1, 1.0, 4, 16, st.as_mut_ptr()),
            UavStatus::NullPointer
        );
        assert_eq!(uav_ensemble_len(ptr::null()), 0);
        uav_field_free(ptr::null_mut());
        uav_config_free(ptr::null_mut());
        uav_ensemble_free(ptr::null_mut());
    }
}

#[test]
fn field_evaluation_matches_catalog() {
    let f = field("uniform");
    let (mut e, mut b) = ([1.0; 3], [0.0; 3]);
    unsafe {
        assert_eq!(uav_field_eval(f, 0.0, [0.5, 0.1, 2.0].as_ptr(), e.as_mut_ptr(), b.as_mut_ptr()), UavStatus::Ok);
        uav_field_free(f);
    }
    assert_eq!(e, [0.0; 3]);
    assert_eq!(b, [0.0, 0.0, 1.0]);
}

#[test]
fn mrc_gyration_in_uniform_field_is_exact() {
    let f = field("uniform");
    let eps = 0.1;
    let t = 2.0 * std::f64::consts::PI * eps * 8.0;
    let mut st = [0.0, 0.0, 0.0, 1.0, 0.0, 0.5];
    unsafe {
        assert_eq!(uav_integrate(f, UavScheme::Mrc, eps, t, 4, 0, st.as_mut_ptr()), UavStatus::Ok);
        uav_field_free(f);
    }
    // whole gyro-periods: back to the start in the plane, drifted along z
    let expect = [0.0, 0.0, 0.5 * t, 1.0, 0.0, 0.5];
    for (a, b) in st.iter().zip(expect) {
        assert!((a - b).abs() < 1e-10, "{st:?}");
    }
}

#[test]
fn integrators_agree_with_reference() {
    let f = field("example1");
    let p0 = [1.0 / 3.0, -0.5, std::f64::consts::PI.sqrt() / 2.0, 0.5, std::f64::consts::E / 4.0, -1.0 / 3.0];
    let mut r = p0;
    unsafe { assert_eq!(uav_reference(f, 1.0 / 16.0, 0.5, 12, r.as_mut_ptr()), UavStatus::Ok) };
    for s in [UavScheme::Mrc, UavScheme::Tsf, UavScheme::Mm, UavScheme::Rk4] {
        let mut st = p0;
        unsafe { assert_eq!(uav_integrate(f, s, 1.0 / 16.0, 0.5, 256, 16, st.as_mut_ptr()), UavStatus::Ok) };
        let d = st.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-3, "{s:?}: {d}");
    }
    unsafe { uav_field_free(f) };
}

#[test]
fn varying_intensity_is_rejected_by_unit_intensity_schemes() {
    let f = field("example2");
    let mut st = [0.1, 0.2, 0.3, 1.0, 0.0, 0.0];
    let s = unsafe { uav_integrate(f, UavScheme::Mrc, 0.1, 1.0, 8, 16, st.as_mut_ptr()) };
    assert_ne!(s, UavStatus::Ok);
    unsafe { uav_field_free(f) };
}

#[test]
fn config_round_trip_and_hash() {
    let mut c = ptr::null_mut();
    let mut buf = [0 as c_char; 32];
    let mut needed = 0;
    unsafe {
        assert_eq!(uav_config_new(&mut c), UavStatus::Ok);
        let (k, v) = (CString::new("eps").unwrap(), CString::new("2^-3, 2^-5").unwrap());
        assert_eq!(uav_config_set(c, k.as_ptr(), v.as_ptr()), UavStatus::Ok);
        let bad = CString::new("bogus").unwrap();
        assert_eq!(uav_config_set(c, bad.as_ptr(), v.as_ptr()), UavStatus::Config);
        assert_eq!(uav_config_hash(c, buf.as_mut_ptr(), 4, &mut needed), UavStatus::BufferTooSmall);
        assert_eq!(needed, 17);
        assert_eq!(uav_config_hash(c, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), UavStatus::Ok);
        let h1 = CStr::from_ptr(buf.as_ptr()).to_str().unwrap().to_owned();
        uav_config_free(c);

        let text = CString::new("eps = 2^-3, 2^-5\n").unwrap();
        assert_eq!(uav_config_parse(text.as_ptr(), &mut c), UavStatus::Ok);
        assert_eq!(uav_config_hash(c, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), UavStatus::Ok);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), h1);
        uav_config_free(c);
    }
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("e.csv").to_str().unwrap()).unwrap();
    let text = CString::new("scheme = tsf\neps = 2^-4\nsteps = 8, 16\nntau = 8\n").unwrap();
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(uav_config_parse(text.as_ptr(), &mut c), UavStatus::Ok);
        assert_eq!(uav_sweep_csv(c, path.as_ptr()), UavStatus::Ok);
        uav_config_free(c);
    }
    let csv = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("scheme,eps,steps"));
}

#[test]
fn ensemble_sampling_and_short_vp_run() {
    let mut e = ptr::null_mut();
    let nodes = [8usize, 8, 4];
    let f = field("screw-pinch");
    let mut st = [0.0; 6];
    let mut w = 0.0;
    let mut err = -1.0;
    unsafe {
        assert_eq!(uav_ensemble_new(nodes.as_ptr(), 100.0, 0.05, 4, 3, 500, &mut e), UavStatus::Ok);
        assert_eq!(uav_ensemble_len(e), 500);
        assert_eq!(uav_ensemble_get(e, 499, st.as_mut_ptr(), &mut w), UavStatus::Ok);
        assert_eq!(uav_ensemble_get(e, 500, st.as_mut_ptr(), &mut w), UavStatus::Range);
        assert!(w > 0.0);
        assert_eq!(uav_vp_run(e, f, 1.0 / 32.0, 0.2, 2, &mut err), UavStatus::Ok);
        assert!(err.is_finite() && err >= 0.0);
        uav_ensemble_free(e);
        uav_field_free(f);
    }
}
