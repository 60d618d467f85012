use std::ffi::{CStr, CString};
use std::ptr;

use kwgraph_ffi::*;

const UNIT: &str = r#"{"vertices": ["v0", "v1"], "edges": [{"id": "e0", "tail": "v0", "head": "v1", "length": 1}],
                      "h": "-1", "c": -2}"#;

fn problem(json: &str, cells: usize) -> *mut KwProblem {
    let text = CString::new(json).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { kw_problem_from_json(text.as_ptr(), cells, &mut p) }, KwStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let e = kw_last_error();
    assert!(!e.is_null());
    unsafe { CStr::from_ptr(e) }.to_str().unwrap().to_string()
}

#[test]
fn constant_solution_round_trip() {
    let p = problem(UNIT, 16);
    let mut n = 0;
    unsafe {
        assert_eq!(kw_problem_num_dofs(p, &mut n), KwStatus::Ok);
        assert_eq!(n, 17);
        let mut s = ptr::null_mut();
        assert_eq!(kw_solve(p, 1e-12, 0, &mut s), KwStatus::Ok);
        let mut u = vec![0.0; n];
        assert_eq!(kw_solution_values(s, u.as_mut_ptr(), n), KwStatus::Ok);
        assert!(u.iter().all(|v| (v - 2f64.ln()).abs() < 1e-10));
        let (mut r, mut it) = (f64::NAN, 0);
        assert_eq!(kw_solution_stats(s, &mut r, &mut it), KwStatus::Ok);
        assert!(r <= 1e-12);
        let mut m = 0.0;
        assert_eq!(kw_solution_multiplier(s, &mut m), KwStatus::Unavailable);
        assert_eq!(kw_solution_values(s, u.as_mut_ptr(), 3), KwStatus::BufferTooSmall);
        assert!(last_error().contains("17"));
        let json = kw_solution_report_json(s);
        assert!(!json.is_null());
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"method\":\"Monotone\""));
        kw_string_free(json);
        let (mut edge, mut pos) = (9, f64::NAN);
        assert_eq!(kw_problem_dof_location(p, 5, &mut edge, &mut pos), KwStatus::Ok);
        assert_eq!((edge, pos), (0, 0.25));
        assert_eq!(kw_problem_dof_location(p, 17, &mut edge, &mut pos), KwStatus::InvalidInput);
        kw_solution_free(s);
        kw_problem_free(p);
    }
}

#[test]
fn status_codes() {
    let p = problem(UNIT, 0);
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(kw_problem_set_c(p, 0.0), KwStatus::Ok);
        assert_eq!(kw_solve(p, 0.0, 0, &mut s), KwStatus::NotSolvable);
        assert!(s.is_null());
        assert!(last_error().contains("HDoesNotChangeSign"));
        assert_eq!(kw_problem_set_c(p, f64::NAN), KwStatus::InvalidInput);
        let mut v = KwVerdict {
            necessary_ok: true,
            reason: KwReason::None,
            integral_h: 0.0,
            max_h: 0.0,
            min_h: 0.0,
        };
        assert_eq!(kw_classify(p, 1.0, &mut v), KwStatus::Ok);
        assert!(!v.necessary_ok);
        assert_eq!(v.reason, KwReason::HNowherePositive);
        let mut t = KwThreshold {
            minus_infinity: false,
            c_lo: 0.0,
            c_hi: 0.0,
            analytic_upper_bound: 0.0,
            solves: 0,
        };
        assert_eq!(kw_threshold(p, 0.0, &mut t), KwStatus::Ok);
        assert!(t.minus_infinity);
        assert_eq!(kw_threshold(ptr::null(), 0.0, &mut t), KwStatus::NullPointer);
        assert_eq!(kw_solve(p, 0.0, 0, ptr::null_mut()), KwStatus::NullPointer);
        kw_problem_free(p);
        kw_problem_free(ptr::null_mut());
        kw_solution_free(ptr::null_mut());
        kw_string_free(ptr::null_mut());
    }
}

#[test]
fn parse_errors_are_reported() {
    let bad = CString::new("{\"vertices\": []").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { kw_problem_from_json(bad.as_ptr(), 0, &mut p) }, KwStatus::InvalidInput);
    assert!(p.is_null());
    assert!(last_error().contains("malformed"));
    assert_eq!(unsafe { kw_problem_from_json(ptr::null(), 0, &mut p) }, KwStatus::NullPointer);
    let positive = UNIT.replace("\"-1\"", "\"1\"");
    let p = problem(&positive, 8);
    let mut t = KwThreshold {
        minus_infinity: false,
        c_lo: 0.0,
        c_hi: 0.0,
        analytic_upper_bound: 0.0,
        solves: 0,
    };
    assert_eq!(unsafe { kw_threshold(p, 0.0, &mut t) }, KwStatus::NotSolvable);
    unsafe { kw_problem_free(p) };
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(kw_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
