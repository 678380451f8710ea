use std::ffi::{c_char, CString};
use std::ptr;
use std::sync::OnceLock;

use msgate::hilbert::{displacement_element, C64};
use msgate::magnus::CoefficientTable;
use msgate_ffi::*;

struct Shared(*mut MsgateTable);
unsafe impl Send for Shared {}
unsafe impl Sync for Shared {}

fn shared() -> *const MsgateTable {
    static TABLE: OnceLock<Shared> = OnceLock::new();
    TABLE
        .get_or_init(|| {
            let mut t = ptr::null_mut();
            assert_eq!(unsafe { msgate_table_compute_default(&mut t) }, MsgateStatus::Ok);
            Shared(t)
        })
        .0
}

fn core_table() -> &'static CoefficientTable {
    static TABLE: OnceLock<CoefficientTable> = OnceLock::new();
    TABLE.get_or_init(|| CoefficientTable::calibrated_default().unwrap())
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { msgate_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

const FOCK1: MsgateMotion = MsgateMotion { thermal: false, n: 1, n_bar: 0.0 };

#[test]
fn displacement_matches_core() {
    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(unsafe { msgate_displacement_element(3, 1, 0.4, -0.7, &mut re, &mut im) }, MsgateStatus::Ok);
    let d = displacement_element(3, 1, C64::new(0.4, -0.7)).unwrap();
    assert_eq!((re, im), (d.re, d.im));
}

#[test]
fn null_out_pointer_is_reported() {
    let mut im = 0.0;
    let s = unsafe { msgate_displacement_element(0, 0, 0.1, 0.0, ptr::null_mut(), &mut im) };
    assert_eq!(s, MsgateStatus::NullPointer);
    assert!(last_error().contains("out_re"));
    assert_eq!(unsafe { msgate_table_scalars(ptr::null(), 0, ptr::null_mut()) }, MsgateStatus::NullPointer);
}

#[test]
fn overflow_maps_to_numerical() {
    let (mut re, mut im) = (0.0, 0.0);
    let s = unsafe { msgate_displacement_element(2000, 2000, 1000.0, 0.0, &mut re, &mut im) };
    assert_eq!(s, MsgateStatus::Numerical);
    assert!(last_error().contains("overflow"));
}

#[test]
fn error_message_truncates_and_reports_full_length() {
    let s = unsafe { msgate_table_scalars(ptr::null(), 0, ptr::null_mut()) };
    assert_eq!(s, MsgateStatus::NullPointer);
    let mut buf = [0 as c_char; 5];
    let n = unsafe { msgate_last_error(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, "null pointer: table".len());
    assert_eq!(buf[4], 0);
    assert_eq!(unsafe { msgate_last_error(ptr::null_mut(), 0) }, n);
}

#[test]
fn scalars_match_core_table() {
    let core = core_table();
    let (mut n_max, mut scalar_max) = (0, 0);
    assert_eq!(unsafe { msgate_table_range(shared(), &mut n_max, &mut scalar_max) }, MsgateStatus::Ok);
    assert_eq!(n_max as usize, core.n_max());
    assert_eq!(scalar_max as usize, core.scalar_n_max());
    for n in 0..4 {
        let mut s = MsgateScalars::default();
        assert_eq!(unsafe { msgate_table_scalars(shared(), n, &mut s) }, MsgateStatus::Ok);
        let (gg, ee, eg) = core.c(n as usize).unwrap();
        assert_eq!(s.a, core.a(n as usize).unwrap());
        assert_eq!((s.b_re, s.b_im), (core.b(n as usize).unwrap().re, core.b(n as usize).unwrap().im));
        assert_eq!((s.c_gg, s.c_ee, s.c_eg), (gg, ee, eg));
    }
    let mut s = MsgateScalars::default();
    assert_eq!(unsafe { msgate_table_scalars(shared(), scalar_max + 1, &mut s) }, MsgateStatus::InvalidArgument);
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("t.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { msgate_table_save(shared(), path.as_ptr()) }, MsgateStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { msgate_table_load(path.as_ptr(), &mut loaded) }, MsgateStatus::Ok);
    let (mut a, mut b) = (MsgateScalars::default(), MsgateScalars::default());
    unsafe {
        msgate_table_scalars(shared(), 2, &mut a);
        msgate_table_scalars(loaded, 2, &mut b);
        msgate_table_free(loaded);
        msgate_table_free(ptr::null_mut());
    }
    assert_eq!((a.a, a.b_re, a.c_eg), (b.a, b.b_re, b.c_eg));

    let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { msgate_table_load(missing.as_ptr(), &mut t) }, MsgateStatus::Io);
    assert!(t.is_null());
}

#[test]
fn prediction_agrees_with_oracle() {
    let mut p = MsgatePrediction::default();
    assert_eq!(unsafe { msgate_predict(shared(), MsgatePair::Gg, FOCK1, 0.02, 2, false, &mut p) }, MsgateStatus::Ok);
    let mut o = MsgateObservables::default();
    assert_eq!(unsafe { msgate_oracle_observables(MsgatePair::Gg, 1, 0.02, 0, &mut o) }, MsgateStatus::Ok);
    assert!(o.phase_reliable);
    assert!((p.phase - o.relative_phase).abs() < 1e-4, "{} vs {}", p.phase, o.relative_phase);
    assert!((p.fidelity - o.fidelity).abs() < 1e-4);
    assert!(o.norm_drift.abs() < 1e-9);
}

#[test]
fn prediction_rejects_order_three() {
    let mut p = MsgatePrediction::default();
    assert_eq!(unsafe { msgate_predict(shared(), MsgatePair::Gg, FOCK1, 0.02, 3, false, &mut p) }, MsgateStatus::InvalidArgument);
}

#[test]
fn calibrate_recovers_phase_from_clean_fringe() {
    let table = core_table();
    let epsilon = -2.0 * std::f64::consts::PI * 11e3;
    let lambda = 0.02 * epsilon;
    let phi_seq = 2.0 * lambda * table.a(1).unwrap() / epsilon;
    let phi: Vec<f64> = (0..16).map(|k| k as f64 * std::f64::consts::PI / 16.0).collect();
    let p: Vec<f64> = phi.iter().map(|x| 0.5 + 0.45 * (2.0 * x + phi_seq).cos()).collect();
    let mut c = MsgateCalibration::default();
    let s = unsafe { msgate_calibrate(shared(), phi.as_ptr(), p.as_ptr(), ptr::null(), phi.len(), FOCK1, epsilon, &mut c) };
    assert_eq!(s, MsgateStatus::Ok, "{}", last_error());
    assert!((c.phi_seq - phi_seq).abs() < 1e-9);
    assert!((c.lambda_hat - lambda).abs() < 1e-6 * lambda.abs());
    assert!(c.reliable);

    let s = unsafe { msgate_calibrate(shared(), phi.as_ptr(), p.as_ptr(), ptr::null(), 3, FOCK1, epsilon, &mut c) };
    assert_eq!(s, MsgateStatus::InvalidArgument);
}
