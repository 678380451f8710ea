//! Closed-form corrections and predictors on concrete inputs.

mod common;

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use common::table;
use msgate::hilbert::{QubitPair, C64};
use msgate::ideal::{ms_target_unitary, DimensionlessGateParams, PulseShape};
use msgate::magnus::{
    corrected_state, first_order_state, first_order_traced_unitary, predict_coherence, predict_density_matrix, predict_fidelity, predict_phase,
    predict_populations, predict_purity, second_order_state, CoefficientTable, InitialMotion, Normalization, Provenance, QuadratureConfig,
};
use msgate::oracle::{propagate_gate, IntegratorConfig};
use msgate::Error;

const GG: usize = 0;
const GE: usize = 1;
const EG: usize = 2;
const EE: usize = 3;

fn fock(n: usize) -> InitialMotion {
    InitialMotion::Fock(n)
}

#[test]
fn ge_and_eg_corrections_coincide() {
    let t = table();
    for n in 0..6 {
        assert_eq!(first_order_state(QubitPair::GE, n, t).unwrap().amplitudes(), first_order_state(QubitPair::EG, n, t).unwrap().amplitudes());
        assert_eq!(second_order_state(QubitPair::GE, n, t).unwrap().amplitudes(), second_order_state(QubitPair::EG, n, t).unwrap().amplitudes());
    }
}

#[test]
fn second_order_gg_correction_carries_j_plus_and_j_minus() {
    // The |g,e⟩ amplitudes vanish for even n − m only; the odd ones are (i/2)(J₁ − J₂).
    let t = table();
    for n in 0..6 {
        let psi = second_order_state(QubitPair::GG, n, t).unwrap();
        for m in 0..=t.n_max() {
            let even = (n + m) % 2 == 0;
            let zero = C64::new(0.0, 0.0);
            assert_eq!(psi.amp(GG, m), if even { t.jp[[m, n]] } else { zero });
            assert_eq!(psi.amp(EE, m), if even { -t.jm[[m, n]] } else { zero });
            let side = if even { zero } else { 0.5 * C64::new(0.0, 1.0) * (t.j1[[m, n]] - t.j2[[m, n]]) };
            assert_eq!(psi.amp(GE, m), side);
        }
    }
}

#[test]
fn first_order_gg_correction_has_no_eg_component_for_even_difference() {
    let t = table();
    for n in 0..6 {
        let psi = first_order_state(QubitPair::GG, n, t).unwrap();
        for m in (0..=t.n_max()).filter(|m| (n + m) % 2 == 0) {
            assert_eq!(psi.amp(EG, m), C64::new(0.0, 0.0));
        }
    }
}

#[test]
fn traced_unitary_examples() {
    let t = table();
    let u0 = first_order_traced_unitary(0, 0.0, t).unwrap();
    let ms = ms_target_unitary(FRAC_PI_2, 0.0) * C64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
    for (x, y) in u0.iter().zip(ms.iter()) {
        assert!((x - y).norm() < 1e-15);
    }
    let u = first_order_traced_unitary(2, 0.03, t).unwrap();
    assert_eq!(u[[GG, GE]], C64::new(0.0, 0.0));
    assert_eq!(u[[EE, GE]], C64::new(0.0, 0.0));
    let l = 1e-3;
    let u = first_order_traced_unitary(1, l, t).unwrap();
    let phase = (u[[EE, GG]] / u[[GG, GG]]).arg();
    assert!((phase - (-FRAC_PI_2 + t.a(1).unwrap() * l)).abs() < 1e-5);
}

#[test]
fn phase_examples() {
    let t = table();
    for n in 0..4 {
        assert_eq!(predict_phase(QubitPair::GG, &fock(n), 0.0, 2, t).unwrap(), -FRAC_PI_2);
        let l = 0.02;
        let gg = predict_phase(QubitPair::GG, &fock(n), l, 1, t).unwrap();
        let ee = predict_phase(QubitPair::EE, &fock(n), l, 1, t).unwrap();
        assert!((gg + FRAC_PI_2 - t.a(n).unwrap() * l).abs() < 1e-14);
        assert!((ee + FRAC_PI_2 + t.a(n).unwrap() * l).abs() < 1e-14);
        assert_eq!(predict_phase(QubitPair::GE, &fock(n), l, 1, t).unwrap(), FRAC_PI_2);
    }
    assert!(matches!(predict_phase(QubitPair::GE, &fock(0), 0.02, 2, t), Err(Error::InvalidParameter(_))));
    assert!(predict_phase(QubitPair::GG, &fock(0), 0.02, 3, t).is_err());
}

#[test]
fn population_and_density_examples() {
    let t = table();
    let p = predict_populations(QubitPair::GG, &fock(1), 0.0, Normalization::Raw, t).unwrap();
    assert_eq!(p, [0.5, 0.0, 0.0, 0.5]);
    for n in 0..4 {
        let rho = predict_density_matrix(QubitPair::GG, &fock(n), 0.07, Normalization::Raw, t).unwrap();
        let e = rho.entries();
        for (r, c) in [(GG, GE), (GG, EG), (EE, GE), (EE, EG)] {
            assert_eq!(e[[r, c]], C64::new(0.0, 0.0));
            assert_eq!(e[[c, r]], C64::new(0.0, 0.0));
        }
        assert!((e[[GG, EE]] - e[[EE, GG]].conj()).norm() < 1e-15);
        let pops = rho.populations();
        assert_eq!(pops[1], pops[2]);
    }
    let rho0 = predict_density_matrix(QubitPair::GG, &fock(0), 0.0, Normalization::Raw, t).unwrap();
    let bell = [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -FRAC_1_SQRT_2)];
    for r in 0..4 {
        for c in 0..4 {
            assert!((rho0.entries()[[r, c]] - bell[r] * bell[c].conj()).norm() < 1e-15);
        }
    }
}

#[test]
fn fidelity_and_purity_examples() {
    let t = table();
    for n in 0..=5 {
        assert!((predict_fidelity(QubitPair::GG, &fock(n), 0.0, Normalization::Raw, t).unwrap() - 1.0).abs() < 1e-15);
        assert!((predict_purity(QubitPair::GG, &fock(n), 0.0, Normalization::Raw, t).unwrap() - 1.0).abs() < 1e-15);
        // Quadratic coefficients are non-positive.
        let f = predict_fidelity(QubitPair::GG, &fock(n), 1.0, Normalization::Raw, t).unwrap() - 1.0;
        let (c_gg, c_ee, _) = t.c(n).unwrap();
        assert!((f - (c_gg + c_ee - t.b(n).unwrap().im) / 2.0).abs() < 1e-12);
        assert!(f <= 0.0, "n={n}: {f}");
        let g = predict_purity(QubitPair::GG, &fock(n), 1.0, Normalization::Raw, t).unwrap() - 1.0;
        let a = t.a(n).unwrap();
        assert!((g + (t.b(n).unwrap().im - a * a / 2.0 - c_gg - c_ee)).abs() < 1e-12);
        assert!(g <= 0.0);
    }
}

#[test]
fn renormalized_populations_have_unit_trace() {
    let t = table();
    let p = predict_populations(QubitPair::GE, &fock(2), 0.09, Normalization::Renormalized, t).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
}

#[test]
fn coherence_argument_is_the_phase() {
    let t = table();
    let c = predict_coherence(QubitPair::GG, &fock(1), 0.04, t).unwrap();
    let phase = predict_phase(QubitPair::GG, &fock(1), 0.04, 2, t).unwrap();
    assert!((c.arg() - phase).abs() < 0.01);
}

#[test]
fn thermal_prediction_is_the_weighted_mixture() {
    let t = table();
    let dist = msgate::hilbert::thermal_probabilities(0.05, msgate::hilbert::FockCutoff::new(40)).unwrap();
    let w = InitialMotion::Thermal(dist.clone()).weights(t).unwrap();
    let mixed = predict_populations(QubitPair::GG, &InitialMotion::Thermal(dist), 0.05, Normalization::Raw, t).unwrap();
    let mut manual = [0.0; 4];
    for (n, p) in w {
        let q = predict_populations(QubitPair::GG, &fock(n), 0.05, Normalization::Raw, t).unwrap();
        for k in 0..4 {
            manual[k] += p * q[k];
        }
    }
    for k in 0..4 {
        assert!((mixed[k] - manual[k]).abs() < 1e-14);
    }
}

#[test]
fn corrected_state_overlap_converges_faster_than_quadratic() {
    let t = table();
    let config = IntegratorConfig::default();
    for n in [0usize, 2] {
        let mut pts = Vec::new();
        for &l in &[0.01, 0.02, 0.04, 0.08] {
            let params = DimensionlessGateParams::calibrated().with_lambda(l);
            let init = msgate::hilbert::CompositeState::computational(QubitPair::GG, n, config.cutoff).unwrap();
            let exact = propagate_gate(&init, &params, &PulseShape::Square, &config).unwrap().state;
            let approx = corrected_state(QubitPair::GG, n, l, 2, t).unwrap().assembled;
            let overlap = approx.inner(&exact).unwrap().norm() / approx.norm();
            pts.push((l.ln(), (1.0 - overlap).abs().ln()));
        }
        let slope = common_slope(&pts);
        assert!(slope >= 2.5, "n={n}: slope {slope}");
    }
}

fn common_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

#[test]
fn table_persistence_round_trip_and_provenance() {
    let t = table();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.json");
    t.save(&path).unwrap();
    let first = std::fs::read(&path).unwrap();
    let loaded = CoefficientTable::load(&path, Some(&t.provenance)).unwrap();
    assert_eq!(loaded.a, t.a);
    assert_eq!(loaded.b, t.b);
    assert_eq!(loaded.i, t.i);
    loaded.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);

    let params = DimensionlessGateParams { omega_tilde: 0.4, ..DimensionlessGateParams::calibrated() };
    let other = Provenance::new(&params, &PulseShape::Square, msgate::hilbert::FockCutoff::new(40), &QuadratureConfig::default());
    assert!(matches!(CoefficientTable::load(&path, Some(&other)), Err(Error::ProvenanceMismatch(_))));

    std::fs::write(&path, String::from_utf8(first).unwrap().replace("\"version\": 1", "\"version\": 99")).unwrap();
    assert!(matches!(CoefficientTable::load(&path, None), Err(Error::Schema(_))));
}

#[test]
fn tabulated_pulses_are_rejected_by_the_quadrature() {
    let pulse = PulseShape::Tabulated { samples: vec![(0.0, 0.0), (1.0, 1.0), (6.3, 1.0)] };
    let r = CoefficientTable::compute(&DimensionlessGateParams::calibrated(), &pulse, msgate::hilbert::FockCutoff::new(10), &QuadratureConfig::default());
    assert!(matches!(r, Err(Error::UnsupportedPulse(_))));
}
