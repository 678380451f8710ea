//! Numerical propagation on concrete inputs.

mod common;

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use common::table;
use msgate::hilbert::{dagger, computational_to_sy, CompositeState, FockCutoff, Frame, QubitDensityMatrix, QubitPair, C64};
use msgate::ideal::{DimensionlessGateParams, PulseShape};
use msgate::magnus::{predict_purity, InitialMotion, Normalization};
use msgate::oracle::{
    density_observables, expectation_trajectory, fock_observables, observables, propagate_gate, thermal_observables, HamiltonianFrame, IntegratorConfig,
};
use msgate::Error;
use ndarray::Array2;

fn gate(l: f64) -> DimensionlessGateParams {
    DimensionlessGateParams::calibrated().with_lambda(l)
}

#[test]
fn ideal_outputs_at_zero_detuning() {
    let config = IntegratorConfig::default();
    let e = C64::from_polar(FRAC_1_SQRT_2, FRAC_PI_4);
    let cases = [(QubitPair::GG, 0, 3, C64::new(0.0, -1.0)), (QubitPair::GE, 2, 2, C64::new(0.0, 1.0))];
    for (pair, n, partner, coeff) in cases {
        let init = CompositeState::computational(pair, n, config.cutoff).unwrap();
        let out = propagate_gate(&init, &gate(0.0), &PulseShape::Square, &config).unwrap().state;
        let partner = if pair == QubitPair::GG { partner } else { QubitPair::EG.index() };
        assert!((out.amp(pair.index(), n) - e).norm() < 1e-8);
        assert!((out.amp(partner, n) - e * coeff).norm() < 1e-8);
        assert!(out.norm() > 1.0 - 1e-9);
    }
}

#[test]
fn detuning_entangles_spin_and_motion() {
    let config = IntegratorConfig::default();
    let init = CompositeState::computational(QubitPair::GG, 0, config.cutoff).unwrap();
    let out = propagate_gate(&init, &gate(0.1), &PulseShape::Square, &config).unwrap().state;
    let obs = observables(&out, QubitPair::GG).unwrap();
    assert!(obs.purity < 1.0 - 1e-4);
    let excited: f64 = (0..4).map(|q| (1..=config.cutoff.n_max).map(|m| out.amp(q, m).norm_sqr()).sum::<f64>()).sum();
    assert!(excited > 1e-4);

    let adaptive = fock_observables(QubitPair::GG, 0, &gate(0.1), &PulseShape::Square, &IntegratorConfig::adaptive(1e-11, 1e-13)).unwrap();
    assert!((adaptive.purity - obs.purity).abs() < 1e-8);
}

#[test]
fn oracle_purity_follows_second_order_prediction() {
    let config = IntegratorConfig::default();
    let o = fock_observables(QubitPair::GG, 0, &gate(0.04), &PulseShape::Square, &config).unwrap();
    let p = predict_purity(QubitPair::GG, &InitialMotion::Fock(0), 0.04, Normalization::Raw, table()).unwrap();
    assert!(o.purity < 1.0);
    assert!((o.purity - p).abs() < 0.1 * (1.0 - o.purity), "{} vs {}", o.purity, p);
}

#[test]
fn observables_of_special_states() {
    let bell = [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -FRAC_1_SQRT_2)];
    let obs = density_observables(&QubitDensityMatrix::pure(bell).unwrap(), QubitPair::GG).unwrap();
    for (got, want) in obs.populations.iter().zip([0.5, 0.0, 0.0, 0.5]) {
        assert!((got - want).abs() < 1e-15);
    }
    assert!((obs.relative_phase + FRAC_PI_2).abs() < 1e-15);
    assert!((obs.fidelity - 1.0).abs() < 1e-14 && (obs.purity - 1.0).abs() < 1e-14, "{obs:?}");
    assert!(obs.phase_reliable);

    let mixed = QubitDensityMatrix::new(Array2::from_diag_elem(4, C64::new(0.25, 0.0))).unwrap();
    let obs = density_observables(&mixed, QubitPair::GG).unwrap();
    assert!(!obs.phase_reliable);
    assert!((obs.purity - 0.25).abs() < 1e-15);
}

#[test]
fn phase_shift_shrinks_with_phonon_number() {
    let config = IntegratorConfig::default();
    let shift = |n| (fock_observables(QubitPair::GG, n, &gate(0.05), &PulseShape::Square, &config).unwrap().relative_phase + FRAC_PI_2).abs();
    assert!(shift(3) < shift(0));
}

#[test]
fn second_order_phase_coefficient_matches_oracle() {
    let config = IntegratorConfig::default();
    let t = table();
    for n in 0..4 {
        let phase = |l: f64| fock_observables(QubitPair::GG, n, &gate(l), &PulseShape::Square, &config).unwrap().relative_phase;
        // Even part of φ(λ̃) + π/2 with Richardson over h and 2h.
        let even = |h: f64| (phase(h) + phase(-h)) / 2.0 + FRAC_PI_2;
        let (h1, h2) = (0.01, 0.02);
        let k1 = even(h1) / (h1 * h1);
        let k2 = even(h2) / (h2 * h2);
        let fitted = (4.0 * k1 - k2) / 3.0;
        let re_b = t.b(n).unwrap().re;
        assert!((fitted - re_b).abs() < 0.02 * re_b.abs(), "n={n}: {fitted} vs {re_b}");
    }
}

#[test]
fn ge_inputs_have_no_linear_response() {
    let config = IntegratorConfig::default();
    let h = 0.01;
    for pair in [QubitPair::GE, QubitPair::EG] {
        let up = fock_observables(pair, 1, &gate(h), &PulseShape::Square, &config).unwrap();
        let down = fock_observables(pair, 1, &gate(-h), &PulseShape::Square, &config).unwrap();
        let slope = |a: f64, b: f64| (a - b) / (2.0 * h);
        assert!(slope(up.relative_phase, down.relative_phase).abs() < 1e-3);
        for k in 0..4 {
            assert!(slope(up.populations[k], down.populations[k]).abs() < 1e-3);
        }
        assert!(slope(up.fidelity, down.fidelity).abs() < 1e-3);
        assert!(slope(up.purity, down.purity).abs() < 1e-3);
    }
}

#[test]
fn gg_fidelity_is_flat_at_zero_detuning() {
    let config = IntegratorConfig::default();
    let h = 0.01;
    let f = |l| fock_observables(QubitPair::GG, 1, &gate(l), &PulseShape::Square, &config).unwrap().fidelity;
    assert!(((f(h) - f(-h)) / (2.0 * h)).abs() < 1e-3);
}

fn branch_input(s: usize, n: usize, cutoff: FockCutoff) -> CompositeState {
    let wd = dagger(&computational_to_sy());
    let q: [C64; 4] = std::array::from_fn(|i| wd[[i, s]]);
    CompositeState::product(q, n, Frame::Computational, cutoff).unwrap()
}

#[test]
fn detuned_loops_open_and_depend_on_phonon_number() {
    let config = IntegratorConfig::default();
    let p = gate(0.1);
    let run = |n| {
        expectation_trajectory(&branch_input(0, n, config.cutoff), HamiltonianFrame::RescaledInteraction, &p, &PulseShape::Square, (0.0, p.span()), &config, 33)
            .unwrap()
    };
    let t0 = run(0);
    let t2 = run(2);
    assert!(t0.last().unwrap().1.norm() > 1e-3);
    let gap = t0.iter().zip(&t2).map(|(a, b)| (a.1 - b.1).norm()).fold(0.0, f64::max);
    assert!(gap > 1e-3);
}

#[test]
fn thermal_oracle_mixes_fock_outputs() {
    let config = IntegratorConfig::default();
    let (mixed, dist) = thermal_observables(QubitPair::GG, 0.05, &gate(0.04), &PulseShape::Square, &config, 1e-6).unwrap();
    let mut manual = 0.0;
    for (n, &p) in dist.probabilities.iter().enumerate().filter(|(_, &p)| p > 1e-9) {
        manual += p * fock_observables(QubitPair::GG, n, &gate(0.04), &PulseShape::Square, &config).unwrap().populations[0];
    }
    assert!((mixed.populations[0] - manual).abs() < 1e-8);
}

#[test]
fn guard_conditions() {
    let config = IntegratorConfig::default();
    let near_top = CompositeState::computational(QubitPair::GG, 35, config.cutoff).unwrap();
    assert!(matches!(propagate_gate(&near_top, &gate(0.0), &PulseShape::Square, &config), Err(Error::CutoffTooSmall(_))));

    let coarse = IntegratorConfig::default().with_steps(50);
    let init = CompositeState::computational(QubitPair::GG, 0, coarse.cutoff).unwrap();
    assert!(matches!(propagate_gate(&init, &gate(0.0), &PulseShape::Square, &coarse), Err(Error::NormDrift { .. })));

    let sy = msgate::hilbert::change_basis(&init, Frame::SY);
    assert!(matches!(propagate_gate(&sy, &gate(0.0), &PulseShape::Square, &config), Err(Error::FrameMismatch { .. })));
}

#[test]
fn tabulated_square_envelope_reproduces_square_pulse() {
    let config = IntegratorConfig::default();
    let flat = PulseShape::Tabulated { samples: vec![(0.0, 1.0), (7.0, 1.0)] };
    let a = fock_observables(QubitPair::GG, 1, &gate(0.05), &flat, &config).unwrap();
    let b = fock_observables(QubitPair::GG, 1, &gate(0.05), &PulseShape::Square, &config).unwrap();
    assert!((a.relative_phase - b.relative_phase).abs() < 1e-13);
}
