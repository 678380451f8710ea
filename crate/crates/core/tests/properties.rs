//! Invariants checked over randomized inputs.

mod common;

use std::f64::consts::PI;

use common::{laguerre_displacement, table};
use msgate::experiment::{fit_fringe, read_fringe_csv, wrap_angle, write_fringe_csv, FringeSample};
use msgate::hilbert::{displacement_element, thermal_probabilities, FockCutoff, QubitPair, C64};
use msgate::magnus::{predict_fidelity, predict_phase, predict_populations, predict_purity, InitialMotion, Normalization};
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = QubitPair> {
    prop_oneof![Just(QubitPair::GG), Just(QubitPair::GE), Just(QubitPair::EG), Just(QubitPair::EE)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn displacement_columns_are_normalized(n in 0usize..6, re in -1.5f64..1.5, im in -1.5f64..1.5) {
        let alpha = C64::new(re, im);
        let s: f64 = (0..90).map(|m| displacement_element(m, n, alpha).unwrap().norm_sqr()).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn displacement_matches_laguerre_form(m in 0usize..50, n in 0usize..50, re in -0.85f64..0.85, im in -0.85f64..0.85) {
        let alpha = C64::new(re, im);
        let d = displacement_element(m, n, alpha).unwrap();
        let l = laguerre_displacement(m, n, alpha);
        let tol = if m.max(n) < 25 { 1e-12 } else { 2e-11 };
        prop_assert!((d - l).norm() < tol, "{d} vs {l}");
    }

    #[test]
    fn displacement_adjoint_symmetry(m in 0usize..20, n in 0usize..20, re in -1.5f64..1.5, im in -1.5f64..1.5) {
        let alpha = C64::new(re, im);
        let d = displacement_element(m, n, alpha).unwrap();
        let e = displacement_element(n, m, -alpha).unwrap().conj();
        prop_assert!((d - e).norm() < 1e-14);
    }

    #[test]
    fn predicted_populations_sum_to_one(p in pair(), n in 0usize..8, l in -0.2f64..0.2) {
        let pops = predict_populations(p, &InitialMotion::Fock(n), l, Normalization::Raw, table()).unwrap();
        prop_assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(pops.iter().all(|&x| x >= -1e-12));
        if matches!(p, QubitPair::GG | QubitPair::EE) {
            prop_assert!((pops[1] - pops[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn ee_input_mirrors_gg_input(n in 0usize..8, l in -0.2f64..0.2) {
        let t = table();
        let m = InitialMotion::Fock(n);
        for order in 1..=2 {
            let gg = predict_phase(QubitPair::GG, &m, -l, order, t).unwrap();
            let ee = predict_phase(QubitPair::EE, &m, l, order, t).unwrap();
            prop_assert!((gg - ee).abs() < 1e-12);
        }
        let gg = predict_populations(QubitPair::GG, &m, -l, Normalization::Raw, t).unwrap();
        let ee = predict_populations(QubitPair::EE, &m, l, Normalization::Raw, t).unwrap();
        prop_assert!((gg[0] - ee[3]).abs() < 1e-12 && (gg[3] - ee[0]).abs() < 1e-12 && (gg[1] - ee[1]).abs() < 1e-12);
    }

    #[test]
    fn fidelity_and_purity_bounded(p in pair(), n in 0usize..6, l in -0.1f64..0.1) {
        let t = table();
        let m = InitialMotion::Fock(n);
        prop_assert!(predict_fidelity(p, &m, l, Normalization::Raw, t).unwrap() <= 1.0 + 1e-12);
        prop_assert!(predict_purity(p, &m, l, Normalization::Raw, t).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn thermal_weights_are_normalized(n_bar in 0.0f64..0.9) {
        let dist = thermal_probabilities(n_bar, FockCutoff::new(40)).unwrap();
        let w = InitialMotion::Thermal(dist).weights(table()).unwrap();
        prop_assert!((w.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range(x in -100.0f64..100.0) {
        let y = wrap_angle(x);
        prop_assert!(y > -PI && y <= PI);
        let k = ((x - y) / (2.0 * PI)).round();
        prop_assert!((x - y - 2.0 * PI * k).abs() < 1e-9);
    }

    #[test]
    fn clean_fringe_is_recovered(amp in 0.05f64..0.5, off in 0.3f64..0.7, phi in -3.1f64..3.1, points in 8usize..24) {
        let samples: Vec<FringeSample> = (0..points)
            .map(|k| {
                let phi_d = k as f64 * PI / points as f64;
                FringeSample { phi_d, p_ee: off + amp * (2.0 * phi_d + phi).cos(), shots: None }
            })
            .collect();
        let fit = fit_fringe(&samples).unwrap();
        prop_assert!((fit.amplitude - amp).abs() < 1e-8);
        prop_assert!((fit.offset - off).abs() < 1e-8);
        prop_assert!(wrap_angle(fit.phi_seq - phi).abs() < 1e-8);
    }

    #[test]
    fn fringe_csv_round_trip(values in proptest::collection::vec((0.0f64..3.2, 0.0f64..1.0, 1u32..1000), 1..20)) {
        let samples: Vec<FringeSample> = values.iter().map(|&(phi_d, p_ee, k)| FringeSample { phi_d, p_ee, shots: Some(k) }).collect();
        let mut buf = Vec::new();
        write_fringe_csv(&mut buf, &samples).unwrap();
        let back = read_fringe_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), samples.len());
        for (b, s) in back.iter().zip(&samples) {
            prop_assert!((b.phi_d - s.phi_d).abs() <= 1e-12 * s.phi_d.abs());
            prop_assert!((b.p_ee - s.p_ee).abs() <= 1e-12 * s.p_ee.abs());
            prop_assert_eq!(b.shots, s.shots);
        }
    }
}

#[test]
fn hot_thermal_states_leave_the_scalar_range() {
    let dist = thermal_probabilities(2.0, FockCutoff::new(40)).unwrap();
    assert!(InitialMotion::Thermal(dist).weights(table()).is_err());
}
