//! Closed-form predictors for the detuned gate.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::states::corrected_state;
use super::table::CoefficientTable;
use crate::error::{Error, Result};
use crate::hilbert::{trace_amplitudes, QubitDensityMatrix, QubitPair, ThermalDistribution, C64, I, ZERO};
use crate::ideal::{coherence_pair, ideal_gate_output};
use crate::oracle::Observables;

/// Largest thermal mass allowed beyond the last n with derived scalars.
pub const THERMAL_TAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMotion {
    Fock(usize),
    Thermal(ThermalDistribution),
}

impl InitialMotion {
    /// (n, weight) pairs, weights summing to one.
    pub fn weights(&self, table: &CoefficientTable) -> Result<Vec<(usize, f64)>> {
        match self {
            InitialMotion::Fock(n) => {
                table.check_n(*n)?;
                Ok(vec![(*n, 1.0)])
            }
            InitialMotion::Thermal(dist) => {
                let kept = dist.truncated(table.scalar_n_max() + 1);
                kept.check_truncation(THERMAL_TAIL_TOL)?;
                let total: f64 = kept.probabilities.iter().sum();
                Ok(kept.probabilities.iter().enumerate().map(|(n, p)| (n, p / total)).collect())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            InitialMotion::Fock(n) => format!("fock:{n}"),
            InitialMotion::Thermal(d) => format!("thermal:{}", d.n_bar),
        }
    }
}

/// Whether second-order quantities are reported as-is or divided by the trace of ρ^{(2)}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    Renormalized,
}

/// Traced qubit state as a polynomial ρ(λ̃) = r₀ + λ̃r₁ + λ̃²r₂.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityExpansion {
    pub coefficients: [Array2<C64>; 3],
}

impl DensityExpansion {
    fn zero() -> Self {
        DensityExpansion { coefficients: std::array::from_fn(|_| Array2::zeros((4, 4))) }
    }

    fn add_scaled(&mut self, w: f64, other: &DensityExpansion) {
        for (a, b) in self.coefficients.iter_mut().zip(other.coefficients.iter()) {
            a.scaled_add(C64::from(w), b);
        }
    }

    pub fn evaluate(&self, lambda_tilde: f64) -> Array2<C64> {
        let [r0, r1, r2] = &self.coefficients;
        r0 + &(r1 * C64::from(lambda_tilde)) + &(r2 * C64::from(lambda_tilde * lambda_tilde))
    }

    /// Tr ρ² truncated at λ̃².
    pub fn purity(&self, lambda_tilde: f64) -> f64 {
        let [r0, r1, r2] = &self.coefficients;
        let tr = |a: &Array2<C64>, b: &Array2<C64>| -> f64 { a.dot(b).diag().sum().re };
        tr(r0, r0) + 2.0 * lambda_tilde * tr(r0, r1) + lambda_tilde * lambda_tilde * (tr(r1, r1) + 2.0 * tr(r0, r2))
    }

    pub fn trace(&self, lambda_tilde: f64) -> f64 {
        self.evaluate(lambda_tilde).diag().sum().re
    }
}

fn dm(entries: &[((QubitPair, QubitPair), C64)]) -> Array2<C64> {
    let mut m = Array2::zeros((4, 4));
    for &((r, c), v) in entries {
        m[[r.index(), c.index()]] += v;
    }
    m
}

/// The second-order density matrix of |g,g,n⟩ or |e,e,n⟩ from the table scalars.
fn closed_form_expansion(pair: QubitPair, n: usize, table: &CoefficientTable) -> Result<DensityExpansion> {
    use QubitPair::*;
    let a = table.a(n)?;
    let b = table.b(n)?;
    let (c_gg, c_ee, c_eg) = table.c(n)?;
    // |e,e⟩ is the image of |g,g⟩ under g ↔ e, which flips the sign of λ̃.
    let (input, partner, s) = match pair {
        GG => (GG, EE, 1.0),
        EE => (EE, GG, -1.0),
        _ => unreachable!(),
    };
    let half = C64::from(0.5);
    let r0 = dm(&[((input, input), half), ((partner, partner), half), ((partner, input), -0.5 * I), ((input, partner), 0.5 * I)]);
    let r1 = dm(&[((partner, input), C64::from(0.5 * s * a)), ((input, partner), C64::from(0.5 * s * a))]);
    let r2 = dm(&[
        ((input, input), C64::from(c_gg)),
        ((partner, partner), C64::from(c_ee)),
        ((GE, GE), C64::from(c_eg)),
        ((EG, EG), C64::from(c_eg)),
        ((GE, EG), C64::from(c_eg)),
        ((EG, GE), C64::from(c_eg)),
        ((partner, input), 0.5 * b),
        ((input, partner), 0.5 * b.conj()),
    ]);
    Ok(DensityExpansion { coefficients: [r0, r1, r2] })
}

/// Second-order density expansion built directly from the corrected states, valid for any input.
pub fn density_expansion_from_states(pair: QubitPair, n: usize, table: &CoefficientTable) -> Result<DensityExpansion> {
    let st = corrected_state(pair, n, 1.0, 2, table)?;
    let levels = table.n_max() + 1;
    let p0 = st.base.amplitudes();
    let p1 = st.corrections[0].1.amplitudes();
    let p2 = st.corrections[1].1.amplitudes();
    let cross = |x: &ndarray::Array1<C64>, y: &ndarray::Array1<C64>| -> Array2<C64> {
        let mut m = Array2::zeros((4, 4));
        for q in 0..4 {
            for p in 0..4 {
                m[[q, p]] = (0..levels).map(|k| x[q * levels + k] * y[p * levels + k].conj()).sum::<C64>();
            }
        }
        m
    };
    let r0 = trace_amplitudes(p0, levels);
    let r1 = -(cross(p1, p0) + cross(p0, p1));
    let r2 = trace_amplitudes(p1, levels) - cross(p2, p0) - cross(p0, p2);
    Ok(DensityExpansion { coefficients: [r0, r1, r2] })
}

/// Second-order density expansion for a Fock input; closed forms for |g,g⟩ and |e,e⟩.
pub fn density_expansion(pair: QubitPair, n: usize, table: &CoefficientTable) -> Result<DensityExpansion> {
    match pair {
        QubitPair::GG | QubitPair::EE => closed_form_expansion(pair, n, table),
        _ => {
            table.check_n(n)?;
            density_expansion_from_states(pair, n, table)
        }
    }
}

/// Probability-weighted density expansion for a Fock or thermal input.
pub fn motion_density_expansion(pair: QubitPair, motion: &InitialMotion, table: &CoefficientTable) -> Result<DensityExpansion> {
    let mut acc = DensityExpansion::zero();
    for (n, w) in motion.weights(table)? {
        acc.add_scaled(w, &density_expansion(pair, n, table)?);
    }
    Ok(acc)
}

fn check_order(order: usize) -> Result<()> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidParameter(format!("prediction order {order} must be 1 or 2")));
    }
    Ok(())
}

/// Relative phase φ^{(K)}, the argument of the partner-versus-input coherence.
///
/// For |g,e⟩ and |e,g⟩ only the first order (no shift) is available.
pub fn predict_phase(pair: QubitPair, motion: &InitialMotion, lambda_tilde: f64, order: usize, table: &CoefficientTable) -> Result<f64> {
    check_order(order)?;
    let sign = match pair {
        QubitPair::GG => 1.0,
        QubitPair::EE => -1.0,
        QubitPair::GE | QubitPair::EG => {
            if order == 2 {
                return Err(Error::InvalidParameter("second-order phase is only available for |g,g⟩ and |e,e⟩ inputs".into()));
            }
            motion.weights(table)?;
            return Ok(FRAC_PI_2);
        }
    };
    let mut phi = 0.0;
    for (n, w) in motion.weights(table)? {
        let mut p = -FRAC_PI_2 + sign * lambda_tilde * table.a[n];
        if order == 2 {
            p += lambda_tilde * lambda_tilde * table.b[n].re;
        }
        phi += w * p;
    }
    Ok(phi)
}

/// Second-order density matrix; only the X-shaped sparsity pattern is populated for |g,g⟩, |e,e⟩.
pub fn predict_density_matrix(pair: QubitPair, motion: &InitialMotion, lambda_tilde: f64, norm: Normalization, table: &CoefficientTable) -> Result<QubitDensityMatrix> {
    let exp = motion_density_expansion(pair, motion, table)?;
    let mut rho = exp.evaluate(lambda_tilde);
    if norm == Normalization::Renormalized {
        let tr = rho.diag().sum();
        rho /= tr;
    }
    QubitDensityMatrix::perturbative(rho)
}

/// (P(gg), P(ge), P(eg), P(ee)).
pub fn predict_populations(pair: QubitPair, motion: &InitialMotion, lambda_tilde: f64, norm: Normalization, table: &CoefficientTable) -> Result<[f64; 4]> {
    Ok(predict_density_matrix(pair, motion, lambda_tilde, norm, table)?.populations())
}

/// Fidelity with the ideal output, to second order.
pub fn predict_fidelity(pair: QubitPair, motion: &InitialMotion, lambda_tilde: f64, norm: Normalization, table: &CoefficientTable) -> Result<f64> {
    let exp = motion_density_expansion(pair, motion, table)?;
    let rho = exp.evaluate(lambda_tilde);
    let t = ideal_gate_output(pair);
    let mut f = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            f += t[i].conj() * rho[[i, j]] * t[j];
        }
    }
    Ok(match norm {
        Normalization::Raw => f.re,
        Normalization::Renormalized => f.re / exp.trace(lambda_tilde),
    })
}

/// Purity to second order.
pub fn predict_purity(pair: QubitPair, motion: &InitialMotion, lambda_tilde: f64, norm: Normalization, table: &CoefficientTable) -> Result<f64> {
    let exp = motion_density_expansion(pair, motion, table)?;
    let g = exp.purity(lambda_tilde);
    Ok(match norm {
        Normalization::Raw => g,
        Normalization::Renormalized => g / exp.trace(lambda_tilde).powi(2),
    })
}

/// Magnitude and argument of the coherence that defines the relative phase.
pub fn predict_coherence(pair: QubitPair, motion: &InitialMotion, lambda_tilde: f64, table: &CoefficientTable) -> Result<C64> {
    let rho = motion_density_expansion(pair, motion, table)?.evaluate(lambda_tilde);
    let (r, c) = coherence_pair(pair);
    Ok(rho[[r.index(), c.index()]])
}

/// Predictions for one (input, λ̃, K) point, optionally paired with oracle values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub pair: QubitPair,
    pub motion: String,
    pub lambda_tilde: f64,
    pub order: usize,
    pub normalization: Normalization,
    pub phase: f64,
    pub populations: [f64; 4],
    pub population_sum: f64,
    pub fidelity: f64,
    pub purity: f64,
    pub oracle: Option<Observables>,
}

impl PredictionReport {
    pub fn compute(pair: QubitPair, motion: &InitialMotion, lambda_tilde: f64, order: usize, norm: Normalization, table: &CoefficientTable) -> Result<Self> {
        let phase = predict_phase(pair, motion, lambda_tilde, order, table)?;
        let populations = predict_populations(pair, motion, lambda_tilde, norm, table)?;
        Ok(PredictionReport {
            pair,
            motion: motion.label(),
            lambda_tilde,
            order,
            normalization: norm,
            phase,
            populations,
            population_sum: populations.iter().sum(),
            fidelity: predict_fidelity(pair, motion, lambda_tilde, norm, table)?,
            purity: predict_purity(pair, motion, lambda_tilde, norm, table)?,
            oracle: None,
        })
    }

    pub fn with_oracle(mut self, obs: Observables) -> Self {
        self.oracle = Some(obs);
        self
    }
}
