//! Corrected final states |Ψ^{(K)}⟩ = ψ₀ − Σ_k λ̃^k ψ^{(k)} and the first-order traced unitary.

use ndarray::{Array1, Array2};

use super::table::{f_even, f_odd, CoefficientTable};
use crate::error::{Error, Result};
use crate::hilbert::{change_basis, computational_to_sy, CompositeState, FockCutoff, Frame, QubitPair, C64, I, ONE, ZERO};
use crate::ideal::{ideal_gate_output, ms_target_unitary};

const GG: usize = 0;
const GE: usize = 1;
const EG: usize = 2;
const EE: usize = 3;

fn table_cutoff(table: &CoefficientTable) -> FockCutoff {
    FockCutoff::new(table.n_max())
}

fn check_input(table: &CoefficientTable, n: usize) -> Result<()> {
    if n > table.n_max() {
        return Err(Error::OutOfTableRange { n, max: table.n_max() });
    }
    Ok(())
}

/// Builds a computational-frame state from a per-m amplitude rule `m -> [gg, ge, eg, ee]`.
fn assemble(table: &CoefficientTable, frame: Frame, rule: impl Fn(usize) -> [C64; 4]) -> Result<CompositeState> {
    let cutoff = table_cutoff(table);
    let levels = cutoff.levels();
    let mut amps = Array1::<C64>::zeros(cutoff.dim());
    for m in 0..levels {
        for (q, c) in rule(m).into_iter().enumerate() {
            amps[q * levels + m] = c;
        }
    }
    CompositeState::unnormalized(amps, frame, cutoff)
}

/// Ideal gate output ψ₀ = MS₀(π/2)|σ,σ′⟩ ⊗ |n⟩, including its global phase.
pub fn ideal_state(pair: QubitPair, n: usize, table: &CoefficientTable) -> Result<CompositeState> {
    check_input(table, n)?;
    CompositeState::product(ideal_gate_output(pair), n, Frame::Computational, table_cutoff(table))
}

/// ψ^{(1)}_{σ,σ′,n} in the computational frame.
pub fn first_order_state(pair: QubitPair, n: usize, table: &CoefficientTable) -> Result<CompositeState> {
    check_input(table, n)?;
    let i = &table.i;
    assemble(table, Frame::Computational, |m| {
        let up = i[[m, n]];
        let down = i[[n, m]];
        let (fe, fo) = (f_even(n, m), f_odd(n, m));
        match pair {
            QubitPair::GG => {
                let side = I * down * fo;
                [(up + down) * fe, side, side, (up - down) * fe]
            }
            QubitPair::EE => {
                let side = I * down * fo;
                [-(up - down) * fe, side, side, -(up + down) * fe]
            }
            QubitPair::GE | QubitPair::EG => {
                let c = -I * up * fo;
                [c, ZERO, ZERO, c]
            }
        }
    })
}

/// ψ^{(2)}_{σ,σ′,n} in the computational frame.
pub fn second_order_state(pair: QubitPair, n: usize, table: &CoefficientTable) -> Result<CompositeState> {
    check_input(table, n)?;
    assemble(table, Frame::Computational, |m| {
        let jp = table.jp[[m, n]];
        let jm = table.jm[[m, n]];
        let j1 = table.j1[[m, n]];
        let j2 = table.j2[[m, n]];
        let (fe, fo) = (f_even(n, m), f_odd(n, m));
        match pair {
            QubitPair::GG => {
                let side = 0.5 * I * (j1 - j2) * fo;
                [jp * fe, side, side, -jm * fe]
            }
            QubitPair::EE => {
                let side = -0.5 * I * (j1 - j2) * fo;
                [-jm * fe, side, side, jp * fe]
            }
            QubitPair::GE | QubitPair::EG => {
                let side = 0.5 * (j1 - j2) * fe;
                let c = -0.5 * I * (j1 + j2) * fo;
                [c, side, side, -c]
            }
        }
    })
}

/// The S_y-basis corrections for a single S_y input |s₁,s₂,n⟩, returned in the S_y frame.
fn sy_correction(order: usize, s: usize, n: usize, table: &CoefficientTable) -> Result<CompositeState> {
    let sign = |m: usize| if (n + m) % 2 == 0 { 1.0 } else { -1.0 };
    let (pp, pm, mp, mm) = (0, 1, 2, 3);
    assemble(table, Frame::SY, |m| {
        let mut out = [ZERO; 4];
        match (order, s) {
            (1, 0) => {
                let c = table.i[[m, n]];
                out[pm] = c;
                out[mp] = c;
            }
            (1, 3) => {
                let c = table.i[[m, n]] * sign(m);
                out[pm] = c;
                out[mp] = c;
            }
            (1, _) => {
                let c = table.i[[n, m]];
                out[pp] = c;
                out[mm] = c * sign(m);
            }
            (2, 0) => {
                out[pp] = table.j1[[m, n]];
                out[mm] = table.j2[[m, n]];
            }
            (2, 3) => {
                out[pp] = table.j2[[m, n]] * sign(m);
                out[mm] = table.j1[[m, n]] * sign(m);
            }
            (2, _) => {
                let c = table.j3[[m, n]];
                out[pm] = c;
                out[mp] = c;
            }
            _ => unreachable!("correction order is 1 or 2"),
        }
        out
    })
}

/// ψ^{(k)}_{σ,σ′,n} obtained by expanding |σ,σ′⟩ in the S_y basis and superposing the
/// S_y-basis corrections. Independent of the closed forms used by
/// [`first_order_state`] and [`second_order_state`].
pub fn correction_via_sy_basis(order: usize, pair: QubitPair, n: usize, table: &CoefficientTable) -> Result<CompositeState> {
    check_input(table, n)?;
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidParameter(format!("correction order {order} is not 1 or 2")));
    }
    let w = computational_to_sy();
    let cutoff = table_cutoff(table);
    let mut acc = Array1::<C64>::zeros(cutoff.dim());
    for s in 0..4 {
        let weight = w[[s, pair.index()]];
        let part = sy_correction(order, s, n, table)?;
        acc.scaled_add(weight, part.amplitudes());
    }
    let sy = CompositeState::unnormalized(acc, Frame::SY, cutoff)?;
    Ok(change_basis(&sy, Frame::Computational))
}

/// |Ψ^{(K)}⟩ together with its pieces.
#[derive(Debug, Clone)]
pub struct CorrectedState {
    pub order: usize,
    pub lambda_tilde: f64,
    pub base: CompositeState,
    /// (λ̃^k, ψ^{(k)}) for k = 1..=order.
    pub corrections: Vec<(f64, CompositeState)>,
    /// base − Σ_k λ̃^k ψ^{(k)}; not normalized.
    pub assembled: CompositeState,
}

/// Assembles |Ψ^{(K)}_{σ,σ′,n}⟩ for K ∈ {0, 1, 2}.
pub fn corrected_state(pair: QubitPair, n: usize, lambda_tilde: f64, order: usize, table: &CoefficientTable) -> Result<CorrectedState> {
    if order > 2 {
        return Err(Error::InvalidParameter(format!("order {order} not available; the expansion stops at second order")));
    }
    let base = ideal_state(pair, n, table)?;
    let mut corrections = Vec::new();
    let mut amps = base.amplitudes().clone();
    for k in 1..=order {
        let psi = if k == 1 { first_order_state(pair, n, table)? } else { second_order_state(pair, n, table)? };
        let weight = lambda_tilde.powi(k as i32);
        amps.scaled_add(C64::from(-weight), psi.amplitudes());
        corrections.push((weight, psi));
    }
    let assembled = CompositeState::unnormalized(amps, Frame::Computational, base.cutoff())?;
    Ok(CorrectedState { order, lambda_tilde, base, corrections, assembled })
}

/// The first-order qubit unitary as printed, without the ideal gate's e^{iπ/4} global phase.
pub fn first_order_traced_unitary(n: usize, lambda_tilde: f64, table: &CoefficientTable) -> Result<Array2<C64>> {
    let a = table.a(n)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = a * lambda_tilde;
    let mut u = Array2::<C64>::zeros((4, 4));
    u[[GG, GG]] = C64::new(1.0, -x);
    u[[GG, EE]] = -I;
    u[[GE, GE]] = ONE;
    u[[GE, EG]] = I;
    u[[EG, GE]] = I;
    u[[EG, EG]] = ONE;
    u[[EE, GG]] = -I;
    u[[EE, EE]] = C64::new(1.0, x);
    Ok(u * C64::from(s))
}

/// R_z(φ) = exp(iφS_z/2) on the qubit pair.
pub fn rz(phi: f64) -> Array2<C64> {
    let mut r = Array2::<C64>::zeros((4, 4));
    r[[GG, GG]] = C64::from_polar(1.0, phi / 2.0);
    r[[GE, GE]] = ONE;
    r[[EG, EG]] = ONE;
    r[[EE, EE]] = C64::from_polar(1.0, -phi / 2.0);
    r
}

/// R_z(−a_nλ̃)·U₀·R_z(−a_nλ̃) with U₀ the ideal gate stripped of its e^{iπ/4} phase.
pub fn first_order_traced_unitary_factored(n: usize, lambda_tilde: f64, table: &CoefficientTable) -> Result<Array2<C64>> {
    let a = table.a(n)?;
    let u0 = ms_target_unitary(std::f64::consts::FRAC_PI_2, 0.0) * C64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
    let r = rz(-a * lambda_tilde);
    Ok(r.dot(&u0).dot(&r))
}
