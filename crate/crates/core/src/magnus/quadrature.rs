//! Quadrature for the first- and second-order coefficient tables.
//!
//! Both tables use the composite trapezoid rule on a uniform grid over
//! [0, |τ_g|] followed by Romberg extrapolation over the grid and its two
//! coarsenings. The triangle integrals of the second-order table are computed
//! as nested trapezoids: a running inner trapezoid on the same grid as the
//! outer one, which keeps a pure even-power error expansion.

use ndarray::{s, Array2, ArrayView2};
use ndarray::linalg::general_mat_mul;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{dagger, displacement_element_with, displacement_matrix_dim, FockCutoff, LnFactorials, C64, ONE};
use crate::ideal::{square_loop, DimensionlessGateParams, PulseShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Finest panel count for the first-order table (power of two, ≥ 8).
    pub i_panels: usize,
    /// Finest panel count for the second-order table (power of two, ≥ 8).
    pub j_panels: usize,
    /// Extra phonon levels carried through the displacement products.
    pub guard: usize,
    /// Largest accepted change between the two highest Romberg estimates.
    pub tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { i_panels: 1 << 14, j_panels: 1 << 10, guard: 10, tol: 1e-8 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("i_panels", self.i_panels), ("j_panels", self.j_panels)] {
            if k < 8 || !k.is_power_of_two() {
                return Err(Error::InvalidParameter(format!("{name} = {k} must be a power of two ≥ 8")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("quadrature tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        QuadratureConfig { i_panels: 2 * self.i_panels, j_panels: 2 * self.j_panels, ..self.clone() }
    }
}

/// Romberg combination of trapezoid estimates at h, 2h and 4h.
///
/// Returns the h⁶ estimate and its distance from the h⁴ estimate.
pub(crate) fn romberg3(t_h: &Array2<C64>, t_2h: &Array2<C64>, t_4h: &Array2<C64>) -> (Array2<C64>, Array2<f64>) {
    let r1 = (t_h * C64::from(4.0) - t_2h) / C64::from(3.0);
    let r1c = (t_2h * C64::from(4.0) - t_4h) / C64::from(3.0);
    let r2 = (&r1 * C64::from(16.0) - &r1c) / C64::from(15.0);
    let change = (&r2 - &r1).mapv(|c| c.norm());
    (r2, change)
}

fn require_square(params: &DimensionlessGateParams, pulse: &PulseShape) -> Result<()> {
    params.validate()?;
    if !pulse.is_square() {
        return Err(Error::UnsupportedPulse(format!("{} pulses have no coefficient-table quadrature; use the oracle", pulse.label())));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FirstOrderQuadrature {
    /// I^n_m stored at [m, n].
    pub table: Array2<C64>,
    pub refinement_change: f64,
}

/// I^n_m = (i/2) ∫₀^{τ_g} e^{iG(τ)} ⟨m|D[F(τ)]|n⟩ dτ for m, n ≤ n_max, stored at [m, n].
pub fn compute_i(params: &DimensionlessGateParams, pulse: &PulseShape, cutoff: FockCutoff, config: &QuadratureConfig) -> Result<FirstOrderQuadrature> {
    require_square(params, pulse)?;
    config.validate()?;
    let levels = cutoff.levels();
    let k = config.i_panels;
    let span = params.span();
    let h = span / k as f64;
    let lf = LnFactorials::new(levels);
    let mut sums = [Array2::<C64>::zeros((levels, levels)), Array2::zeros((levels, levels)), Array2::zeros((levels, levels))];
    for node in 0..=k {
        let tau = h * node as f64;
        let (f, g) = square_loop(tau, params.omega_tilde);
        let eg = C64::from_polar(1.0, g);
        let end = node == 0 || node == k;
        let base = if end { 0.5 } else { 1.0 };
        let in_2h = node % 2 == 0;
        let in_4h = node % 4 == 0;
        for m in 0..levels {
            for n in 0..levels {
                let v = eg * displacement_element_with(&lf, m, n, f)?;
                sums[0][[m, n]] += v * base;
                if in_2h {
                    sums[1][[m, n]] += v * base;
                }
                if in_4h {
                    sums[2][[m, n]] += v * base;
                }
            }
        }
    }
    let scale = 0.5 * crate::hilbert::I;
    let t_h = &sums[0] * (scale * h);
    let t_2h = &sums[1] * (scale * 2.0 * h);
    let t_4h = &sums[2] * (scale * 4.0 * h);
    let (table, change) = romberg3(&t_h, &t_2h, &t_4h);
    let (worst, (m, n)) = worst_entry(&change, |_, _| true);
    if worst > config.tol {
        return Err(Error::QuadratureNotConverged { table: "I", m, n, change: worst, tol: config.tol });
    }
    Ok(FirstOrderQuadrature { table, refinement_change: worst })
}

fn worst_entry(change: &Array2<f64>, include: impl Fn(usize, usize) -> bool) -> (f64, (usize, usize)) {
    let mut worst = 0.0;
    let mut at = (0, 0);
    for ((m, n), &c) in change.indexed_iter() {
        if include(m, n) && c > worst {
            worst = c;
            at = (m, n);
        }
    }
    (worst, at)
}

#[derive(Debug, Clone)]
pub struct SecondOrderQuadrature {
    /// J^n_{1,m}, J^n_{2,m}, J^n_{3,m} stored at [m, n].
    pub j1: Array2<C64>,
    pub j2: Array2<C64>,
    pub j3: Array2<C64>,
    /// Squared norm of ⟨k|D(α)|n⟩ beyond the working dimension, maximized over |α| ≤ max|F|.
    pub leakage: Vec<f64>,
    pub refinement_change: f64,
}

impl SecondOrderQuadrature {
    /// Whether entry (m, n) is free of guard-band truncation at the 1e−9 level.
    pub fn entry_valid(&self, m: usize, n: usize) -> bool {
        (self.leakage[m] * self.leakage[n]).sqrt() <= LEAKAGE_TOL
    }
}

pub(crate) const LEAKAGE_TOL: f64 = 1e-9;

/// Tail mass Σ_{k ≥ dim} |⟨k|D(α)|n⟩|² for each n < levels, maximized over sampled |α| ≤ alpha_max.
pub(crate) fn column_leakage(levels: usize, dim: usize, alpha_max: f64) -> Result<Vec<f64>> {
    let extra = 80;
    let lf = LnFactorials::new(dim + extra);
    let mut leak = vec![0.0f64; levels];
    let samples = 48;
    for s in 1..=samples {
        let alpha = C64::from(alpha_max * s as f64 / samples as f64);
        for (n, slot) in leak.iter_mut().enumerate() {
            let mut tail = 0.0;
            for k in dim..dim + extra {
                tail += displacement_element_with(&lf, k, n, alpha)?.norm_sqr();
            }
            *slot = slot.max(tail);
        }
    }
    Ok(leak)
}

/// The three second-order tables.
///
/// The D(F₂)D†(F₁) term in J3's second triangle integral enters with a "+"
/// sign, matching a direct Magnus expansion of the second-order propagator.
pub fn compute_j(params: &DimensionlessGateParams, pulse: &PulseShape, cutoff: FockCutoff, config: &QuadratureConfig) -> Result<SecondOrderQuadrature> {
    require_square(params, pulse)?;
    config.validate()?;
    let levels = cutoff.levels();
    let dim = levels + config.guard;
    let alpha_max = 2.0 * params.omega_tilde.abs();
    let leakage = column_leakage(levels, dim, alpha_max)?;
    if leakage[0] > LEAKAGE_TOL {
        return Err(Error::GuardBand(format!(
            "vacuum column leaks {:.2e} beyond {dim} levels; raise n_max or the guard band",
            leakage[0]
        )));
    }
    let k = config.j_panels;
    let runs: Vec<[Array2<C64>; 3]> = [k, k / 2, k / 4]
        .into_iter()
        .map(|panels| second_order_trapezoid(params, levels, dim, panels))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(3);
    let mut worst_change = 0.0f64;
    for (idx, name) in ["J1", "J2", "J3"].into_iter().enumerate() {
        let (table, change) = romberg3(&runs[0][idx], &runs[1][idx], &runs[2][idx]);
        let (worst, (m, n)) = worst_entry(&change, |m, n| (leakage[m] * leakage[n]).sqrt() <= LEAKAGE_TOL);
        if worst > config.tol {
            return Err(Error::QuadratureNotConverged { table: name, m, n, change: worst, tol: config.tol });
        }
        worst_change = worst_change.max(worst);
        out.push(table);
    }
    let j3 = out.pop().unwrap();
    let j2 = out.pop().unwrap();
    let j1 = out.pop().unwrap();
    Ok(SecondOrderQuadrature { j1, j2, j3, leakage, refinement_change: worst_change })
}

/// out += alpha · a · b
fn gemm_acc(out: &mut Array2<C64>, alpha: C64, a: ArrayView2<C64>, b: ArrayView2<C64>) {
    general_mat_mul(alpha, &a, &b, ONE, out);
}

/// One nested-trapezoid evaluation of (J1, J2, J3) with `panels` panels.
fn second_order_trapezoid(params: &DimensionlessGateParams, levels: usize, dim: usize, panels: usize) -> Result<[Array2<C64>; 3]> {
    let span = params.span();
    let h = span / panels as f64;
    let om = params.omega_tilde;
    let zeros = || Array2::<C64>::zeros((dim, dim));
    // Running inner integrals ∫₀^τ of e^{iG}D, e^{−iG}D†, e^{−iG}D, e^{iG}D†.
    let (mut ca, mut cb, mut cc, mut cd) = (zeros(), zeros(), zeros(), zeros());
    // Outer accumulators, columns restricted to the reported levels.
    let acc = || Array2::<C64>::zeros((dim, levels));
    let mut outer: [Array2<C64>; 8] = std::array::from_fn(|_| acc());
    // 1-D integrals of the shifted argument τ − τ_g.
    let (mut s_dag, mut s_plain) = (zeros(), zeros());

    let mut prev: Option<(Array2<C64>, Array2<C64>, C64)> = None;
    for node in 0..=panels {
        let tau = h * node as f64;
        let w = if node == 0 || node == panels { 0.5 * h } else { h };
        let (f, g) = square_loop(tau, om);
        let d = displacement_matrix_dim(f, dim)?;
        let dh = dagger(&d);
        let e = C64::from_polar(1.0, g);
        let ec = e.conj();

        if let Some((pd, pdh, pe)) = prev.take() {
            let half = 0.5 * h;
            let pec = pe.conj();
            ca.zip_mut_with(&(&pd * (pe * half) + &d * (e * half)), |x, y| *x += y);
            cb.zip_mut_with(&(&pdh * (pec * half) + &dh * (ec * half)), |x, y| *x += y);
            cc.zip_mut_with(&(&pd * (pec * half) + &d * (ec * half)), |x, y| *x += y);
            cd.zip_mut_with(&(&pdh * (pe * half) + &dh * (e * half)), |x, y| *x += y);
        }

        let dcols = d.slice(s![.., ..levels]);
        let dhcols = dh.slice(s![.., ..levels]);
        let wm = ec * w;
        let wp = e * w;
        // J1: D†₁·∫e^{iG}D and (∫e^{−iG}D†)·D₁
        gemm_acc(&mut outer[0], wm, dh.view(), ca.slice(s![.., ..levels]));
        gemm_acc(&mut outer[1], wp, cb.view(), dcols);
        // J2: D₁·∫e^{iG}D and (∫e^{−iG}D)·D₁
        gemm_acc(&mut outer[2], wm, d.view(), ca.slice(s![.., ..levels]));
        gemm_acc(&mut outer[3], wp, cc.view(), dcols);
        // J3 first triangle: D†₁·∫e^{−iG}D and D₁·∫e^{−iG}D†
        gemm_acc(&mut outer[4], wp, dh.view(), cc.slice(s![.., ..levels]));
        gemm_acc(&mut outer[5], wp, d.view(), cb.slice(s![.., ..levels]));
        // J3 second triangle: (∫e^{iG}D†)·D₁ and (∫e^{iG}D)·D†₁
        gemm_acc(&mut outer[6], wm, cd.view(), dcols);
        gemm_acc(&mut outer[7], wm, ca.view(), dhcols);

        let (fs, gs) = square_loop(tau - span, om);
        let esc = C64::from_polar(1.0, -gs);
        let ds = displacement_matrix_dim(fs, dim)?;
        s_dag.zip_mut_with(&dagger(&ds), |x, y| *x += y * esc * w);
        s_plain.zip_mut_with(&ds, |x, y| *x += y * esc * w);

        prev = Some((d, dh, e));
    }

    let (fg, gg) = square_loop(span, om);
    let dg = displacement_matrix_dim(fg, dim)?;
    let dgh = dagger(&dg);
    let pg = C64::from_polar(0.25, gg);
    let top = |m: Array2<C64>| m.slice(s![..levels, ..levels]).to_owned();

    let mut j1 = Array2::<C64>::zeros((dim, levels));
    gemm_acc(&mut j1, pg, dg.view(), outer[0].view());
    gemm_acc(&mut j1, -pg, dg.view(), outer[1].view());
    gemm_acc(&mut j1, C64::from(0.25), s_dag.view(), ca.slice(s![.., ..levels]));

    let mut j2 = Array2::<C64>::zeros((dim, levels));
    gemm_acc(&mut j2, pg, dgh.view(), outer[2].view());
    gemm_acc(&mut j2, -pg, dgh.view(), outer[3].view());
    gemm_acc(&mut j2, C64::from(0.25), s_plain.view(), ca.slice(s![.., ..levels]));

    let eighth = C64::from(0.125);
    let mut j3 = (&outer[4] + &outer[5] - &outer[6] - &outer[7]) * eighth;
    gemm_acc(&mut j3, eighth, cd.view(), cc.slice(s![.., ..levels]));
    gemm_acc(&mut j3, eighth, ca.view(), cb.slice(s![.., ..levels]));

    Ok([top(j1), top(j2), top(j3)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn romberg_is_exact_for_low_order_error() {
        // T(h) = c + a h² + b h⁴ is reproduced exactly.
        let mk = |h: f64| Array2::from_elem((1, 1), C64::from(1.0 + 0.3 * h * h - 0.2 * h.powi(4)));
        let (r, _) = romberg3(&mk(0.1), &mk(0.2), &mk(0.4));
        assert!((r[[0, 0]] - ONE).norm() < 1e-14);
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig::default().validate().is_ok());
        assert!(QuadratureConfig { i_panels: 100, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn tabulated_pulse_rejected() {
        let p = DimensionlessGateParams::calibrated();
        let tab = PulseShape::Tabulated { samples: vec![(0.0, 1.0)] };
        let cfg = QuadratureConfig { i_panels: 64, ..Default::default() };
        assert!(matches!(compute_i(&p, &tab, FockCutoff::new(3), &cfg), Err(Error::UnsupportedPulse(_))));
    }
}
