//! The undetuned gate: loop functions, closed-form propagator, target unitary
//! and phase-space loops.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    computational_to_sy, dagger, displacement_matrix_dim, FockCutoff, Frame, QubitPair, C64, ONE, ZERO,
};

/// Laboratory quantities the dimensionless parameters were derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub eta: f64,
    /// Ω in rad/s.
    pub rabi_frequency: f64,
    /// ε in rad/s, signed.
    pub sideband_detuning: f64,
    /// λ in rad/s.
    pub center_line_detuning: f64,
    /// t_g in s.
    pub gate_time: f64,
}

impl PhysicalParams {
    /// Builds λ from an AC-Stark shift and a laser offset, λ = λ_AC − λ_l.
    pub fn with_stark_and_laser(eta: f64, rabi_frequency: f64, sideband_detuning: f64, ac_stark: f64, laser_offset: f64, gate_time: f64) -> Self {
        PhysicalParams { eta, rabi_frequency, sideband_detuning, center_line_detuning: ac_stark - laser_offset, gate_time }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessGateParams {
    pub omega_tilde: f64,
    pub lambda_tilde: f64,
    pub tau_g: f64,
    pub phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalParams>,
}

impl Default for DimensionlessGateParams {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl DimensionlessGateParams {
    /// Ω̃ = 1/2, τ_g = 2π, λ̃ = 0, φ = 0: the loop closes and the gate angle is π/2.
    pub fn calibrated() -> Self {
        DimensionlessGateParams { omega_tilde: 0.5, lambda_tilde: 0.0, tau_g: 2.0 * PI, phi: 0.0, physical: None }
    }

    pub fn with_lambda(mut self, lambda_tilde: f64) -> Self {
        self.lambda_tilde = lambda_tilde;
        self
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    /// Ω̃ = ηΩ/ε, λ̃ = λ/ε, τ_g = ε t_g. All three carry the sign of ε.
    pub fn from_physical(physical: PhysicalParams, phi: f64) -> Result<Self> {
        let eps = physical.sideband_detuning;
        if eps == 0.0 || !eps.is_finite() {
            return Err(Error::InvalidParameter("sideband detuning must be finite and non-zero".into()));
        }
        Ok(DimensionlessGateParams {
            omega_tilde: physical.eta * physical.rabi_frequency / eps,
            lambda_tilde: physical.center_line_detuning / eps,
            tau_g: eps * physical.gate_time,
            phi,
            physical: Some(physical),
        })
    }

    /// Length of the integration interval in rescaled time, |τ_g|.
    pub fn span(&self) -> f64 {
        self.tau_g.abs()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega_tilde", self.omega_tilde), ("lambda_tilde", self.lambda_tilde), ("tau_g", self.tau_g), ("phi", self.phi)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        if self.tau_g == 0.0 {
            return Err(Error::InvalidParameter("tau_g must be non-zero".into()));
        }
        Ok(())
    }
}

/// Temporal envelope of the gate drive.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    #[default]
    Square,
    /// Envelope samples (τ, f(τ)), linearly interpolated; τ must be increasing.
    Tabulated { samples: Vec<(f64, f64)> },
}

impl PulseShape {
    pub fn is_square(&self) -> bool {
        matches!(self, PulseShape::Square)
    }

    pub fn envelope(&self, tau: f64) -> f64 {
        match self {
            PulseShape::Square => 1.0,
            PulseShape::Tabulated { samples } => {
                if samples.is_empty() {
                    return 0.0;
                }
                let idx = samples.partition_point(|&(t, _)| t <= tau);
                if idx == 0 {
                    return samples[0].1;
                }
                if idx == samples.len() {
                    return samples[samples.len() - 1].1;
                }
                let (t0, f0) = samples[idx - 1];
                let (t1, f1) = samples[idx];
                f0 + (f1 - f0) * (tau - t0) / (t1 - t0)
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PulseShape::Square => "square",
            PulseShape::Tabulated { .. } => "tabulated",
        }
    }
}

/// F(τ) = Ω̃(e^{iτ} − 1), G(τ) = Ω̃²(τ − sin τ).
pub fn square_loop(tau: f64, omega_tilde: f64) -> (C64, f64) {
    let f = C64::new(omega_tilde * (tau.cos() - 1.0), omega_tilde * tau.sin());
    let g = omega_tilde * omega_tilde * (tau - tau.sin());
    (f, g)
}

pub fn loop_functions(tau: f64, params: &DimensionlessGateParams, pulse: &PulseShape) -> Result<(C64, f64)> {
    match pulse {
        PulseShape::Square => Ok(square_loop(tau, params.omega_tilde)),
        PulseShape::Tabulated { .. } => Err(Error::UnsupportedPulse(
            "closed-form loop functions exist only for the square pulse; integrate tabulated pulses with the oracle".into(),
        )),
    }
}

/// Ideal propagator U₀(τ) at λ̃ = 0 on the composite space, in the requested frame.
///
/// In the S_y frame at φ = 0 the operator is block diagonal with blocks
/// D[F]e^{iG}, 1, 1, D[−F]e^{iG}. A non-zero φ conjugates by exp(iφS_z).
pub fn ideal_propagator(tau: f64, params: &DimensionlessGateParams, cutoff: FockCutoff, frame: Frame) -> Result<Array2<C64>> {
    params.validate()?;
    let (f, g) = square_loop(tau, params.omega_tilde);
    let levels = cutoff.levels();
    let d_plus = displacement_matrix_dim(f, levels)?;
    let d_minus = displacement_matrix_dim(-f, levels)?;
    let leak: f64 = 1.0 - d_plus.column(0).iter().map(|c| c.norm_sqr()).sum::<f64>();
    if leak > 1e-8 {
        return Err(Error::CutoffTooSmall(format!("|F| = {:.3} leaks {leak:.2e} of the vacuum column beyond n_max = {}", f.norm(), cutoff.n_max)));
    }
    let eg = C64::from_polar(1.0, g);
    let dim = cutoff.dim();
    let mut u_sy = Array2::<C64>::zeros((dim, dim));
    for m in 0..levels {
        for n in 0..levels {
            u_sy[[m, n]] = d_plus[[m, n]] * eg;
            u_sy[[3 * levels + m, 3 * levels + n]] = d_minus[[m, n]] * eg;
        }
        u_sy[[levels + m, levels + m]] = ONE;
        u_sy[[2 * levels + m, 2 * levels + m]] = ONE;
    }
    if params.phi == 0.0 && frame == Frame::SY {
        return Ok(u_sy);
    }
    let w = computational_to_sy();
    let wd = dagger(&w);
    let mut u = conjugate_qubit(&u_sy, &wd, &w, levels);
    if params.phi != 0.0 {
        let r = rz_diag(params.phi);
        let rd: [C64; 4] = r.map(|c| c.conj());
        for a in 0..4 {
            for b in 0..4 {
                for m in 0..levels {
                    for n in 0..levels {
                        u[[a * levels + m, b * levels + n]] *= r[a] * rd[b];
                    }
                }
            }
        }
    }
    Ok(match frame {
        Frame::Computational => u,
        Frame::SY => conjugate_qubit(&u, &w, &wd, levels),
    })
}

/// Diagonal of exp(iφS_z) in the computational ordering.
fn rz_diag(phi: f64) -> [C64; 4] {
    [C64::from_polar(1.0, phi), ONE, ONE, C64::from_polar(1.0, -phi)]
}

/// (A ⊗ 1) · M · (B ⊗ 1) for 4×4 A, B.
fn conjugate_qubit(m: &Array2<C64>, a: &Array2<C64>, b: &Array2<C64>, levels: usize) -> Array2<C64> {
    let dim = 4 * levels;
    let mut tmp = Array2::<C64>::zeros((dim, dim));
    for p in 0..4 {
        for q in 0..4 {
            let c = a[[p, q]];
            if c == ZERO {
                continue;
            }
            for i in 0..levels {
                for j in 0..dim {
                    tmp[[p * levels + i, j]] += c * m[[q * levels + i, j]];
                }
            }
        }
    }
    let mut out = Array2::<C64>::zeros((dim, dim));
    for p in 0..4 {
        for q in 0..4 {
            let c = b[[p, q]];
            if c == ZERO {
                continue;
            }
            for i in 0..dim {
                for j in 0..levels {
                    out[[i, q * levels + j]] += tmp[[i, p * levels + j]] * c;
                }
            }
        }
    }
    out
}

/// exp(iθS_φ²) on the qubit space.
pub fn ms_target_unitary(theta: f64, phi: f64) -> Array2<C64> {
    // S_y² has eigenvalue 1 on |++⟩, |−−⟩ and 0 on |+−⟩, |−+⟩.
    let w = computational_to_sy();
    let wd = dagger(&w);
    let diag = [C64::from_polar(1.0, theta), ONE, ONE, C64::from_polar(1.0, theta)];
    let mut u = Array2::<C64>::zeros((4, 4));
    for i in 0..4 {
        for j in 0..4 {
            u[[i, j]] = (0..4).map(|k| wd[[i, k]] * diag[k] * w[[k, j]]).sum();
        }
    }
    let r = rz_diag(phi);
    for i in 0..4 {
        for j in 0..4 {
            u[[i, j]] *= r[i] * r[j].conj();
        }
    }
    u
}

/// MS₀(π/2)|σσ′⟩, the ideal output including its global phase.
pub fn ideal_gate_output(pair: QubitPair) -> [C64; 4] {
    let u = ms_target_unitary(PI / 2.0, 0.0);
    let q = pair.index();
    [u[[0, q]], u[[1, q]], u[[2, q]], u[[3, q]]]
}

/// The density-matrix entry (row, column) whose argument is the relative phase for an input.
///
/// The column is always the input itself, so the phase is that of the partner
/// component relative to the input component: −π/2 for |g,g⟩ and |e,e⟩ and
/// +π/2 for |g,e⟩ and |e,g⟩ at λ̃ = 0.
pub fn coherence_pair(pair: QubitPair) -> (QubitPair, QubitPair) {
    match pair {
        QubitPair::GG => (QubitPair::EE, QubitPair::GG),
        QubitPair::EE => (QubitPair::GG, QubitPair::EE),
        QubitPair::GE => (QubitPair::EG, QubitPair::GE),
        QubitPair::EG => (QubitPair::GE, QubitPair::EG),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub tau: f64,
    pub alpha: C64,
    pub branch: f64,
}

/// α(τ) = branch · F(τ) sampled uniformly on [0, τ_g] (n_points ≥ 2 samples).
pub fn phase_space_trajectory(params: &DimensionlessGateParams, branch: f64, n_points: usize) -> Result<Vec<TrajectoryPoint>> {
    params.validate()?;
    if n_points < 2 {
        return Err(Error::InvalidParameter("a trajectory needs at least two points".into()));
    }
    let span = params.span();
    Ok((0..n_points)
        .map(|k| {
            let tau = span * k as f64 / (n_points - 1) as f64;
            let (f, _) = square_loop(tau, params.omega_tilde);
            TrajectoryPoint { tau, alpha: f * branch, branch }
        })
        .collect())
}

pub const TRAJECTORY_SCHEMA: &str = "# msgate-trajectory v1";

/// Writes `tau,re_alpha,im_alpha,branch[,frame]` rows after the schema line.
pub fn write_trajectory_csv<W: Write>(out: W, points: &[TrajectoryPoint], frame_tag: Option<&str>) -> Result<()> {
    let mut out = out;
    writeln!(out, "{TRAJECTORY_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    match frame_tag {
        Some(_) => w.write_record(["tau", "re_alpha", "im_alpha", "branch", "frame"])?,
        None => w.write_record(["tau", "re_alpha", "im_alpha", "branch"])?,
    }
    for p in points {
        let mut rec = vec![fmt(p.tau), fmt(p.alpha.re), fmt(p.alpha.im), fmt(p.branch)];
        if let Some(tag) = frame_tag {
            rec.push(tag.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{CompositeState, QubitPair};
    use approx::assert_abs_diff_eq;

    #[test]
    fn loop_function_examples() {
        let p = DimensionlessGateParams::calibrated();
        let (f, g) = loop_functions(0.0, &p, &PulseShape::Square).unwrap();
        assert_eq!((f, g), (ZERO, 0.0));
        let (f, g) = loop_functions(2.0 * PI, &p, &PulseShape::Square).unwrap();
        assert!(f.norm() < 1e-15);
        assert_abs_diff_eq!(g, PI / 2.0, epsilon = 1e-15);
        let (f, g) = loop_functions(PI, &p, &PulseShape::Square).unwrap();
        assert_abs_diff_eq!((f - C64::from(-1.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g, PI / 4.0, epsilon = 1e-15);
        let tab = PulseShape::Tabulated { samples: vec![(0.0, 1.0), (1.0, 1.0)] };
        assert!(matches!(loop_functions(1.0, &p, &tab), Err(Error::UnsupportedPulse(_))));
    }

    #[test]
    fn physical_map() {
        let eps = -2.0 * PI * 11e3;
        let phys = PhysicalParams { eta: 0.1, rabi_frequency: 0.5 * eps.abs() / 0.1, sideband_detuning: eps, center_line_detuning: 2.0 * PI * 200.0, gate_time: 2.0 * PI / eps.abs() };
        let p = DimensionlessGateParams::from_physical(phys, 0.0).unwrap();
        assert_abs_diff_eq!(p.omega_tilde, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.lambda_tilde, 200.0 / -11e3, epsilon = 1e-12);
        assert_abs_diff_eq!(p.span(), 2.0 * PI, epsilon = 1e-12);
        let folded = PhysicalParams::with_stark_and_laser(0.1, 1.0, 1.0, 5.0, 2.0, 1.0);
        assert_eq!(folded.center_line_detuning, 3.0);
    }

    #[test]
    fn propagator_identity_at_zero() {
        let u = ideal_propagator(0.0, &DimensionlessGateParams::calibrated(), FockCutoff::new(6), Frame::Computational).unwrap();
        for i in 0..u.nrows() {
            for j in 0..u.ncols() {
                let e = if i == j { ONE } else { ZERO };
                assert!((u[[i, j]] - e).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn propagator_full_gate_matches_bell_outputs() {
        let cut = FockCutoff::new(20);
        let u = ideal_propagator(2.0 * PI, &DimensionlessGateParams::calibrated(), cut, Frame::Computational).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let ph = C64::from_polar(1.0, PI / 4.0);
        for n in 0..4 {
            let gg = CompositeState::computational(QubitPair::GG, n, cut).unwrap();
            let out = u.dot(gg.amplitudes());
            let l = cut.levels();
            assert!((out[n] - ph * h).norm() < 1e-12);
            assert!((out[3 * l + n] - ph * C64::new(0.0, -h)).norm() < 1e-12);
            let ge = CompositeState::computational(QubitPair::GE, n, cut).unwrap();
            let out = u.dot(ge.amplitudes());
            assert!((out[l + n] - ph * h).norm() < 1e-12);
            assert!((out[2 * l + n] - ph * C64::new(0.0, h)).norm() < 1e-12);
        }
    }

    #[test]
    fn frames_agree() {
        let cut = FockCutoff::new(10);
        let p = DimensionlessGateParams::calibrated().with_phi(0.4);
        let uc = ideal_propagator(1.3, &p, cut, Frame::Computational).unwrap();
        let us = ideal_propagator(1.3, &p, cut, Frame::SY).unwrap();
        let back = conjugate_qubit(&us, &dagger(&computational_to_sy()), &computational_to_sy(), cut.levels());
        let diff = (&uc - &back).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }

    #[test]
    fn target_unitary_examples() {
        let u0 = ms_target_unitary(0.0, 0.7);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { ONE } else { ZERO };
                assert!((u0[[i, j]] - e).norm() < 1e-15);
            }
        }
        let out = ideal_gate_output(QubitPair::GG);
        let ph = C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, PI / 4.0);
        assert!((out[0] - ph).norm() < 1e-15);
        assert!((out[3] - ph * C64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn trajectory_examples() {
        let p = DimensionlessGateParams::calibrated();
        let tr = phase_space_trajectory(&p, 1.0, 5).unwrap();
        assert_abs_diff_eq!((tr[2].alpha - C64::from(-1.0)).norm(), 0.0, epsilon = 1e-15);
        assert!(tr[4].alpha.norm() < 1e-14);
        let mirrored = phase_space_trajectory(&p, -1.0, 5).unwrap();
        assert_abs_diff_eq!((mirrored[1].alpha + tr[1].alpha).norm(), 0.0, epsilon = 1e-15);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(TRAJECTORY_SCHEMA));
        assert_eq!(text.lines().count(), 7);
    }
}
