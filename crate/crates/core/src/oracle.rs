//! Direct integration of the Schrödinger equation for the detuned gate.
//!
//! Nothing here uses the Magnus tables; this module is the reference the
//! perturbative predictions are checked against.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    purity, spin_phi, spin_z, state_fidelity, thermal_probabilities, trace_amplitudes, CompositeState, FockCutoff, Frame, QubitDensityMatrix, QubitPair,
    ThermalDistribution, C64, I, ZERO,
};
use crate::ideal::{coherence_pair, ideal_gate_output, DimensionlessGateParams, PulseShape};

/// Which Hamiltonian is integrated. Both use the rescaled time τ = εt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianFrame {
    /// H = λ̃S_z − Ω̃(a†e^{iτ} + ae^{−iτ})S_φ.
    #[default]
    RescaledInteraction,
    /// H = −Ω̃(a†e^{iτ} + ae^{−iτ})S_{φ+λ̃τ}, with τ the absolute (sequence) time.
    Experimental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegratorMethod {
    /// Classical RK4 with a fixed number of steps per propagation.
    Rk4Fixed { steps: usize },
    /// Dormand–Prince 5(4) with per-component tolerance atol + rtol·|ψ|.
    Adaptive { rtol: f64, atol: f64, max_steps: usize },
}

impl Default for IntegratorMethod {
    fn default() -> Self {
        IntegratorMethod::Rk4Fixed { steps: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: IntegratorMethod,
    pub cutoff: FockCutoff,
    /// Largest accepted |‖ψ‖ − 1| at the end of a propagation.
    pub norm_tol: f64,
    /// Levels at the top of the Fock space that must stay (nearly) empty.
    pub guard_levels: usize,
    pub guard_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { method: IntegratorMethod::default(), cutoff: FockCutoff::default(), norm_tol: 1e-9, guard_levels: 5, guard_tol: 1e-10 }
    }
}

impl IntegratorConfig {
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.method = IntegratorMethod::Rk4Fixed { steps };
        self
    }

    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        IntegratorConfig { method: IntegratorMethod::Adaptive { rtol, atol, max_steps: 10_000_000 }, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            IntegratorMethod::Rk4Fixed { steps } if steps == 0 => {
                return Err(Error::InvalidParameter("RK4 needs at least one step".into()));
            }
            IntegratorMethod::Adaptive { rtol, atol, .. } if !(rtol > 0.0 && atol > 0.0) => {
                return Err(Error::InvalidParameter("adaptive tolerances must be positive".into()));
            }
            _ => {}
        }
        if self.cutoff.n_max < 2 * self.guard_levels.max(5) {
            return Err(Error::CutoffTooSmall(format!("n_max = {} leaves no room for the guard band", self.cutoff.n_max)));
        }
        Ok(())
    }
}

/// Dense H(τ) on the composite space in the computational frame.
///
/// `tau_start` is the start of the pulse, used only to place the envelope.
pub fn hamiltonian_matrix(tau: f64, frame: HamiltonianFrame, params: &DimensionlessGateParams, pulse: &PulseShape, tau_start: f64, cutoff: FockCutoff) -> Array2<C64> {
    let levels = cutoff.levels();
    let mut x = Array2::<C64>::zeros((levels, levels));
    for n in 1..levels {
        let s = (n as f64).sqrt();
        x[[n, n - 1]] = C64::from_polar(s, tau);
        x[[n - 1, n]] = C64::from_polar(s, -tau);
    }
    let (phase, detuning) = match frame {
        HamiltonianFrame::RescaledInteraction => (params.phi, params.lambda_tilde),
        HamiltonianFrame::Experimental => (params.phi + params.lambda_tilde * tau, 0.0),
    };
    let coupling = -params.omega_tilde * pulse.envelope(tau - tau_start);
    let sphi = spin_phi(phase);
    let sz = spin_z();
    let dim = cutoff.dim();
    let mut h = Array2::<C64>::zeros((dim, dim));
    for q in 0..4 {
        for p in 0..4 {
            for n in 0..levels {
                for m in 0..levels {
                    let mut v = sphi[[q, p]] * x[[n, m]] * coupling;
                    if n == m {
                        v += sz[[q, p]] * detuning;
                    }
                    h[[q * levels + n, p * levels + m]] = v;
                }
            }
        }
    }
    h
}

/// Matrix-free H(τ)ψ exploiting the sparsity of S_φ and of the ladder operators.
struct Drive<'a> {
    frame: HamiltonianFrame,
    params: &'a DimensionlessGateParams,
    pulse: &'a PulseShape,
    tau_start: f64,
    levels: usize,
    sqrt: Vec<f64>,
}

impl<'a> Drive<'a> {
    fn new(frame: HamiltonianFrame, params: &'a DimensionlessGateParams, pulse: &'a PulseShape, tau_start: f64, levels: usize) -> Self {
        Drive { frame, params, pulse, tau_start, levels, sqrt: (0..=levels).map(|n| (n as f64).sqrt()).collect() }
    }

    /// out = −i H(τ) ψ
    fn rhs(&self, tau: f64, psi: &[C64], out: &mut [C64]) {
        let l = self.levels;
        let (phase, detuning) = match self.frame {
            HamiltonianFrame::RescaledInteraction => (self.params.phi, self.params.lambda_tilde),
            HamiltonianFrame::Experimental => (self.params.phi + self.params.lambda_tilde * tau, 0.0),
        };
        let coupling = -self.params.omega_tilde * self.pulse.envelope(tau - self.tau_start);
        // σ_φ|g⟩ = u|e⟩, σ_φ|e⟩ = ū|g⟩ with u = i e^{−iφ}.
        let u = I * C64::from_polar(0.5 * coupling, -phase);
        let uc = -I * C64::from_polar(0.5 * coupling, phase);
        let up = C64::from_polar(1.0, tau);
        let dn = up.conj();
        let sq = &self.sqrt;
        let x = |q: usize, n: usize| -> C64 {
            let b = q * l;
            let mut v = ZERO;
            if n > 0 {
                v += up * sq[n] * psi[b + n - 1];
            }
            if n + 1 < l {
                v += dn * sq[n + 1] * psi[b + n + 1];
            }
            v
        };
        for n in 0..l {
            let (xgg, xge, xeg, xee) = (x(0, n), x(1, n), x(2, n), x(3, n));
            let side = u * xgg + uc * xee;
            let hgg = uc * (xge + xeg) + psi[n] * detuning;
            let hee = u * (xge + xeg) - psi[3 * l + n] * detuning;
            out[n] = -I * hgg;
            out[l + n] = -I * side;
            out[2 * l + n] = -I * side;
            out[3 * l + n] = -I * hee;
        }
    }
}

fn axpy(out: &mut [C64], y: &[C64], a: C64, x: &[C64]) {
    for ((o, yi), xi) in out.iter_mut().zip(y).zip(x) {
        *o = yi + a * xi;
    }
}

fn rk4(drive: &Drive, psi: &mut [C64], t0: f64, t1: f64, steps: usize) -> usize {
    let n = psi.len();
    let h = (t1 - t0) / steps as f64;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
    for s in 0..steps {
        let t = t0 + h * s as f64;
        drive.rhs(t, psi, &mut k1);
        axpy(&mut tmp, psi, C64::from(0.5 * h), &k1);
        drive.rhs(t + 0.5 * h, &tmp, &mut k2);
        axpy(&mut tmp, psi, C64::from(0.5 * h), &k2);
        drive.rhs(t + 0.5 * h, &tmp, &mut k3);
        axpy(&mut tmp, psi, C64::from(h), &k3);
        drive.rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            psi[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
    }
    steps
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

fn dopri(drive: &Drive, psi: &mut [C64], t0: f64, t1: f64, rtol: f64, atol: f64, max_steps: usize) -> Result<usize> {
    let n = psi.len();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(0);
    }
    let dir = span.signum();
    let mut t = t0;
    let mut h = dir * (span.abs() / 100.0).min(0.05);
    let mut k: Vec<Vec<C64>> = vec![vec![ZERO; n]; 7];
    let mut stage = vec![ZERO; n];
    let mut y5 = vec![ZERO; n];
    let mut accepted = 0;
    let mut attempts = 0;
    while (t1 - t) * dir > 0.0 {
        attempts += 1;
        if attempts > max_steps {
            return Err(Error::Integrator(format!("adaptive integrator exceeded {max_steps} steps at τ = {t}")));
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        drive.rhs(t, psi, &mut k[0]);
        for s in 1..7 {
            stage.copy_from_slice(psi);
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = DP_A[s][j];
                if a != 0.0 {
                    for i in 0..n {
                        stage[i] += kj[i] * (h * a);
                    }
                }
            }
            let (_, tail) = k.split_at_mut(s);
            drive.rhs(t + DP_C[s] * h, &stage, &mut tail[0]);
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut d5 = ZERO;
            let mut d4 = ZERO;
            for s in 0..7 {
                d5 += k[s][i] * DP_B5[s];
                d4 += k[s][i] * DP_B4[s];
            }
            y5[i] = psi[i] + d5 * h;
            let sc = atol + rtol * psi[i].norm().max(y5[i].norm());
            err = err.max(((d5 - d4) * h).norm() / sc);
        }
        if !err.is_finite() {
            return Err(Error::Integrator(format!("non-finite error estimate at τ = {t}")));
        }
        if err <= 1.0 {
            t += h;
            psi.copy_from_slice(&y5);
            accepted += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < 1e-14 * span.abs() {
            return Err(Error::Integrator(format!("step size underflow at τ = {t}")));
        }
    }
    Ok(accepted)
}

/// Final state of a propagation with its conservation diagnostics.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub state: CompositeState,
    /// ‖ψ(τ_end)‖ − ‖ψ(τ_start)‖.
    pub norm_drift: f64,
    pub steps: usize,
    pub top_mass: f64,
}

fn integrate_segment(drive: &Drive, psi: &mut [C64], t0: f64, t1: f64, method: &IntegratorMethod, steps_override: Option<usize>) -> Result<usize> {
    match *method {
        IntegratorMethod::Rk4Fixed { steps } => Ok(rk4(drive, psi, t0, t1, steps_override.unwrap_or(steps))),
        IntegratorMethod::Adaptive { rtol, atol, max_steps } => dopri(drive, psi, t0, t1, rtol, atol, max_steps),
    }
}

fn check_initial(initial: &CompositeState, config: &IntegratorConfig) -> Result<()> {
    config.validate()?;
    if initial.frame() != Frame::Computational {
        return Err(Error::FrameMismatch { expected: Frame::Computational, found: initial.frame() });
    }
    if initial.cutoff() != config.cutoff {
        return Err(Error::DimensionMismatch { expected: config.cutoff.dim(), found: initial.cutoff().dim() });
    }
    let top = initial.top_mass(10);
    if top > 1e-12 {
        return Err(Error::CutoffTooSmall(format!("initial state has mass {top:.2e} within 10 levels of n_max = {}", config.cutoff.n_max)));
    }
    Ok(())
}

fn finish(psi: Vec<C64>, initial_norm: f64, steps: usize, config: &IntegratorConfig) -> Result<Propagation> {
    let state = CompositeState::unnormalized(Array1::from(psi), Frame::Computational, config.cutoff)?;
    let norm_drift = state.norm() - initial_norm;
    if norm_drift.abs() > config.norm_tol {
        return Err(Error::NormDrift { drift: norm_drift, tol: config.norm_tol });
    }
    let top_mass = state.top_mass(config.guard_levels);
    if top_mass > config.guard_tol {
        return Err(Error::GuardBand(format!(
            "mass {top_mass:.2e} in the top {} phonon levels (n_max = {})",
            config.guard_levels, config.cutoff.n_max
        )));
    }
    let state = state.assume_normalized(config.norm_tol);
    Ok(Propagation { state, norm_drift, steps, top_mass })
}

/// Integrates i dψ/dτ = H(τ)ψ from `span.0` to `span.1`. The state is never renormalized.
pub fn propagate(
    initial: &CompositeState,
    frame: HamiltonianFrame,
    params: &DimensionlessGateParams,
    pulse: &PulseShape,
    span: (f64, f64),
    config: &IntegratorConfig,
) -> Result<Propagation> {
    check_initial(initial, config)?;
    let drive = Drive::new(frame, params, pulse, span.0, config.cutoff.levels());
    let mut psi = initial.amplitudes().to_vec();
    let steps = integrate_segment(&drive, &mut psi, span.0, span.1, &config.method, None)?;
    finish(psi, initial.norm(), steps, config)
}

/// One gate of length |τ_g| starting at τ = 0 in the rescaled interaction frame.
pub fn propagate_gate(initial: &CompositeState, params: &DimensionlessGateParams, pulse: &PulseShape, config: &IntegratorConfig) -> Result<Propagation> {
    propagate(initial, HamiltonianFrame::RescaledInteraction, params, pulse, (0.0, params.span()), config)
}

/// Qubit observables of a traced final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// (P(gg), P(ge), P(eg), P(ee)).
    pub populations: [f64; 4],
    pub relative_phase: f64,
    pub coherence_magnitude: f64,
    pub phase_reliable: bool,
    pub fidelity: f64,
    pub purity: f64,
    pub norm_drift: f64,
}

/// Below this coherence magnitude the relative phase is flagged unreliable.
pub const COHERENCE_FLOOR: f64 = 1e-6;

/// Observables of a qubit density matrix for the given input pair.
pub fn density_observables(rho: &QubitDensityMatrix, pair: QubitPair) -> Result<Observables> {
    let (r, c) = coherence_pair(pair);
    let coh = rho.get(r, c);
    Ok(Observables {
        populations: rho.populations(),
        relative_phase: coh.arg(),
        coherence_magnitude: coh.norm(),
        phase_reliable: coh.norm() >= COHERENCE_FLOOR,
        fidelity: state_fidelity(rho, &ideal_gate_output(pair))?,
        purity: purity(rho),
        norm_drift: 0.0,
    })
}

/// Observables of a final composite state; the phase convention follows the input pair.
pub fn observables(final_state: &CompositeState, pair: QubitPair) -> Result<Observables> {
    if final_state.frame() != Frame::Computational {
        return Err(Error::FrameMismatch { expected: Frame::Computational, found: final_state.frame() });
    }
    let rho = QubitDensityMatrix::perturbative(trace_amplitudes(final_state.amplitudes(), final_state.cutoff().levels()))?;
    let mut obs = density_observables(&rho, pair)?;
    obs.norm_drift = final_state.norm() - 1.0;
    Ok(obs)
}

/// Propagates |σ,σ′,n⟩ through one gate and returns its observables.
pub fn fock_observables(pair: QubitPair, n: usize, params: &DimensionlessGateParams, pulse: &PulseShape, config: &IntegratorConfig) -> Result<Observables> {
    let init = CompositeState::computational(pair, n, config.cutoff)?;
    let prop = propagate_gate(&init, params, pulse, config)?;
    let mut obs = observables(&prop.state, pair)?;
    obs.norm_drift = prop.norm_drift;
    Ok(obs)
}

/// Thermal input: mixes the traced outputs of each Fock component with weight p_n̄(n).
///
/// Components with n ≤ n_max − 10 are propagated; the mass left out must be ≤ `tail_tol`.
pub fn thermal_observables(
    pair: QubitPair,
    n_bar: f64,
    params: &DimensionlessGateParams,
    pulse: &PulseShape,
    config: &IntegratorConfig,
    tail_tol: f64,
) -> Result<(Observables, ThermalDistribution)> {
    let usable = FockCutoff::new(config.cutoff.n_max.saturating_sub(10));
    let dist = thermal_probabilities(n_bar, usable)?;
    dist.check_truncation(tail_tol)?;
    let mut rho = Array2::<C64>::zeros((4, 4));
    let mut drift = 0.0f64;
    for (n, &p) in dist.probabilities.iter().enumerate() {
        if p < 1e-16 {
            continue;
        }
        let init = CompositeState::computational(pair, n, config.cutoff)?;
        let prop = propagate_gate(&init, params, pulse, config)?;
        drift = drift.max(prop.norm_drift.abs());
        rho.scaled_add(C64::from(p), &trace_amplitudes(prop.state.amplitudes(), config.cutoff.levels()));
    }
    let rho = QubitDensityMatrix::perturbative(rho)?;
    let mut obs = density_observables(&rho, pair)?;
    obs.norm_drift = drift;
    Ok((obs, dist))
}

/// ⟨a⟩ along the propagation, sampled at `n_points` uniformly spaced times over `span`.
pub fn expectation_trajectory(
    initial: &CompositeState,
    frame: HamiltonianFrame,
    params: &DimensionlessGateParams,
    pulse: &PulseShape,
    span: (f64, f64),
    config: &IntegratorConfig,
    n_points: usize,
) -> Result<Vec<(f64, C64)>> {
    check_initial(initial, config)?;
    if n_points < 2 {
        return Err(Error::InvalidParameter("a trajectory needs at least two points".into()));
    }
    let levels = config.cutoff.levels();
    let drive = Drive::new(frame, params, pulse, span.0, levels);
    let mut psi = initial.amplitudes().to_vec();
    let segments = n_points - 1;
    let per_segment = match config.method {
        IntegratorMethod::Rk4Fixed { steps } => Some(steps.div_ceil(segments)),
        IntegratorMethod::Adaptive { .. } => None,
    };
    let mean_a = |psi: &[C64]| -> C64 {
        let mut acc = ZERO;
        for q in 0..4 {
            for n in 1..levels {
                acc += psi[q * levels + n - 1].conj() * psi[q * levels + n] * (n as f64).sqrt();
            }
        }
        acc
    };
    let dt = (span.1 - span.0) / segments as f64;
    let mut out = Vec::with_capacity(n_points);
    out.push((span.0, mean_a(&psi)));
    let mut steps = 0;
    for s in 0..segments {
        let t0 = span.0 + dt * s as f64;
        steps += integrate_segment(&drive, &mut psi, t0, t0 + dt, &config.method, per_segment)?;
        out.push((t0 + dt, mean_a(&psi)));
    }
    finish(psi, initial.norm(), steps, config)?;
    Ok(out)
}
