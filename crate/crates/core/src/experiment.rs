//! The two-gate calibration sequence, fringe fitting and the detuning estimate.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{thermal_probabilities, trace_amplitudes, CompositeState, FockCutoff, QubitPair, C64};
use crate::ideal::{fmt, DimensionlessGateParams, PulseShape};
use crate::magnus::{CoefficientTable, InitialMotion};
use crate::oracle::{propagate, HamiltonianFrame, IntegratorConfig};

/// Largest thermal mass the oracle sequence may leave unpropagated.
pub const SEQUENCE_THERMAL_TAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    FirstOrderModel,
    Oracle,
}

/// One point of the calibration sequence: two gates, the second with laser phase φ_d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub motion: InitialMotion,
    /// λ in rad/s.
    pub lambda: f64,
    /// ε in rad/s, signed.
    pub epsilon: f64,
    /// t_g in s.
    pub gate_time: f64,
    pub phi_d: f64,
    pub engine: Engine,
}

impl SequenceConfig {
    /// A calibrated sequence, t_g = 2π/|ε|.
    pub fn calibrated(motion: InitialMotion, lambda: f64, epsilon: f64, engine: Engine) -> Self {
        SequenceConfig { motion, lambda, epsilon, gate_time: 2.0 * PI / epsilon.abs(), phi_d: 0.0, engine }
    }

    pub fn with_phi_d(mut self, phi_d: f64) -> Self {
        self.phi_d = phi_d;
        self
    }

    pub fn lambda_tilde(&self) -> f64 {
        self.lambda / self.epsilon
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon == 0.0 || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter("sideband detuning must be finite and non-zero".into()));
        }
        if !self.lambda.is_finite() || !self.phi_d.is_finite() {
            return Err(Error::InvalidParameter("λ and φ_d must be finite".into()));
        }
        let tau_g = self.gate_time * self.epsilon.abs();
        if (tau_g - 2.0 * PI).abs() > 1e-6 * 2.0 * PI {
            return Err(Error::InvalidParameter(format!("t_g·|ε| = {tau_g} but the sequence needs the calibrated loop 2π")));
        }
        Ok(())
    }

    /// Rescaled parameters of the first gate (φ = 0) or the second (φ = φ_d).
    fn gate_params(&self, second: bool, phi_d: f64) -> DimensionlessGateParams {
        DimensionlessGateParams::calibrated().with_lambda(self.lambda_tilde()).with_phi(if second { phi_d } else { 0.0 })
    }
}

/// φ_seq = 2λa_n/ε for a Fock input, or the aggregate of a thermal fringe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSeqPrediction {
    /// Phase of the (averaged) fringe.
    pub phi_seq: f64,
    /// Fringe amplitude A in A cos(2φ_d + φ_seq) + 1/2; 1/2 for a Fock input.
    pub amplitude: f64,
}

/// First-order prediction of the fringe phase. Thermal inputs average the fringe, not the phase.
pub fn phi_seq_prediction(motion: &InitialMotion, lambda: f64, epsilon: f64, table: &CoefficientTable) -> Result<PhiSeqPrediction> {
    if epsilon == 0.0 {
        return Err(Error::InvalidParameter("sideband detuning must be non-zero".into()));
    }
    let mut z = C64::from(0.0);
    for (n, w) in motion.weights(table)? {
        z += C64::from_polar(w, 2.0 * lambda * table.a[n] / epsilon);
    }
    Ok(PhiSeqPrediction { phi_seq: z.arg(), amplitude: 0.5 * z.norm() })
}

fn oracle_ready_motion(motion: &InitialMotion, config: &IntegratorConfig) -> Result<Vec<(usize, f64)>> {
    match motion {
        InitialMotion::Fock(n) => Ok(vec![(*n, 1.0)]),
        InitialMotion::Thermal(d) => {
            let dist = thermal_probabilities(d.n_bar, FockCutoff::new(config.cutoff.n_max.saturating_sub(10)))?;
            dist.check_truncation(SEQUENCE_THERMAL_TAIL_TOL)?;
            Ok(dist.probabilities.iter().copied().enumerate().filter(|&(_, p)| p >= 1e-16).collect())
        }
    }
}

/// P(ee) of one Fock component for each φ_d; the first gate is propagated once.
fn oracle_fock_fringe(config: &SequenceConfig, n: usize, phi_ds: &[f64], integrator: &IntegratorConfig) -> Result<Vec<f64>> {
    let pulse = PulseShape::Square;
    let init = CompositeState::computational(QubitPair::GG, n, integrator.cutoff)?;
    let first = propagate(&init, HamiltonianFrame::Experimental, &config.gate_params(false, 0.0), &pulse, (0.0, 2.0 * PI), integrator)?;
    let levels = integrator.cutoff.levels();
    phi_ds
        .par_iter()
        .map(|&phi_d| {
            let second = propagate(&first.state, HamiltonianFrame::Experimental, &config.gate_params(true, phi_d), &pulse, (2.0 * PI, 4.0 * PI), integrator)?;
            let rho = trace_amplitudes(second.state.amplitudes(), levels);
            Ok(rho[[QubitPair::EE.index(), QubitPair::EE.index()]].re)
        })
        .collect()
}

/// P(ee) after the sequence for every φ_d in `phi_ds` (the config's own φ_d is ignored).
pub fn simulate_fringe(config: &SequenceConfig, phi_ds: &[f64], table: Option<&CoefficientTable>, integrator: &IntegratorConfig) -> Result<Vec<f64>> {
    config.validate()?;
    match config.engine {
        Engine::FirstOrderModel => {
            let table = table.ok_or_else(|| Error::InvalidParameter("the first-order model needs a coefficient table".into()))?;
            let weights = config.motion.weights(table)?;
            Ok(phi_ds
                .iter()
                .map(|&phi_d| {
                    weights
                        .iter()
                        .map(|&(n, w)| w * 0.5 * (1.0 + (2.0 * phi_d + 2.0 * config.lambda_tilde() * table.a[n]).cos()))
                        .sum()
                })
                .collect())
        }
        Engine::Oracle => {
            let mut out = vec![0.0; phi_ds.len()];
            for (n, w) in oracle_ready_motion(&config.motion, integrator)? {
                for (o, p) in out.iter_mut().zip(oracle_fock_fringe(config, n, phi_ds, integrator)?) {
                    *o += w * p;
                }
            }
            Ok(out)
        }
    }
}

/// P(ee) for the config's φ_d.
pub fn simulate_sequence(config: &SequenceConfig, table: Option<&CoefficientTable>, integrator: &IntegratorConfig) -> Result<f64> {
    Ok(simulate_fringe(config, &[config.phi_d], table, integrator)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeSample {
    pub phi_d: f64,
    pub p_ee: f64,
    pub shots: Option<u32>,
}

/// A cos(2φ_d + φ_seq) + B fitted to a fringe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub amplitude: f64,
    pub offset: f64,
    /// In (−π, π].
    pub phi_seq: f64,
    /// Weighted sum of squared residuals.
    pub residual: f64,
    /// Covariance of (A, φ_seq, B).
    pub covariance: [[f64; 3]; 3],
    /// False when the contrast is below three standard deviations.
    pub reliable: bool,
    pub iterations: usize,
}

impl FringeFit {
    pub fn sigma_phi(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn sigma_amplitude(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn model(&self, phi_d: f64) -> f64 {
        self.amplitude * (2.0 * phi_d + self.phi_seq).cos() + self.offset
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Solves the symmetric positive-definite system `a x = b` by Cholesky; None if singular.
fn cholesky_solve<const N: usize>(a: &[[f64; N]; N], b: &[f64; N]) -> Option<[f64; N]> {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; N];
    for i in 0..N {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; N];
    for i in (0..N).rev() {
        let mut s = y[i];
        for k in i + 1..N {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

fn invert_spd<const N: usize>(a: &[[f64; N]; N]) -> Option<[[f64; N]; N]> {
    let mut inv = [[0.0; N]; N];
    for j in 0..N {
        let mut e = [0.0; N];
        e[j] = 1.0;
        let col = cholesky_solve(a, &e)?;
        for i in 0..N {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

const MAX_ITERATIONS: usize = 200;

/// Parameters, covariance, residual cost and iteration count.
type Solution<const N: usize> = ([f64; N], [[f64; N]; N], f64, usize);

/// Least squares without shot counts; otherwise a binomial maximum-likelihood fit
/// started from the unweighted solution, with the inverse Fisher information as covariance.
fn gauss_newton<const N: usize>(
    samples: &[FringeSample],
    start: [f64; N],
    model: impl Fn(f64, &[f64; N]) -> (f64, [f64; N]),
) -> Result<Solution<N>> {
    let uniform = vec![1.0; samples.len()];
    let (first, cov, cost, it1) = weighted_least_squares(samples, start, &uniform, &model)?;
    if !uses_shots(samples) {
        return Ok((first, cov, cost, it1));
    }
    let (p, cov, chi2, it2) = binomial_mle(samples, first, &model)?;
    Ok((p, cov, chi2, it1 + it2))
}

/// Margin that keeps model probabilities inside (0, 1) during the likelihood search.
const PROBABILITY_MARGIN: f64 = 1e-12;

fn binomial_mle<const N: usize>(
    samples: &[FringeSample],
    start: [f64; N],
    model: &impl Fn(f64, &[f64; N]) -> (f64, [f64; N]),
) -> Result<Solution<N>> {
    // Jeffreys pseudo-counts: (k + 1/2)/(shots + 1) keeps the maximum away from q = 0 and q = 1.
    let shots = |s: &FringeSample| s.shots.unwrap_or(0) as f64 + 1.0;
    let observed = |s: &FringeSample| (s.p_ee * (shots(s) - 1.0) + 0.5) / shots(s);
    let nll = |p: &[f64; N]| -> f64 {
        let mut total = 0.0;
        for s in samples {
            let q = model(s.phi_d, p).0;
            if !(PROBABILITY_MARGIN..=1.0 - PROBABILITY_MARGIN).contains(&q) {
                return f64::INFINITY;
            }
            let (k, y) = (shots(s), observed(s));
            total -= k * (y * q.ln() + (1.0 - y) * (1.0 - q).ln());
        }
        total
    };
    let fisher_and_score = |p: &[f64; N]| -> ([[f64; N]; N], [f64; N]) {
        let mut info = [[0.0; N]; N];
        let mut score = [0.0; N];
        for s in samples {
            let (q, g) = model(s.phi_d, p);
            let v = q * (1.0 - q);
            let k = shots(s);
            for i in 0..N {
                score[i] += k * (observed(s) - q) / v * g[i];
                for j in 0..N {
                    info[i][j] += k / v * g[i] * g[j];
                }
            }
        }
        (info, score)
    };

    // Pull the start inside the open probability range by shrinking the first (amplitude) parameter.
    let mut p = start;
    for _ in 0..60 {
        if nll(&p).is_finite() {
            break;
        }
        p[0] *= 0.9;
    }
    let mut f0 = nll(&p);
    if !f0.is_finite() {
        return Err(Error::Fit("the unweighted fit leaves the probability range and cannot seed the likelihood fit".into()));
    }
    for iter in 0..MAX_ITERATIONS {
        let (info, score) = fisher_and_score(&p);
        let step = cholesky_solve(&info, &score).ok_or_else(|| Error::Fit("singular Fisher information".into()))?;
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand: [f64; N] = std::array::from_fn(|i| p[i] + t * step[i]);
            let f = nll(&cand);
            if f <= f0 + 1e-12 * f0.abs() {
                next = Some((cand, f));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, f)) = next else {
            return Err(Error::Fit("likelihood line search failed".into()));
        };
        let scale: f64 = cand.iter().map(|x| x.abs()).fold(1.0, f64::max);
        let moved = (0..N).map(|i| (cand[i] - p[i]).abs()).fold(0.0, f64::max);
        p = cand;
        let settled = f0 - f <= 1e-14 * f0.abs().max(1.0);
        f0 = f;
        if moved <= 1e-12 * scale || settled {
            let (info, _) = fisher_and_score(&p);
            let cov = invert_spd(&info).ok_or_else(|| Error::Fit("singular Fisher information at the solution".into()))?;
            let chi2 = samples
                .iter()
                .map(|s| {
                    let q = model(s.phi_d, &p).0;
                    (shots(s) - 1.0) * (s.p_ee - q).powi(2) / (q * (1.0 - q))
                })
                .sum();
            return Ok((p, cov, chi2, iter + 1));
        }
    }
    Err(Error::Fit(format!("likelihood fit did not converge in {MAX_ITERATIONS} iterations")))
}

fn weighted_least_squares<const N: usize>(
    samples: &[FringeSample],
    start: [f64; N],
    w: &[f64],
    model: &impl Fn(f64, &[f64; N]) -> (f64, [f64; N]),
) -> Result<Solution<N>> {
    let cost = |p: &[f64; N], w: &[f64]| -> f64 { samples.iter().zip(w).map(|(s, wi)| wi * (s.p_ee - model(s.phi_d, p).0).powi(2)).sum() };
    let mut p = start;
    let mut trace = Vec::new();
    let mut mu = 0.0;
    for iter in 0..MAX_ITERATIONS {
        let mut jtj = [[0.0; N]; N];
        let mut jtr = [0.0; N];
        for (s, wi) in samples.iter().zip(w) {
            let (f, g) = model(s.phi_d, &p);
            let r = s.p_ee - f;
            for i in 0..N {
                jtr[i] += wi * g[i] * r;
                for j in 0..N {
                    jtj[i][j] += wi * g[i] * g[j];
                }
            }
        }
        let c0 = cost(&p, w);
        trace.push(c0);
        // Levenberg damping only engages when a plain step fails to decrease the cost.
        let mut accepted = None;
        for _ in 0..30 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += mu * jtj[i][i].max(1e-300);
            }
            let Some(step) = cholesky_solve(&a, &jtr) else {
                mu = if mu == 0.0 { 1e-6 } else { mu * 10.0 };
                continue;
            };
            let mut cand = p;
            for i in 0..N {
                cand[i] += step[i];
            }
            if cost(&cand, w) <= c0 * (1.0 + 1e-12) + 1e-300 {
                accepted = Some((cand, step));
                break;
            }
            mu = if mu == 0.0 { 1e-6 } else { mu * 10.0 };
        }
        let Some((cand, step)) = accepted else {
            return Err(Error::Fit(format!("no descent direction; cost trace {trace:?}")));
        };
        mu *= 0.1;
        if mu < 1e-12 {
            mu = 0.0;
        }
        p = cand;
        let scale: f64 = p.iter().map(|x| x.abs()).fold(1.0, f64::max);
        if step.iter().all(|s| s.abs() <= 1e-13 * scale) {
            let mut jtj = [[0.0; N]; N];
            for (s, wi) in samples.iter().zip(w) {
                let (_, g) = model(s.phi_d, &p);
                for i in 0..N {
                    for j in 0..N {
                        jtj[i][j] += wi * g[i] * g[j];
                    }
                }
            }
            let cov = invert_spd(&jtj).ok_or_else(|| Error::Fit("singular normal matrix at the solution".into()))?;
            return Ok((p, cov, cost(&p, w), iter + 1));
        }
    }
    Err(Error::Fit(format!("no convergence after {MAX_ITERATIONS} iterations; cost trace {trace:?}")))
}

fn check_coverage(samples: &[FringeSample]) -> Result<()> {
    let mut phis: Vec<f64> = samples.iter().map(|s| s.phi_d).collect();
    if phis.iter().any(|x| !x.is_finite()) || samples.iter().any(|s| !s.p_ee.is_finite()) {
        return Err(Error::InvalidParameter("fringe samples must be finite".into()));
    }
    phis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    phis.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let k = phis.len();
    if k < 5 {
        return Err(Error::InvalidParameter(format!("fringe fit needs ≥ 5 distinct φ_d values, got {k}")));
    }
    // Each of k points is credited with π/k of the fringe period.
    let span = phis[k - 1] - phis[0] + PI / k as f64;
    if span < PI - 1e-9 {
        return Err(Error::InvalidParameter(format!("φ_d values cover {span:.3} rad, less than the fringe period π")));
    }
    Ok(())
}

/// Linear least-squares projection onto (cos 2φ_d, sin 2φ_d, 1).
fn fourier_start(samples: &[FringeSample], freq: f64) -> [f64; 3] {
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for s in samples {
        let basis = [(freq * s.phi_d).cos(), (freq * s.phi_d).sin(), 1.0];
        for i in 0..3 {
            b[i] += basis[i] * s.p_ee;
            for j in 0..3 {
                a[i][j] += basis[i] * basis[j];
            }
        }
    }
    let [c, sn, off] = cholesky_solve(&a, &b).unwrap_or([0.0, 0.0, samples.iter().map(|s| s.p_ee).sum::<f64>() / samples.len() as f64]);
    // c cos 2φ + s sin 2φ = A cos(2φ + φ_s) with A cos φ_s = c, −A sin φ_s = s.
    [c.hypot(sn), (-sn).atan2(c), off]
}

fn normalize_fit(mut amp: f64, mut phase: f64) -> (f64, f64) {
    if amp < 0.0 {
        amp = -amp;
        phase += PI;
    }
    (amp, wrap_angle(phase))
}

fn uses_shots(samples: &[FringeSample]) -> bool {
    samples.iter().all(|s| s.shots.is_some_and(|k| k > 0))
}

/// Fits A cos(2φ_d + φ_seq) + B. Shot counts, when present for every sample, give binomial weights;
/// otherwise the covariance is scaled by the residual variance.
pub fn fit_fringe(samples: &[FringeSample]) -> Result<FringeFit> {
    check_coverage(samples)?;
    let start = fourier_start(samples, 2.0);
    let model = |x: f64, p: &[f64; 3]| -> (f64, [f64; 3]) {
        let arg = 2.0 * x + p[1];
        let (s, c) = arg.sin_cos();
        (p[0] * c + p[2], [c, -p[0] * s, 1.0])
    };
    let (p, mut cov, residual, iterations) = gauss_newton(samples, start, model)?;
    let dof = samples.len().saturating_sub(3).max(1) as f64;
    if !uses_shots(samples) {
        let s2 = residual / dof;
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v *= s2;
            }
        }
    }
    let (amplitude, phi_seq) = normalize_fit(p[0], p[1]);
    if p[0] < 0.0 {
        // (A, φ) → (−A, φ + π) flips the sign of the A–φ and A–B correlations.
        cov[0][1] = -cov[0][1];
        cov[1][0] = -cov[1][0];
        cov[0][2] = -cov[0][2];
        cov[2][0] = -cov[2][0];
    }
    let reliable = amplitude >= 3.0 * cov[0][0].sqrt();
    Ok(FringeFit { amplitude, offset: p[2], phi_seq, residual, covariance: cov, reliable, iterations })
}

/// Fit with the fringe frequency k free: A cos(kφ_d + φ) + B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeFrequencyFit {
    pub frequency: f64,
    pub frequency_sigma: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub residual: f64,
}

pub fn fit_fringe_free_frequency(samples: &[FringeSample]) -> Result<FreeFrequencyFit> {
    check_coverage(samples)?;
    let s = fourier_start(samples, 2.0);
    let model = |x: f64, p: &[f64; 4]| -> (f64, [f64; 4]) {
        let arg = p[3] * x + p[1];
        let (sn, c) = arg.sin_cos();
        (p[0] * c + p[2], [c, -p[0] * sn, 1.0, -p[0] * sn * x])
    };
    let (p, mut cov, residual, _) = gauss_newton(samples, [s[0], s[1], s[2], 2.0], model)?;
    if !uses_shots(samples) {
        let s2 = residual / samples.len().saturating_sub(4).max(1) as f64;
        cov[3][3] *= s2;
    }
    let (amplitude, phase) = normalize_fit(p[0], p[1]);
    Ok(FreeFrequencyFit { frequency: p[3], frequency_sigma: cov[3][3].sqrt(), amplitude, phase, offset: p[2], residual })
}

/// λ̂ with its standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub lambda_hat: f64,
    pub lambda_sigma: f64,
    /// Set when |λ̂/ε| leaves the range where the first-order model was validated.
    pub caveat: Option<String>,
}

/// Perturbative range of |λ/ε| over which the inversion is trusted.
pub const ESTIMATE_VALIDITY: f64 = 0.1;

/// λ̂ = ε φ_seq / (2 a), with a = a_n or its thermal average.
pub fn estimate_lambda(fit: &FringeFit, motion: &InitialMotion, epsilon: f64, table: &CoefficientTable) -> Result<LambdaEstimate> {
    let a: f64 = motion.weights(table)?.iter().map(|&(n, w)| w * table.a[n]).sum();
    if a.abs() < 1e-6 {
        return Err(Error::InvalidParameter(format!("a = {a:.3e} is too small: the fringe phase is insensitive to λ for this input")));
    }
    let lambda_hat = epsilon * fit.phi_seq / (2.0 * a);
    let lambda_sigma = epsilon.abs() * fit.sigma_phi() / (2.0 * a.abs());
    let ratio = lambda_hat / epsilon;
    let caveat = (ratio.abs() > ESTIMATE_VALIDITY)
        .then(|| format!("|λ̂/ε| = {:.3} exceeds {ESTIMATE_VALIDITY}; the first-order inversion is outside its validated range", ratio.abs()));
    Ok(LambdaEstimate { lambda_hat, lambda_sigma, caveat })
}

/// Binomial samples of `p_ee` at each φ_d with a seeded ChaCha stream.
pub fn synthetic_fringe(phi_ds: &[f64], p_ee: &[f64], shots: u32, seed: u64) -> Result<Vec<FringeSample>> {
    if phi_ds.len() != p_ee.len() {
        return Err(Error::DimensionMismatch { expected: phi_ds.len(), found: p_ee.len() });
    }
    if shots == 0 {
        return Err(Error::InvalidParameter("shot count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    phi_ds
        .iter()
        .zip(p_ee)
        .map(|(&phi_d, &p)| {
            let dist = Binomial::new(shots as u64, p.clamp(0.0, 1.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let k = dist.sample(&mut rng);
            Ok(FringeSample { phi_d, p_ee: k as f64 / shots as f64, shots: Some(shots) })
        })
        .collect()
}

/// `points` values of φ_d evenly covering one fringe period, kπ/points.
pub fn default_phi_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| PI * k as f64 / points as f64).collect()
}

pub const FRINGE_SCHEMA: &str = "# msgate-fringe v1";

pub fn write_fringe_csv<W: Write>(mut out: W, samples: &[FringeSample]) -> Result<()> {
    writeln!(out, "{FRINGE_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phi_d", "p_ee", "shots"])?;
    for s in samples {
        w.write_record([fmt(s.phi_d), fmt(s.p_ee), s.shots.map(|k| k.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a fringe CSV. A missing `shots` column falls back to uniform weights with a warning.
pub fn read_fringe_csv<R: BufRead>(mut input: R) -> Result<Vec<FringeSample>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    if first.trim_end() != FRINGE_SCHEMA {
        return Err(Error::Schema(format!("expected schema line '{FRINGE_SCHEMA}', found '{}'", first.trim_end())));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ci), Some(cp)) = (col("phi_d"), col("p_ee")) else {
        return Err(Error::Schema(format!("header must contain phi_d and p_ee, found {:?}", headers.iter().collect::<Vec<_>>())));
    };
    let cs = col("shots");
    if cs.is_none() {
        warn!("fringe data has no shots column; using uniform weights");
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 3;
        let rec = rec.map_err(|e| Error::Schema(format!("row {line}: {e}")))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| Error::Schema(format!("row {line}: missing {name}")))?;
            s.parse::<f64>().map_err(|_| Error::Schema(format!("row {line}: {name} = '{s}' is not a number")))
        };
        let phi_d = num(ci, "phi_d")?;
        let p_ee = num(cp, "p_ee")?;
        if !(0.0..=1.0).contains(&p_ee) {
            return Err(Error::Schema(format!("row {line}: p_ee = {p_ee} outside [0, 1]")));
        }
        let shots = match cs.and_then(|i| rec.get(i)) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<u32>().map_err(|_| Error::Schema(format!("row {line}: shots = '{s}' is not a count")))?),
        };
        out.push(FringeSample { phi_d, p_ee, shots });
    }
    if cs.is_some() && out.iter().any(|s| s.shots.is_none()) && out.iter().any(|s| s.shots.is_some()) {
        warn!("some rows lack shot counts; using uniform weights for the whole fit");
        for s in &mut out {
            s.shots = None;
        }
    }
    Ok(out)
}

/// The JSON document written by the calibrate command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub amplitude: f64,
    pub offset: f64,
    pub phi_seq: f64,
    pub residual: f64,
    pub covariance: [[f64; 3]; 3],
    pub lambda_hat: f64,
    pub lambda_sigma: f64,
    pub reliable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

impl FitReport {
    pub fn new(fit: &FringeFit, est: &LambdaEstimate) -> Self {
        FitReport {
            amplitude: fit.amplitude,
            offset: fit.offset,
            phi_seq: fit.phi_seq,
            residual: fit.residual,
            covariance: fit.covariance,
            lambda_hat: est.lambda_hat,
            lambda_sigma: est.lambda_sigma,
            reliable: fit.reliable,
            caveat: est.caveat.clone(),
        }
    }
}
