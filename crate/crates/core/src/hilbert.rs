//! Two-qubit ⊗ truncated-Fock algebra.
//!
//! Composite amplitudes are stored qubit-major: index `q * (n_max + 1) + n`,
//! where `q` runs over |g,g⟩, |g,e⟩, |e,g⟩, |e,e⟩ (computational frame) or
//! |+,+⟩, |+,−⟩, |−,+⟩, |−,−⟩ (S_y frame), first ion as the left factor.
//!
//! Pauli convention: |g⟩ is the +1 eigenstate of σ_z and
//! σ_y = [[0, −i], [i, 0]] in the (g, e) ordering, so |±⟩ = (|g⟩ ± i|e⟩)/√2
//! are the σ_y eigenstates with eigenvalues ±1.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockCutoff {
    pub n_max: usize,
}

impl FockCutoff {
    pub const DEFAULT_N_MAX: usize = 40;

    pub fn new(n_max: usize) -> Self {
        FockCutoff { n_max }
    }

    /// Number of retained phonon levels, `n_max + 1`.
    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        4 * self.levels()
    }
}

impl Default for FockCutoff {
    fn default() -> Self {
        FockCutoff::new(Self::DEFAULT_N_MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Computational,
    SY,
}

/// Electronic basis label in the computational frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QubitPair {
    GG,
    GE,
    EG,
    EE,
}

impl QubitPair {
    pub const ALL: [QubitPair; 4] = [QubitPair::GG, QubitPair::GE, QubitPair::EG, QubitPair::EE];

    pub fn index(self) -> usize {
        match self {
            QubitPair::GG => 0,
            QubitPair::GE => 1,
            QubitPair::EG => 2,
            QubitPair::EE => 3,
        }
    }

    pub fn from_index(q: usize) -> Option<Self> {
        Self::ALL.get(q).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            QubitPair::GG => "gg",
            QubitPair::GE => "ge",
            QubitPair::EG => "eg",
            QubitPair::EE => "ee",
        }
    }
}

impl std::str::FromStr for QubitPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gg" => Ok(QubitPair::GG),
            "ge" => Ok(QubitPair::GE),
            "eg" => Ok(QubitPair::EG),
            "ee" => Ok(QubitPair::EE),
            other => Err(Error::InvalidParameter(format!("unknown qubit pair '{other}'"))),
        }
    }
}

/// Amplitude vector on the composite space together with its frame tag.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    amplitudes: Array1<C64>,
    frame: Frame,
    cutoff: FockCutoff,
    normalized: bool,
}

impl CompositeState {
    /// Wraps amplitudes that are expected to be normalized; fails if they are not.
    pub fn new(amplitudes: Array1<C64>, frame: Frame, cutoff: FockCutoff) -> Result<Self> {
        let mut s = Self::unnormalized(amplitudes, frame, cutoff)?;
        let norm = s.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("state norm {norm} differs from 1")));
        }
        s.normalized = true;
        Ok(s)
    }

    /// Wraps amplitudes with no normalization claim (perturbative states, raw integrator output).
    pub fn unnormalized(amplitudes: Array1<C64>, frame: Frame, cutoff: FockCutoff) -> Result<Self> {
        if amplitudes.len() != cutoff.dim() {
            return Err(Error::DimensionMismatch { expected: cutoff.dim(), found: amplitudes.len() });
        }
        Ok(CompositeState { amplitudes, frame, cutoff, normalized: false })
    }

    /// |q, n⟩ in the given frame.
    pub fn basis(q: usize, n: usize, frame: Frame, cutoff: FockCutoff) -> Result<Self> {
        if q >= 4 || n > cutoff.n_max {
            return Err(Error::InvalidParameter(format!("basis state (q={q}, n={n}) outside cutoff {}", cutoff.n_max)));
        }
        let mut amps = Array1::zeros(cutoff.dim());
        amps[q * cutoff.levels() + n] = ONE;
        Ok(CompositeState { amplitudes: amps, frame, cutoff, normalized: true })
    }

    /// Computational basis state |σ,σ′,n⟩.
    pub fn computational(pair: QubitPair, n: usize, cutoff: FockCutoff) -> Result<Self> {
        Self::basis(pair.index(), n, Frame::Computational, cutoff)
    }

    /// Product of a qubit vector (in the given frame) with the Fock state |n⟩.
    pub fn product(qubit: [C64; 4], n: usize, frame: Frame, cutoff: FockCutoff) -> Result<Self> {
        if n > cutoff.n_max {
            return Err(Error::InvalidParameter(format!("n={n} above cutoff {}", cutoff.n_max)));
        }
        let mut amps = Array1::zeros(cutoff.dim());
        for (q, &c) in qubit.iter().enumerate() {
            amps[q * cutoff.levels() + n] = c;
        }
        let s = CompositeState { amplitudes: amps, frame, cutoff, normalized: false };
        let norm = s.norm();
        Ok(CompositeState { normalized: (norm - 1.0).abs() <= 1e-12, ..s })
    }

    /// Marks the state as normalized when its norm is within `tol` of one.
    pub fn assume_normalized(mut self, tol: f64) -> Self {
        self.normalized = (self.norm() - 1.0).abs() <= tol;
        self
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Array1<C64> {
        self.amplitudes
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn amp(&self, q: usize, n: usize) -> C64 {
        self.amplitudes[q * self.cutoff.levels() + n]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self|other⟩. Both states must share frame and cutoff.
    pub fn inner(&self, other: &CompositeState) -> Result<C64> {
        if self.frame != other.frame {
            return Err(Error::FrameMismatch { expected: self.frame, found: other.frame });
        }
        if self.cutoff != other.cutoff {
            return Err(Error::DimensionMismatch { expected: self.cutoff.dim(), found: other.cutoff.dim() });
        }
        Ok(self.amplitudes.iter().zip(other.amplitudes.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    /// Probability mass in the phonon levels above `n_max - width`.
    pub fn top_mass(&self, width: usize) -> f64 {
        let levels = self.cutoff.levels();
        let start = levels.saturating_sub(width);
        (0..4)
            .flat_map(|q| (start..levels).map(move |n| q * levels + n))
            .map(|i| self.amplitudes[i].norm_sqr())
            .sum()
    }
}

/// 4×4 electronic density matrix in the computational ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitDensityMatrix {
    entries: Array2<C64>,
    physical: bool,
}

impl QubitDensityMatrix {
    /// Validates Hermiticity (1e−12), unit trace (1e−10) and positivity (eigenvalues ≥ −1e−10).
    pub fn new(entries: Array2<C64>) -> Result<Self> {
        check_shape(&entries)?;
        check_hermitian(&entries, 1e-12)?;
        let tr: C64 = (0..4).map(|i| entries[[i, i]]).sum();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} differs from 1")));
        }
        let min_eig = hermitian_eigenvalues(&entries).into_iter().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(QubitDensityMatrix { entries, physical: true })
    }

    /// Hermitian matrix that need not have unit trace or be positive, such as a
    /// truncated perturbative expansion.
    pub fn perturbative(entries: Array2<C64>) -> Result<Self> {
        check_shape(&entries)?;
        check_hermitian(&entries, 1e-12)?;
        Ok(QubitDensityMatrix { entries, physical: false })
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    /// Whether the matrix passed the full density-matrix validation.
    pub fn is_physical(&self) -> bool {
        self.physical
    }

    pub fn get(&self, row: QubitPair, col: QubitPair) -> C64 {
        self.entries[[row.index(), col.index()]]
    }

    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.entries[[i, i]].re)
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.entries[[i, i]].re).sum()
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let v = hermitian_eigenvalues(&self.entries);
        [v[0], v[1], v[2], v[3]]
    }

    /// Divides every entry by the trace.
    pub fn renormalized(&self) -> Self {
        let tr = self.trace();
        QubitDensityMatrix { entries: self.entries.mapv(|c| c / tr), physical: self.physical }
    }

    /// ρ = |ψ⟩⟨ψ| for a normalized 4-vector.
    pub fn pure(psi: [C64; 4]) -> Result<Self> {
        let mut m = Array2::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                m[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        Self::new(m)
    }
}

fn check_shape(m: &Array2<C64>) -> Result<()> {
    if m.dim() != (4, 4) {
        return Err(Error::DimensionMismatch { expected: 16, found: m.len() });
    }
    Ok(())
}

fn check_hermitian(m: &Array2<C64>, tol: f64) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let d = (m[[i, j]] - m[[j, i]].conj()).norm();
            if d > tol {
                return Err(Error::InvalidDensityMatrix(format!("not Hermitian at ({i},{j}): residual {d:.3e}")));
            }
        }
    }
    Ok(())
}

/// Eigenvalues of a small Hermitian matrix, ascending.
///
/// Uses cyclic Jacobi on the real symmetric embedding [[Re, −Im], [Im, Re]],
/// whose spectrum is the Hermitian spectrum with every value doubled.
pub fn hermitian_eigenvalues(m: &Array2<C64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let c = m[[i, j]];
            a[[i, j]] = c.re;
            a[[i + n, j + n]] = c.re;
            a[[i, j + n]] = -c.im;
            a[[i + n, j]] = c.im;
        }
    }
    let size = 2 * n;
    for _sweep in 0..100 {
        let off: f64 = (0..size).flat_map(|i| (0..size).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..size {
            for q in (p + 1)..size {
                let apq = a[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..size {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..size {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..size).map(|i| a[[i, i]]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Geometric phonon distribution p(n) = n̄ⁿ/(n̄+1)ⁿ⁺¹ truncated at the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalDistribution {
    pub n_bar: f64,
    pub probabilities: Vec<f64>,
    pub truncated_mass: f64,
}

impl ThermalDistribution {
    /// Fails if the mass beyond the cutoff exceeds `tol`.
    pub fn check_truncation(&self, tol: f64) -> Result<()> {
        if self.truncated_mass > tol {
            return Err(Error::CutoffTooSmall(format!(
                "thermal mass {:.3e} beyond n={} exceeds {tol:.1e}",
                self.truncated_mass,
                self.probabilities.len() - 1
            )));
        }
        Ok(())
    }

    /// Restricts to the first `levels` entries, updating the truncated mass.
    pub fn truncated(&self, levels: usize) -> ThermalDistribution {
        let levels = levels.min(self.probabilities.len());
        let probabilities = self.probabilities[..levels].to_vec();
        let dropped: f64 = self.probabilities[levels..].iter().sum();
        ThermalDistribution { n_bar: self.n_bar, probabilities, truncated_mass: self.truncated_mass + dropped }
    }
}

pub fn thermal_probabilities(n_bar: f64, cutoff: FockCutoff) -> Result<ThermalDistribution> {
    if !(n_bar >= 0.0) || !n_bar.is_finite() {
        return Err(Error::InvalidParameter(format!("mean phonon number {n_bar} must be finite and ≥ 0")));
    }
    let ratio = n_bar / (n_bar + 1.0);
    let p0 = 1.0 / (n_bar + 1.0);
    let probabilities: Vec<f64> = (0..cutoff.levels()).map(|n| p0 * ratio.powi(n as i32)).collect();
    let truncated_mass = ratio.powi(cutoff.levels() as i32);
    Ok(ThermalDistribution { n_bar, probabilities, truncated_mass })
}

/// Table of ln k! for k ≤ len − 1.
#[derive(Debug, Clone)]
pub(crate) struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub(crate) fn new(max: usize) -> Self {
        let mut v = Vec::with_capacity(max + 1);
        let mut acc = 0.0;
        v.push(0.0);
        for k in 1..=max {
            acc += (k as f64).ln();
            v.push(acc);
        }
        LnFactorials(v)
    }

    fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// ⟨m|D(α)|n⟩ from the closed-form factorial sums.
///
/// The alternating sum cancels for large |α|²·min(m, n). Absolute error stays below 1e−14
/// for m, n < 12 and |α| ≤ 1.2, reaches about 1e−11 for m, n < 50 at |α| = 1.2, and about
/// 1e−8 at |α| = 2. Gate loops stay within |α| ≤ 2Ω̃.
pub fn displacement_element(m: usize, n: usize, alpha: C64) -> Result<C64> {
    let lf = LnFactorials::new(m.max(n));
    displacement_element_with(&lf, m, n, alpha)
}

pub(crate) fn displacement_element_with(lf: &LnFactorials, m: usize, n: usize, alpha: C64) -> Result<C64> {
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite displacement {alpha}")));
    }
    if alpha == ZERO {
        return Ok(if m == n { ONE } else { ZERO });
    }
    let x = alpha.norm_sqr();
    let r = x.sqrt();
    let theta = alpha.arg();
    let (log_pre, sum, phase) = if m >= n {
        let d = m - n;
        // Σ_k (−1)^k C(n,k) x^k d!/(d+k)!
        let mut t = 1.0;
        let mut s = 1.0;
        for k in 0..n {
            t *= -x * (n - k) as f64 / (((k + 1) * (d + k + 1)) as f64);
            s += t;
        }
        let log_pre = 0.5 * (lf.get(m) - lf.get(n)) + d as f64 * r.ln() - 0.5 * x - lf.get(d);
        (log_pre, s, d as f64 * theta)
    } else {
        let d = n - m;
        // Σ_j (−1)^j C(n, m−j)/C(n, m) x^j / j!, with the (−1)^{n−m} pulled out
        let mut t = 1.0;
        let mut s = 1.0;
        for j in 0..m {
            t *= -x * (m - j) as f64 / (((j + 1) * (d + j + 1)) as f64);
            s += t;
        }
        let ln_binom = lf.get(n) - lf.get(m) - lf.get(d);
        let log_pre = 0.5 * (lf.get(m) - lf.get(n)) + d as f64 * r.ln() - 0.5 * x + ln_binom;
        let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
        (log_pre, sign * s, -(d as f64) * theta)
    };
    if log_pre > 700.0 || !sum.is_finite() {
        return Err(Error::DisplacementOverflow { m, n, abs_alpha: r });
    }
    let value = log_pre.exp() * sum;
    if !value.is_finite() {
        return Err(Error::DisplacementOverflow { m, n, abs_alpha: r });
    }
    Ok(C64::from_polar(value, phase))
}

/// Matrix of ⟨m|D(α)|n⟩ for m, n ≤ n_max.
pub fn displacement_matrix(alpha: C64, cutoff: FockCutoff) -> Result<Array2<C64>> {
    displacement_matrix_dim(alpha, cutoff.levels())
}

pub(crate) fn displacement_matrix_dim(alpha: C64, dim: usize) -> Result<Array2<C64>> {
    let lf = LnFactorials::new(dim);
    let mut out = Array2::zeros((dim, dim));
    for m in 0..dim {
        for n in 0..dim {
            out[[m, n]] = displacement_element_with(&lf, m, n, alpha)?;
        }
    }
    Ok(out)
}

/// ρ_{q,q′} = Σ_n ψ_{q,n} ψ*_{q′,n}. Requires the computational frame.
pub fn partial_trace_phonons(state: &CompositeState) -> Result<QubitDensityMatrix> {
    if state.frame() != Frame::Computational {
        return Err(Error::FrameMismatch { expected: Frame::Computational, found: state.frame() });
    }
    let m = trace_amplitudes(state.amplitudes(), state.cutoff().levels());
    if state.is_normalized() {
        QubitDensityMatrix::new(m)
    } else {
        QubitDensityMatrix::perturbative(m)
    }
}

/// Partial trace without any validation; the caller decides how to wrap it.
pub fn trace_amplitudes(amps: &Array1<C64>, levels: usize) -> Array2<C64> {
    let mut m = Array2::zeros((4, 4));
    for q in 0..4 {
        for p in 0..4 {
            let mut acc = ZERO;
            for n in 0..levels {
                acc += amps[q * levels + n] * amps[p * levels + n].conj();
            }
            m[[q, p]] = acc;
        }
    }
    m
}

/// Partial trace of a composite density matrix (computational ordering).
pub fn partial_trace_density(rho: &Array2<C64>, cutoff: FockCutoff) -> Result<QubitDensityMatrix> {
    let dim = cutoff.dim();
    if rho.dim() != (dim, dim) {
        return Err(Error::DimensionMismatch { expected: dim * dim, found: rho.len() });
    }
    let levels = cutoff.levels();
    let mut m = Array2::zeros((4, 4));
    for q in 0..4 {
        for p in 0..4 {
            m[[q, p]] = (0..levels).map(|n| rho[[q * levels + n, p * levels + n]]).sum();
        }
    }
    QubitDensityMatrix::new(m)
}

/// ⟨target|ρ|target⟩ for a normalized target.
pub fn state_fidelity(rho: &QubitDensityMatrix, target: &[C64; 4]) -> Result<f64> {
    let norm = target.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::TargetNotNormalized { norm });
    }
    let e = rho.entries();
    let mut acc = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            acc += target[i].conj() * e[[i, j]] * target[j];
        }
    }
    if acc.im.abs() > 1e-12 {
        return Err(Error::InvalidDensityMatrix(format!("fidelity has imaginary part {:.3e}", acc.im)));
    }
    Ok(acc.re)
}

/// Tr ρ².
pub fn purity(rho: &QubitDensityMatrix) -> f64 {
    let e = rho.entries();
    let mut acc = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            acc += (e[[i, j]] * e[[j, i]]).re;
        }
    }
    acc
}

/// Single-qubit map from (g, e) amplitudes to (+, −) amplitudes.
fn single_qubit_to_sy() -> [[C64; 2]; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [[C64::new(s, 0.0), C64::new(0.0, -s)], [C64::new(s, 0.0), C64::new(0.0, s)]]
}

/// 4×4 unitary W with (S_y-frame amplitudes) = W · (computational amplitudes).
pub fn computational_to_sy() -> Array2<C64> {
    let w = single_qubit_to_sy();
    let mut out = Array2::zeros((4, 4));
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    out[[2 * a + b, 2 * c + d]] = w[a][c] * w[b][d];
                }
            }
        }
    }
    out
}

/// Applies a 4×4 matrix on the qubit factor of a composite amplitude vector.
pub fn apply_qubit_operator(op: &Array2<C64>, amps: &Array1<C64>, levels: usize) -> Array1<C64> {
    let mut out = Array1::zeros(amps.len());
    for q in 0..4 {
        for p in 0..4 {
            let c = op[[q, p]];
            if c == ZERO {
                continue;
            }
            for n in 0..levels {
                out[q * levels + n] += c * amps[p * levels + n];
            }
        }
    }
    out
}

pub fn change_basis(state: &CompositeState, target: Frame) -> CompositeState {
    if state.frame() == target {
        return state.clone();
    }
    let w = computational_to_sy();
    let op = match target {
        Frame::SY => w,
        Frame::Computational => dagger(&w),
    };
    let amplitudes = apply_qubit_operator(&op, state.amplitudes(), state.cutoff().levels());
    CompositeState { amplitudes, frame: target, cutoff: state.cutoff(), normalized: state.is_normalized() }
}

pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|c| c.conj())
}

/// Collective spin operators S_α = ½(σ_α ⊗ 1 + 1 ⊗ σ_α) in the computational ordering.
pub fn spin_x() -> Array2<C64> {
    collective(&[[ZERO, ONE], [ONE, ZERO]])
}

pub fn spin_y() -> Array2<C64> {
    collective(&[[ZERO, -I], [I, ZERO]])
}

pub fn spin_z() -> Array2<C64> {
    collective(&[[ONE, ZERO], [ZERO, -ONE]])
}

/// S_φ = S_y cos φ + S_x sin φ.
pub fn spin_phi(phi: f64) -> Array2<C64> {
    spin_y() * C64::from(phi.cos()) + spin_x() * C64::from(phi.sin())
}

fn collective(sigma: &[[C64; 2]; 2]) -> Array2<C64> {
    let mut out = Array2::zeros((4, 4));
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    let left = if b == d { sigma[a][c] } else { ZERO };
                    let right = if a == c { sigma[b][d] } else { ZERO };
                    out[[2 * a + b, 2 * c + d]] = 0.5 * (left + right);
                }
            }
        }
    }
    out
}
