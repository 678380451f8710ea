use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::quadrature::{compute_i, compute_j, QuadratureConfig, LEAKAGE_TOL};
use crate::error::{Error, Result};
use crate::hilbert::{FockCutoff, C64};
use crate::ideal::{DimensionlessGateParams, PulseShape};

pub const TABLE_FORMAT: &str = "msgate-coefficients";
pub const TABLE_VERSION: u32 = 1;
pub const QUADRATURE_SCHEME: &str = "trapezoid-romberg3/nested-trapezoid-romberg3";

/// Largest accepted tail estimate on the truncated sums behind b and c.
pub const TAIL_TOL: f64 = 1e-8;

/// Everything a table depends on. Tables with different provenance are never mixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pulse: String,
    pub omega_tilde: f64,
    pub tau_g: f64,
    pub n_max: usize,
    pub guard: usize,
    pub scheme: String,
    pub i_panels: usize,
    pub j_panels: usize,
    pub tol: f64,
}

impl Provenance {
    pub fn new(params: &DimensionlessGateParams, pulse: &PulseShape, cutoff: FockCutoff, config: &QuadratureConfig) -> Self {
        Provenance {
            pulse: pulse.label().to_string(),
            omega_tilde: params.omega_tilde,
            tau_g: params.tau_g,
            n_max: cutoff.n_max,
            guard: config.guard,
            scheme: QUADRATURE_SCHEME.to_string(),
            i_panels: config.i_panels,
            j_panels: config.j_panels,
            tol: config.tol,
        }
    }

    /// Lists the fields that differ from `other`.
    pub fn differences(&self, other: &Provenance) -> Vec<String> {
        let mut out = Vec::new();
        let mut cmp = |name: &str, a: String, b: String| {
            if a != b {
                out.push(format!("{name}: {a} vs {b}"));
            }
        };
        cmp("pulse", self.pulse.clone(), other.pulse.clone());
        cmp("omega_tilde", self.omega_tilde.to_string(), other.omega_tilde.to_string());
        cmp("tau_g", self.tau_g.to_string(), other.tau_g.to_string());
        cmp("n_max", self.n_max.to_string(), other.n_max.to_string());
        cmp("guard", self.guard.to_string(), other.guard.to_string());
        cmp("scheme", self.scheme.clone(), other.scheme.clone());
        cmp("i_panels", self.i_panels.to_string(), other.i_panels.to_string());
        cmp("j_panels", self.j_panels.to_string(), other.j_panels.to_string());
        cmp("tol", self.tol.to_string(), other.tol.to_string());
        out
    }

    /// Short deterministic file stem for caching.
    pub fn cache_key(&self) -> String {
        format!(
            "coeff_{}_om{:.6}_tg{:.6}_n{}_g{}_i{}_j{}",
            self.pulse, self.omega_tilde, self.tau_g, self.n_max, self.guard, self.i_panels, self.j_panels
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDiagnostics {
    /// max |Romberg h⁶ − h⁴| over I entries.
    pub i_refinement_change: f64,
    /// Same for the guard-band-valid J entries.
    pub j_refinement_change: f64,
    /// Per-column displacement leakage beyond the working dimension of the J products.
    pub j_leakage: Vec<f64>,
    /// Tail estimate of the b and c sums for each n with derived scalars.
    pub scalar_tails: Vec<f64>,
    /// max |Im a_n| before discarding the imaginary part.
    pub a_imag_max: f64,
    /// max |Re I + Im I| over all entries.
    pub i_structure_residual: f64,
    /// c_gg + c_ee + 2 c_eg per n.
    pub population_sum: Vec<f64>,
}

/// Detuning-independent coefficient tables and the scalars derived from them.
///
/// Matrices are indexed `[m, n]` for the symbol with upper index n and lower
/// index m, e.g. `i[[m, n]] = I^n_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub provenance: Provenance,
    pub i: Array2<C64>,
    pub j1: Array2<C64>,
    pub j2: Array2<C64>,
    pub j3: Array2<C64>,
    pub jp: Array2<C64>,
    pub jm: Array2<C64>,
    pub a: Vec<f64>,
    pub b: Vec<C64>,
    pub c_gg: Vec<f64>,
    pub c_ee: Vec<f64>,
    pub c_eg: Vec<f64>,
    pub diagnostics: TableDiagnostics,
}

pub(crate) fn f_even(n: usize, m: usize) -> f64 {
    if (n + m) % 2 == 0 {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn f_odd(n: usize, m: usize) -> f64 {
    1.0 - f_even(n, m)
}

impl CoefficientTable {
    /// Runs both quadratures and derives a, b, c.
    pub fn compute(params: &DimensionlessGateParams, pulse: &PulseShape, cutoff: FockCutoff, config: &QuadratureConfig) -> Result<Self> {
        let first = compute_i(params, pulse, cutoff, config)?;
        let second = compute_j(params, pulse, cutoff, config)?;
        let provenance = Provenance::new(params, pulse, cutoff, config);
        let two = C64::from(2.0);
        let jp = (&second.j1 + &second.j2 + &second.j3 * two) / two;
        let jm = (&second.j1 + &second.j2 - &second.j3 * two) / two;
        let mut table = CoefficientTable {
            provenance,
            i: first.table,
            j1: second.j1,
            j2: second.j2,
            j3: second.j3,
            jp,
            jm,
            a: vec![],
            b: vec![],
            c_gg: vec![],
            c_ee: vec![],
            c_eg: vec![],
            diagnostics: TableDiagnostics {
                i_refinement_change: first.refinement_change,
                j_refinement_change: second.refinement_change,
                j_leakage: second.leakage,
                scalar_tails: vec![],
                a_imag_max: 0.0,
                i_structure_residual: 0.0,
                population_sum: vec![],
            },
        };
        table.derive_scalars()?;
        Ok(table)
    }

    /// Default calibrated gate, default cutoff and quadrature.
    pub fn calibrated_default() -> Result<Self> {
        Self::compute(&DimensionlessGateParams::calibrated(), &PulseShape::Square, FockCutoff::default(), &QuadratureConfig::default())
    }

    pub fn n_max(&self) -> usize {
        self.provenance.n_max
    }

    /// Largest n with derived scalars.
    pub fn scalar_n_max(&self) -> usize {
        self.a.len().saturating_sub(1)
    }

    pub fn check_n(&self, n: usize) -> Result<()> {
        if n >= self.a.len() {
            return Err(Error::OutOfTableRange { n, max: self.scalar_n_max() });
        }
        Ok(())
    }

    /// I^n_m.
    pub fn i_nm(&self, n: usize, m: usize) -> C64 {
        self.i[[m, n]]
    }

    pub fn a(&self, n: usize) -> Result<f64> {
        self.check_n(n)?;
        Ok(self.a[n])
    }

    pub fn b(&self, n: usize) -> Result<C64> {
        self.check_n(n)?;
        Ok(self.b[n])
    }

    pub fn c(&self, n: usize) -> Result<(f64, f64, f64)> {
        self.check_n(n)?;
        Ok((self.c_gg[n], self.c_ee[n], self.c_eg[n]))
    }

    /// Whether J entry (m, n) is free of guard-band truncation.
    pub fn j_entry_valid(&self, m: usize, n: usize) -> bool {
        let l = &self.diagnostics.j_leakage;
        (l[m] * l[n]).sqrt() <= LEAKAGE_TOL
    }

    /// Computes a, b, c for every n whose truncated sums and J diagonal are trustworthy.
    fn derive_scalars(&mut self) -> Result<()> {
        let levels = self.provenance.n_max + 1;
        let i = &self.i;
        let neg1_plus_i = C64::new(-1.0, 1.0);
        let one_minus_i = C64::new(1.0, -1.0);
        let tail_from = levels.saturating_sub(5);
        let (mut a, mut b, mut c_gg, mut c_ee, mut c_eg, mut tails) = (vec![], vec![], vec![], vec![], vec![], vec![]);
        let mut a_imag_max = 0.0f64;
        for n in 0..levels {
            let mut cross = C64::from(0.0);
            let (mut s_gg, mut s_ee, mut s_eg) = (0.0, 0.0, 0.0);
            let mut tail = 0.0;
            for m in 0..levels {
                let up = i[[m, n]];
                let down = i[[n, m]];
                let fe = f_even(n, m);
                let t_cross = (up - down) * (up + down).conj() * fe;
                let t_gg = (up + down).norm_sqr() * fe;
                let t_ee = (up - down).norm_sqr() * fe;
                let t_eg = down.norm_sqr() * f_odd(n, m);
                cross += t_cross;
                s_gg += t_gg;
                s_ee += t_ee;
                s_eg += t_eg;
                if m >= tail_from {
                    tail += t_cross.norm() + t_gg + t_ee + t_eg;
                }
            }
            if tail > TAIL_TOL || !self.j_entry_valid(n, n) {
                if n == 0 {
                    return Err(Error::TailTooLarge { n, tail });
                }
                break;
            }
            let an = 4.0 * i[[n, n]] / neg1_plus_i;
            a_imag_max = a_imag_max.max(an.im.abs());
            let jp = self.jp[[n, n]];
            let jm = self.jm[[n, n]];
            a.push(an.re);
            b.push(-one_minus_i * (jp.conj() - jm) + 2.0 * cross);
            c_gg.push(-jp.re - jp.im + s_gg);
            c_ee.push(jm.re - jm.im + s_ee);
            c_eg.push(s_eg);
            tails.push(tail);
        }
        self.diagnostics.population_sum = (0..a.len()).map(|n| c_gg[n] + c_ee[n] + 2.0 * c_eg[n]).collect();
        self.diagnostics.i_structure_residual = i.iter().map(|c| (c.re + c.im).abs()).fold(0.0, f64::max);
        self.diagnostics.a_imag_max = a_imag_max;
        self.diagnostics.scalar_tails = tails;
        self.a = a;
        self.b = b;
        self.c_gg = c_gg;
        self.c_ee = c_ee;
        self.c_eg = c_eg;
        Ok(())
    }

    /// Default-cutoff check used by consumers that rely on the closed-loop gate.
    pub fn is_calibrated(&self) -> bool {
        (self.provenance.omega_tilde.abs() - 0.5).abs() < 1e-12 && (self.provenance.tau_g.abs() - 2.0 * PI).abs() < 1e-12
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TableDocument::from_table(self);
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TableDocument = serde_json::from_str(text)?;
        doc.into_table()
    }

    /// Writes the versioned JSON document. Identical tables give identical bytes.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Loads a table; with `expected` set, refuses any provenance mismatch.
    pub fn load(path: &Path, expected: Option<&Provenance>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let table = Self::from_json(&text)?;
        if let Some(exp) = expected {
            let diff = table.provenance.differences(exp);
            if !diff.is_empty() {
                return Err(Error::ProvenanceMismatch(format!("{}: {}", path.display(), diff.join(", "))));
            }
        }
        Ok(table)
    }

    /// Loads the table from `dir` if present with matching provenance, otherwise computes and stores it.
    pub fn load_or_compute(dir: &Path, params: &DimensionlessGateParams, pulse: &PulseShape, cutoff: FockCutoff, config: &QuadratureConfig) -> Result<Self> {
        let prov = Provenance::new(params, pulse, cutoff, config);
        let path = dir.join(format!("{}.json", prov.cache_key()));
        if path.exists() {
            return Self::load(&path, Some(&prov));
        }
        let table = Self::compute(params, pulse, cutoff, config)?;
        std::fs::create_dir_all(dir)?;
        table.save(&path)?;
        Ok(table)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComplexMatrix {
    rows: usize,
    cols: usize,
    /// Row-major (re, im) pairs.
    data: Vec<[f64; 2]>,
}

impl ComplexMatrix {
    fn from_array(a: &Array2<C64>) -> Self {
        ComplexMatrix { rows: a.nrows(), cols: a.ncols(), data: a.iter().map(|c| [c.re, c.im]).collect() }
    }

    fn to_array(&self, name: &str) -> Result<Array2<C64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Schema(format!("matrix {name}: {} entries for {}×{}", self.data.len(), self.rows, self.cols)));
        }
        Array2::from_shape_vec((self.rows, self.cols), self.data.iter().map(|p| C64::new(p[0], p[1])).collect())
            .map_err(|e| Error::Schema(format!("matrix {name}: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableDocument {
    format: String,
    version: u32,
    provenance: Provenance,
    index_convention: String,
    i: ComplexMatrix,
    j1: ComplexMatrix,
    j2: ComplexMatrix,
    j3: ComplexMatrix,
    jp: ComplexMatrix,
    jm: ComplexMatrix,
    a: Vec<f64>,
    b: Vec<[f64; 2]>,
    c_gg: Vec<f64>,
    c_ee: Vec<f64>,
    c_eg: Vec<f64>,
    diagnostics: TableDiagnostics,
}

impl TableDocument {
    fn from_table(t: &CoefficientTable) -> Self {
        TableDocument {
            format: TABLE_FORMAT.to_string(),
            version: TABLE_VERSION,
            provenance: t.provenance.clone(),
            index_convention: "row m, column n holds the coefficient with upper index n and lower index m".to_string(),
            i: ComplexMatrix::from_array(&t.i),
            j1: ComplexMatrix::from_array(&t.j1),
            j2: ComplexMatrix::from_array(&t.j2),
            j3: ComplexMatrix::from_array(&t.j3),
            jp: ComplexMatrix::from_array(&t.jp),
            jm: ComplexMatrix::from_array(&t.jm),
            a: t.a.clone(),
            b: t.b.iter().map(|c| [c.re, c.im]).collect(),
            c_gg: t.c_gg.clone(),
            c_ee: t.c_ee.clone(),
            c_eg: t.c_eg.clone(),
            diagnostics: t.diagnostics.clone(),
        }
    }

    fn into_table(self) -> Result<CoefficientTable> {
        if self.format != TABLE_FORMAT {
            return Err(Error::Schema(format!("unexpected format '{}'", self.format)));
        }
        if self.version != TABLE_VERSION {
            return Err(Error::Schema(format!("unsupported table version {} (expected {TABLE_VERSION})", self.version)));
        }
        let levels = self.provenance.n_max + 1;
        let table = CoefficientTable {
            i: self.i.to_array("i")?,
            j1: self.j1.to_array("j1")?,
            j2: self.j2.to_array("j2")?,
            j3: self.j3.to_array("j3")?,
            jp: self.jp.to_array("jp")?,
            jm: self.jm.to_array("jm")?,
            a: self.a,
            b: self.b.iter().map(|p| C64::new(p[0], p[1])).collect(),
            c_gg: self.c_gg,
            c_ee: self.c_ee,
            c_eg: self.c_eg,
            diagnostics: self.diagnostics,
            provenance: self.provenance,
        };
        for (name, m) in [("i", &table.i), ("j1", &table.j1), ("j2", &table.j2), ("j3", &table.j3), ("jp", &table.jp), ("jm", &table.jm)] {
            if m.dim() != (levels, levels) {
                return Err(Error::Schema(format!("matrix {name} has shape {:?}, expected {levels}×{levels}", m.dim())));
            }
        }
        let k = table.a.len();
        if [table.b.len(), table.c_gg.len(), table.c_ee.len(), table.c_eg.len()].iter().any(|&l| l != k) || k > levels {
            return Err(Error::Schema("derived scalar vectors have inconsistent lengths".into()));
        }
        if table.diagnostics.j_leakage.len() != levels {
            return Err(Error::Schema("leakage diagnostics length differs from n_max + 1".into()));
        }
        Ok(table)
    }
}
