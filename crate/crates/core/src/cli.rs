//! Command-line front end: `coefficients`, `sweep`, `calibrate`, `trajectory`, `predict`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{
    default_phi_grid, estimate_lambda, fit_fringe, read_fringe_csv, simulate_fringe, synthetic_fringe, write_fringe_csv, Engine, FitReport, FringeSample,
    SequenceConfig,
};
use crate::hilbert::{computational_to_sy, dagger, thermal_probabilities, CompositeState, FockCutoff, Frame, QubitPair, C64};
use crate::ideal::{fmt, phase_space_trajectory, write_trajectory_csv, DimensionlessGateParams, PulseShape, TrajectoryPoint};
use crate::magnus::{predict_phase, CoefficientTable, InitialMotion, Normalization, PredictionReport, Provenance, QuadratureConfig};
use crate::oracle::{expectation_trajectory, fock_observables, thermal_observables, HamiltonianFrame, IntegratorConfig, IntegratorMethod, Observables};

pub const CACHE_ENV: &str = "MSGATE_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".msgate-cache";
pub const SWEEP_SCHEMA: &str = "# msgate-sweep v1";
pub const PARTIAL_MARKER: &str = "# PARTIAL";
/// Hard cap on |λ̃| accepted by sweeps.
pub const LAMBDA_CAP: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(name = "msgate", version, about = "Mølmer–Sørensen gate center-line detuning toolkit")]
pub struct Cli {
    /// TOML configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for cached coefficient tables (defaults to $MSGATE_CACHE_DIR or ./.msgate-cache).
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute and store the coefficient table.
    Coefficients(CoefficientsArgs),
    /// Predictions and oracle values over a λ̃ grid, with plot scripts.
    Sweep(SweepArgs),
    /// Fit a fringe and estimate λ.
    Calibrate(CalibrateArgs),
    /// Phase-space trajectory ⟨a⟩(τ).
    Trajectory(TrajectoryArgs),
    /// Single-point predictor dump as JSON.
    Predict(PredictArgs),
}

#[derive(Debug, Args, Default)]
pub struct GateFlags {
    #[arg(long)]
    pub omega_tilde: Option<f64>,
    #[arg(long)]
    pub tau_g: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Finest panel count for the first-order table.
    #[arg(long)]
    pub i_panels: Option<usize>,
    /// Finest panel count for the second-order table.
    #[arg(long)]
    pub j_panels: Option<usize>,
    #[arg(long)]
    pub guard: Option<usize>,
    /// RK4 steps per gate for the oracle.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CoefficientsArgs {
    #[command(flatten)]
    pub gate: GateFlags,
    /// Output file (defaults to the cache directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite a file whose provenance differs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub gate: GateFlags,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Fock inputs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Thermal inputs (mean phonon numbers), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_bar: Option<Vec<f64>>,
    /// Skip the oracle columns.
    #[arg(long)]
    pub no_oracle: bool,
    #[arg(long)]
    pub renormalized: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineArg {
    Oracle,
    Model,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub gate: GateFlags,
    /// Fringe CSV to fit.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate the fringe first.
    #[arg(long)]
    pub synthetic: bool,
    /// True λ for synthetic data [rad/s].
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Sideband detuning ε [rad/s].
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, conflicts_with = "n")]
    pub n_bar: Option<f64>,
    /// Shots per point for synthetic data; 0 gives noiseless probabilities.
    #[arg(long)]
    pub shots: Option<u32>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    /// Fit report JSON (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to store the synthetic fringe.
    #[arg(long)]
    pub data_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrameArg {
    Rescaled,
    Experimental,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub gate: GateFlags,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub lambda_tilde: f64,
    /// S_y branch ±1 of the input |±,±⟩ ⊗ |n⟩.
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub branch: f64,
    /// Computational input instead of a branch (gg, ge, eg, ee).
    #[arg(long)]
    pub state: Option<QubitPair>,
    #[arg(long, default_value_t = 0)]
    pub n: usize,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = FrameArg::Rescaled)]
    pub frame: FrameArg,
    /// Use the closed-form loop instead of the oracle (λ̃ must be 0).
    #[arg(long)]
    pub analytic: bool,
    #[arg(long, default_value = "trajectory.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub gate: GateFlags,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_tilde: f64,
    #[arg(long, default_value = "gg")]
    pub pair: QubitPair,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, conflicts_with = "n")]
    pub n_bar: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long)]
    pub renormalized: bool,
    /// Also run the oracle and include its values.
    #[arg(long)]
    pub oracle: bool,
}

/// Declarative configuration file. Every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub gate: GateSection,
    pub quadrature: QuadratureConfig,
    pub integrator: IntegratorSection,
    pub sweep: SweepSection,
    pub calibrate: CalibrateSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    pub omega_tilde: f64,
    pub tau_g: f64,
    pub n_max: usize,
}

impl Default for GateSection {
    fn default() -> Self {
        let p = DimensionlessGateParams::calibrated();
        GateSection { omega_tilde: p.omega_tilde, tau_g: p.tau_g, n_max: FockCutoff::DEFAULT_N_MAX }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub steps: usize,
    pub norm_tol: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        let IntegratorMethod::Rk4Fixed { steps } = d.method else { unreachable!() };
        IntegratorSection { steps, norm_tol: d.norm_tol }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
    pub n: Vec<usize>,
    pub n_bar: Vec<f64>,
    pub oracle: bool,
    pub normalization: Normalization,
    pub out_dir: PathBuf,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lambda_min: -0.1,
            lambda_max: 0.1,
            points: 41,
            n: vec![0, 1, 2, 3],
            n_bar: vec![],
            oracle: true,
            normalization: Normalization::Raw,
            out_dir: PathBuf::from("sweep"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub lambda: f64,
    pub epsilon: f64,
    pub n: Option<usize>,
    pub n_bar: Option<f64>,
    pub shots: u32,
    pub points: usize,
    pub seed: u64,
    pub engine: EngineArg,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            lambda: 0.0,
            epsilon: -2.0 * std::f64::consts::PI * 11e3,
            n: None,
            n_bar: None,
            shots: 200,
            points: 16,
            seed: 1,
            engine: EngineArg::Oracle,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", p.display())))
            }
        }
    }

    fn apply_gate(&mut self, g: &GateFlags) {
        if let Some(v) = g.omega_tilde {
            self.gate.omega_tilde = v;
        }
        if let Some(v) = g.tau_g {
            self.gate.tau_g = v;
        }
        if let Some(v) = g.n_max {
            self.gate.n_max = v;
        }
        if let Some(v) = g.i_panels {
            self.quadrature.i_panels = v;
        }
        if let Some(v) = g.j_panels {
            self.quadrature.j_panels = v;
        }
        if let Some(v) = g.guard {
            self.quadrature.guard = v;
        }
        if let Some(v) = g.steps {
            self.integrator.steps = v;
        }
    }

    pub fn params(&self) -> DimensionlessGateParams {
        DimensionlessGateParams { omega_tilde: self.gate.omega_tilde, tau_g: self.gate.tau_g, ..DimensionlessGateParams::calibrated() }
    }

    pub fn cutoff(&self) -> FockCutoff {
        FockCutoff::new(self.gate.n_max)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { cutoff: self.cutoff(), norm_tol: self.integrator.norm_tol, ..IntegratorConfig::default().with_steps(self.integrator.steps) }
    }
}

/// Resolved cache directory: flag, then environment, then the default.
pub fn cache_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
}

fn table_for(cfg: &FileConfig, cache: &Path) -> Result<CoefficientTable> {
    CoefficientTable::load_or_compute(cache, &cfg.params(), &PulseShape::Square, cfg.cutoff(), &cfg.quadrature)
}

/// Computes the table and writes it; refuses to replace a file of different provenance unless `force`.
pub fn cmd_coefficients(cfg: &FileConfig, out: &Path, force: bool) -> Result<CoefficientTable> {
    let params = cfg.params();
    let prov = Provenance::new(&params, &PulseShape::Square, cfg.cutoff(), &cfg.quadrature);
    if out.exists() && !force {
        let existing = CoefficientTable::load(out, None)?;
        let diff = existing.provenance.differences(&prov);
        if !diff.is_empty() {
            return Err(Error::ProvenanceMismatch(format!("{} was computed with {}; pass --force to replace it", out.display(), diff.join(", "))));
        }
    }
    let table = CoefficientTable::compute(&params, &PulseShape::Square, cfg.cutoff(), &cfg.quadrature)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    table.save(out)?;
    info!("wrote {} (scalars valid for n ≤ {})", out.display(), table.scalar_n_max());
    Ok(table)
}

/// One sweep row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub lambda_tilde: f64,
    pub motion: InitialMotion,
    pub phase_first: f64,
    pub phase_second: f64,
    pub predicted: PredictionReport,
    pub oracle: Option<Observables>,
}

pub fn sweep_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(min < max) {
        return Err(Error::InvalidParameter(format!("sweep grid needs min < max and ≥ 2 points (got {min}, {max}, {points})")));
    }
    if min.abs() > LAMBDA_CAP || max.abs() > LAMBDA_CAP {
        return Err(Error::InvalidParameter(format!("|λ̃| is capped at {LAMBDA_CAP}")));
    }
    Ok((0..points).map(|k| min + (max - min) * k as f64 / (points - 1) as f64).collect())
}

const SWEEP_COLUMNS: [&str; 21] = [
    "lambda_tilde",
    "n",
    "n_bar",
    "phase_first",
    "phase_second",
    "phase_oracle",
    "P_gg",
    "P_ge",
    "P_eg",
    "P_ee",
    "P_gg_oracle",
    "P_ge_oracle",
    "P_eg_oracle",
    "P_ee_oracle",
    "fidelity",
    "fidelity_oracle",
    "purity",
    "purity_oracle",
    "population_sum",
    "phase_reliable",
    "norm_drift",
];

fn sweep_record(row: &SweepRow) -> Vec<String> {
    let (n, n_bar) = match &row.motion {
        InitialMotion::Fock(n) => (n.to_string(), String::new()),
        InitialMotion::Thermal(d) => (String::new(), fmt(d.n_bar)),
    };
    let p = &row.predicted;
    let o = row.oracle.as_ref();
    let of = |f: &dyn Fn(&Observables) -> f64| o.map(|x| fmt(f(x))).unwrap_or_default();
    vec![
        fmt(row.lambda_tilde),
        n,
        n_bar,
        fmt(row.phase_first),
        fmt(row.phase_second),
        of(&|x| x.relative_phase),
        fmt(p.populations[0]),
        fmt(p.populations[1]),
        fmt(p.populations[2]),
        fmt(p.populations[3]),
        of(&|x| x.populations[0]),
        of(&|x| x.populations[1]),
        of(&|x| x.populations[2]),
        of(&|x| x.populations[3]),
        fmt(p.fidelity),
        of(&|x| x.fidelity),
        fmt(p.purity),
        of(&|x| x.purity),
        fmt(p.population_sum),
        o.map(|x| x.phase_reliable.to_string()).unwrap_or_default(),
        of(&|x| x.norm_drift),
    ]
}

fn sweep_point(cfg: &FileConfig, table: &CoefficientTable, motion: &InitialMotion, l: f64, oracle: bool) -> Result<SweepRow> {
    let norm = cfg.sweep.normalization;
    let predicted = PredictionReport::compute(QubitPair::GG, motion, l, 2, norm, table)?;
    let phase_first = predict_phase(QubitPair::GG, motion, l, 1, table)?;
    let oracle = if oracle {
        let params = cfg.params().with_lambda(l);
        let integ = cfg.integrator();
        Some(match motion {
            InitialMotion::Fock(n) => fock_observables(QubitPair::GG, *n, &params, &PulseShape::Square, &integ)?,
            InitialMotion::Thermal(d) => thermal_observables(QubitPair::GG, d.n_bar, &params, &PulseShape::Square, &integ, 1e-6)?.0,
        })
    } else {
        None
    };
    Ok(SweepRow { lambda_tilde: l, motion: motion.clone(), phase_first, phase_second: predicted.phase, predicted, oracle })
}

/// Runs the sweep, writes `sweep.csv` and the plot scripts into `out_dir`.
///
/// Rows are written in grid order (inputs outer, λ̃ inner). If any point fails, the rows
/// before it are kept, a partial-output marker line is appended and the error is returned.
pub fn cmd_sweep(cfg: &FileConfig, table: &CoefficientTable, out_dir: &Path) -> Result<Vec<SweepRow>> {
    let s = &cfg.sweep;
    let grid = sweep_grid(s.lambda_min, s.lambda_max, s.points)?;
    let mut motions: Vec<InitialMotion> = s.n.iter().map(|&n| InitialMotion::Fock(n)).collect();
    for &nb in &s.n_bar {
        motions.push(InitialMotion::Thermal(thermal_probabilities(nb, cfg.cutoff())?));
    }
    if motions.is_empty() {
        return Err(Error::InvalidParameter("sweep has no initial states".into()));
    }
    for m in &motions {
        m.weights(table)?;
    }
    let jobs: Vec<(InitialMotion, f64)> = motions.iter().flat_map(|m| grid.iter().map(move |&l| (m.clone(), l))).collect();
    let results: Vec<Result<SweepRow>> = jobs.par_iter().map(|(m, l)| sweep_point(cfg, table, m, *l, s.oracle)).collect();

    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("sweep.csv");
    let mut file = BufWriter::new(File::create(&path)?);
    writeln!(file, "{SWEEP_SCHEMA}")?;
    let mut rows = Vec::new();
    let mut failure = None;
    {
        let mut w = csv::Writer::from_writer(&mut file);
        w.write_record(SWEEP_COLUMNS)?;
        for r in results {
            match r {
                Ok(row) => {
                    w.write_record(sweep_record(&row))?;
                    rows.push(row);
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        w.flush()?;
    }
    if let Some(e) = failure {
        writeln!(file, "{PARTIAL_MARKER}: {e}")?;
        file.flush()?;
        return Err(e);
    }
    file.flush()?;
    write_plot_scripts(out_dir, &motions, grid.len())?;
    Ok(rows)
}

fn write_plot_scripts(out_dir: &Path, motions: &[InitialMotion], points: usize) -> Result<()> {
    let col = |name: &str| SWEEP_COLUMNS.iter().position(|c| *c == name).unwrap() + 1;
    let blocks: Vec<String> = motions.iter().map(|m| m.label()).collect();
    let figures: [(&str, &str, Vec<(String, &str)>); 4] = [
        ("phase", "relative phase [rad]", vec![("phase_second".into(), "second order"), ("phase_first".into(), "first order"), ("phase_oracle".into(), "numerics")]),
        (
            "populations",
            "population",
            vec![
                ("P_gg".into(), "P(gg)"),
                ("P_ee".into(), "P(ee)"),
                ("P_ge".into(), "P(ge)"),
                ("P_gg_oracle".into(), "P(gg) numerics"),
                ("P_ee_oracle".into(), "P(ee) numerics"),
                ("P_ge_oracle".into(), "P(ge) numerics"),
            ],
        ),
        ("purity", "purity", vec![("purity".into(), "second order"), ("purity_oracle".into(), "numerics")]),
        ("infidelity", "1 - fidelity", vec![("1-fidelity".into(), "second order"), ("1-fidelity_oracle".into(), "numerics")]),
    ];
    for (name, ylabel, series) in figures {
        let mut s = String::new();
        s.push_str("set datafile separator ','\n");
        s.push_str(&format!("set terminal pngcairo size 1000,700\nset output '{name}.png'\n"));
        s.push_str("set xlabel 'center-line detuning λ/ε'\n");
        s.push_str(&format!("set ylabel '{ylabel}'\nset key outside\n"));
        let mut plots = Vec::new();
        for (b, label) in blocks.iter().enumerate() {
            for (column, what) in &series {
                let expr = match column.strip_prefix("1-") {
                    Some(c) => format!("(1-${})", col(c)),
                    None => format!("{}", col(column)),
                };
                let (first, last) = (b * points, (b + 1) * points - 1);
                plots.push(format!("'sweep.csv' skip 1 every ::{first}::{last} using 1:{expr} with lines title '{label} {what}'"));
            }
        }
        s.push_str("plot ");
        s.push_str(&plots.join(", \\\n     "));
        s.push('\n');
        std::fs::write(out_dir.join(format!("{name}.gp")), s)?;
    }
    Ok(())
}

fn motion_from(n: Option<usize>, n_bar: Option<f64>, cutoff: FockCutoff) -> Result<InitialMotion> {
    match (n, n_bar) {
        (_, Some(nb)) => Ok(InitialMotion::Thermal(thermal_probabilities(nb, cutoff)?)),
        (Some(n), None) => Ok(InitialMotion::Fock(n)),
        (None, None) => Ok(InitialMotion::Fock(0)),
    }
}

/// Fits a fringe (read or synthesized) and inverts it for λ.
pub fn cmd_calibrate(cfg: &FileConfig, table: &CoefficientTable, data: Option<&Path>, data_out: Option<&Path>) -> Result<FitReport> {
    let c = &cfg.calibrate;
    let motion = motion_from(c.n, c.n_bar, cfg.cutoff())?;
    let samples: Vec<FringeSample> = match data {
        Some(path) => read_fringe_csv(BufReader::new(File::open(path)?))?,
        None => {
            let engine = match c.engine {
                EngineArg::Oracle => Engine::Oracle,
                EngineArg::Model => Engine::FirstOrderModel,
            };
            let seq = SequenceConfig::calibrated(motion.clone(), c.lambda, c.epsilon, engine);
            let grid = default_phi_grid(c.points);
            let p = simulate_fringe(&seq, &grid, Some(table), &cfg.integrator())?;
            let samples = if c.shots == 0 {
                grid.iter().zip(&p).map(|(&phi_d, &p_ee)| FringeSample { phi_d, p_ee, shots: None }).collect()
            } else {
                synthetic_fringe(&grid, &p, c.shots, c.seed)?
            };
            if let Some(out) = data_out {
                write_fringe_csv(BufWriter::new(File::create(out)?), &samples)?;
            }
            samples
        }
    };
    let fit = fit_fringe(&samples)?;
    if !fit.reliable {
        warn!("fringe contrast {:.3e} is below three standard deviations", fit.amplitude);
    }
    let est = estimate_lambda(&fit, &motion, c.epsilon, table)?;
    if let Some(caveat) = &est.caveat {
        warn!("{caveat}");
    }
    Ok(FitReport::new(&fit, &est))
}

/// Writes the ⟨a⟩(τ) trajectory. The analytic path requires λ̃ = 0 and a branch input.
pub fn cmd_trajectory(cfg: &FileConfig, args: &TrajectoryArgs) -> Result<Vec<TrajectoryPoint>> {
    let params = cfg.params().with_lambda(args.lambda_tilde);
    let branch = args.branch;
    let (points, tag) = if args.analytic {
        if args.lambda_tilde != 0.0 || args.state.is_some() {
            return Err(Error::InvalidParameter("the analytic trajectory exists only for λ̃ = 0 and branch inputs".into()));
        }
        (phase_space_trajectory(&params, branch, args.points)?, "analytic")
    } else {
        let cutoff = cfg.cutoff();
        let init = match args.state {
            Some(pair) => CompositeState::computational(pair, args.n, cutoff)?,
            None => {
                if branch != 1.0 && branch != -1.0 {
                    return Err(Error::InvalidParameter(format!("branch must be +1 or −1, got {branch}")));
                }
                // |+,+⟩ for +1 and |−,−⟩ for −1, expressed in the computational frame.
                let s = if branch > 0.0 { 0 } else { 3 };
                let wd = dagger(&computational_to_sy());
                let q: [C64; 4] = std::array::from_fn(|i| wd[[i, s]]);
                CompositeState::product(q, args.n, Frame::Computational, cutoff)?
            }
        };
        let frame = match args.frame {
            FrameArg::Rescaled => HamiltonianFrame::RescaledInteraction,
            FrameArg::Experimental => HamiltonianFrame::Experimental,
        };
        let traj = expectation_trajectory(&init, frame, &params, &PulseShape::Square, (0.0, params.span()), &cfg.integrator(), args.points)?;
        let tag = match args.frame {
            FrameArg::Rescaled => "rescaled_interaction",
            FrameArg::Experimental => "experimental",
        };
        (traj.into_iter().map(|(tau, alpha)| TrajectoryPoint { tau, alpha, branch }).collect(), tag)
    };
    write_trajectory_csv(BufWriter::new(File::create(&args.out)?), &points, Some(tag))?;
    let script = format!(
        "set datafile separator ','\nset terminal pngcairo size 700,700\nset output 'trajectory.png'\nset size ratio -1\nset xlabel 'Re ⟨a⟩'\nset ylabel 'Im ⟨a⟩'\nplot '{}' skip 1 using 2:3 with lines title '{tag}'\n",
        args.out.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
    );
    std::fs::write(args.out.with_extension("gp"), script)?;
    Ok(points)
}

pub fn cmd_predict(cfg: &FileConfig, table: &CoefficientTable, args: &PredictArgs) -> Result<PredictionReport> {
    let motion = motion_from(args.n, args.n_bar, cfg.cutoff())?;
    let norm = if args.renormalized { Normalization::Renormalized } else { Normalization::Raw };
    let report = PredictionReport::compute(args.pair, &motion, args.lambda_tilde, args.order, norm, table)?;
    if !args.oracle {
        return Ok(report);
    }
    let params = cfg.params().with_lambda(args.lambda_tilde);
    let obs = match &motion {
        InitialMotion::Fock(n) => fock_observables(args.pair, *n, &params, &PulseShape::Square, &cfg.integrator())?,
        InitialMotion::Thermal(d) => thermal_observables(args.pair, d.n_bar, &params, &PulseShape::Square, &cfg.integrator(), 1e-6)?.0,
    };
    Ok(report.with_oracle(obs))
}

/// Parses arguments, runs the command and maps errors to exit codes (2 config, 3 numerical).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                2
            } else {
                3
            }
        }
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = FileConfig::load(cli.config.as_deref())?;
    let cache = cache_dir(cli.cache_dir.as_deref());
    match cli.command {
        Command::Coefficients(a) => {
            cfg.apply_gate(&a.gate);
            let out = match a.out {
                Some(p) => p,
                None => {
                    let prov = Provenance::new(&cfg.params(), &PulseShape::Square, cfg.cutoff(), &cfg.quadrature);
                    cache.join(format!("{}.json", prov.cache_key()))
                }
            };
            cmd_coefficients(&cfg, &out, a.force)?;
            println!("{}", out.display());
        }
        Command::Sweep(a) => {
            cfg.apply_gate(&a.gate);
            let s = &mut cfg.sweep;
            if let Some(v) = a.lambda_min {
                s.lambda_min = v;
            }
            if let Some(v) = a.lambda_max {
                s.lambda_max = v;
            }
            if let Some(v) = a.points {
                s.points = v;
            }
            if let Some(v) = a.n {
                s.n = v;
            }
            if let Some(v) = a.n_bar {
                s.n_bar = v;
            }
            if a.no_oracle {
                s.oracle = false;
            }
            if a.renormalized {
                s.normalization = Normalization::Renormalized;
            }
            if let Some(v) = a.out_dir {
                s.out_dir = v;
            }
            let table = table_for(&cfg, &cache)?;
            let rows = cmd_sweep(&cfg, &table, &cfg.sweep.out_dir.clone())?;
            println!("{} rows written to {}", rows.len(), cfg.sweep.out_dir.join("sweep.csv").display());
        }
        Command::Calibrate(a) => {
            cfg.apply_gate(&a.gate);
            if a.data.is_none() && !a.synthetic {
                return Err(Error::InvalidParameter("calibrate needs --data FILE or --synthetic".into()));
            }
            let c = &mut cfg.calibrate;
            if let Some(v) = a.lambda {
                c.lambda = v;
            }
            if let Some(v) = a.epsilon {
                c.epsilon = v;
            }
            if a.n.is_some() || a.n_bar.is_some() {
                c.n = a.n;
                c.n_bar = a.n_bar;
            }
            if let Some(v) = a.shots {
                c.shots = v;
            }
            if let Some(v) = a.points {
                c.points = v;
            }
            if let Some(v) = a.seed {
                c.seed = v;
            }
            if let Some(v) = a.engine {
                c.engine = v;
            }
            let table = table_for(&cfg, &cache)?;
            let report = cmd_calibrate(&cfg, &table, a.data.as_deref(), a.data_out.as_deref())?;
            write_json(&report, a.out.as_deref())?;
        }
        Command::Trajectory(a) => {
            cfg.apply_gate(&a.gate);
            let pts = cmd_trajectory(&cfg, &a)?;
            println!("{} points written to {}", pts.len(), a.out.display());
        }
        Command::Predict(a) => {
            cfg.apply_gate(&a.gate);
            let table = table_for(&cfg, &cache)?;
            let report = cmd_predict(&cfg, &table, &a)?;
            write_json(&report, None)?;
        }
    }
    Ok(())
}
