//! Config-driven experiments: a single estimate, parameter sweeps, the
//! finite-difference step study and spectator dilution.
//!
//! Each experiment is computed in full before anything is written; the CSV
//! and JSON outputs are then written to temporary files and renamed into
//! place. CSV files start with a schema line and the resolved config, so a
//! run is self-describing and byte-reproducible for a fixed seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::measures::{
    estimate_measures, estimate_with_sampler, fd_convergence_study, pair_flux, BootstrapOptions, ConvergenceStudy, Estimate, MeasureResult, TimeGrid,
};
use crate::model::{build_dephasing_model, build_spin_chain, sample_disorder, DisorderSpec, HamiltonianParts, SpinChainParams};
use crate::propagator::SpectralPropagator;
use crate::state::{haar_random_state, PureState};
use crate::stats::RngSpec;
use crate::{Error, Result};

/// Version tag in every CSV schema line.
pub const SCHEMA_VERSION: u32 = 1;
/// Slack allowed on the `n_avg ≤ n_pure ≤ n_blp_lower` ordering and the
/// `σ_avg = σ₊ + σ₋` decomposition.
pub const INVARIANT_SLACK: f64 = 1e-12;

// Stream ids outside the per-pair range.
const DISORDER_STREAM: u64 = u64::MAX - 1;
const FD_PAIR_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Measure,
    SweepMu,
    SweepSigma,
    FdConvergence,
    ToyScaling,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Measure => "measure",
            Self::SweepMu => "sweep-mu",
            Self::SweepSigma => "sweep-sigma",
            Self::FdConvergence => "fd-convergence",
            Self::ToyScaling => "toy-scaling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Disordered `E S E … E` spin chain.
    Chain,
    /// Probe qubit ZZ-coupled to one environment qubit, plus spectators.
    Dephasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvironmentChoice {
    /// `|0…0⟩` for the chain, `|+⟩` for the dephasing model.
    Auto,
    Zero,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FdPair {
    /// Haar-random pair drawn from the run seed.
    Haar,
    /// `|+⟩, |−⟩` on the first system qubit, `|0⟩` on the rest.
    PlusMinus,
}

/// How chain disorder enters the Monte Carlo average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisorderMode {
    /// One disorder realization per run; samples differ only in the state pair.
    Fixed,
    /// Every sample draws its own disorder realization as well as its pair.
    PerPair,
}

/// Finite-difference step: `"auto"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep {
    Auto,
    Fixed(f64),
}

impl Serialize for FdStep {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FdStep::Auto => s.serialize_str("auto"),
            FdStep::Fixed(h) => s.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for FdStep {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(h) => Ok(FdStep::Fixed(h)),
            Raw::Int(h) => Ok(FdStep::Fixed(h as f64)),
            Raw::Text(t) if t == "auto" => Ok(FdStep::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("fd_step must be \"auto\" or a number, got {t:?}"))),
        }
    }
}

/// Flat key–value experiment description (TOML syntax).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelKind,
    pub n_system: usize,
    pub omega_mean: f64,
    pub omega_std: f64,
    pub coupling_mean: f64,
    pub coupling_std: f64,
    pub disorder: DisorderMode,
    pub dephasing_coupling: f64,
    pub n_spectators: usize,
    pub environment: EnvironmentChoice,
    pub t_max: f64,
    pub n_points: usize,
    pub fd_step: FdStep,
    pub n_pairs: usize,
    pub seed: u64,
    pub level: f64,
    pub n_resamples: usize,
    pub mu_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub spectators: Vec<usize>,
    pub t_probe: f64,
    pub h_ratios: Vec<f64>,
    pub fd_pair: FdPair,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Measure,
            model: ModelKind::Chain,
            n_system: 3,
            omega_mean: 0.2,
            omega_std: 0.05,
            coupling_mean: 0.8,
            coupling_std: 0.05,
            disorder: DisorderMode::PerPair,
            dephasing_coupling: 1.0,
            n_spectators: 0,
            environment: EnvironmentChoice::Auto,
            t_max: 5.0,
            n_points: 101,
            fd_step: FdStep::Auto,
            n_pairs: 200,
            seed: 1,
            level: 0.90,
            n_resamples: 2000,
            mu_values: (1..=10).map(|k| k as f64 / 10.0).collect(),
            sigma_values: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            spectators: vec![0, 1, 2, 3, 4],
            t_probe: 0.4,
            h_ratios: (0..=12).map(|k| 10f64.powf(-3.0 + k as f64 / 4.0)).collect(),
            fd_pair: FdPair::Haar,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return fail(format!("t_max must be positive, got {}", self.t_max));
        }
        if self.n_points < 2 {
            return fail(format!("n_points must be at least 2, got {}", self.n_points));
        }
        if let FdStep::Fixed(h) = self.fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return fail(format!("fd_step must be positive, got {h}"));
            }
        }
        if self.n_pairs < 2 {
            return fail(format!("n_pairs must be at least 2, got {}", self.n_pairs));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.n_resamples == 0 {
            return fail("n_resamples must be positive".into());
        }
        if self.model == ModelKind::Chain && self.n_system == 0 {
            return fail("n_system must be at least 1 for the chain model".into());
        }
        DisorderSpec::new(self.omega_mean, self.omega_std, self.coupling_mean, self.coupling_std)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.sigma_values.iter().any(|s| !(*s >= 0.0)) {
            return fail("sigma_values must be non-negative".into());
        }
        match self.experiment {
            ExperimentKind::SweepMu if self.mu_values.is_empty() => fail("mu_values is empty".into()),
            ExperimentKind::SweepSigma if self.sigma_values.is_empty() => fail("sigma_values is empty".into()),
            ExperimentKind::ToyScaling if self.spectators.is_empty() => fail("spectators is empty".into()),
            ExperimentKind::FdConvergence if self.h_ratios.iter().any(|r| !(*r > 0.0)) || self.h_ratios.is_empty() => {
                fail("h_ratios must be non-empty and positive".into())
            }
            _ => Ok(()),
        }
    }

    fn disorder(&self) -> DisorderSpec {
        DisorderSpec {
            omega_mean: self.omega_mean,
            omega_std: self.omega_std,
            coupling_mean: self.coupling_mean,
            coupling_std: self.coupling_std,
        }
    }

    fn bootstrap(&self) -> BootstrapOptions {
        BootstrapOptions {
            level: self.level,
            n_resamples: self.n_resamples,
        }
    }
}

/// Model quantities echoed into every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub num_qubits: usize,
    pub system_qubits: usize,
    /// Disorder realizations averaged over (1 unless per-pair disorder).
    pub realizations: usize,
    /// `‖J‖` of the model; with per-pair disorder, the largest triangle
    /// bound `2 Σ|J_k|` over all realizations.
    pub noise_strength: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub correlation_time: f64,
    pub fd_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<SpinChainParams>,
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

/// A built model ready to be sampled.
pub struct PreparedModel {
    pub parts: HamiltonianParts,
    pub propagator: SpectralPropagator,
    pub grid: TimeGrid,
    pub summary: ModelSummary,
}

/// Build the Hamiltonian, propagator and grid for one run.
pub fn prepare_model(cfg: &ExperimentConfig) -> Result<PreparedModel> {
    let (parts, chain) = match cfg.model {
        ModelKind::Chain => {
            let mut rng = RngSpec::new(cfg.seed, DISORDER_STREAM).rng();
            let params = sample_disorder(&cfg.disorder(), cfg.n_system, &mut rng)?;
            (build_spin_chain(&params)?, Some(params))
        }
        ModelKind::Dephasing => (build_dephasing_model(cfg.dephasing_coupling, cfg.n_spectators)?, None),
    };
    let env = environment_state(cfg, parts.partition.environment_qubits())?;
    let propagator = SpectralPropagator::prepare(&parts, env)?;
    let grid = resolve_grid(cfg, parts.correlation_time)?;
    let summary = ModelSummary {
        num_qubits: parts.num_qubits(),
        system_qubits: parts.partition.system_qubits(),
        realizations: 1,
        noise_strength: parts.noise_strength,
        correlation_time: parts.correlation_time,
        fd_step: grid.fd_step,
        chain,
    };
    Ok(PreparedModel {
        parts,
        propagator,
        grid,
        summary,
    })
}

fn environment_state(cfg: &ExperimentConfig, n_env: usize) -> Result<PureState> {
    match (cfg.environment, cfg.model) {
        (EnvironmentChoice::Zero, _) | (EnvironmentChoice::Auto, ModelKind::Chain) => PureState::zeros(n_env),
        (EnvironmentChoice::Plus, _) | (EnvironmentChoice::Auto, ModelKind::Dephasing) => PureState::plus_all(n_env),
    }
}

fn resolve_grid(cfg: &ExperimentConfig, correlation_time: f64) -> Result<TimeGrid> {
    match cfg.fd_step {
        FdStep::Auto => TimeGrid::auto(cfg.t_max, cfg.n_points, correlation_time),
        FdStep::Fixed(h) => {
            let grid = TimeGrid::new(cfg.t_max, cfg.n_points, h)?;
            grid.check_step_bound(correlation_time)?;
            Ok(grid)
        }
    }
}

/// One checked Monte Carlo estimate for `cfg`, with its model summary and
/// grid.
pub fn estimate_for(cfg: &ExperimentConfig, progress: &dyn Fn(&str)) -> Result<(ModelSummary, TimeGrid, Estimate)> {
    let (summary, grid, est) = if cfg.model == ModelKind::Chain && cfg.disorder == DisorderMode::PerPair {
        per_pair_disorder_estimate(cfg, progress)?
    } else {
        let model = prepare_model(cfg)?;
        progress(&format!(
            "{} qubits, λ = {:.4}, h = {:.3e}, {} pairs",
            model.summary.num_qubits, model.summary.noise_strength, model.grid.fd_step, cfg.n_pairs
        ));
        let est = estimate_measures(&model.propagator, &model.grid, cfg.n_pairs, cfg.seed, cfg.bootstrap())?;
        (model.summary, model.grid, est)
    };
    check_invariants(&est)?;
    Ok((summary, grid, est))
}

// Sample k takes its disorder from a sub-stream of stream k and its state
// pair from stream k itself.
fn per_pair_disorder_estimate(
    cfg: &ExperimentConfig,
    progress: &dyn Fn(&str),
) -> Result<(ModelSummary, TimeGrid, Estimate)> {
    let spec = cfg.disorder();
    let realizations = (0..cfg.n_pairs)
        .map(|k| {
            let mut rng = RngSpec::new(cfg.seed, k as u64).child(DISORDER_STREAM).rng();
            sample_disorder(&spec, cfg.n_system, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let bound = realizations
        .iter()
        .map(|p| 2.0 * p.couplings.iter().map(|j| j.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let correlation_time = if bound > 0.0 { bound.recip() } else { f64::INFINITY };
    let grid = resolve_grid(cfg, correlation_time)?;
    let num_qubits = 2 * cfg.n_system + 1;
    let env = environment_state(cfg, cfg.n_system + 1)?;
    progress(&format!(
        "{num_qubits} qubits, per-pair disorder, λ ≤ {bound:.4}, h = {:.3e}, {} pairs",
        grid.fd_step, cfg.n_pairs
    ));
    let est = estimate_with_sampler(&grid, cfg.n_pairs, cfg.seed, cfg.bootstrap(), |k, rng| {
        let parts = build_spin_chain(&realizations[k])?;
        let propagator = SpectralPropagator::prepare(&parts, env.clone())?;
        let psi1 = haar_random_state(cfg.n_system, rng)?;
        let psi2 = haar_random_state(cfg.n_system, rng)?;
        pair_flux(&propagator, &psi1, &psi2, &grid)
    })?;
    let summary = ModelSummary {
        num_qubits,
        system_qubits: cfg.n_system,
        realizations: cfg.n_pairs,
        noise_strength: bound,
        correlation_time,
        fd_step: grid.fd_step,
        chain: None,
    };
    Ok((summary, grid, est))
}

/// `n_avg ≤ n_pure ≤ n_blp_lower` and `σ_avg = σ₊ + σ₋`, both within
/// [`INVARIANT_SLACK`].
pub fn check_invariants(est: &Estimate) -> Result<()> {
    let violation = est.result.ordering_violation();
    if violation > INVARIANT_SLACK {
        return Err(Error::InvariantViolated(format!(
            "measure ordering broken by {violation:e} (n_avg {}, n_pure {}, n_blp_lower {})",
            est.result.n_avg, est.result.n_pure, est.result.n_blp_lower
        )));
    }
    let residual = est.aggregate.decomposition_residual();
    if residual > INVARIANT_SLACK {
        return Err(Error::InvariantViolated(format!("flux decomposition residual {residual:e}")));
    }
    Ok(())
}

pub struct MeasureRun {
    pub model: ModelSummary,
    pub grid: TimeGrid,
    pub estimate: Estimate,
}

pub fn compute_measure(cfg: &ExperimentConfig, progress: &dyn Fn(&str)) -> Result<MeasureRun> {
    let (model, grid, estimate) = estimate_for(cfg, progress)?;
    Ok(MeasureRun { model, grid, estimate })
}

/// One point of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub model: ModelSummary,
    pub result: MeasureResult,
}

/// Which disorder parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    CouplingMean,
    CouplingStd,
}

/// Sweep the coupling mean or standard deviation. Every point reuses the run
/// seed, so disorder draws and state pairs are shared across points.
pub fn compute_sweep(cfg: &ExperimentConfig, axis: SweepAxis, progress: &dyn Fn(&str)) -> Result<Vec<SweepRow>> {
    let values = match axis {
        SweepAxis::CouplingMean => &cfg.mu_values,
        SweepAxis::CouplingStd => &cfg.sigma_values,
    };
    values
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let mut point = cfg.clone();
            point.model = ModelKind::Chain;
            match axis {
                SweepAxis::CouplingMean => point.coupling_mean = x,
                SweepAxis::CouplingStd => point.coupling_std = x,
            }
            point.validate()?;
            progress(&format!("point {}/{}: x = {x}", k + 1, values.len()));
            let (model, _, est) = estimate_for(&point, progress)?;
            Ok(SweepRow {
                x,
                model,
                result: est.result,
            })
        })
        .collect()
}

pub struct FdRun {
    pub model: ModelSummary,
    pub study: ConvergenceStudy,
}

pub fn compute_fd_convergence(cfg: &ExperimentConfig, progress: &dyn Fn(&str)) -> Result<FdRun> {
    let model = prepare_model(cfg)?;
    let tau_c = model.parts.correlation_time;
    if !tau_c.is_finite() {
        return Err(Error::Config("model has no interaction, so τ_c is undefined".into()));
    }
    let n = model.summary.system_qubits;
    let (psi1, psi2) = match cfg.fd_pair {
        FdPair::Haar => {
            let mut rng = RngSpec::new(cfg.seed, FD_PAIR_STREAM).rng();
            (haar_random_state(n, &mut rng)?, haar_random_state(n, &mut rng)?)
        }
        FdPair::PlusMinus => {
            let rest = |s: PureState| -> Result<PureState> {
                if n == 1 {
                    Ok(s)
                } else {
                    s.tensor(&PureState::zeros(n - 1)?)
                }
            };
            (rest(PureState::plus())?, rest(PureState::minus())?)
        }
    };
    let h_values: Vec<f64> = cfg.h_ratios.iter().map(|r| r * tau_c).collect();
    progress(&format!("fd-convergence: τ_c = {tau_c:.4}, t_probe = {}, {} steps", cfg.t_probe, h_values.len()));
    let study = fd_convergence_study(&model.propagator, &psi1, &psi2, cfg.t_probe, &h_values, tau_c)?;
    Ok(FdRun {
        model: model.summary,
        study,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ToyRow {
    pub n_spectators: usize,
    pub model: ModelSummary,
    pub result: MeasureResult,
}

/// Dephasing model with a growing number of idle spectator qubits.
pub fn compute_toy_scaling(cfg: &ExperimentConfig, progress: &dyn Fn(&str)) -> Result<Vec<ToyRow>> {
    cfg.spectators
        .iter()
        .map(|&n_spectators| {
            let mut point = cfg.clone();
            point.model = ModelKind::Dephasing;
            point.n_spectators = n_spectators;
            progress(&format!("spectators = {n_spectators}"));
            let (model, _, est) = estimate_for(&point, progress)?;
            Ok(ToyRow {
                n_spectators,
                model,
                result: est.result,
            })
        })
        .collect()
}

/// Rendered outputs of one experiment.
#[derive(Debug, Clone)]
pub struct Report {
    pub kind: ExperimentKind,
    pub csv: String,
    pub summary: Value,
}

/// Run the experiment named in `cfg.experiment`.
pub fn run(cfg: &ExperimentConfig, progress: &dyn Fn(&str)) -> Result<Report> {
    cfg.validate()?;
    let mut csv = CsvTable::new(cfg)?;
    let summary = match cfg.experiment {
        ExperimentKind::Measure => {
            let run = compute_measure(cfg, progress)?;
            csv.header(&["t", "sigma_avg", "sigma_plus", "sigma_minus", "d_avg"])?;
            let agg = &run.estimate.aggregate;
            for (i, t) in run.grid.times().into_iter().enumerate() {
                csv.row(&[t, agg.sigma_avg[i], agg.sigma_plus[i], agg.sigma_minus[i], agg.d_avg[i]])?;
            }
            json!({ "model": run.model, "grid": run.grid, "measures": run.estimate.result })
        }
        ExperimentKind::SweepMu | ExperimentKind::SweepSigma => {
            let (axis, label) = if cfg.experiment == ExperimentKind::SweepMu {
                (SweepAxis::CouplingMean, "mu")
            } else {
                (SweepAxis::CouplingStd, "sigma_j")
            };
            let rows = compute_sweep(cfg, axis, progress)?;
            csv.header(&[
                label,
                "n_avg",
                "n_avg_ci_lo",
                "n_avg_ci_hi",
                "n_pure",
                "n_pure_ci_lo",
                "n_pure_ci_hi",
                "n_blp_lower",
                "n_blp_lower_ci_lo",
                "n_blp_lower_ci_hi",
                "noise_strength",
                "fd_step",
            ])?;
            for r in &rows {
                let m = &r.result;
                csv.row(&[
                    r.x,
                    m.n_avg,
                    m.ci_avg.lower,
                    m.ci_avg.upper,
                    m.n_pure,
                    m.ci_pure.lower,
                    m.ci_pure.upper,
                    m.n_blp_lower,
                    m.ci_blp_lower.lower,
                    m.ci_blp_lower.upper,
                    r.model.noise_strength,
                    r.model.fd_step,
                ])?;
            }
            json!({ "points": rows })
        }
        ExperimentKind::FdConvergence => {
            let run = compute_fd_convergence(cfg, progress)?;
            csv.header(&["h_over_tau", "h", "sigma", "rel_error"])?;
            for p in &run.study.points {
                csv.row(&[p.h_over_tau, p.h, p.sigma, p.rel_error])?;
            }
            json!({
                "model": run.model,
                "study": run.study,
                "loglog_slope_1e-3_1e-1": run.study.loglog_slope(1e-3, 1e-1),
            })
        }
        ExperimentKind::ToyScaling => {
            let rows = compute_toy_scaling(cfg, progress)?;
            csv.header(&[
                "n_spectators",
                "n_avg",
                "n_avg_ci_lo",
                "n_avg_ci_hi",
                "n_pure",
                "n_pure_ci_lo",
                "n_pure_ci_hi",
                "n_blp_lower",
                "n_blp_lower_ci_lo",
                "n_blp_lower_ci_hi",
            ])?;
            for r in &rows {
                let m = &r.result;
                csv.row(&[
                    r.n_spectators as f64,
                    m.n_avg,
                    m.ci_avg.lower,
                    m.ci_avg.upper,
                    m.n_pure,
                    m.ci_pure.lower,
                    m.ci_pure.upper,
                    m.n_blp_lower,
                    m.ci_blp_lower.lower,
                    m.ci_blp_lower.upper,
                ])?;
            }
            json!({ "points": rows })
        }
    };
    let summary = json!({
        "schema": schema_tag(cfg.experiment),
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed,
        "config": cfg,
        "results": summary,
    });
    Ok(Report {
        kind: cfg.experiment,
        csv: csv.finish()?,
        summary,
    })
}

pub fn schema_tag(kind: ExperimentKind) -> String {
    format!("nonmarkov/{}/v{SCHEMA_VERSION}", kind.name())
}

/// CSV body preceded by `#` comment lines carrying the schema and config.
struct CsvTable {
    preamble: String,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mut preamble = String::new();
        let _ = writeln!(preamble, "# schema: {}", schema_tag(cfg.experiment));
        let _ = writeln!(preamble, "# seed: {}", cfg.seed);
        let _ = writeln!(preamble, "# config: {}", serde_json::to_string(cfg)?);
        Ok(Self {
            preamble,
            writer: csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new()),
        })
    }

    fn header(&mut self, names: &[&str]) -> Result<()> {
        self.writer.write_record(names)?;
        Ok(())
    }

    fn row(&mut self, values: &[f64]) -> Result<()> {
        self.writer.write_record(values.iter().map(|v| format!("{v:e}")))?;
        Ok(())
    }

    fn finish(self) -> Result<String> {
        let body = self
            .writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(self.preamble + &String::from_utf8(body).expect("csv output is utf-8"))
    }
}

/// Paths written by [`write_report`].
#[derive(Debug, Clone)]
pub struct WrittenFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Write `<out>/<experiment>.csv` and `<out>/<experiment>.json` atomically.
/// `extra` entries (wall time, worker count) are merged into the JSON only.
pub fn write_report(report: &Report, out_dir: &Path, extra: &[(&str, Value)]) -> Result<WrittenFiles> {
    std::fs::create_dir_all(out_dir)?;
    let mut summary = report.summary.clone();
    if let Value::Object(map) = &mut summary {
        for (k, v) in extra {
            map.insert((*k).to_string(), v.clone());
        }
    }
    let name = report.kind.name();
    let csv_path = out_dir.join(format!("{name}.csv"));
    let json_path = out_dir.join(format!("{name}.json"));
    let json_text = serde_json::to_string_pretty(&summary)? + "\n";
    // stage both before publishing either
    let csv_tmp = stage(&csv_path, report.csv.as_bytes())?;
    let json_tmp = stage(&json_path, json_text.as_bytes())?;
    std::fs::rename(&csv_tmp, &csv_path)?;
    std::fs::rename(&json_tmp, &json_path)?;
    Ok(WrittenFiles {
        csv: csv_path,
        json: json_path,
    })
}

fn stage(target: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let tmp = target.with_extension(format!(
        "{}.tmp{}",
        target.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)?;
    Ok(tmp)
}
