//! Information flux and the non-Markovianity measures built from it.
//!
//! For a pair of initial states the flux is the time derivative of their
//! trace distance under the dynamical map, estimated by central differences.
//! Averaging the flux over Haar-random pairs gives `σ_avg`, which splits into
//! its positive part `σ₊` and negative part `σ₋`. Integrating over time:
//!
//! - `n_avg   = ∫ max(σ_avg, 0) dt`
//! - `n_pure  = ∫ σ₊ dt`
//! - `n_blp_lower = max over sampled pairs of ∫ max(σ, 0) dt`
//!
//! and `n_avg ≤ n_pure ≤ n_blp_lower` holds pointwise before integration.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::propagator::Dynamics;
use crate::state::{haar_random_state, trace_distance, DensityMatrix, PureState};
use crate::stats::{bootstrap_ci, ConfidenceInterval, RngSpec, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use crate::{CMatrix, Error, Result, C64};

/// Largest admissible `h / τ_c` for a default step.
pub const STEP_FRACTION_OF_TAU: f64 = 0.1;

/// Uniform grid `t_i = i·T/(M−1)` plus the finite-difference step `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_points: usize,
    pub fd_step: f64,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_points: usize, fd_step: f64) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max {t_max}")));
        }
        if n_points < 2 {
            return Err(Error::InvalidParameter(format!("n_points {n_points} < 2")));
        }
        if !(fd_step > 0.0 && fd_step.is_finite()) {
            return Err(Error::InvalidParameter(format!("fd_step {fd_step} must be positive")));
        }
        Ok(Self {
            t_max,
            n_points,
            fd_step,
        })
    }

    /// Step `h = min(Δt/2, 0.1·τ_c)`; an infinite `τ_c` leaves `Δt/2`.
    pub fn auto(t_max: f64, n_points: usize, correlation_time: f64) -> Result<Self> {
        let probe = Self::new(t_max, n_points, 1.0)?;
        let mut h = probe.spacing() / 2.0;
        if correlation_time.is_finite() && correlation_time > 0.0 {
            h = h.min(STEP_FRACTION_OF_TAU * correlation_time);
        }
        Self::new(t_max, n_points, h)
    }

    /// Reject steps above `0.1·τ_c`.
    pub fn check_step_bound(&self, correlation_time: f64) -> Result<()> {
        if correlation_time.is_finite() && self.fd_step > STEP_FRACTION_OF_TAU * correlation_time * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "fd_step {} exceeds {} × τ_c = {}",
                self.fd_step,
                STEP_FRACTION_OF_TAU,
                STEP_FRACTION_OF_TAU * correlation_time
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.t_max / (self.n_points - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.t_max
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.time(i)).collect()
    }
}

/// Trace distance and flux of one state pair on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxTrace {
    pub pair_id: usize,
    pub distances: Vec<f64>,
    pub flux: Vec<f64>,
}

impl FluxTrace {
    /// `∫ max(σ, 0) dt` over the grid.
    pub fn backflow(&self, grid: &TimeGrid) -> f64 {
        trapezoid_positive(&self.flux, grid.spacing())
    }
}

/// Trapezoid rule on uniform spacing.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Trapezoid rule on `max(v, 0)`.
pub fn trapezoid_positive(values: &[f64], dt: f64) -> f64 {
    let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    trapezoid(&clamped, dt)
}

/// Distances and central-difference flux for one pair.
///
/// The first grid point uses a forward difference; so does any point where
/// `t − h < 0` and the map cannot run backwards.
pub fn pair_flux<D: Dynamics + ?Sized>(
    dynamics: &D,
    psi1: &PureState,
    psi2: &PureState,
    grid: &TimeGrid,
) -> Result<FluxTrace> {
    let h = grid.fd_step;
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("fd_step {h} must be positive")));
    }
    let m = grid.n_points;
    let grid_times = grid.times();
    let central: Vec<bool> = grid_times
        .iter()
        .enumerate()
        .map(|(i, &t)| i > 0 && (t - h >= 0.0 || dynamics.allows_negative_time()))
        .collect();

    // [t_i…] [t_i + h…] [t_i − h where central…]
    let mut times = grid_times.clone();
    times.extend(grid_times.iter().map(|t| t + h));
    let backward_slot: Vec<Option<usize>> = central
        .iter()
        .zip(&grid_times)
        .map(|(&c, &t)| {
            c.then(|| {
                times.push(t - h);
                times.len() - 1
            })
        })
        .collect();

    let rhos1 = dynamics.trajectory(psi1, &times)?;
    let rhos2 = dynamics.trajectory(psi2, &times)?;
    let d: Vec<f64> = rhos1
        .iter()
        .zip(&rhos2)
        .map(|(a, b)| trace_distance(a, b))
        .collect::<Result<_>>()?;

    let flux = (0..m)
        .map(|i| match backward_slot[i] {
            Some(k) => (d[m + i] - d[k]) / (2.0 * h),
            None => (d[m + i] - d[i]) / h,
        })
        .collect();
    Ok(FluxTrace {
        pair_id: 0,
        distances: d[..m].to_vec(),
        flux,
    })
}

/// Ensemble-averaged flux and its positive/negative decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxAggregate {
    pub sigma_avg: Vec<f64>,
    pub sigma_plus: Vec<f64>,
    pub sigma_minus: Vec<f64>,
    /// Mean trace distance on the grid.
    pub d_avg: Vec<f64>,
    pub n_pairs: usize,
}

impl FluxAggregate {
    /// `σ₊ > 0` at grid point `i`.
    pub fn non_markovian_at(&self, i: usize) -> bool {
        self.sigma_plus[i] > 0.0
    }

    /// `σ₊ > 0` and `σ₋ = 0`.
    pub fn purely_non_markovian_at(&self, i: usize) -> bool {
        self.sigma_plus[i] > 0.0 && self.sigma_minus[i] == 0.0
    }

    /// Backflow outweighs outflow: `σ₊ > |σ₋|`.
    pub fn strongly_non_markovian_at(&self, i: usize) -> bool {
        self.sigma_plus[i] > self.sigma_minus[i].abs()
    }

    /// `max |σ_avg − (σ₊ + σ₋)|`.
    pub fn decomposition_residual(&self) -> f64 {
        self.sigma_avg
            .iter()
            .zip(self.sigma_plus.iter().zip(&self.sigma_minus))
            .map(|(a, (p, m))| (a - (p + m)).abs())
            .fold(0.0, f64::max)
    }
}

/// Elementwise means of `σ`, `max(σ, 0)`, `min(σ, 0)` and `D`.
pub fn aggregate_flux(traces: &[FluxTrace]) -> Result<FluxAggregate> {
    aggregate_refs(&traces.iter().collect::<Vec<_>>())
}

fn aggregate_refs(traces: &[&FluxTrace]) -> Result<FluxAggregate> {
    let first = traces.first().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let m = first.flux.len();
    if traces.iter().any(|t| t.flux.len() != m || t.distances.len() != m) {
        return Err(Error::GridMismatch);
    }
    let mut sum = vec![0.0; m];
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    let mut dist = vec![0.0; m];
    for t in traces {
        for i in 0..m {
            let s = t.flux[i];
            sum[i] += s;
            plus[i] += s.max(0.0);
            minus[i] += s.min(0.0);
            dist[i] += t.distances[i];
        }
    }
    let n = traces.len() as f64;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / n).collect::<Vec<_>>();
    Ok(FluxAggregate {
        sigma_avg: scale(sum),
        sigma_plus: scale(plus),
        sigma_minus: scale(minus),
        d_avg: scale(dist),
        n_pairs: traces.len(),
    })
}

/// Point estimates of the three measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimates {
    pub n_avg: f64,
    pub n_pure: f64,
    pub n_blp_lower: f64,
}

/// Integrate an aggregate (and its traces, for the BLP bound) over time.
pub fn integrate_measures(
    aggregate: &FluxAggregate,
    traces: &[FluxTrace],
    grid: &TimeGrid,
) -> Result<MeasureEstimates> {
    let m = aggregate.sigma_avg.len();
    if m != grid.n_points || traces.iter().any(|t| t.flux.len() != m) {
        return Err(Error::GridMismatch);
    }
    let dt = grid.spacing();
    Ok(MeasureEstimates {
        n_avg: trapezoid_positive(&aggregate.sigma_avg, dt),
        n_pure: trapezoid(&aggregate.sigma_plus, dt).max(0.0),
        n_blp_lower: traces.iter().map(|t| t.backflow(grid)).fold(0.0, f64::max),
    })
}

/// Point estimates with bootstrap intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub n_avg: f64,
    pub n_pure: f64,
    pub n_blp_lower: f64,
    pub ci_avg: ConfidenceInterval,
    pub ci_pure: ConfidenceInterval,
    pub ci_blp_lower: ConfidenceInterval,
    pub n_pairs: usize,
    pub seed: u64,
}

impl MeasureResult {
    /// `max(n_avg − n_pure, n_pure − n_blp_lower)`; non-positive when the
    /// ordering holds.
    pub fn ordering_violation(&self) -> f64 {
        (self.n_avg - self.n_pure).max(self.n_pure - self.n_blp_lower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub level: f64,
    pub n_resamples: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            n_resamples: DEFAULT_RESAMPLES,
        }
    }
}

/// Everything produced by one Monte Carlo estimate.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub result: MeasureResult,
    pub aggregate: FluxAggregate,
    pub traces: Vec<FluxTrace>,
}

/// Stream id reserved for bootstrap resampling; pair `k` uses stream `k`.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// Monte Carlo estimate over `n_pairs` independent Haar pairs.
///
/// Pair `k` draws `ψ1` then `ψ2` from stream `k` of `seed`, and results are
/// collected in pair order, so the output does not depend on how many
/// threads rayon uses.
pub fn estimate_measures<D: Dynamics + ?Sized>(
    dynamics: &D,
    grid: &TimeGrid,
    n_pairs: usize,
    seed: u64,
    bootstrap: BootstrapOptions,
) -> Result<Estimate> {
    let n = dynamics.system_qubits();
    estimate_with_sampler(grid, n_pairs, seed, bootstrap, |_, rng| {
        let psi1 = haar_random_state(n, rng)?;
        let psi2 = haar_random_state(n, rng)?;
        pair_flux(dynamics, &psi1, &psi2, grid)
    })
}

/// Like [`estimate_measures`], but each sample is produced by `sample_pair`
/// from its own stream (stream `k` of `seed` for sample `k`, passed along with
/// `k`). Used when a sample draws more than a state pair, e.g. a fresh
/// disorder realization.
pub fn estimate_with_sampler<F>(
    grid: &TimeGrid,
    n_pairs: usize,
    seed: u64,
    bootstrap: BootstrapOptions,
    sample_pair: F,
) -> Result<Estimate>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<FluxTrace> + Sync,
{
    if n_pairs < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: n_pairs,
        });
    }
    let traces = (0..n_pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngSpec::new(seed, k as u64).rng();
            let mut trace = sample_pair(k, &mut rng)?;
            trace.pair_id = k;
            Ok(trace)
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_flux(&traces)?;
    let point = integrate_measures(&aggregate, &traces, grid)?;

    let boot = RngSpec::new(seed, BOOTSTRAP_STREAM);
    let backflows: Vec<f64> = traces.iter().map(|t| t.backflow(grid)).collect();
    let dt = grid.spacing();
    let (ci_avg, (ci_pure, ci_blp_lower)) = rayon::join(
        || {
            bootstrap_ci(
                &traces,
                |sample| {
                    aggregate_refs(sample)
                        .map(|agg| trapezoid_positive(&agg.sigma_avg, dt))
                        .unwrap_or(f64::NAN)
                },
                bootstrap.level,
                bootstrap.n_resamples,
                &mut boot.child(0).rng(),
            )
        },
        || {
            (
                bootstrap_ci(
                    &backflows,
                    |s| s.iter().copied().sum::<f64>() / s.len() as f64,
                    bootstrap.level,
                    bootstrap.n_resamples,
                    &mut boot.child(1).rng(),
                ),
                bootstrap_ci(
                    &backflows,
                    |s| s.iter().copied().fold(0.0, |a, &b| a.max(b)),
                    bootstrap.level,
                    bootstrap.n_resamples,
                    &mut boot.child(2).rng(),
                ),
            )
        },
    );
    let result = MeasureResult {
        n_avg: point.n_avg,
        n_pure: point.n_pure,
        n_blp_lower: point.n_blp_lower,
        ci_avg: ci_avg?,
        ci_pure: ci_pure?,
        ci_blp_lower: ci_blp_lower?,
        n_pairs,
        seed,
    };
    Ok(Estimate {
        result,
        aggregate,
        traces,
    })
}

/// Depolarizing semigroup `ρ(t) = e^{−rt} ρ + (1 − e^{−rt}) I/d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepolarizingSemigroup {
    rate: f64,
    num_qubits: usize,
}

impl DepolarizingSemigroup {
    pub fn new(rate: f64, num_qubits: usize) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("depolarizing rate {rate}")));
        }
        if num_qubits == 0 {
            return Err(Error::ZeroQubits);
        }
        Ok(Self { rate, num_qubits })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Apply the channel at time `t` to an arbitrary density matrix.
    pub fn apply(&self, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        if t < 0.0 {
            return Err(Error::InvalidTime(t));
        }
        if rho.num_qubits() != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                got: rho.num_qubits(),
            });
        }
        let keep = (-self.rate * t).exp();
        let dim = rho.dim();
        let mixed = CMatrix::identity(dim, dim) * C64::new((1.0 - keep) / dim as f64, 0.0);
        DensityMatrix::from_entries_unchecked(rho.entries() * C64::new(keep, 0.0) + mixed)
    }
}

impl Dynamics for DepolarizingSemigroup {
    fn system_qubits(&self) -> usize {
        self.num_qubits
    }

    fn evolve(&self, state: &PureState, t: f64) -> Result<DensityMatrix> {
        self.apply(&state.to_density(), t)
    }
}

/// Single-qubit depolarizing semigroup with the given rate.
pub fn markovian_oracle(rate: f64) -> Result<DepolarizingSemigroup> {
    DepolarizingSemigroup::new(rate, 1)
}

/// One row of a step-size study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub h: f64,
    pub h_over_tau: f64,
    pub sigma: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub t_probe: f64,
    pub tau_c: f64,
    pub sigma_exact: f64,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceStudy {
    /// Least-squares slope of `log ε` against `log h` over points with
    /// `h/τ_c` in `[lo, hi]`.
    pub fn loglog_slope(&self, lo: f64, hi: f64) -> Option<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .points
            .iter()
            .filter(|p| p.h_over_tau >= lo * (1.0 - 1e-9) && p.h_over_tau <= hi * (1.0 + 1e-9))
            .filter(|p| p.rel_error > 0.0)
            .map(|p| (p.h.ln(), p.rel_error.ln()))
            .unzip();
        (x.len() >= 2).then(|| crate::stats::fit_slope(&x, &y))
    }
}

/// Relative error of the central-difference flux at `t_probe` for each step.
///
/// The reference flux is Richardson-extrapolated from central differences at
/// `h0 = min(h)/4` and `h0/2`.
pub fn fd_convergence_study<D: Dynamics + ?Sized>(
    dynamics: &D,
    psi1: &PureState,
    psi2: &PureState,
    t_probe: f64,
    h_values: &[f64],
    tau_c: f64,
) -> Result<ConvergenceStudy> {
    if h_values.is_empty() || h_values.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidParameter("step sizes must be positive".into()));
    }
    if !(tau_c > 0.0 && tau_c.is_finite()) {
        return Err(Error::InvalidParameter(format!("correlation time {tau_c}")));
    }
    let h_max = h_values.iter().copied().fold(0.0, f64::max);
    if !dynamics.allows_negative_time() && t_probe - h_max < 0.0 {
        return Err(Error::InvalidTime(t_probe - h_max));
    }
    let h0 = h_values.iter().copied().fold(f64::INFINITY, f64::min) / 4.0;
    let steps: Vec<f64> = h_values.iter().copied().chain([h0, h0 / 2.0]).collect();
    let times: Vec<f64> = steps.iter().flat_map(|&h| [t_probe + h, t_probe - h]).collect();
    let rhos1 = dynamics.trajectory(psi1, &times)?;
    let rhos2 = dynamics.trajectory(psi2, &times)?;
    let central: Vec<f64> = steps
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let fwd = trace_distance(&rhos1[2 * k], &rhos2[2 * k])?;
            let bwd = trace_distance(&rhos1[2 * k + 1], &rhos2[2 * k + 1])?;
            Ok((fwd - bwd) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let n = h_values.len();
    let sigma_exact = (4.0 * central[n + 1] - central[n]) / 3.0;
    if sigma_exact.abs() < 1e-12 {
        return Err(Error::StationaryProbe(sigma_exact));
    }
    let points = h_values
        .iter()
        .zip(&central)
        .map(|(&h, &sigma)| ConvergencePoint {
            h,
            h_over_tau: h / tau_c,
            sigma,
            rel_error: ((sigma - sigma_exact) / sigma_exact).abs(),
        })
        .collect();
    Ok(ConvergenceStudy {
        t_probe,
        tau_c,
        sigma_exact,
        points,
    })
}
