//! Simulation designs with known correlation networks, the moving-window
//! baseline, and Monte Carlo experiment drivers.
//!
//! Both designs use the time-varying AR(1) error
//! `G_j = f(t_j) G_{j-1} + M η_j` with `f(t) = 0.25 - 0.1 (t - 1/2)²`,
//! `M = (4/5) I_p + (1/5) I_{p/3} ⊗ J_3` and i.i.d. standard normal `η`, plus
//! piecewise-linear means with jumps. Series in the same block of three are
//! correlated; every other pair is a true null at all times.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::PValueField;
use crate::error::{Error, Result};
use crate::inference::{evaluate, false_proportions, EvalReport, NetworkSnapshot, NullSchedule, RuleKind, ThresholdRule};
use crate::kernel::Kernel;
use crate::pairs::{hypothesis_count, hypothesis_pairs};
use crate::panel::{default_labels, grid_time, TimeSeriesPanel};
use crate::pipeline::{self, window_correlations, LagChoice, PipelineConfig, PipelineOutput};
use crate::rng::{derive_seed, NormalStream};

const SIM_SEED_TAG: u64 = 1;
const BOOT_SEED_TAG: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SimCase {
    /// Six series in two correlated blocks.
    One,
    /// Nine series in three correlated blocks.
    Two,
}

impl SimCase {
    pub fn p(self) -> usize {
        match self {
            SimCase::One => 6,
            SimCase::Two => 9,
        }
    }
}

impl FromStr for SimCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(SimCase::One),
            "2" => Ok(SimCase::Two),
            other => Err(Error::OutOfRange(format!("unknown simulation case {other:?}"))),
        }
    }
}

impl fmt::Display for SimCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimCase::One => "1",
            SimCase::Two => "2",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimSpec {
    pub case: SimCase,
    pub n: usize,
    pub seed: u64,
    /// Discarded warm-up steps, run with `t` frozen at `t_1`.
    pub burn_in: usize,
    /// Scales the error process; 0 leaves the mean functions only.
    pub noise_scale: f64,
    pub include_mean: bool,
    /// Evaluates the AR coefficient at this time instead of `t_j`.
    pub frozen_time: Option<f64>,
}

pub const MIN_SIM_N: usize = 300;
pub const MIN_BURN_IN: usize = 100;

impl SimSpec {
    pub fn new(case: SimCase, n: usize, seed: u64) -> Self {
        Self {
            case,
            n,
            seed,
            burn_in: 200,
            noise_scale: 1.0,
            include_mean: true,
            frozen_time: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_SIM_N {
            return Err(Error::OutOfRange(format!("simulation needs n >= {MIN_SIM_N}, got {}", self.n)));
        }
        if self.burn_in < MIN_BURN_IN {
            return Err(Error::OutOfRange(format!("burn-in {} below {MIN_BURN_IN}", self.burn_in)));
        }
        Ok(())
    }
}

/// Null indicator per hypothesis pair, constant in time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    p: usize,
    nulls: Vec<bool>,
}

impl GroundTruth {
    /// Pairs are non-null exactly when both series share a block of three.
    pub fn block_diagonal(p: usize) -> Self {
        let nulls = hypothesis_pairs(p).into_iter().map(|(i, l)| i / 3 != l / 3).collect();
        Self { p, nulls }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn nulls(&self) -> &[bool] {
        &self.nulls
    }

    pub fn m(&self) -> usize {
        self.nulls.len()
    }

    pub fn null_count(&self) -> usize {
        self.nulls.iter().filter(|&&n| n).count()
    }

    /// `α |H₀| / m`, the level the step-up procedure targets.
    pub fn target_fdr(&self, alpha: f64) -> f64 {
        alpha * self.null_count() as f64 / self.m() as f64
    }
}

impl NullSchedule for GroundTruth {
    fn nulls_at(&self, _t: f64) -> Option<&[bool]> {
        Some(&self.nulls)
    }
}

pub fn ar_coefficient(t: f64) -> f64 {
    0.25 - 0.1 * (t - 0.5).powi(2)
}

/// `(4/5) I_p + (1/5) I_{p/3} ⊗ J_3`.
pub fn mixing_matrix(p: usize) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, l)| {
        let diag = if i == l { 0.8 } else { 0.0 };
        let block = if i / 3 == l / 3 { 0.2 } else { 0.0 };
        diag + block
    })
}

/// Breakpoints `(a1, a2)` of the mean of series `i` (0-based).
pub fn mean_breakpoints(i: usize) -> (f64, f64) {
    match i % 3 {
        0 => (0.25, 0.55),
        1 => (0.4, 0.7),
        _ => (0.55, 0.85),
    }
}

/// `0.3 + 0.4t` before `a1`, `0.7 - 0.4t` on `[a1, a2]`, `0.2 + 0.4t` after `a2`.
pub fn mean_function(i: usize, t: f64) -> f64 {
    let (a1, a2) = mean_breakpoints(i);
    if t < a1 {
        0.3 + 0.4 * t
    } else if t <= a2 {
        0.7 - 0.4 * t
    } else {
        0.2 + 0.4 * t
    }
}

pub fn simulate_case(spec: &SimSpec) -> Result<(TimeSeriesPanel, GroundTruth)> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.case.p());
    let mix = mixing_matrix(p);
    let mut rng = NormalStream::new(spec.seed, 0);
    let mut state = Array1::<f64>::zeros(p);
    let mut eta = Array1::<f64>::zeros(p);
    let mut step = |state: &mut Array1<f64>, t: f64| {
        rng.fill(eta.as_slice_mut().expect("contiguous"));
        let f = ar_coefficient(spec.frozen_time.unwrap_or(t));
        *state = &*state * f + mix.dot(&eta);
    };

    for _ in 0..spec.burn_in {
        step(&mut state, grid_time(0, n));
    }
    let mut values = Array2::zeros((n, p));
    for g in 0..n {
        let t = grid_time(g, n);
        step(&mut state, t);
        for i in 0..p {
            let mean = if spec.include_mean { mean_function(i, t) } else { 0.0 };
            values[[g, i]] = mean + spec.noise_scale * state[i];
        }
    }
    let panel = TimeSeriesPanel::new(values, default_labels(p))?;
    Ok((panel, GroundTruth::block_diagonal(p)))
}

/// Default half-width of the moving-window baseline, `⌈n/6⌉`.
pub fn default_baseline_window(n: usize) -> usize {
    n.div_ceil(6)
}

/// Thresholded sample correlations over rows `g - w ..= g + w`, at every
/// grid point whose window fits inside the panel.
pub fn moving_window_baseline(panel: &TimeSeriesPanel, w: usize, threshold: f64) -> Result<Vec<NetworkSnapshot>> {
    if w < 5 {
        return Err(Error::OutOfRange(format!("baseline window {w} below 5")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::OutOfRange(format!("threshold {threshold} outside (0, 1]")));
    }
    let (n, p) = (panel.n(), panel.p());
    let values = panel.values().to_owned();
    let labels: Arc<[String]> = panel.labels().into();
    let pairs = hypothesis_pairs(p);
    Ok((w..n.saturating_sub(w))
        .into_par_iter()
        .map(|g| {
            let corr = window_correlations(&values, g - w..g + w + 1);
            NetworkSnapshot {
                t: grid_time(g, n),
                grid_index: g,
                rejected: pairs.iter().copied().filter(|&(i, l)| corr[[i, l]].abs() > threshold).collect(),
                p,
                labels: Arc::clone(&labels),
                max_rejected_pvalue: None,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Method {
    Bh,
    By,
    MovingWindow { threshold: f64 },
}

impl Method {
    fn uses_pipeline(&self) -> bool {
        !matches!(self, Method::MovingWindow { .. })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Bh => f.write_str("BH"),
            Method::By => f.write_str("BY"),
            Method::MovingWindow { threshold } => write!(f, "moving-window({threshold})"),
        }
    }
}

/// Multiplicative perturbation applied after parameter selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Perturbation {
    /// All bandwidths times `1 + rel`.
    Bandwidth(f64),
    /// Lag `⌈2(1 + rel) log n⌉`.
    Lag(f64),
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub case: SimCase,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub burn_in: usize,
    pub pipeline: PipelineConfig,
    /// Moving-window half-width; `⌈n/6⌉` when absent.
    pub baseline_window: Option<usize>,
    /// FDP/FNP are evaluated at grid points strictly inside this interval.
    pub interval: (f64, f64),
    /// Testing hook: replaces every P-value with this value.
    pub forced_pvalue: Option<f64>,
}

impl ExperimentSpec {
    pub fn new(case: SimCase, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            case,
            n,
            reps,
            seed,
            alpha: 0.1,
            burn_in: 200,
            pipeline: PipelineConfig::default(),
            baseline_window: None,
            interval: (1.0 / 3.0, 2.0 / 3.0),
            forced_pvalue: None,
        }
    }

    pub fn sim_spec(&self, rep: usize) -> SimSpec {
        SimSpec {
            burn_in: self.burn_in,
            ..SimSpec::new(self.case, self.n, derive_seed(self.seed, SIM_SEED_TAG, rep as u64))
        }
    }

    pub fn bootstrap_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, BOOT_SEED_TAG, rep as u64)
    }

    pub fn perturbed(&self, perturbation: Perturbation) -> Self {
        let mut spec = self.clone();
        match perturbation {
            Perturbation::Bandwidth(rel) => spec.pipeline.bandwidth_factor *= 1.0 + rel,
            Perturbation::Lag(rel) => {
                spec.pipeline.lag = match spec.pipeline.lag {
                    LagChoice::LogRate(c) => LagChoice::LogRate(c * (1.0 + rel)),
                    LagChoice::Fixed(h) => LagChoice::Fixed(((h as f64) * (1.0 + rel)).round() as usize),
                }
            }
        }
        spec
    }
}

/// One simulated data set and, when requested, its pipeline output.
pub struct Replication {
    pub rep: usize,
    pub sim_seed: u64,
    pub panel: TimeSeriesPanel,
    pub truth: GroundTruth,
    pub output: Option<PipelineOutput>,
}

/// Simulates replication `rep` and runs the pipeline on it if `with_pipeline`.
pub fn replicate(spec: &ExperimentSpec, rep: usize, with_pipeline: bool, kernel: &Kernel) -> Result<Replication> {
    let sim = spec.sim_spec(rep);
    let wrap = |e: Error| Error::Replication {
        rep,
        seed: sim.seed,
        source: Box::new(e),
    };
    let (panel, truth) = simulate_case(&sim).map_err(wrap)?;
    let output = if with_pipeline {
        let cfg = PipelineConfig {
            seed: spec.bootstrap_seed(rep),
            ..spec.pipeline.clone()
        };
        Some(pipeline::run(&panel, &cfg, kernel).map_err(wrap)?)
    } else {
        None
    };
    Ok(Replication {
        rep,
        sim_seed: sim.seed,
        panel,
        truth,
        output,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RepSummary {
    pub rep: usize,
    pub seed: u64,
    pub max_fdp: f64,
    pub avg_fdp: f64,
    pub max_fnp: f64,
    pub avg_fnp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    /// Mean over replications of each replication's maximum over time.
    pub max_fdp: f64,
    pub avg_fdp: f64,
    pub max_fnp: f64,
    pub avg_fnp: f64,
    /// Maximum over time of the replication-averaged trajectory.
    pub peak_fdp: f64,
    pub peak_fnp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub mean_fdp: f64,
    pub mean_fnp: f64,
    /// Replications contributing at this time.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub reps: Vec<RepSummary>,
    pub aggregate: Aggregate,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl ExperimentReport {
    fn from_evaluations(method: Method, n: usize, evals: Vec<(usize, u64, EvalReport)>) -> Self {
        let mut reps = Vec::with_capacity(evals.len());
        let mut by_time: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        for (rep, seed, e) in &evals {
            reps.push(RepSummary {
                rep: *rep,
                seed: *seed,
                max_fdp: e.max_fdp,
                avg_fdp: e.avg_fdp,
                max_fnp: e.max_fnp,
                avg_fnp: e.avg_fnp,
            });
            for pt in &e.points {
                let entry = by_time.entry(pt.grid_index).or_default();
                entry.0 += pt.fdp;
                entry.1 += pt.fnp;
                entry.2 += 1;
            }
        }
        let k = reps.len().max(1) as f64;
        let mean = |f: fn(&RepSummary) -> f64| reps.iter().map(f).sum::<f64>() / k;
        let trajectory: Vec<TrajectoryPoint> = by_time
            .into_iter()
            .map(|(g, (fdp, fnp, c))| TrajectoryPoint {
                t: grid_time(g, n),
                mean_fdp: fdp / c as f64,
                mean_fnp: fnp / c as f64,
                count: c,
            })
            .collect();
        let peak = |f: fn(&TrajectoryPoint) -> f64| trajectory.iter().map(f).fold(0.0, f64::max);
        let aggregate = Aggregate {
            max_fdp: mean(|r| r.max_fdp),
            avg_fdp: mean(|r| r.avg_fdp),
            max_fnp: mean(|r| r.max_fnp),
            avg_fnp: mean(|r| r.avg_fnp),
            peak_fdp: peak(|p| p.mean_fdp),
            peak_fnp: peak(|p| p.mean_fnp),
        };
        Self {
            method,
            reps,
            aggregate,
            trajectory,
        }
    }
}

fn method_networks(
    method: Method,
    spec: &ExperimentSpec,
    rep: &Replication,
) -> Result<Vec<NetworkSnapshot>> {
    let labels = rep.panel.labels();
    match method {
        Method::MovingWindow { threshold } => {
            let w = spec.baseline_window.unwrap_or_else(|| default_baseline_window(spec.n));
            moving_window_baseline(&rep.panel, w, threshold)
        }
        Method::Bh | Method::By => {
            let kind = if method == Method::Bh { RuleKind::Bh } else { RuleKind::By };
            let out = rep.output.as_ref().expect("pipeline ran");
            let rule = ThresholdRule::new(kind, spec.alpha, hypothesis_count(labels.len()))?;
            match spec.forced_pvalue {
                Some(v) => {
                    let pv = &out.pvalues;
                    let count = (v * pv.replicates() as f64).round() as u32;
                    let forced = PValueField::constant(pv.n(), pv.window(), pv.pairs(), pv.replicates(), count);
                    crate::inference::build_networks(&forced, &rule, labels)
                }
                None => out.networks(&rule, labels),
            }
        }
    }
}

/// Runs every method on the same simulated replications.
pub fn run_experiments(spec: &ExperimentSpec, methods: &[Method], kernel: &Kernel) -> Result<Vec<ExperimentReport>> {
    if spec.reps == 0 {
        return Err(Error::OutOfRange("need at least one replication".into()));
    }
    let with_pipeline = methods.iter().any(Method::uses_pipeline);
    let per_rep: Vec<Vec<(usize, u64, EvalReport)>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let r = replicate(spec, rep, with_pipeline, kernel)?;
            methods
                .iter()
                .map(|&m| {
                    let nets = method_networks(m, spec, &r)?;
                    let eval = evaluate(&nets, &r.truth, spec.interval).map_err(|e| Error::Replication {
                        rep,
                        seed: r.sim_seed,
                        source: Box::new(e),
                    })?;
                    Ok((rep, r.sim_seed, eval))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let evals = per_rep.iter().map(|row| row[k].clone()).collect();
            ExperimentReport::from_evaluations(m, spec.n, evals)
        })
        .collect())
}

pub fn run_experiment(spec: &ExperimentSpec, method: Method, kernel: &Kernel) -> Result<ExperimentReport> {
    Ok(run_experiments(spec, &[method], kernel)?.remove(0))
}

/// B-H experiment with a bandwidth or lag perturbation applied.
pub fn sensitivity_run(spec: &ExperimentSpec, perturbation: Perturbation, kernel: &Kernel) -> Result<ExperimentReport> {
    run_experiment(&spec.perturbed(perturbation), Method::Bh, kernel)
}

/// FDP and FNP of a single rejection indicator against a ground truth.
pub fn score(rejected: &[bool], truth: &GroundTruth) -> (f64, f64) {
    false_proportions(rejected, truth.nulls())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_counts() {
        let one = GroundTruth::block_diagonal(6);
        assert_eq!((one.m(), one.null_count()), (15, 9));
        assert!((one.target_fdr(0.1) - 0.06).abs() < 1e-15);
        let two = GroundTruth::block_diagonal(9);
        assert_eq!((two.m(), two.null_count()), (36, 27));
        assert!((two.target_fdr(0.1) - 0.075).abs() < 1e-15);
    }

    #[test]
    fn truth_matches_mixing_matrix() {
        for p in [6, 9] {
            let m = mixing_matrix(p);
            let mmt = m.dot(&m.t());
            let truth = GroundTruth::block_diagonal(p);
            for (k, (i, l)) in hypothesis_pairs(p).into_iter().enumerate() {
                assert_eq!(truth.nulls()[k], mmt[[i, l]] == 0.0, "pair ({i}, {l})");
            }
        }
    }

    #[test]
    fn noiseless_output_is_the_trend() {
        let spec = SimSpec {
            noise_scale: 0.0,
            ..SimSpec::new(SimCase::One, 600, 1)
        };
        let (panel, _) = simulate_case(&spec).unwrap();
        // t = 0.5 is row 299
        assert!((panel.values()[[299, 0]] - 0.5).abs() < 1e-15);
        assert_eq!(panel.values()[[299, 3]], panel.values()[[299, 0]]);
        let (panel2, _) = simulate_case(&SimSpec::new(SimCase::Two, 600, 1)).unwrap();
        assert_eq!(panel2.p(), 9);
    }

    #[test]
    fn mean_segments() {
        assert!((mean_function(0, 0.1) - 0.34).abs() < 1e-15);
        assert!((mean_function(0, 0.25) - 0.6).abs() < 1e-15);
        assert!((mean_function(1, 0.8) - 0.52).abs() < 1e-15);
        assert!((mean_function(2, 0.9) - 0.56).abs() < 1e-15);
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = SimSpec::new(SimCase::One, 400, 77);
        assert_eq!(simulate_case(&spec).unwrap(), simulate_case(&spec).unwrap());
        let other = SimSpec::new(SimCase::One, 400, 78);
        assert_ne!(simulate_case(&spec).unwrap().0, simulate_case(&other).unwrap().0);
    }

    #[test]
    fn spec_validation() {
        assert!(simulate_case(&SimSpec::new(SimCase::One, 299, 1)).is_err());
        let short = SimSpec {
            burn_in: 99,
            ..SimSpec::new(SimCase::One, 300, 1)
        };
        assert!(simulate_case(&short).is_err());
    }

    #[test]
    fn baseline_edge_cases() {
        let (panel, _) = simulate_case(&SimSpec::new(SimCase::One, 300, 3)).unwrap();
        let nets = moving_window_baseline(&panel, 20, 1.0).unwrap();
        assert_eq!(nets.len(), 300 - 40);
        assert!(nets.iter().all(|s| s.rejected.is_empty()));

        let (mut values, labels) = panel.into_parts();
        let c0 = values.column(0).to_owned();
        values.column_mut(1).assign(&c0);
        let twin = TimeSeriesPanel::new(values, labels).unwrap();
        let nets = moving_window_baseline(&twin, 20, 0.999).unwrap();
        assert!(nets.iter().all(|s| s.has_edge(1, 0)));
        assert!(moving_window_baseline(&twin, 4, 0.5).is_err());
        assert!(moving_window_baseline(&twin, 10, 0.0).is_err());
    }
}
