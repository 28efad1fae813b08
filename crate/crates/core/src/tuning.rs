//! Data-driven smoothing parameters.
//!
//! * bandwidths `b_{i,l}` by generalized cross-validation of the local-linear
//!   fit to each product series;
//! * block window `w` and long-run-variance bandwidth `η` by the minimum
//!   volatility of `s²(w, η) = Σ Ŝ²` over a two-dimensional grid, with the
//!   block length fixed at `m0 = ⌊n^{2/7}⌋`;
//! * per-pair block length `m_{i,l}` by the minimum volatility of `Γ̃²`
//!   across neighbouring grid values.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;

use crate::bootstrap::block_sums;
use crate::error::{Error, Result};
use crate::estimator::{
    full_support, BandwidthSet, CorrFieldBase, CorrFieldEstimate, GridSmoother, GridWindow, LrvParams, StandardizedInnovations,
};
use crate::kernel::Kernel;
use crate::pairs::tri_pairs;
use crate::panel::DifferencedPanel;

/// Multipliers applied to the rate-optimal centre of each default grid.
pub const GRID_MULTIPLIERS: [f64; 5] = [0.6, 0.8, 1.0, 1.2, 1.4];

/// Bandwidth multipliers. Narrower than the others: GCV undersmooths the
/// serially dependent product series and tends to pick the lowest candidate.
pub const BANDWIDTH_MULTIPLIERS: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.2];

/// Bandwidth candidates above this are dropped (when three remain) so that
/// the evaluation window covers the middle third of the sample.
pub const MAX_DEFAULT_BANDWIDTH: f64 = 1.0 / 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TuningConfig {
    pub lag: usize,
    pub bandwidths: Vec<f64>,
    pub windows: Vec<usize>,
    pub etas: Vec<f64>,
    pub block_lengths: Vec<usize>,
    /// Block length used while selecting `(w, η)`.
    pub m0: usize,
}

/// `⌈c log n⌉`; `c = 2` is the default lag.
pub fn lag_for(n: usize, coefficient: f64) -> usize {
    (coefficient * (n as f64).ln()).ceil() as usize
}

fn default_bandwidths(n: usize) -> Vec<f64> {
    let centre = (n as f64).powf(-0.2);
    let all: Vec<f64> = BANDWIDTH_MULTIPLIERS.iter().map(|c| c * centre).collect();
    let capped: Vec<f64> = all.iter().copied().filter(|&b| b <= MAX_DEFAULT_BANDWIDTH).collect();
    if capped.len() >= 3 {
        capped
    } else {
        all
    }
}

impl TuningConfig {
    /// Grids centred on `n^{-1/5}` (bandwidth), `n^{2/5}` (window),
    /// `n^{-1/7}` (η) and `n^{2/7}` (block length), and lag `⌈2 log n⌉`.
    pub fn default_for(n: usize) -> Self {
        let nf = n as f64;
        let scaled = |centre: f64| GRID_MULTIPLIERS.iter().map(move |c| c * centre);
        let mut windows: Vec<usize> = scaled(nf.powf(0.4)).map(|v| v.round() as usize).collect();
        windows.dedup();
        let mut block_lengths: Vec<usize> = scaled(nf.powf(2.0 / 7.0)).map(|v| v.round() as usize).collect();
        block_lengths.dedup();
        Self {
            lag: lag_for(n, 2.0),
            bandwidths: default_bandwidths(n),
            windows,
            etas: scaled(nf.powf(-1.0 / 7.0)).collect(),
            block_lengths,
            m0: nf.powf(2.0 / 7.0).floor() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check<T: PartialOrd + std::fmt::Debug>(name: &str, grid: &[T]) -> Result<()> {
            if grid.len() < 3 {
                return Err(Error::OutOfRange(format!(
                    "{name} grid needs at least 3 values, got {}",
                    grid.len()
                )));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::OutOfRange(format!("{name} grid must be strictly increasing: {grid:?}")));
            }
            Ok(())
        }
        check("bandwidth", &self.bandwidths)?;
        check("window", &self.windows)?;
        check("eta", &self.etas)?;
        check("block length", &self.block_lengths)?;
        if self.bandwidths.iter().any(|&b| !(b > 0.0 && b < 0.5)) {
            return Err(Error::OutOfRange(format!(
                "bandwidth grid must lie in (0, 1/2): {:?}",
                self.bandwidths
            )));
        }
        if self.m0 < 2 {
            return Err(Error::OutOfRange(format!("m0 = {} below 2", self.m0)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcvSelection {
    pub pair: (usize, usize),
    pub bandwidth: f64,
    /// `(b, GCV(b))`; `None` where the candidate was skipped.
    pub scores: Vec<(f64, Option<f64>)>,
}

/// `GCV(b) = N⁻¹ |z - ẑ|² / (1 - tr(Q)/N)²` for the product series of
/// `pair`, where `N` is its length and `tr(Q)` the sum of the smoother's
/// self-weights. `None` when the fit fails or `tr(Q)/N >= 1`.
pub fn gcv_score(diffs: &DifferencedPanel, pair: (usize, usize), b: f64, kernel: &Kernel) -> Option<f64> {
    let z = diffs.products(pair.0, pair.1);
    let smoother = GridSmoother {
        z: &z,
        offset: diffs.lag(),
        n: diffs.n(),
        b,
        kernel,
    };
    let keep = held_range(diffs, b).ok()?;
    let (mut rss, mut trace) = (0.0, 0.0);
    for (r, zr) in z.iter().enumerate() {
        let g = diffs.grid_index(r);
        let (fit, w) = smoother.fit_with_weight(g.clamp(keep.start, keep.end), g).ok()?;
        rss += (zr - fit).powi(2);
        trace += w;
    }
    let len = z.len() as f64;
    let ratio = trace / len;
    (ratio < 1.0).then(|| rss / len / (1.0 - ratio).powi(2))
}

/// Trace of the local-linear hat matrix of `pair` at bandwidth `b`.
pub fn hat_trace(diffs: &DifferencedPanel, pair: (usize, usize), b: f64, kernel: &Kernel) -> Result<f64> {
    let z = diffs.products(pair.0, pair.1);
    let smoother = GridSmoother {
        z: &z,
        offset: diffs.lag(),
        n: diffs.n(),
        b,
        kernel,
    };
    let keep = held_range(diffs, b)?;
    (0..z.len())
        .map(|r| {
            let g = diffs.grid_index(r);
            smoother.fit_with_weight(g.clamp(keep.start, keep.end), g).map(|(_, w)| w)
        })
        .sum()
}

/// Fits outside this range are held at the edge value, as in the estimator
/// when `b` is the largest bandwidth.
fn held_range(diffs: &DifferencedPanel, b: f64) -> Result<GridWindow> {
    let n = diffs.n();
    Ok(full_support(n, diffs.lag(), b, GridWindow::for_bandwidth(n, b)?))
}

pub fn gcv_bandwidth(diffs: &DifferencedPanel, pair: (usize, usize), grid: &[f64], kernel: &Kernel) -> Result<GcvSelection> {
    if grid.is_empty() {
        return Err(Error::OutOfRange("empty bandwidth grid".into()));
    }
    let scores: Vec<(f64, Option<f64>)> = grid.iter().map(|&b| (b, gcv_score(diffs, pair, b, kernel))).collect();
    let best = scores
        .iter()
        .filter_map(|&(b, s)| s.map(|s| (b, s)))
        .fold(None::<(f64, f64)>, |acc, (b, s)| match acc {
            Some((_, best)) if best <= s => acc,
            _ => Some((b, s)),
        })
        .ok_or_else(|| Error::OutOfRange(format!("every GCV candidate failed for pair {pair:?}")))?;
    warn_if_endpoint("bandwidth", grid, best.0);
    Ok(GcvSelection {
        pair,
        bandwidth: best.0,
        scores,
    })
}

/// GCV for every pair including the diagonal, then the ratio cap.
pub fn select_bandwidths(diffs: &DifferencedPanel, grid: &[f64], kernel: &Kernel) -> Result<(BandwidthSet, Vec<GcvSelection>)> {
    let p = diffs.p();
    let selections: Vec<GcvSelection> = tri_pairs(p)
        .into_par_iter()
        .map(|pair| gcv_bandwidth(diffs, pair, grid, kernel))
        .collect::<Result<_>>()?;
    let mut matrix = Array2::zeros((p, p));
    for sel in &selections {
        let (i, l) = sel.pair;
        matrix[[i, l]] = sel.bandwidth;
        matrix[[l, i]] = sel.bandwidth;
    }
    Ok((BandwidthSet::capped(&matrix)?, selections))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvSelection {
    pub w: usize,
    pub eta: f64,
    /// `s²` indexed by (window, η) grid position.
    pub s2: Array2<f64>,
    /// Neighbourhood standard deviations; NaN for skipped cells.
    pub mv: Array2<f64>,
}

/// Sample standard deviation (`k - 1` denominator).
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    let k = values.len();
    if k < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (k - 1) as f64).sqrt())
}

/// Minimum-volatility table of a two-dimensional grid and its argmin.
///
/// The neighbourhood of `(j, j')` is the cell itself plus the in-range cells
/// one step away along either axis. Ties go to the smaller `(j, j')`.
pub fn mv_from_table(s2: &Array2<f64>) -> Result<((usize, usize), Array2<f64>)> {
    let (rows, cols) = s2.dim();
    if rows < 3 || cols < 3 {
        return Err(Error::OutOfRange(format!("MV grid {rows}x{cols} too short, need 3x3")));
    }
    let mv = Array2::from_shape_fn((rows, cols), |(j, k)| {
        let mut cells = vec![s2[[j, k]]];
        if j > 0 {
            cells.push(s2[[j - 1, k]]);
        }
        if j + 1 < rows {
            cells.push(s2[[j + 1, k]]);
        }
        if k > 0 {
            cells.push(s2[[j, k - 1]]);
        }
        if k + 1 < cols {
            cells.push(s2[[j, k + 1]]);
        }
        sample_sd(&cells).unwrap_or(f64::NAN)
    });
    let mut best: Option<((usize, usize), f64)> = None;
    for ((j, k), &v) in mv.indexed_iter() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some(((j, k), v));
        }
    }
    let (arg, _) = best.ok_or_else(|| Error::OutOfRange("no MV cell could be evaluated".into()))?;
    Ok((arg, mv))
}

/// `s²(w, η) = Σ_{j,s,pairs} Ŝ²` with block length `m0` for every pair.
///
/// Unnormalised, so it grows roughly linearly in `w` and the MV criterion
/// tends to favour the smallest window.
pub fn s2_table(
    base: &Arc<CorrFieldBase>,
    kernel: &Kernel,
    windows: &[usize],
    etas: &[f64],
    m0: usize,
) -> Result<Array2<f64>> {
    let mut table = Array2::zeros((windows.len(), etas.len()));
    for (k, &eta) in etas.iter().enumerate() {
        let est = CorrFieldEstimate::from_base(Arc::clone(base), LrvParams::uniform(base.p(), m0, eta))?;
        let xi = StandardizedInnovations::new(&est, kernel);
        for (j, &w) in windows.iter().enumerate() {
            table[[j, k]] = block_sums(&xi, w)?.sum_of_squares();
        }
    }
    Ok(table)
}

pub fn mv_select(base: &Arc<CorrFieldBase>, kernel: &Kernel, cfg: &TuningConfig) -> Result<MvSelection> {
    if cfg.windows.len() < 3 || cfg.etas.len() < 3 {
        return Err(Error::OutOfRange("window and eta grids need at least 3 values".into()));
    }
    let s2 = s2_table(base, kernel, &cfg.windows, &cfg.etas, cfg.m0)?;
    let ((j, k), mv) = mv_from_table(&s2)?;
    warn_if_endpoint("block window", &cfg.windows, cfg.windows[j]);
    warn_if_endpoint("eta", &cfg.etas, cfg.etas[k]);
    Ok(MvSelection {
        w: cfg.windows[j],
        eta: cfg.etas[k],
        s2,
        mv,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineSelection {
    pub m: usize,
    /// `SD(j)` for interior grid positions; `None` at the two ends.
    pub sd: Vec<Option<f64>>,
}

/// Given `Γ̃²` over the window for each grid value, returns the interior
/// index minimizing the time-averaged SD across neighbouring grid values.
pub fn refine_from_tables(tables: &[Vec<f64>]) -> Result<(usize, Vec<Option<f64>>)> {
    let k = tables.len();
    if k < 3 {
        return Err(Error::OutOfRange(format!("block-length grid has {k} values, need 3")));
    }
    let len = tables[0].len();
    if len == 0 || tables.iter().any(|t| t.len() != len) {
        return Err(Error::Dimension("long-run variance tables differ in length".into()));
    }
    let mut sd = vec![None; k];
    let mut best: Option<(usize, f64)> = None;
    for j in 1..k - 1 {
        let mean = (0..len)
            .map(|t| sample_sd(&[tables[j - 1][t], tables[j][t], tables[j + 1][t]]).expect("three values"))
            .sum::<f64>()
            / len as f64;
        sd[j] = Some(mean);
        if best.is_none_or(|(_, b)| mean < b) {
            best = Some((j, mean));
        }
    }
    Ok((best.expect("interior exists").0, sd))
}

pub fn refine_m(base: &CorrFieldBase, hyp: usize, eta: f64, grid: &[usize]) -> Result<RefineSelection> {
    if grid.len() < 3 {
        return Err(Error::OutOfRange(format!("block-length grid has {} values, need 3", grid.len())));
    }
    if let Some(&m) = grid.iter().find(|&&m| m < 2 || 4 * m > base.n()) {
        return Err(Error::OutOfRange(format!("block length {m} outside [2, n/4]")));
    }
    let tables: Vec<Vec<f64>> = grid.iter().map(|&m| base.long_run_variance(hyp, m, eta)).collect();
    let (j, sd) = refine_from_tables(&tables)?;
    Ok(RefineSelection { m: grid[j], sd })
}

fn warn_if_endpoint<T: PartialEq + std::fmt::Debug>(what: &str, grid: &[T], chosen: T) {
    if grid.len() > 1 && (grid.first() == Some(&chosen) || grid.last() == Some(&chosen)) {
        log::warn!("{what} {chosen:?} selected at the edge of its grid {grid:?}");
    }
}
