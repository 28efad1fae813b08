//! Multiplier bootstrap for the sup-deviation of the standardized correlation
//! estimates, and the resulting time-varying P-values.
//!
//! With `N = ⌈n b_max⌉` and window `w`, the block sums are
//!
//! ```text
//! Ŝ_{j,s} = Σ_{a=s-w+1}^{s} Ξ̄̂_{a+j, N+j} - Σ_{a=s+1}^{s+w} Ξ̄̂_{a+j, N+j}
//! ```
//!
//! for `j = 1..n-2N` and `s = w..2N-w` (1-based). Replicate `r` draws standard
//! normals `R_1..R_n`, shared by all pairs, and records
//!
//! ```text
//! Z_r = max_j |Σ_s Ŝ_{j,s} R_{j+s}| / sqrt(2 w N)
//! ```
//!
//! The P-value at `t` is the fraction of replicates with `T(t) < Z_r`.

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{ceil_nb, BandwidthSet, CorrFieldEstimate, GridWindow, StandardizedInnovations};
use crate::pairs::{hypothesis_count, hypothesis_pairs};
use crate::panel::grid_time;
use crate::rng::NormalStream;

pub const MIN_REPLICATES: usize = 100;
pub const DEFAULT_REPLICATES: usize = 1000;

/// Which `s` indices of a pair enter the multiplier sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SumRange {
    /// `s ∈ [N - N_il + w, N + N_il - w]`: the block centres covered by the
    /// pair's own kernel support around the centre `N + j`.
    #[default]
    Centered,
    /// `s ∈ [w, 2 N_il - w]` literally. Matches `Centered` when
    /// `b_il = b_max`.
    AsPrinted,
}

/// Block sums `Ŝ_{j,s}` for every hypothesis pair.
#[derive(Clone, Debug)]
pub struct BlockSums {
    n: usize,
    w: usize,
    half: usize,
    /// Per hypothesis: rows `j = 1..n-2N`, columns `s = w..2N-w`.
    sums: Vec<Array2<f64>>,
}

impl BlockSums {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.w
    }

    /// `N = ⌈n b_max⌉`.
    pub fn half_width(&self) -> usize {
        self.half
    }

    pub fn pairs(&self) -> usize {
        self.sums.len()
    }

    /// Number of `j` values, `n - 2N`.
    pub fn rows(&self) -> usize {
        self.n - 2 * self.half
    }

    /// 1-based `s` range.
    pub fn s_range(&self) -> std::ops::RangeInclusive<usize> {
        self.w..=2 * self.half - self.w
    }

    /// `Ŝ_{j,s}` with 1-based `j` and `s`.
    pub fn get(&self, hyp: usize, j: usize, s: usize) -> f64 {
        self.sums[hyp][[j - 1, s - self.w]]
    }

    pub fn matrix(&self, hyp: usize) -> ArrayView2<'_, f64> {
        self.sums[hyp].view()
    }

    /// `Σ_{j,s,pairs} Ŝ²`.
    pub fn sum_of_squares(&self) -> f64 {
        self.sums
            .iter()
            .map(|m| m.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Block sums from a generic source `xi(hyp, j, s)` of standardized
/// innovations, with internal (0-based) grid indices `j` and centre `s`.
pub fn block_sums_from_fn<F>(n: usize, half: usize, w: usize, pairs: usize, xi: F) -> Result<BlockSums>
where
    F: Fn(usize, usize, usize, &mut Vec<f64>) + Sync,
{
    if w < 2 || w >= half {
        return Err(Error::OutOfRange(format!(
            "block window w = {w} must satisfy 2 <= w < {half}"
        )));
    }
    if 2 * half >= n {
        return Err(Error::OutOfRange(format!(
            "2 * ceil(n b) = {} leaves no rows for n = {n}",
            2 * half
        )));
    }
    let rows = n - 2 * half;
    let cols = 2 * half - 2 * w + 1;
    let sums = (0..pairs)
        .into_par_iter()
        .map(|hyp| {
            let mut out = Array2::zeros((rows, cols));
            let mut x = Vec::with_capacity(2 * half);
            let mut prefix = vec![0.0; 2 * half + 1];
            for jr in 0..rows {
                // a = 1..2N maps to grid index a + jr; the centre is N + jr.
                xi(hyp, jr, half + jr, &mut x);
                debug_assert_eq!(x.len(), 2 * half);
                for a in 1..=2 * half {
                    prefix[a] = prefix[a - 1] + x[a - 1];
                }
                for (c, s) in (w..=2 * half - w).enumerate() {
                    out[[jr, c]] = (prefix[s] - prefix[s - w]) - (prefix[s + w] - prefix[s]);
                }
            }
            out
        })
        .collect();
    Ok(BlockSums { n, w, half, sums })
}

/// Block sums of the estimated standardized innovations.
pub fn block_sums(xi: &StandardizedInnovations<'_>, w: usize) -> Result<BlockSums> {
    let n = xi.n();
    let half = ceil_nb(n, xi.estimate().bands().b_max());
    block_sums_from_fn(n, half, w, hypothesis_count(xi.p()), |hyp, jr, centre, out| {
        xi.fill_center(hyp, centre, jr + 1..jr + 1 + 2 * half, out)
    })
}

/// Sup statistics `Z̃_boot` for `B` replicates and every hypothesis pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapEnsemble {
    seed: Option<u64>,
    /// `B × m`
    z: Array2<f64>,
}

impl BootstrapEnsemble {
    pub fn replicates(&self) -> usize {
        self.z.nrows()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn pairs(&self) -> usize {
        self.z.ncols()
    }

    /// Row `r` holds replicate `r`; column `k` the `k`-th hypothesis pair.
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn from_values(z: Array2<f64>) -> Self {
        Self { seed: None, z }
    }
}

/// Standard normal multipliers, `n × B`: column `r` is stream `(seed, r)`.
pub fn gaussian_multipliers(n: usize, reps: usize, seed: u64) -> Array2<f64> {
    let columns: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut col = vec![0.0; n];
            NormalStream::new(seed, r as u64).fill(&mut col);
            col
        })
        .collect();
    Array2::from_shape_fn((n, reps), |(k, r)| columns[r][k])
}

pub fn draw_ensemble(
    sums: &BlockSums,
    bands: &BandwidthSet,
    reps: usize,
    seed: u64,
    range: SumRange,
) -> Result<BootstrapEnsemble> {
    if reps < MIN_REPLICATES {
        return Err(Error::OutOfRange(format!(
            "B = {reps} replicates, need at least {MIN_REPLICATES}"
        )));
    }
    let multipliers = gaussian_multipliers(sums.n, reps, seed);
    let mut ens = draw_ensemble_with_multipliers(sums, bands, multipliers.view(), range)?;
    ens.seed = Some(seed);
    Ok(ens)
}

/// Ensemble for given multipliers (`n × B`, column per replicate).
pub fn draw_ensemble_with_multipliers(
    sums: &BlockSums,
    bands: &BandwidthSet,
    multipliers: ArrayView2<'_, f64>,
    range: SumRange,
) -> Result<BootstrapEnsemble> {
    let n = sums.n;
    if multipliers.nrows() != n {
        return Err(Error::Dimension(format!(
            "{} multipliers per replicate, need {n}",
            multipliers.nrows()
        )));
    }
    let pairs = hypothesis_pairs(bands.p());
    if pairs.len() != sums.pairs() {
        return Err(Error::Dimension(format!(
            "block sums for {} pairs, bandwidths for {}",
            sums.pairs(),
            pairs.len()
        )));
    }
    let (w, half, rows) = (sums.w, sums.half, sums.rows());
    let norm = ((2 * w * half) as f64).sqrt();

    let columns: Vec<Vec<f64>> = pairs
        .par_iter()
        .enumerate()
        .map(|(hyp, &(i, l))| {
            let half_il = ceil_nb(n, bands.get(i, l));
            let (s_lo, s_hi) = match range {
                SumRange::Centered => (half + w - half_il.min(half), half + half_il.min(half) - w),
                SumRange::AsPrinted => (w, (2 * half_il).min(2 * half) - w),
            };
            if half_il < w || s_lo > s_hi {
                return Err(Error::OutOfRange(format!(
                    "pair ({i}, {l}): ceil(n b) = {half_il} smaller than block window {w}"
                )));
            }
            // Row j uses multipliers at 0-based positions j + s, s in [s_lo, s_hi].
            let width = rows - 1 + s_hi - s_lo + 1;
            let mut band = Array2::zeros((rows, width));
            let shat = &sums.sums[hyp];
            for jr in 0..rows {
                for s in s_lo..=s_hi {
                    band[[jr, jr + s - s_lo]] = shat[[jr, s - w]];
                }
            }
            let r = multipliers.slice(s![s_lo..s_lo + width, ..]);
            let out = band.dot(&r);
            Ok(out
                .columns()
                .into_iter()
                .map(|col| col.iter().fold(0.0f64, |m, v| m.max(v.abs())) / norm)
                .collect())
        })
        .collect::<Result<_>>()?;

    let reps = multipliers.ncols();
    let z = Array2::from_shape_fn((reps, pairs.len()), |(r, k)| columns[k][r]);
    Ok(BootstrapEnsemble { seed: None, z })
}

/// `T = sqrt(n b) |ρ̃| / Γ̃`.
pub fn test_statistic(n: usize, b: f64, rho: f64, gamma: f64) -> f64 {
    (n as f64 * b).sqrt() * rho.abs() / gamma
}

/// `T_{i,l}(t)` on the evaluation window.
#[derive(Clone, Debug, PartialEq)]
pub struct TestStatistics {
    n: usize,
    window: GridWindow,
    /// Per hypothesis, one value per window grid point.
    values: Vec<Vec<f64>>,
}

impl TestStatistics {
    pub fn new(n: usize, window: GridWindow, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.iter().any(|v| v.len() != window.len()) {
            return Err(Error::Dimension("test statistics must cover the window".into()));
        }
        Ok(Self { n, window, values })
    }

    pub fn window(&self) -> GridWindow {
        self.window
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair(&self, hyp: usize) -> &[f64] {
        &self.values[hyp]
    }

    pub fn pairs(&self) -> usize {
        self.values.len()
    }
}

pub fn test_statistics(est: &CorrFieldEstimate) -> TestStatistics {
    let n = est.n();
    let window = est.window();
    let values = hypothesis_pairs(est.p())
        .into_iter()
        .enumerate()
        .map(|(hyp, (i, l))| {
            let b = est.bands().get(i, l);
            let rho = est.rho(i, l);
            window
                .iter()
                .zip(est.lrv(hyp))
                .map(|(g, lrv)| test_statistic(n, b, rho[g], lrv.sqrt()))
                .collect()
        })
        .collect();
    TestStatistics { n, window, values }
}

/// `P_{i,l}(t)` stored as exceedance counts out of `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct PValueField {
    n: usize,
    window: GridWindow,
    replicates: usize,
    /// `window.len() × m`
    counts: Array2<u32>,
}

impl PValueField {
    /// A field with the same count everywhere.
    pub fn constant(n: usize, window: GridWindow, pairs: usize, replicates: usize, count: u32) -> Self {
        assert!(count as usize <= replicates);
        Self {
            n,
            window,
            replicates,
            counts: Array2::from_elem((window.len(), pairs), count),
        }
    }

    pub fn from_counts(n: usize, window: GridWindow, replicates: usize, counts: Array2<u32>) -> Result<Self> {
        if counts.nrows() != window.len() || counts.iter().any(|&c| c as usize > replicates) {
            return Err(Error::Dimension("P-value counts do not match window or B".into()));
        }
        Ok(Self {
            n,
            window,
            replicates,
            counts,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> GridWindow {
        self.window
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn pairs(&self) -> usize {
        self.counts.ncols()
    }

    /// Time of each row.
    pub fn times(&self) -> Vec<f64> {
        self.window.iter().map(|g| grid_time(g, self.n)).collect()
    }

    /// Exceedance count at window row `k` for hypothesis `hyp`.
    pub fn count(&self, k: usize, hyp: usize) -> u32 {
        self.counts[[k, hyp]]
    }

    pub fn value(&self, k: usize, hyp: usize) -> f64 {
        self.counts[[k, hyp]] as f64 / self.replicates as f64
    }

    /// All P-values at window row `k`.
    pub fn row(&self, k: usize) -> Vec<f64> {
        (0..self.pairs()).map(|hyp| self.value(k, hyp)).collect()
    }

    pub fn rows(&self) -> usize {
        self.counts.nrows()
    }
}

pub fn pvalues(stats: &TestStatistics, ens: &BootstrapEnsemble) -> Result<PValueField> {
    if stats.pairs() != ens.pairs() {
        return Err(Error::Dimension(format!(
            "{} test-statistic pairs, {} ensemble pairs",
            stats.pairs(),
            ens.pairs()
        )));
    }
    let reps = ens.replicates();
    let mut counts = Array2::zeros((stats.window.len(), stats.pairs()));
    for hyp in 0..stats.pairs() {
        let mut z: Vec<f64> = ens.z.column(hyp).to_vec();
        z.sort_by(f64::total_cmp);
        for (k, &t) in stats.values[hyp].iter().enumerate() {
            // #{r : t < z_r}
            counts[[k, hyp]] = (reps - z.partition_point(|&v| v <= t)) as u32;
        }
    }
    Ok(PValueField {
        n: stats.n,
        window: stats.window,
        replicates: reps,
        counts,
    })
}
