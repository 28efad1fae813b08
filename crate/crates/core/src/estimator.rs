//! Difference-based local-linear estimation of time-varying covariance and
//! correlation functions, innovation estimates and long-run variances.
//!
//! For each pair `(i, l)` the product series `z_j = y_{j,i} y_{j,l}` of lag-`h`
//! differences is smoothed by a local-linear fit with bandwidth `b_{i,l}`,
//! giving `β̂ ≈ 2γ`. From it:
//!
//! ```text
//! γ̃ = β̂ / 2,   σ̃_{i,l} = sqrt(γ̃_{i,i} γ̃_{l,l}),   ρ̃ = γ̃ / σ̃
//! ê_j = z_j - β̂(t_j)
//! Ξ̃_j = z_j / (2σ̃) - (ρ̃/4)(y_{j,i}²/γ̃_{i,i} + y_{j,l}²/γ̃_{l,l})
//! Ξ̂_j = ê_{j,i,l} / (2σ̃) - (ρ̃/4)(ê_{j,i,i}/γ̃_{i,i} + ê_{j,l,l}/γ̃_{l,l})
//! Γ̃²(t) = (κ/m) Σ_s Δ̃_s² ω(t, s),   Δ̃_s = Σ_{j=s}^{s+m-1} Ξ̂_j
//! ```
//!
//! with `ω(t, s) = K_η(t - t_s) / Σ_j K_η(t_j - t)`. All functions live on the
//! observation grid; a query at an arbitrary `t` uses the nearest grid point.
//!
//! `ρ̃` is deliberately not clipped to `[-1, 1]`: in finite samples the
//! bandwidths of the three fits differ and `|ρ̃|` can exceed one. The test
//! statistic consumes the raw value.

use std::sync::{Arc, LazyLock};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{epanechnikov, Kernel};
use crate::pairs::{
    hypothesis_count, hypothesis_pair_at, hypothesis_pairs, tri_count, tri_index, tri_pairs,
};
use crate::panel::{grid_time, DifferencedPanel};

/// Normal matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Marginal variances below this abort the estimation.
pub const MIN_VARIANCE: f64 = 1e-12;
/// Minimum number of points strictly inside a local window.
pub const MIN_WINDOW_POINTS: usize = 5;
/// Lower bound on `min b_{i,l} / max b_{i,l}`.
pub const MIN_BANDWIDTH_RATIO: f64 = 0.2;

/// Time weights of the long-run variance smoother.
static LRV_WEIGHT_KERNEL: LazyLock<Kernel> = LazyLock::new(epanechnikov);

/// `⌈n b⌉`, ignoring floating-point noise just above an integer.
pub fn ceil_nb(n: usize, b: f64) -> usize {
    ((n as f64) * b - 1e-9).ceil().max(0.0) as usize
}

/// Symmetric matrix of per-pair bandwidths.
#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthSet {
    p: usize,
    b: Vec<f64>,
    b_max: f64,
}

impl BandwidthSet {
    pub fn new(matrix: &Array2<f64>) -> Result<Self> {
        let (p, q) = matrix.dim();
        if p != q || p == 0 {
            return Err(Error::Dimension(format!(
                "bandwidth matrix must be square, got {p}x{q}"
            )));
        }
        for i in 0..p {
            for l in 0..p {
                let v = matrix[[i, l]];
                if v != matrix[[l, i]] {
                    return Err(Error::OutOfRange(format!(
                        "bandwidth matrix not symmetric at ({i}, {l})"
                    )));
                }
                if !(v > 0.0 && v < 0.5) {
                    return Err(Error::OutOfRange(format!(
                        "bandwidth b[{i},{l}] = {v} outside (0, 1/2)"
                    )));
                }
            }
        }
        let b: Vec<f64> = matrix.iter().copied().collect();
        let b_max = b.iter().copied().fold(f64::MIN, f64::max);
        let b_min = b.iter().copied().fold(f64::MAX, f64::min);
        if b_min / b_max < MIN_BANDWIDTH_RATIO {
            return Err(Error::OutOfRange(format!(
                "bandwidth ratio min/max = {} below {MIN_BANDWIDTH_RATIO}",
                b_min / b_max
            )));
        }
        Ok(Self { p, b, b_max })
    }

    pub fn uniform(p: usize, b: f64) -> Result<Self> {
        Self::new(&Array2::from_elem((p, p), b))
    }

    /// Builds a set from per-pair selections, capping large entries at
    /// `min / MIN_BANDWIDTH_RATIO` so the ratio bound holds.
    pub fn capped(matrix: &Array2<f64>) -> Result<Self> {
        let b_min = matrix.iter().copied().fold(f64::MAX, f64::min);
        let cap = b_min / MIN_BANDWIDTH_RATIO;
        Self::new(&matrix.mapv(|v| v.min(cap)))
    }

    /// Multiplies every bandwidth by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&(self.matrix() * factor))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.b[i * self.p + l]
    }

    pub fn b_max(&self) -> f64 {
        self.b_max
    }

    /// `c_{i,l} = sqrt(b_max / b_{i,l})`.
    pub fn c(&self, i: usize, l: usize) -> f64 {
        (self.b_max / self.get(i, l)).sqrt()
    }

    pub fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.p, self.p), self.b.clone()).expect("square")
    }
}

/// Inclusive range of internal grid indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridWindow {
    pub start: usize,
    pub end: usize,
}

impl GridWindow {
    /// `[⌈n b_max⌉, n - ⌈n b_max⌉]` in 1-based indexing.
    pub fn for_bandwidth(n: usize, b_max: f64) -> Result<Self> {
        let nb = ceil_nb(n, b_max);
        if nb == 0 || 2 * nb > n {
            return Err(Error::OutOfRange(format!(
                "evaluation window empty for n = {n}, b_max = {b_max}"
            )));
        }
        Ok(Self {
            start: nb - 1,
            end: n - nb - 1,
        })
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, g: usize) -> bool {
        (self.start..=self.end).contains(&g)
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Weighted sums of a local-linear fit.
#[derive(Clone, Copy, Debug, Default)]
struct LocalSums {
    s0: f64,
    s1: f64,
    s2: f64,
    t0: f64,
    t1: f64,
    count: usize,
}

impl LocalSums {
    #[inline]
    fn push(&mut self, d: f64, k: f64, z: f64) {
        let kd = k * d;
        self.s0 += k;
        self.s1 += kd;
        self.s2 += kd * d;
        self.t0 += k * z;
        self.t1 += kd * z;
        self.count += 1;
    }

    fn check(&self, t: f64) -> Result<f64> {
        if self.count < MIN_WINDOW_POINTS {
            return Err(Error::Fit {
                t,
                reason: format!(
                    "{} points in window, need {MIN_WINDOW_POINTS}",
                    self.count
                ),
            });
        }
        let det = self.s0 * self.s2 - self.s1 * self.s1;
        let tr = self.s0 + self.s2;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let big = 0.5 * (tr.abs() + disc);
        let small = (det / big).abs();
        if !(det.is_finite() && small > 0.0 && big / small <= MAX_CONDITION) {
            return Err(Error::Fit {
                t,
                reason: "singular normal equations".into(),
            });
        }
        Ok(det)
    }

    fn solve(&self, t: f64) -> Result<(f64, f64)> {
        let det = self.check(t)?;
        let eta0 = (self.s2 * self.t0 - self.s1 * self.t1) / det;
        let eta1 = (self.s0 * self.t1 - self.s1 * self.t0) / det;
        Ok((eta0, eta1))
    }

    /// Weight in the intercept of a point at offset `d` with kernel value `k`.
    fn weight(&self, d: f64, k: f64, t: f64) -> Result<f64> {
        let det = self.check(t)?;
        Ok(k * (self.s2 - self.s1 * d) / det)
    }
}

/// Local-linear fit of `z` against `times` at `t`: minimizes
/// `Σ (z_j - η0 - η1 (t_j - t))² K_b(t_j - t)` over points with `|t_j - t| < b`.
pub fn local_linear_fit(
    z: &[f64],
    times: &[f64],
    t: f64,
    b: f64,
    kernel: &Kernel,
) -> Result<(f64, f64)> {
    if z.len() != times.len() {
        return Err(Error::Dimension(format!(
            "{} values for {} time points",
            z.len(),
            times.len()
        )));
    }
    let mut sums = LocalSums::default();
    for (&zj, &tj) in z.iter().zip(times) {
        let d = tj - t;
        if d.abs() < b {
            sums.push(d, kernel.scaled(d, b), zj);
        }
    }
    sums.solve(t)
}

/// Local-linear smoother over a regular grid. `z[r]` sits at grid index
/// `offset + r` of an `n`-point grid.
#[derive(Clone, Copy)]
pub(crate) struct GridSmoother<'a> {
    pub z: &'a [f64],
    pub offset: usize,
    pub n: usize,
    pub b: f64,
    pub kernel: &'a Kernel,
}

impl GridSmoother<'_> {
    fn sums_at(&self, g: usize) -> LocalSums {
        let t = grid_time(g, self.n);
        let reach = ceil_nb(self.n, self.b) + 1;
        let lo = g.saturating_sub(reach).max(self.offset);
        let hi = (g + reach).min(self.offset + self.z.len() - 1);
        let mut sums = LocalSums::default();
        if lo > hi {
            return sums;
        }
        for gj in lo..=hi {
            let d = grid_time(gj, self.n) - t;
            if d.abs() < self.b {
                sums.push(d, self.kernel.scaled(d, self.b), self.z[gj - self.offset]);
            }
        }
        sums
    }

    pub fn fit(&self, g: usize) -> Result<f64> {
        let t = grid_time(g, self.n);
        self.sums_at(g).solve(t).map(|(eta0, _)| eta0)
    }

    /// Fitted value at `g` and the weight it gives the observation at `point`.
    pub fn fit_with_weight(&self, g: usize, point: usize) -> Result<(f64, f64)> {
        let t = grid_time(g, self.n);
        let sums = self.sums_at(g);
        let (eta0, _) = sums.solve(t)?;
        let d = grid_time(point, self.n) - t;
        let w = if d.abs() < self.b {
            sums.weight(d, self.kernel.scaled(d, self.b), t)?
        } else {
            0.0
        };
        Ok((eta0, w))
    }
}

/// Estimates that do not depend on the long-run variance parameters.
#[derive(Clone, Debug)]
pub struct CorrFieldBase {
    n: usize,
    p: usize,
    lag: usize,
    window: GridWindow,
    bands: BandwidthSet,
    kappa: f64,
    /// Indexed by [`tri_index`]; length `n` (grid).
    beta: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    rho: Vec<Vec<f64>>,
    /// Indexed by [`tri_index`]; length `n - h` (differenced rows).
    e_hat: Vec<Vec<f64>>,
    /// Indexed by hypothesis index; length `n - h`.
    xi_tilde: Vec<Vec<f64>>,
    xi_hat: Vec<Vec<f64>>,
}

/// Full estimate including `Γ̃²` on the evaluation window.
#[derive(Clone, Debug)]
pub struct CorrFieldEstimate {
    base: Arc<CorrFieldBase>,
    params: LrvParams,
    /// Indexed by hypothesis index; one value per window grid point.
    lrv: Vec<Vec<f64>>,
}

/// Smoothing parameters of the long-run variance estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct LrvParams {
    /// Block length per hypothesis pair, in [`hypothesis_pairs`] order.
    pub m: Vec<usize>,
    pub eta: f64,
}

impl LrvParams {
    pub fn uniform(p: usize, m: usize, eta: f64) -> Self {
        Self {
            m: vec![m; hypothesis_count(p)],
            eta,
        }
    }

    fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.m.len() != hypothesis_count(p) {
            return Err(Error::Dimension(format!(
                "{} block lengths for {} pairs",
                self.m.len(),
                hypothesis_count(p)
            )));
        }
        if let Some(&m) = self.m.iter().find(|&&m| m < 2 || 4 * m > n) {
            return Err(Error::OutOfRange(format!(
                "block length m = {m} must satisfy 2 <= m <= n/4"
            )));
        }
        // η beyond 1/2 is allowed: the default grid reaches 1.4 n^(-1/7).
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::OutOfRange(format!(
                "eta = {} must lie in (0, 1)",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Grid range where the fit of a pair with bandwidth `b` sees its full
/// kernel support, widened to cover the evaluation window.
pub(crate) fn full_support(n: usize, h: usize, b: f64, window: GridWindow) -> GridWindow {
    let nb = ceil_nb(n, b);
    GridWindow {
        start: (h + nb).saturating_sub(1).min(window.start),
        end: n.saturating_sub(nb + 1).max(window.end),
    }
}

/// Replaces values outside `keep` with the nearest kept value. One-sided
/// fits with a fourth-order kernel are erratic near the ends of the sample,
/// and their residuals would otherwise dominate the long-run variance.
fn hold_edges(values: &mut [f64], keep: GridWindow) {
    let (lo, hi) = (values[keep.start], values[keep.end]);
    values[..keep.start].fill(lo);
    values[keep.end + 1..].fill(hi);
}

impl CorrFieldBase {
    pub fn estimate(diffs: &DifferencedPanel, bands: &BandwidthSet, kernel: &Kernel) -> Result<Self> {
        let n = diffs.n();
        let p = diffs.p();
        let h = diffs.lag();
        if bands.p() != p {
            return Err(Error::Dimension(format!(
                "bandwidths for {} series, panel has {p}",
                bands.p()
            )));
        }
        let window = GridWindow::for_bandwidth(n, bands.b_max())?;
        let rows = diffs.len();

        let fits: Vec<(Vec<f64>, Vec<f64>)> = tri_pairs(p)
            .into_par_iter()
            .map(|(i, l)| {
                let z = diffs.products(i, l);
                let smoother = GridSmoother {
                    z: &z,
                    offset: h,
                    n,
                    b: bands.get(i, l),
                    kernel,
                };
                let mut beta = (0..n).map(|g| smoother.fit(g)).collect::<Result<Vec<_>>>()?;
                hold_edges(&mut beta, full_support(n, h, bands.get(i, l), window));
                let e_hat = (0..rows).map(|r| z[r] - beta[h + r]).collect();
                Ok((beta, e_hat))
            })
            .collect::<Result<_>>()?;
        let (beta, e_hat): (Vec<_>, Vec<_>) = fits.into_iter().unzip();

        let mut gamma: Vec<Vec<f64>> = beta
            .iter()
            .map(|b| b.iter().map(|v| v / 2.0).collect())
            .collect();

        // Inside the window a nonpositive marginal variance is fatal. Outside
        // it the fit is one-sided and the negative kernel lobes can push it
        // below zero; such points borrow the nearest window value, which only
        // affects how boundary innovations are standardized.
        for i in 0..p {
            let g_ii = &mut gamma[tri_index(i, i)];
            if let Some(g) = window.iter().find(|&g| !(g_ii[g] >= MIN_VARIANCE)) {
                return Err(Error::NonPositiveVariance {
                    series: i,
                    t: grid_time(g, n),
                });
            }
            let (lo, hi) = (g_ii[window.start], g_ii[window.end]);
            for (g, v) in g_ii.iter_mut().enumerate() {
                if !window.contains(g) && !(*v >= MIN_VARIANCE) {
                    *v = if g < window.start { lo } else { hi };
                }
            }
        }

        let mut sigma = Vec::with_capacity(tri_count(p));
        let mut rho = Vec::with_capacity(tri_count(p));
        for (i, l) in tri_pairs(p) {
            let g_il = &gamma[tri_index(i, l)];
            let (s, r): (Vec<f64>, Vec<f64>) = if i == l {
                (g_il.clone(), vec![1.0; n])
            } else {
                let g_ii = &gamma[tri_index(i, i)];
                let g_ll = &gamma[tri_index(l, l)];
                (0..n)
                    .map(|g| {
                        let s = (g_ii[g] * g_ll[g]).sqrt();
                        (s, g_il[g] / s)
                    })
                    .unzip()
            };
            sigma.push(s);
            rho.push(r);
        }

        let y = diffs.diffs();
        let (xi_tilde, xi_hat): (Vec<Vec<f64>>, Vec<Vec<f64>>) = hypothesis_pairs(p)
            .into_iter()
            .map(|(i, l)| {
                let k = tri_index(i, l);
                let (kii, kll) = (tri_index(i, i), tri_index(l, l));
                (0..rows)
                    .map(|r| {
                        let g = h + r;
                        let s = sigma[k][g];
                        let q = rho[k][g] / 4.0;
                        let (gii, gll) = (gamma[kii][g], gamma[kll][g]);
                        let (yi, yl) = (y[[r, i]], y[[r, l]]);
                        let tilde = yi * yl / (2.0 * s) - q * (yi * yi / gii + yl * yl / gll);
                        let hat = e_hat[k][r] / (2.0 * s)
                            - q * (e_hat[kii][r] / gii + e_hat[kll][r] / gll);
                        (tilde, hat)
                    })
                    .unzip()
            })
            .unzip();

        Ok(Self {
            n,
            p,
            lag: h,
            window,
            bands: bands.clone(),
            kappa: kernel.kappa(),
            beta,
            gamma,
            sigma,
            rho,
            e_hat,
            xi_tilde,
            xi_hat,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn window(&self) -> GridWindow {
        self.window
    }

    pub fn bands(&self) -> &BandwidthSet {
        &self.bands
    }

    /// `β̂_{i,l}` over the whole grid.
    pub fn beta(&self, i: usize, l: usize) -> &[f64] {
        &self.beta[tri_index(i, l)]
    }

    pub fn gamma(&self, i: usize, l: usize) -> &[f64] {
        &self.gamma[tri_index(i, l)]
    }

    pub fn sigma(&self, i: usize, l: usize) -> &[f64] {
        &self.sigma[tri_index(i, l)]
    }

    pub fn rho(&self, i: usize, l: usize) -> &[f64] {
        &self.rho[tri_index(i, l)]
    }

    /// `ρ̃_{i,l}` at the grid point nearest to `t`.
    pub fn rho_at(&self, i: usize, l: usize, t: f64) -> f64 {
        self.rho(i, l)[nearest_grid_index(t, self.n)]
    }

    /// Residuals `ê` over the differenced rows.
    pub fn residuals(&self, i: usize, l: usize) -> &[f64] {
        &self.e_hat[tri_index(i, l)]
    }

    /// `Ξ̃` over the differenced rows for hypothesis `hyp`.
    pub fn xi_tilde(&self, hyp: usize) -> &[f64] {
        &self.xi_tilde[hyp]
    }

    /// `Ξ̂` over the differenced rows for hypothesis `hyp`.
    pub fn xi_hat(&self, hyp: usize) -> &[f64] {
        &self.xi_hat[hyp]
    }

    /// `Γ̃²` of hypothesis `hyp` on the evaluation window.
    ///
    /// The time weights use the nonnegative Epanechnikov kernel: with the
    /// fourth-order kernel the negative lobes routinely drive the weighted
    /// sum of squares below zero.
    pub fn long_run_variance(&self, hyp: usize, m: usize, eta: f64) -> Vec<f64> {
        let kernel = &*LRV_WEIGHT_KERNEL;
        let n = self.n;
        let h = self.lag;
        let xi = &self.xi_hat[hyp];
        // Δ̃_s for blocks fully inside the differenced rows; block r starts at
        // grid index h + r.
        let delta_sq: Vec<f64> = xi
            .windows(m)
            .map(|block| block.iter().sum::<f64>().powi(2))
            .collect();
        let scale = self.kappa / m as f64;
        self.window
            .iter()
            .map(|g| {
                let t = grid_time(g, n);
                let norm: f64 = (0..n).map(|j| kernel.scaled(grid_time(j, n) - t, eta)).sum();
                let weighted: f64 = delta_sq
                    .iter()
                    .enumerate()
                    .map(|(r, d2)| d2 * kernel.scaled(t - grid_time(h + r, n), eta))
                    .sum();
                scale * weighted / norm
            })
            .collect()
    }
}

pub fn nearest_grid_index(t: f64, n: usize) -> usize {
    let g = (t * n as f64).round() as i64 - 1;
    g.clamp(0, n as i64 - 1) as usize
}

impl CorrFieldEstimate {
    pub fn from_base(base: Arc<CorrFieldBase>, params: LrvParams) -> Result<Self> {
        params.validate(base.n, base.p)?;
        let pairs = hypothesis_pairs(base.p);
        let lrv: Vec<Vec<f64>> = (0..pairs.len())
            .into_par_iter()
            .map(|k| base.long_run_variance(k, params.m[k], params.eta))
            .collect();
        for (k, values) in lrv.iter().enumerate() {
            if let Some(pos) = values.iter().position(|v| !(*v > 0.0)) {
                let (i, l) = pairs[k];
                return Err(Error::NonPositiveLongRunVariance {
                    i,
                    l,
                    t: grid_time(base.window.start + pos, base.n),
                });
            }
        }
        Ok(Self { base, params, lrv })
    }

    pub fn base(&self) -> &CorrFieldBase {
        &self.base
    }

    pub fn shared_base(&self) -> Arc<CorrFieldBase> {
        Arc::clone(&self.base)
    }

    pub fn params(&self) -> &LrvParams {
        &self.params
    }

    pub fn window(&self) -> GridWindow {
        self.base.window
    }

    /// `Γ̃²` for hypothesis `hyp`, one value per window grid point.
    pub fn lrv(&self, hyp: usize) -> &[f64] {
        &self.lrv[hyp]
    }

    /// `Γ̃²` at grid index `g`, if `g` lies in the window.
    pub fn lrv_at(&self, hyp: usize, g: usize) -> Option<f64> {
        let w = self.base.window;
        w.contains(g).then(|| self.lrv[hyp][g - w.start])
    }
}

impl std::ops::Deref for CorrFieldEstimate {
    type Target = CorrFieldBase;

    fn deref(&self) -> &CorrFieldBase {
        &self.base
    }
}

/// Runs the full estimator: local-linear fits, innovations and `Γ̃²`.
pub fn estimate_corr_field(
    diffs: &DifferencedPanel,
    bands: &BandwidthSet,
    kernel: &Kernel,
    lrv: &LrvParams,
) -> Result<CorrFieldEstimate> {
    lrv.validate(diffs.n(), diffs.p())?;
    let base = CorrFieldBase::estimate(diffs, bands, kernel)?;
    CorrFieldEstimate::from_base(Arc::new(base), lrv.clone())
}

/// Lazy view of the standardized innovations
/// `Ξ̄̂_{j,s,i,l} = c_{i,l} K_{b_{i,l}}(t_j - t_s) Ξ̃_{j,i,l} / Γ̃_{i,l}(t_s)`.
///
/// `j` and `s` are internal grid indices. `Ξ̃_j` is undefined before the
/// first differenced row; those entries are zero.
#[derive(Clone, Copy)]
pub struct StandardizedInnovations<'a> {
    est: &'a CorrFieldEstimate,
    kernel: &'a Kernel,
}

impl<'a> StandardizedInnovations<'a> {
    pub fn new(est: &'a CorrFieldEstimate, kernel: &'a Kernel) -> Self {
        Self { est, kernel }
    }

    pub fn estimate(&self) -> &CorrFieldEstimate {
        self.est
    }

    pub fn n(&self) -> usize {
        self.est.n
    }

    pub fn p(&self) -> usize {
        self.est.p
    }

    /// `Ξ̄̂` for hypothesis `hyp`; `None` when `s` is outside the window or
    /// `j` is off the grid.
    pub fn get(&self, hyp: usize, j: usize, s: usize) -> Option<f64> {
        let gamma_sq = self.est.lrv_at(hyp, s)?;
        (j < self.est.n).then(|| self.pair_consts(hyp).eval(self.est, self.kernel, j, s, gamma_sq.sqrt()))
    }

    /// Values for `j` in `js` at a fixed centre `s` (which must lie in the window).
    pub(crate) fn fill_center(&self, hyp: usize, s: usize, js: std::ops::Range<usize>, out: &mut Vec<f64>) {
        let gamma = self.est.lrv_at(hyp, s).expect("centre inside window").sqrt();
        let consts = self.pair_consts(hyp);
        out.clear();
        out.extend(js.map(|j| consts.eval(self.est, self.kernel, j, s, gamma)));
    }

    fn pair_consts(&self, hyp: usize) -> PairConsts {
        let (i, l) = hypothesis_pair_at(hyp);
        let bands = &self.est.base.bands;
        PairConsts {
            hyp,
            b: bands.get(i, l),
            c: bands.c(i, l),
        }
    }
}

struct PairConsts {
    hyp: usize,
    b: f64,
    c: f64,
}

impl PairConsts {
    #[inline]
    fn eval(&self, est: &CorrFieldEstimate, kernel: &Kernel, j: usize, s: usize, gamma: f64) -> f64 {
        let base = &est.base;
        if j < base.lag {
            return 0.0;
        }
        let d = grid_time(j, base.n) - grid_time(s, base.n);
        let k = kernel.scaled(d, self.b);
        if k == 0.0 {
            return 0.0;
        }
        self.c * k * base.xi_tilde[self.hyp][j - base.lag] / gamma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::fourth_order_epanechnikov;
    use crate::panel::{difference, TimeSeriesPanel};
    use crate::rng::NormalStream;

    fn noise_panel(n: usize, p: usize, seed: u64) -> TimeSeriesPanel {
        let mut s = NormalStream::new(seed, 0);
        let v = Array2::from_shape_fn((n, p), |_| s.next_normal());
        TimeSeriesPanel::from_values(v).unwrap()
    }

    #[test]
    fn constant_and_linear_are_reproduced() {
        let k = fourth_order_epanechnikov();
        let times: Vec<f64> = (1..=100).map(|j| j as f64 / 100.0).collect();
        let c = vec![2.5; 100];
        let (a, b) = local_linear_fit(&c, &times, 0.5, 0.1, &k).unwrap();
        assert!((a - 2.5).abs() < 1e-12 && b.abs() < 1e-10);
        let lin: Vec<f64> = times.iter().map(|t| 2.0 + 3.0 * t).collect();
        for t in [0.2, 0.47, 0.9] {
            let (a, b) = local_linear_fit(&lin, &times, t, 0.15, &k).unwrap();
            assert!((a - (2.0 + 3.0 * t)).abs() < 1e-10);
            assert!((b - 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn too_few_points_is_an_error() {
        let k = fourth_order_epanechnikov();
        let times: Vec<f64> = (1..=100).map(|j| j as f64 / 100.0).collect();
        let z = vec![1.0; 100];
        let err = local_linear_fit(&z, &times, 0.5, 0.015, &k).unwrap_err();
        assert!(matches!(err, Error::Fit { .. }));
    }

    #[test]
    fn grid_smoother_matches_generic_fit() {
        let k = fourth_order_epanechnikov();
        let n = 80;
        let offset = 6;
        let mut s = NormalStream::new(5, 0);
        let z: Vec<f64> = (0..n - offset).map(|_| s.next_normal()).collect();
        let times: Vec<f64> = (offset..n).map(|g| grid_time(g, n)).collect();
        let sm = GridSmoother { z: &z, offset, n, b: 0.2, kernel: &k };
        for g in [0, 10, 40, 79] {
            let a = sm.fit(g).unwrap();
            let (b, _) = local_linear_fit(&z, &times, grid_time(g, n), 0.2, &k).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bandwidth_validation() {
        assert!(BandwidthSet::uniform(3, 0.5).is_err());
        assert!(BandwidthSet::uniform(3, 0.0).is_err());
        let mut m = Array2::from_elem((2, 2), 0.3);
        m[[0, 1]] = 0.05;
        assert!(BandwidthSet::new(&m).is_err());
        m[[1, 0]] = 0.05;
        assert!(BandwidthSet::new(&m).is_err(), "ratio bound");
        let capped = BandwidthSet::capped(&m).unwrap();
        assert!((capped.b_max() - 0.25).abs() < 1e-15);
        let b = BandwidthSet::uniform(4, 0.2).unwrap();
        assert_eq!(b.c(1, 0), 1.0);
    }

    #[test]
    fn window_bounds() {
        let w = GridWindow::for_bandwidth(450, 0.12).unwrap();
        assert_eq!((w.start, w.end), (53, 395));
        assert!(GridWindow::for_bandwidth(10, 0.6).is_err());
    }

    #[test]
    fn diagonal_correlation_is_one() {
        let k = fourth_order_epanechnikov();
        let panel = noise_panel(300, 3, 11);
        let d = difference(&panel, 6).unwrap();
        let bands = BandwidthSet::uniform(3, 0.2).unwrap();
        let est = estimate_corr_field(&d, &bands, &k, &LrvParams::uniform(3, 5, 0.3)).unwrap();
        for i in 0..3 {
            assert!(est.window().iter().all(|g| est.rho(i, i)[g] == 1.0));
        }
        assert!(est.lrv(0).iter().all(|v| *v > 0.0));
        for (i, l) in hypothesis_pairs(3) {
            assert_eq!(est.rho(i, l), est.rho(l, i));
        }
    }

    #[test]
    fn identical_columns_have_unit_correlation() {
        let k = fourth_order_epanechnikov();
        let mut v = noise_panel(300, 3, 2).into_parts().0;
        let c0 = v.column(0).to_owned();
        v.column_mut(1).assign(&c0);
        let panel = TimeSeriesPanel::from_values(v).unwrap();
        let d = difference(&panel, 6).unwrap();
        let bands = BandwidthSet::uniform(3, 0.2).unwrap();
        let base = CorrFieldBase::estimate(&d, &bands, &k).unwrap();
        assert!(base.window().iter().all(|g| base.rho(1, 0)[g] == 1.0));
    }

    #[test]
    fn constant_series_aborts() {
        let k = fourth_order_epanechnikov();
        let mut v = noise_panel(200, 2, 3).into_parts().0;
        v.column_mut(1).fill(4.0);
        let panel = TimeSeriesPanel::from_values(v).unwrap();
        let d = difference(&panel, 5).unwrap();
        let bands = BandwidthSet::uniform(2, 0.2).unwrap();
        let err = CorrFieldBase::estimate(&d, &bands, &k).unwrap_err();
        assert!(matches!(err, Error::NonPositiveVariance { series: 1, .. }));
    }

    #[test]
    fn lrv_parameter_checks() {
        let k = fourth_order_epanechnikov();
        let panel = noise_panel(200, 2, 3);
        let d = difference(&panel, 5).unwrap();
        let bands = BandwidthSet::uniform(2, 0.2).unwrap();
        assert!(estimate_corr_field(&d, &bands, &k, &LrvParams::uniform(2, 1, 0.3)).is_err());
        assert!(estimate_corr_field(&d, &bands, &k, &LrvParams::uniform(2, 51, 0.3)).is_err());
        assert!(estimate_corr_field(&d, &bands, &k, &LrvParams::uniform(2, 5, 0.0)).is_err());
    }

    #[test]
    fn standardized_innovations_vanish_outside_support() {
        let k = fourth_order_epanechnikov();
        let panel = noise_panel(200, 2, 8);
        let d = difference(&panel, 5).unwrap();
        let bands = BandwidthSet::uniform(2, 0.15).unwrap();
        let est = estimate_corr_field(&d, &bands, &k, &LrvParams::uniform(2, 4, 0.3)).unwrap();
        let xi = StandardizedInnovations::new(&est, &k);
        let s = 100;
        assert_eq!(xi.get(0, s + 30, s), Some(0.0));
        assert_eq!(xi.get(0, s - 30, s), Some(0.0));
        assert_eq!(xi.get(0, 2, s), Some(0.0), "before the first difference");
        assert!(xi.get(0, s, 5).is_none(), "centre outside window");
        let direct = k.scaled(grid_time(s + 3, 200) - grid_time(s, 200), 0.15)
            * est.xi_tilde(0)[s + 3 - 5]
            / est.lrv_at(0, s).unwrap().sqrt();
        assert!((xi.get(0, s + 3, s).unwrap() - direct).abs() < 1e-14);
    }
}
