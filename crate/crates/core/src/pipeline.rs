//! End-to-end network construction: tune, estimate, bootstrap, P-values.

use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use crate::bootstrap::{
    block_sums, draw_ensemble, pvalues, test_statistics, BootstrapEnsemble, PValueField, SumRange, TestStatistics,
    DEFAULT_REPLICATES,
};
use crate::error::{Error, Result};
use crate::estimator::{BandwidthSet, CorrFieldBase, CorrFieldEstimate, LrvParams, StandardizedInnovations};
use crate::inference::{build_networks, NetworkSnapshot, ThresholdRule};
use crate::kernel::Kernel;
use crate::pairs::{hypothesis_count, hypothesis_pairs};
use crate::panel::{difference, TimeSeriesPanel};
use crate::tuning::{lag_for, mv_select, refine_m, select_bandwidths, GcvSelection, MvSelection, RefineSelection, TuningConfig};

/// How the difference lag is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LagChoice {
    /// `⌈c log n⌉`.
    LogRate(f64),
    Fixed(usize),
}

impl Default for LagChoice {
    fn default() -> Self {
        LagChoice::LogRate(2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub lag: LagChoice,
    /// One bandwidth for every pair instead of GCV.
    pub bandwidth: Option<f64>,
    /// Multiplies the bandwidths after selection.
    pub bandwidth_factor: f64,
    pub w: Option<usize>,
    pub eta: Option<f64>,
    /// One block length for every pair instead of MV refinement.
    pub m: Option<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub sum_range: SumRange,
    /// Custom grids; derived from `n` when absent.
    pub grids: Option<TuningConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lag: LagChoice::default(),
            bandwidth: None,
            bandwidth_factor: 1.0,
            w: None,
            eta: None,
            m: None,
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            sum_range: SumRange::default(),
            grids: None,
        }
    }
}

/// Selected parameters plus the diagnostic tables behind them.
#[derive(Clone, Debug)]
pub struct TuningReport {
    pub lag: usize,
    pub bands: BandwidthSet,
    pub w: usize,
    pub eta: f64,
    /// Block length per hypothesis pair.
    pub m: Vec<usize>,
    pub gcv: Vec<GcvSelection>,
    pub mv: Option<MvSelection>,
    pub refine: Vec<RefineSelection>,
    pub grids: TuningConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct TuningSummary {
    pub lag: usize,
    pub bandwidths: Vec<Vec<f64>>,
    pub w: usize,
    pub eta: f64,
    pub m: Vec<Vec<usize>>,
}

impl TuningReport {
    pub fn summary(&self) -> TuningSummary {
        let p = self.bands.p();
        let mut m = vec![vec![0; p]; p];
        for (k, (i, l)) in hypothesis_pairs(p).into_iter().enumerate() {
            m[i][l] = self.m[k];
            m[l][i] = self.m[k];
        }
        TuningSummary {
            lag: self.lag,
            bandwidths: self.bands.matrix().rows().into_iter().map(|r| r.to_vec()).collect(),
            w: self.w,
            eta: self.eta,
            m,
        }
    }
}

pub struct PipelineOutput {
    pub tuning: TuningReport,
    pub estimate: CorrFieldEstimate,
    pub stats: TestStatistics,
    pub ensemble: BootstrapEnsemble,
    pub pvalues: PValueField,
}

impl PipelineOutput {
    pub fn networks(&self, rule: &ThresholdRule, labels: &[String]) -> Result<Vec<NetworkSnapshot>> {
        build_networks(&self.pvalues, rule, labels)
    }
}

/// Runs the parameter selection only.
pub fn tune(panel: &TimeSeriesPanel, cfg: &PipelineConfig, kernel: &Kernel) -> Result<(TuningReport, Arc<CorrFieldBase>)> {
    let n = panel.n();
    let mut grids = cfg.grids.clone().unwrap_or_else(|| TuningConfig::default_for(n));
    let lag = match cfg.lag {
        LagChoice::LogRate(c) => lag_for(n, c),
        LagChoice::Fixed(h) => h,
    };
    grids.lag = lag;
    let diffs = difference(panel, lag)?;

    let (bands, gcv) = match cfg.bandwidth {
        Some(b) => (BandwidthSet::uniform(panel.p(), b)?, Vec::new()),
        None => {
            grids.validate()?;
            select_bandwidths(&diffs, &grids.bandwidths, kernel)?
        }
    };
    let bands = if cfg.bandwidth_factor == 1.0 {
        bands
    } else {
        bands.scaled(cfg.bandwidth_factor)?
    };
    let base = Arc::new(CorrFieldBase::estimate(&diffs, &bands, kernel)?);

    let (w, eta, mv) = match (cfg.w, cfg.eta) {
        (Some(w), Some(eta)) => (w, eta, None),
        (w, eta) => {
            grids.validate()?;
            let sel = mv_select(&base, kernel, &grids)?;
            (w.unwrap_or(sel.w), eta.unwrap_or(sel.eta), Some(sel))
        }
    };

    let pairs = hypothesis_count(panel.p());
    let (m, refine) = match cfg.m {
        Some(m) => (vec![m; pairs], Vec::new()),
        None => {
            let refine = (0..pairs)
                .map(|hyp| refine_m(&base, hyp, eta, &grids.block_lengths))
                .collect::<Result<Vec<_>>>()?;
            (refine.iter().map(|r| r.m).collect(), refine)
        }
    };

    Ok((
        TuningReport {
            lag,
            bands,
            w,
            eta,
            m,
            gcv,
            mv,
            refine,
            grids,
        },
        base,
    ))
}

/// Tuning, estimation, bootstrap and P-values for one panel.
pub fn run(panel: &TimeSeriesPanel, cfg: &PipelineConfig, kernel: &Kernel) -> Result<PipelineOutput> {
    if cfg.replicates == 0 {
        return Err(Error::OutOfRange("replicate count must be positive".into()));
    }
    let (tuning, base) = tune(panel, cfg, kernel)?;
    let lrv = LrvParams {
        m: tuning.m.clone(),
        eta: tuning.eta,
    };
    let estimate = CorrFieldEstimate::from_base(base, lrv)?;
    let stats = test_statistics(&estimate);
    let sums = block_sums(&StandardizedInnovations::new(&estimate, kernel), tuning.w)?;
    let ensemble = draw_ensemble(&sums, &tuning.bands, cfg.replicates, cfg.seed, cfg.sum_range)?;
    let pvalues = pvalues(&stats, &ensemble)?;
    Ok(PipelineOutput {
        tuning,
        estimate,
        stats,
        ensemble,
        pvalues,
    })
}

/// Pearson correlations of the raw observations over a window of rows.
pub(crate) fn window_correlations(values: &Array2<f64>, rows: std::ops::Range<usize>) -> Array2<f64> {
    let p = values.ncols();
    let k = rows.len() as f64;
    let block = values.slice(ndarray::s![rows, ..]);
    let means: Vec<f64> = block.columns().into_iter().map(|c| c.sum() / k).collect();
    let mut cov = Array2::<f64>::zeros((p, p));
    for row in block.rows() {
        for i in 0..p {
            let di = row[i] - means[i];
            for l in 0..=i {
                cov[[i, l]] += di * (row[l] - means[l]);
            }
        }
    }
    Array2::from_shape_fn((p, p), |(i, l)| {
        let (a, b) = if i >= l { (i, l) } else { (l, i) };
        cov[[a, b]] / (cov[[a, a]] * cov[[b, b]]).sqrt()
    })
}
