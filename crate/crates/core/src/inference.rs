//! Step-up FDR procedures applied independently at every time point, the
//! resulting network snapshots, and FDP/FNP bookkeeping.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::bootstrap::PValueField;
use crate::error::{Error, Result};
use crate::pairs::{hypothesis_count, hypothesis_index, hypothesis_pairs};

/// Euler–Mascheroni constant, fixed to 16 digits.
pub const EULER_GAMMA: f64 = 0.5772156649015329;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RuleKind {
    /// Benjamini–Hochberg.
    #[serde(rename = "BH")]
    Bh,
    /// Benjamini–Yekutieli.
    #[serde(rename = "BY")]
    By,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::Bh => "BH",
            RuleKind::By => "BY",
        })
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bh" => Ok(RuleKind::Bh),
            "by" => Ok(RuleKind::By),
            other => Err(Error::OutOfRange(format!("unknown rule {other:?}"))),
        }
    }
}

/// Threshold sequence `Δ(r)` of a step-up procedure over `m` hypotheses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdRule {
    kind: RuleKind,
    alpha: f64,
    m: usize,
}

impl ThresholdRule {
    pub fn new(kind: RuleKind, alpha: f64, m: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfRange(format!("alpha = {alpha} outside (0, 1)")));
        }
        if m == 0 {
            return Err(Error::OutOfRange("no hypotheses".into()));
        }
        Ok(Self { kind, alpha, m })
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `Δ(r)` for `r = 1..m`.
    pub fn threshold(&self, r: usize) -> f64 {
        let bh = self.alpha * r as f64 / self.m as f64;
        match self.kind {
            RuleKind::Bh => bh,
            RuleKind::By => bh / ((self.m as f64).ln() + EULER_GAMMA),
        }
    }
}

/// Indices rejected by the step-up procedure, in ascending order.
///
/// `R = max{r : P_(r) <= Δ(r)}`; every hypothesis with `P <= Δ(R)` is rejected.
pub fn step_up(pvals: &[f64], rule: &ThresholdRule) -> Result<Vec<usize>> {
    if pvals.len() != rule.m {
        return Err(Error::Dimension(format!(
            "{} P-values for a rule over {} hypotheses",
            pvals.len(),
            rule.m
        )));
    }
    if let Some(bad) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::OutOfRange(format!("P-value {bad} outside [0, 1]")));
    }
    let mut sorted = pvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let Some(r) = (1..=rule.m).rev().find(|&r| sorted[r - 1] <= rule.threshold(r)) else {
        return Ok(Vec::new());
    };
    let cut = rule.threshold(r);
    Ok((0..pvals.len()).filter(|&k| pvals[k] <= cut).collect())
}

/// The estimated network at one time point.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSnapshot {
    pub t: f64,
    /// Internal grid index of `t`.
    pub grid_index: usize,
    /// Rejected pairs `(i, l)` with `i > l`, in hypothesis order.
    pub rejected: Vec<(usize, usize)>,
    pub p: usize,
    pub labels: Arc<[String]>,
    /// Largest P-value among rejected pairs, when P-values exist.
    pub max_rejected_pvalue: Option<f64>,
}

impl NetworkSnapshot {
    pub fn edge_count(&self) -> usize {
        self.rejected.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && self.rejected.binary_search_by_key(&hypothesis_index(a, b), |&(i, l)| hypothesis_index(i, l)).is_ok()
    }

    /// Rejection indicator per hypothesis index.
    pub fn indicator(&self) -> Vec<bool> {
        let mut out = vec![false; hypothesis_count(self.p)];
        for &(i, l) in &self.rejected {
            out[hypothesis_index(i, l)] = true;
        }
        out
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.p];
        for &(i, l) in &self.rejected {
            deg[i] += 1;
            deg[l] += 1;
        }
        deg
    }
}

pub fn build_networks(pfield: &PValueField, rule: &ThresholdRule, labels: &[String]) -> Result<Vec<NetworkSnapshot>> {
    let pairs_count = pfield.pairs();
    let p = labels.len();
    if hypothesis_count(p) != pairs_count {
        return Err(Error::Dimension(format!(
            "{p} labels but {pairs_count} hypothesis pairs"
        )));
    }
    let pairs = hypothesis_pairs(p);
    let labels: Arc<[String]> = labels.into();
    let times = pfield.times();
    pfield
        .window()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let row = pfield.row(k);
            let rejected_idx = step_up(&row, rule)?;
            let max_rejected_pvalue = rejected_idx.iter().map(|&h| row[h]).reduce(f64::max);
            Ok(NetworkSnapshot {
                t: times[k],
                grid_index: g,
                rejected: rejected_idx.into_iter().map(|h| pairs[h]).collect(),
                p,
                labels: Arc::clone(&labels),
                max_rejected_pvalue,
            })
        })
        .collect()
}

/// True null sets `H₀(t)` over time.
pub trait NullSchedule {
    /// Null indicator per hypothesis index at time `t`, or `None` if unknown.
    fn nulls_at(&self, t: f64) -> Option<&[bool]>;
}

/// A null set that does not change over time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstantNulls(pub Vec<bool>);

impl NullSchedule for ConstantNulls {
    fn nulls_at(&self, _t: f64) -> Option<&[bool]> {
        Some(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalPoint {
    pub t: f64,
    pub grid_index: usize,
    pub fdp: f64,
    pub fnp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub points: Vec<EvalPoint>,
    pub max_fdp: f64,
    pub avg_fdp: f64,
    pub max_fnp: f64,
    pub avg_fnp: f64,
}

/// `FDP = |H₀ ∩ R| / max(|R|, 1)` and `FNP = |H₁ \ R| / max(|H₁|, 1)`.
pub fn false_proportions(rejected: &[bool], nulls: &[bool]) -> (f64, f64) {
    let (mut false_disc, mut total, mut missed, mut non_null) = (0usize, 0usize, 0usize, 0usize);
    for (&rej, &null) in rejected.iter().zip(nulls) {
        total += usize::from(rej);
        false_disc += usize::from(rej && null);
        non_null += usize::from(!null);
        missed += usize::from(!rej && !null);
    }
    (
        false_disc as f64 / total.max(1) as f64,
        missed as f64 / non_null.max(1) as f64,
    )
}

/// FDP and FNP at each snapshot strictly inside `(lo, hi)`, with max and
/// mean over those points.
pub fn evaluate(snapshots: &[NetworkSnapshot], truth: &impl NullSchedule, interval: (f64, f64)) -> Result<EvalReport> {
    let (lo, hi) = interval;
    let mut points = Vec::new();
    for snap in snapshots.iter().filter(|s| s.t > lo && s.t < hi) {
        let nulls = truth
            .nulls_at(snap.t)
            .ok_or_else(|| Error::Dimension(format!("no ground truth at t = {}", snap.t)))?;
        if nulls.len() != hypothesis_count(snap.p) {
            return Err(Error::Dimension(format!(
                "ground truth has {} pairs, snapshot has {}",
                nulls.len(),
                hypothesis_count(snap.p)
            )));
        }
        let (fdp, fnp) = false_proportions(&snap.indicator(), nulls);
        points.push(EvalPoint {
            t: snap.t,
            grid_index: snap.grid_index,
            fdp,
            fnp,
        });
    }
    if points.is_empty() {
        return Err(Error::OutOfRange(format!(
            "no snapshot inside the interval ({lo}, {hi})"
        )));
    }
    let k = points.len() as f64;
    Ok(EvalReport {
        max_fdp: points.iter().map(|e| e.fdp).fold(0.0, f64::max),
        avg_fdp: points.iter().map(|e| e.fdp).sum::<f64>() / k,
        max_fnp: points.iter().map(|e| e.fnp).fold(0.0, f64::max),
        avg_fnp: points.iter().map(|e| e.fnp).sum::<f64>() / k,
        points,
    })
}

/// Per group `V_i`: `|V_i|⁻¹ |V|⁻¹ Σ_{v1 ∈ V_i} Σ_{v2 ∈ V} 1{v1 ~ v2}`.
pub fn connection_proportion(snapshot: &NetworkSnapshot, groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    let p = snapshot.p;
    let mut seen = vec![false; p];
    for group in groups {
        if group.is_empty() {
            return Err(Error::OutOfRange("empty group".into()));
        }
        for &v in group {
            if v >= p || std::mem::replace(&mut seen[v], true) {
                return Err(Error::OutOfRange(format!(
                    "groups do not partition the {p} nodes (node {v})"
                )));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::OutOfRange(format!("groups do not cover all {p} nodes")));
    }
    let deg = snapshot.degrees();
    Ok(groups
        .iter()
        .map(|g| g.iter().map(|&v| deg[v]).sum::<usize>() as f64 / (g.len() * p) as f64)
        .collect())
}
