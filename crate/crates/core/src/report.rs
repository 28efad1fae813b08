//! File artifacts: network JSON, CSV tables and simple SVG line charts.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::bootstrap::{BootstrapEnsemble, PValueField};
use crate::error::{Error, Result};
use crate::estimator::CorrFieldEstimate;
use crate::inference::{EvalReport, NetworkSnapshot, RuleKind};
use crate::pairs::{hypothesis_index, hypothesis_pairs};
use crate::panel::grid_time;
use crate::pipeline::TuningReport;
use crate::simlab::ExperimentReport;

#[derive(Debug, Serialize)]
pub struct NetworkDocument {
    pub n: usize,
    pub p: usize,
    pub alpha: Option<f64>,
    pub rule: String,
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub snapshots: Vec<SnapshotRecord>,
}

#[derive(Debug, Serialize)]
pub struct SnapshotRecord {
    pub t: f64,
    /// `[i, l]` with `i > l`, 0-based.
    pub edges: Vec<[usize; 2]>,
    pub pvalues_rejected_max: Option<f64>,
    /// One P-value per hypothesis pair, when available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pvalues: Option<Vec<f64>>,
}

impl NetworkDocument {
    /// `pfield` rows must line up with `snapshots` when given.
    pub fn new(
        n: usize,
        alpha: Option<f64>,
        rule: &str,
        snapshots: &[NetworkSnapshot],
        pfield: Option<&PValueField>,
    ) -> Result<Self> {
        let p = snapshots.first().map_or(0, |s| s.p);
        let labels = snapshots.first().map_or_else(Vec::new, |s| s.labels.to_vec());
        if let Some(pf) = pfield {
            if pf.rows() != snapshots.len() {
                return Err(Error::Dimension("P-value rows do not match snapshots".into()));
            }
        }
        let records = snapshots
            .iter()
            .enumerate()
            .map(|(k, s)| SnapshotRecord {
                t: s.t,
                edges: s.rejected.iter().map(|&(i, l)| [i, l]).collect(),
                pvalues_rejected_max: s.max_rejected_pvalue,
                pvalues: pfield.map(|pf| pf.row(k)),
            })
            .collect();
        Ok(Self {
            n,
            p,
            alpha,
            rule: rule.to_string(),
            labels,
            times: snapshots.iter().map(|s| s.t).collect(),
            snapshots: records,
        })
    }

    pub fn for_rule(n: usize, alpha: f64, rule: RuleKind, snapshots: &[NetworkSnapshot], pfield: &PValueField) -> Result<Self> {
        Self::new(n, Some(alpha), &rule.to_string(), snapshots, Some(pfield))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn pair_label(labels: &[String], i: usize, l: usize) -> String {
    format!("{}-{}", labels[i], labels[l])
}

/// One row per (pair, window time): beta, gamma, sigma, rho, lrv.
pub fn write_estimates_csv(path: &Path, est: &CorrFieldEstimate, labels: &[String]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["pair", "t", "beta", "gamma", "sigma", "rho", "lrv"])?;
    let n = est.n();
    for (i, l) in hypothesis_pairs(est.p()) {
        let hyp = hypothesis_index(i, l);
        let name = pair_label(labels, i, l);
        for g in est.window().iter() {
            w.write_record([
                name.clone(),
                grid_time(g, n).to_string(),
                est.beta(i, l)[g].to_string(),
                est.gamma(i, l)[g].to_string(),
                est.sigma(i, l)[g].to_string(),
                est.rho(i, l)[g].to_string(),
                est.lrv_at(hyp, g).expect("window point").to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Wide table: `t` followed by one P-value column per pair.
pub fn write_pvalues_csv(path: &Path, field: &PValueField, labels: &[String]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let p = labels.len();
    let mut header = vec!["t".to_string()];
    header.extend(hypothesis_pairs(p).into_iter().map(|(i, l)| pair_label(labels, i, l)));
    w.write_record(&header)?;
    for (k, t) in field.times().into_iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(field.row(k).into_iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `t, FDP, FNP` rows followed by `max` and `avg` summary rows.
pub fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "FDP", "FNP"])?;
    for pt in &report.points {
        w.write_record([pt.t.to_string(), pt.fdp.to_string(), pt.fnp.to_string()])?;
    }
    w.write_record(["max".to_string(), report.max_fdp.to_string(), report.max_fnp.to_string()])?;
    w.write_record(["avg".to_string(), report.avg_fdp.to_string(), report.avg_fnp.to_string()])?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-replication summaries plus a final `mean` row.
pub fn write_experiment_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["rep", "maxFDP", "avgFDP", "maxFNP", "avgFNP"])?;
    for r in &report.reps {
        w.write_record([
            r.rep.to_string(),
            r.max_fdp.to_string(),
            r.avg_fdp.to_string(),
            r.max_fnp.to_string(),
            r.avg_fnp.to_string(),
        ])?;
    }
    let a = &report.aggregate;
    w.write_record([
        "mean".to_string(),
        a.max_fdp.to_string(),
        a.avg_fdp.to_string(),
        a.max_fnp.to_string(),
        a.avg_fnp.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectory_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "meanFDP", "meanFNP"])?;
    for pt in &report.trajectory {
        w.write_record([pt.t.to_string(), pt.mean_fdp.to_string(), pt.mean_fnp.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long format: pair, replicate, bootstrap maximum.
pub fn write_ensemble_csv(path: &Path, ens: &BootstrapEnsemble, labels: &[String]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["pair", "replicate", "z"])?;
    let z = ens.values();
    for (hyp, (i, l)) in hypothesis_pairs(labels.len()).into_iter().enumerate() {
        let name = pair_label(labels, i, l);
        for r in 0..ens.replicates() {
            w.write_record([name.clone(), r.to_string(), z[[r, hyp]].to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Plain-text tuning summary; `verbose` appends the GCV and MV tables.
pub fn tuning_text(report: &TuningReport, labels: &[String], verbose: bool) -> String {
    let mut s = String::new();
    let p = report.bands.p();
    let summary = report.summary();
    let _ = writeln!(s, "lag h = {}", report.lag);
    let _ = writeln!(s, "block window w = {}", report.w);
    let _ = writeln!(s, "smoothing eta = {}", report.eta);
    let _ = writeln!(s, "bandwidths:");
    let _ = writeln!(s, "  ,{}", labels.join(","));
    for i in 0..p {
        let row: Vec<String> = summary.bandwidths[i].iter().map(|b| format!("{b:.6}")).collect();
        let _ = writeln!(s, "  {},{}", labels[i], row.join(","));
    }
    let _ = writeln!(s, "block lengths m:");
    let _ = writeln!(s, "  ,{}", labels.join(","));
    for i in 0..p {
        let row: Vec<String> = summary.m[i].iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "  {},{}", labels[i], row.join(","));
    }
    if verbose {
        let _ = writeln!(s, "GCV scores (pair: bandwidth=score ...):");
        for sel in &report.gcv {
            let (i, l) = sel.pair;
            let cells: Vec<String> = sel
                .scores
                .iter()
                .map(|(b, v)| match v {
                    Some(v) => format!("{b:.5}={v:.6e}"),
                    None => format!("{b:.5}=n/a"),
                })
                .collect();
            let _ = writeln!(s, "  {}: {}", pair_label(labels, i, l), cells.join(" "));
        }
        if let Some(mv) = &report.mv {
            let _ = writeln!(s, "MV table (rows w = {:?}, columns eta = {:?}):", report.grids.windows, report.grids.etas);
            for row in mv.mv.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
                let _ = writeln!(s, "  {}", cells.join(","));
            }
        }
    }
    s
}

/// A line series for [`svg_line_chart`].
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Static SVG line chart with axes, tick labels and a legend.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (width, height) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = width - left - right;
    let ph = height - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{b}" stroke="black"/>"#,
        b = top + ph,
        r = left + pw
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#, sx(xv), top + ph + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, left - 6.0, sy(yv) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, left + pw / 2.0, height - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = top + 14.0 * k as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + pw - 120.0,
            left + pw - 100.0,
            left + pw - 95.0,
            ly + 4.0,
            escape(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// FDP and FNP trajectories of an experiment as an SVG chart.
pub fn trajectory_svg(report: &ExperimentReport) -> String {
    let fdp = report.trajectory.iter().map(|p| (p.t, p.mean_fdp)).collect();
    let fnp = report.trajectory.iter().map(|p| (p.t, p.mean_fnp)).collect();
    svg_line_chart(
        &format!("{} mean FDP / FNP", report.method),
        "t",
        "proportion",
        &[Series { name: "FDP", points: fdp }, Series { name: "FNP", points: fnp }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed() {
        let svg = svg_line_chart(
            "a < b",
            "t",
            "y",
            &[Series {
                name: "s",
                points: vec![(0.0, 0.0), (1.0, 2.0)],
            }],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("<polyline"));
        // empty input still renders axes
        assert!(svg_line_chart("", "", "", &[]).contains("<line"));
    }
}
