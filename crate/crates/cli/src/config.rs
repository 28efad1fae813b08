//! Flat `key = value` configuration files and their merge with flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::Serialize;

use crate::UsageError;

/// Options shared by every subcommand. Each one can also be set in the
/// config file under the same name (without the dashes); flags win.
#[derive(Args, Clone, Debug, Default, Serialize)]
pub struct Options {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Input CSV, one column per series, rows in time order.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Simulation design (1 or 2) when no input file is given.
    #[arg(long, global = true)]
    pub case: Option<u8>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Step-up rule: bh or by.
    #[arg(long, global = true)]
    pub rule: Option<String>,
    /// Bootstrap replicates.
    #[arg(long = "B", global = true)]
    #[serde(rename = "B")]
    pub b: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Seed for the simulated panel; defaults to --seed.
    #[arg(long = "sim-seed", global = true)]
    #[serde(rename = "sim-seed")]
    pub sim_seed: Option<u64>,
    /// Difference lag.
    #[arg(long, global = true)]
    pub h: Option<usize>,
    /// One bandwidth for every pair instead of GCV.
    #[arg(long, global = true)]
    pub bandwidth: Option<f64>,
    /// Bootstrap block window.
    #[arg(long, global = true)]
    pub w: Option<usize>,
    /// Long-run variance smoothing bandwidth.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Long-run variance block length.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Stack lags 0..=K before the analysis.
    #[arg(long, global = true)]
    pub lags: Option<usize>,
    /// Moving-window correlation threshold.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Extra artifacts: networks, estimates, trajectories, svg.
    #[arg(long, global = true, value_delimiter = ',')]
    pub emit: Option<Vec<String>>,
    /// Treat the first input row as data, not labels.
    #[arg(long = "no-header", global = true)]
    #[serde(rename = "no-header")]
    pub no_header: bool,
}

pub fn parse_config(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, UsageError> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(UsageError(format!(
                "{}:{}: expected `key = value`",
                origin.display(),
                k + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn fill<T: FromStr>(slot: &mut Option<T>, map: &mut BTreeMap<String, String>, key: &str) -> Result<(), UsageError> {
    if let Some(v) = map.remove(key) {
        if slot.is_none() {
            let parsed = v
                .parse()
                .map_err(|_| UsageError(format!("config key {key}: cannot parse {v:?}")))?;
            *slot = Some(parsed);
        }
    }
    Ok(())
}

impl Options {
    /// Fills unset options from the config file, if any.
    pub fn merge_config(mut self) -> Result<Self, UsageError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = parse_config(&text, &path)?;
        fill(&mut self.input, &mut map, "input")?;
        fill(&mut self.case, &mut map, "case")?;
        fill(&mut self.n, &mut map, "n")?;
        fill(&mut self.alpha, &mut map, "alpha")?;
        fill(&mut self.rule, &mut map, "rule")?;
        fill(&mut self.b, &mut map, "B")?;
        fill(&mut self.seed, &mut map, "seed")?;
        fill(&mut self.sim_seed, &mut map, "sim-seed")?;
        fill(&mut self.h, &mut map, "h")?;
        fill(&mut self.bandwidth, &mut map, "bandwidth")?;
        fill(&mut self.w, &mut map, "w")?;
        fill(&mut self.eta, &mut map, "eta")?;
        fill(&mut self.m, &mut map, "m")?;
        fill(&mut self.lags, &mut map, "lags")?;
        fill(&mut self.threshold, &mut map, "threshold")?;
        fill(&mut self.reps, &mut map, "reps")?;
        fill(&mut self.out, &mut map, "out")?;
        fill(&mut self.workers, &mut map, "workers")?;
        let mut no_header = None;
        fill(&mut no_header, &mut map, "no-header")?;
        self.no_header |= no_header.unwrap_or(false);
        if let Some(v) = map.remove("emit") {
            if self.emit.is_none() {
                self.emit = Some(v.split(',').map(|s| s.trim().to_string()).collect());
            }
        }
        if let Some(key) = map.keys().next() {
            return Err(UsageError(format!("unknown config key {key:?}")));
        }
        Ok(self)
    }
}
