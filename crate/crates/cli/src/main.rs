//! `tvcorr`: time-varying correlation networks from the command line.

mod config;

use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use tvcorr::bootstrap::DEFAULT_REPLICATES;
use tvcorr::inference::{evaluate, RuleKind, ThresholdRule};
use tvcorr::kernel::Kernel;
use tvcorr::pairs::hypothesis_count;
use tvcorr::panel::{load_csv, stack_lags, TimeSeriesPanel};
use tvcorr::pipeline::{self, LagChoice, PipelineConfig};
use tvcorr::report::{self, NetworkDocument, Series};
use tvcorr::simlab::{self, ExperimentSpec, GroundTruth, Method, SimCase, SimSpec};

use config::Options;

#[derive(Parser, Debug)]
#[command(name = "tvcorr", version, about = "Time-varying correlation networks with FDR control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Build networks from a CSV panel or a simulated one.
    Analyze,
    /// Write a simulated panel and its true null pattern.
    Simulate,
    /// Repeat simulate + analyze and report FDP/FNP.
    Experiment,
    /// Moving-window correlation thresholding on simulated panels.
    Baseline,
    /// Run parameter selection only.
    Tune,
}

/// Invalid invocation; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

enum Failure {
    Usage(String),
    Runtime(tvcorr::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<tvcorr::Error> for Failure {
    fn from(e: tvcorr::Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

const EMIT_KINDS: [&str; 4] = ["networks", "estimates", "trajectories", "svg"];

/// Fully resolved settings; also the body of the run manifest.
#[derive(Debug, Serialize)]
struct RunConfig {
    command: Command,
    input: Option<PathBuf>,
    case: Option<u8>,
    n: Option<usize>,
    alpha: f64,
    rule: RuleKind,
    #[serde(rename = "B")]
    replicates: usize,
    seed: u64,
    sim_seed: u64,
    h: Option<usize>,
    bandwidth: Option<f64>,
    w: Option<usize>,
    eta: Option<f64>,
    m: Option<usize>,
    lags: usize,
    threshold: Option<f64>,
    reps: usize,
    out: PathBuf,
    emit: Vec<String>,
    header: bool,
}

impl RunConfig {
    fn resolve(command: Command, o: Options) -> Result<Self, UsageError> {
        let alpha = o.alpha.unwrap_or(0.1);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(UsageError(format!("--alpha must lie in (0, 1), got {alpha}")));
        }
        let rule = match o.rule.as_deref() {
            None => RuleKind::Bh,
            Some(r) => r
                .parse()
                .map_err(|_| UsageError(format!("--rule must be bh or by, got {r:?}")))?,
        };
        if o.input.is_some() && o.case.is_some() {
            return Err(UsageError("give either --input or --case, not both".into()));
        }
        if let Some(c) = o.case {
            if !(1..=2).contains(&c) {
                return Err(UsageError(format!("--case must be 1 or 2, got {c}")));
            }
        }
        let needs_source = matches!(command, Command::Analyze | Command::Tune);
        if needs_source && o.input.is_none() && o.case.is_none() {
            return Err(UsageError("give --input FILE or --case {1,2}".into()));
        }
        if matches!(command, Command::Simulate | Command::Experiment | Command::Baseline) && o.input.is_some() {
            return Err(UsageError("--input only applies to analyze and tune".into()));
        }
        let replicates = o.b.unwrap_or(DEFAULT_REPLICATES);
        if replicates == 0 {
            return Err(UsageError("--B must be positive".into()));
        }
        if let Some(b) = o.bandwidth {
            if !(b > 0.0 && b < 0.5) {
                return Err(UsageError(format!("--bandwidth must lie in (0, 1/2), got {b}")));
            }
        }
        if let Some(eta) = o.eta {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(UsageError(format!("--eta must lie in (0, 1), got {eta}")));
            }
        }
        if o.h == Some(0) || o.w == Some(0) || o.m == Some(0) {
            return Err(UsageError("--h, --w and --m must be positive".into()));
        }
        if let Some(t) = o.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(UsageError(format!("--threshold must lie in (0, 1], got {t}")));
            }
        }
        if command == Command::Baseline && o.threshold.is_none() {
            return Err(UsageError("baseline needs --threshold".into()));
        }
        let reps = o.reps.unwrap_or(100);
        if reps == 0 {
            return Err(UsageError("--reps must be positive".into()));
        }
        if o.workers == Some(0) {
            return Err(UsageError("--workers must be positive".into()));
        }
        let emit = o.emit.unwrap_or_default();
        if let Some(bad) = emit.iter().find(|e| !EMIT_KINDS.contains(&e.as_str())) {
            return Err(UsageError(format!(
                "--emit {bad:?} not one of {}",
                EMIT_KINDS.join(", ")
            )));
        }
        let seed = o.seed.unwrap_or(0);
        Ok(Self {
            command,
            input: o.input,
            case: o.case,
            n: o.n,
            alpha,
            rule,
            replicates,
            seed,
            sim_seed: o.sim_seed.unwrap_or(seed),
            h: o.h,
            bandwidth: o.bandwidth,
            w: o.w,
            eta: o.eta,
            m: o.m,
            lags: o.lags.unwrap_or(0),
            threshold: o.threshold,
            reps,
            out: o.out.unwrap_or_else(|| PathBuf::from(".")),
            emit,
            header: !o.no_header,
        })
    }

    fn emits(&self, kind: &str) -> bool {
        self.emit.iter().any(|e| e == kind)
    }

    fn sim_case(&self) -> SimCase {
        match self.case {
            Some(2) => SimCase::Two,
            _ => SimCase::One,
        }
    }

    fn sim_n(&self) -> usize {
        self.n.unwrap_or(600)
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            lag: self.h.map_or(LagChoice::default(), LagChoice::Fixed),
            bandwidth: self.bandwidth,
            w: self.w,
            eta: self.eta,
            m: self.m,
            replicates: self.replicates,
            seed: self.seed,
            ..PipelineConfig::default()
        }
    }

    fn experiment(&self) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(self.sim_case(), self.sim_n(), self.reps, self.seed);
        spec.alpha = self.alpha;
        spec.pipeline = self.pipeline();
        // the baseline reuses --w as its half-width
        if self.command == Command::Baseline {
            spec.baseline_window = self.w;
        }
        spec
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return fail(Failure::Usage(e.to_string())),
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    let (code, body) = match &f {
        Failure::Usage(msg) => (2, json!({"error": "usage", "message": msg})),
        Failure::Runtime(e) => (1, json!({"error": e.kind(), "message": e.to_string()})),
    };
    eprintln!("{body}");
    ExitCode::from(code)
}

fn execute(cli: Cli) -> CmdResult {
    let opts = cli.opts.merge_config()?;
    let workers = opts.workers;
    let cfg = RunConfig::resolve(cli.command, opts)?;
    fs::create_dir_all(&cfg.out).map_err(|e| io_error(&cfg.out, e))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {workers:?} workers: {e}")))?;

    let kernel = Kernel::default();
    pool.install(|| match cfg.command {
        Command::Analyze => analyze(&cfg, &kernel),
        Command::Simulate => simulate(&cfg),
        Command::Experiment => experiment(&cfg, &kernel),
        Command::Baseline => baseline(&cfg, &kernel),
        Command::Tune => tune(&cfg, &kernel),
    })?;
    write_manifest(&cfg)
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(tvcorr::Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(tvcorr::Error::from)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_manifest(cfg: &RunConfig) -> CmdResult {
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    write_json(&cfg.path("manifest.json"), &manifest)
}

/// The panel to analyze plus the truth when it was simulated.
fn load_panel(cfg: &RunConfig) -> Result<(TimeSeriesPanel, Option<GroundTruth>), Failure> {
    let (panel, truth) = match &cfg.input {
        Some(path) => {
            let header = cfg.header && first_row_has_text(path)?;
            (load_csv(path, header)?, None)
        }
        None => {
            let spec = SimSpec::new(cfg.sim_case(), cfg.sim_n(), cfg.sim_seed);
            let (panel, truth) = simlab::simulate_case(&spec)?;
            (panel, Some(truth))
        }
    };
    if cfg.lags > 0 {
        // the truth no longer matches the stacked pairs
        return Ok((stack_lags(&panel, cfg.lags)?, None));
    }
    Ok((panel, truth))
}

/// A header is present when some field of the first line is not a number.
fn first_row_has_text(path: &Path) -> Result<bool, Failure> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut line = String::new();
    std::io::BufReader::new(file)
        .read_line(&mut line)
        .map_err(|e| io_error(path, e))?;
    Ok(line.trim().split(',').any(|f| f.trim().parse::<f64>().is_err()))
}

fn analyze(cfg: &RunConfig, kernel: &Kernel) -> CmdResult {
    let (panel, truth) = load_panel(cfg)?;
    let out = pipeline::run(&panel, &cfg.pipeline(), kernel)?;
    let labels = panel.labels();
    let rule = ThresholdRule::new(cfg.rule, cfg.alpha, hypothesis_count(panel.p()))?;
    let snapshots = out.networks(&rule, labels)?;

    NetworkDocument::for_rule(panel.n(), cfg.alpha, cfg.rule, &snapshots, &out.pvalues)?.write(&cfg.path("networks.json"))?;
    report::write_pvalues_csv(&cfg.path("pvalues.csv"), &out.pvalues, labels)?;
    write_text(&cfg.path("tuning.txt"), &report::tuning_text(&out.tuning, labels, true))?;
    write_json(&cfg.path("tuning.json"), &out.tuning.summary())?;

    if cfg.emits("estimates") {
        report::write_estimates_csv(&cfg.path("estimates.csv"), &out.estimate, labels)?;
    }
    if cfg.emits("trajectories") {
        match &truth {
            Some(truth) => {
                let eval = evaluate(&snapshots, truth, (1.0 / 3.0, 2.0 / 3.0))?;
                report::write_eval_csv(&cfg.path("eval.csv"), &eval)?;
            }
            None => log::warn!("no ground truth for this panel; eval.csv skipped"),
        }
    }
    if cfg.emits("svg") {
        let est = &out.estimate;
        let times: Vec<f64> = out.pvalues.times();
        let names: Vec<String> = tvcorr::pairs::hypothesis_pairs(panel.p())
            .into_iter()
            .map(|(i, l)| format!("{}-{}", labels[i], labels[l]))
            .collect();
        let series: Vec<Series<'_>> = tvcorr::pairs::hypothesis_pairs(panel.p())
            .into_iter()
            .zip(&names)
            .map(|((i, l), name)| {
                let rho = est.rho(i, l);
                let points = est.window().iter().zip(&times).map(|(g, &t)| (t, rho[g])).collect();
                Series { name, points }
            })
            .collect();
        write_text(
            &cfg.path("correlations.svg"),
            &report::svg_line_chart("Estimated correlations", "t", "rho", &series),
        )?;
    }

    let edges: usize = snapshots.iter().map(|s| s.edge_count()).sum();
    println!(
        "analyzed n = {}, p = {}: {} time points, {} edges in total ({} at level {})",
        panel.n(),
        panel.p(),
        snapshots.len(),
        edges,
        cfg.rule,
        cfg.alpha
    );
    Ok(())
}

fn simulate(cfg: &RunConfig) -> CmdResult {
    let spec = SimSpec::new(cfg.sim_case(), cfg.sim_n(), cfg.sim_seed);
    let (panel, truth) = simlab::simulate_case(&spec)?;
    panel.write_csv(&cfg.path("panel.csv"))?;
    let pairs: Vec<[usize; 2]> = tvcorr::pairs::hypothesis_pairs(panel.p())
        .into_iter()
        .map(|(i, l)| [i, l])
        .collect();
    write_json(
        &cfg.path("truth.json"),
        &json!({"case": cfg.sim_case().to_string(), "pairs": pairs, "null": truth.nulls()}),
    )?;
    println!("wrote {} x {} panel (case {})", panel.n(), panel.p(), cfg.sim_case());
    Ok(())
}

fn emit_experiment(cfg: &RunConfig, report: &simlab::ExperimentReport, stem: &str) -> CmdResult {
    report::write_experiment_csv(&cfg.path(&format!("{stem}.csv")), report)?;
    if cfg.emits("trajectories") {
        report::write_trajectory_csv(&cfg.path(&format!("{stem}_trajectory.csv")), report)?;
    }
    if cfg.emits("svg") {
        write_text(&cfg.path(&format!("{stem}_trajectory.svg")), &report::trajectory_svg(report))?;
    }
    let a = report.aggregate;
    println!(
        "{}: {} reps, avg FDP {:.4}, max FDP {:.4} (peak of mean {:.4}), avg FNP {:.4}, max FNP {:.4} (peak of mean {:.4})",
        report.method,
        report.reps.len(),
        a.avg_fdp,
        a.max_fdp,
        a.peak_fdp,
        a.avg_fnp,
        a.max_fnp,
        a.peak_fnp
    );
    Ok(())
}

fn experiment(cfg: &RunConfig, kernel: &Kernel) -> CmdResult {
    let method = match cfg.rule {
        RuleKind::Bh => Method::Bh,
        RuleKind::By => Method::By,
    };
    let report = simlab::run_experiment(&cfg.experiment(), method, kernel)?;
    emit_experiment(cfg, &report, "experiment")
}

fn baseline(cfg: &RunConfig, kernel: &Kernel) -> CmdResult {
    let threshold = cfg.threshold.expect("checked in resolve");
    let report = simlab::run_experiment(&cfg.experiment(), Method::MovingWindow { threshold }, kernel)?;
    emit_experiment(cfg, &report, "baseline")
}

fn tune(cfg: &RunConfig, kernel: &Kernel) -> CmdResult {
    let (panel, _) = load_panel(cfg)?;
    let (report, _) = pipeline::tune(&panel, &cfg.pipeline(), kernel)?;
    let text = report::tuning_text(&report, panel.labels(), true);
    write_text(&cfg.path("tuning.txt"), &text)?;
    write_json(&cfg.path("tuning.json"), &report.summary())?;
    print!("{text}");
    Ok(())
}
