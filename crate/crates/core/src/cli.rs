//! Command-line front end: `predict`, `chsh`, `herbert`, `scan`.
//!
//! Each command yields a human-readable report and a data payload (CSV or
//! JSON). With `--out` the data goes to the file and the report to stdout;
//! without it the data goes to stdout and the report to stderr.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{Experiment, ExperimentFile, Overrides};
use crate::engine::{
    correlation_scan, herbert_scan, reproduce, ChshResult, HerbertResult, HerbertVerdict, Report,
    SamplingMode, ScanPoint, CHSH_BOUND,
};
use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::quantum::{
    coincidence_probability, conditional_correlation, smeared_correlation, AnalyzerSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spinlab", version, about = "Spin-correlation experiments: singlet predictions, CHSH and Herbert tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form coincidence probability and correlation per setting pair.
    Predict(CommonArgs),
    /// CHSH statistic over M runs of N pairs.
    Chsh(CommonArgs),
    /// Disagreement rates d(θ) and d(2θ).
    Herbert(CommonArgs),
    /// Correlation curve over an angle grid.
    Scan(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Default)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pairs: Option<u64>,
    #[arg(long)]
    pub runs: Option<u64>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_parser = ["shared", "fresh"])]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            seed: self.seed,
            pairs: self.pairs,
            runs: self.runs,
            model: self.model.clone(),
            mode: self.mode.as_deref().map(str::parse::<SamplingMode>).transpose()?,
            workers: self.workers,
        })
    }

    fn experiment(&self) -> Result<Experiment> {
        let (file, text) = match &self.config {
            Some(path) => {
                let (f, t) = ExperimentFile::load(path)?;
                (f, Some(t))
            }
            None => (ExperimentFile::default(), None),
        };
        file.resolve(&self.overrides()?, text.as_deref())
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub report: String,
    pub data: Vec<u8>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::DegenerateRun { .. } | Error::DegenerateEstimate => EXIT_DEGENERATE,
        Error::Io(_) => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn echo_config(report: &mut String, exp: &Experiment) {
    let cfg = serde_json::to_string(exp).expect("experiment serializes");
    let _ = writeln!(report, "config: {cfg}");
}

fn fmt_dir(d: &Direction) -> String {
    format!("[{:.4}, {:.4}, {:.4}]", d.x(), d.y(), d.z())
}

#[derive(Debug, Serialize)]
struct PredictRow {
    setting: usize,
    first: String,
    second: String,
    theta: f64,
    kappa_a: f64,
    kappa_b: f64,
    eta_a: f64,
    eta_b: f64,
    p_coincidence: f64,
    e_correlation: f64,
    e_conditional: f64,
}

pub fn cmd_predict(exp: &Experiment, format: Format) -> Result<Output> {
    if exp.settings.is_empty() {
        return Err(Error::Config("predict needs at least one setting pair".into()));
    }
    let rows: Vec<PredictRow> = exp
        .settings
        .iter()
        .enumerate()
        .map(|(k, s)| PredictRow {
            setting: k,
            first: exp.setting_labels[k][0].clone(),
            second: exp.setting_labels[k][1].clone(),
            theta: s.macro_angle(),
            kappa_a: s.first.kappa(),
            kappa_b: s.second.kappa(),
            eta_a: s.first.efficiency(),
            eta_b: s.second.efficiency(),
            p_coincidence: coincidence_probability(s),
            // -0.0 would print as "-0"
            e_correlation: smeared_correlation(s) + 0.0,
            e_conditional: conditional_correlation(s).map_or(f64::NAN, |e| e + 0.0),
        })
        .collect();
    let mut report = String::from("spinlab predict\n");
    echo_config(&mut report, exp);
    let _ = writeln!(
        report,
        "{:>3} {:>6} {:>6} {:>9} {:>7} {:>7} {:>6} {:>6} {:>10} {:>10} {:>10}",
        "k", "A", "B", "theta", "kappa_A", "kappa_B", "eta_A", "eta_B", "p(A,B)", "E(A,B)", "E|coinc"
    );
    for r in &rows {
        let _ = writeln!(
            report,
            "{:>3} {:>6} {:>6} {:>9.5} {:>7.4} {:>7.4} {:>6.3} {:>6.3} {:>10.6} {:>10.6} {:>10.6}",
            r.setting, r.first, r.second, r.theta, r.kappa_a, r.kappa_b, r.eta_a, r.eta_b,
            r.p_coincidence, r.e_correlation, r.e_conditional
        );
    }
    let data = match format {
        Format::Csv => csv_bytes(&rows)?,
        Format::Json => json_bytes(&rows)?,
    };
    Ok(Output { report, data })
}

#[derive(Debug, Serialize)]
struct ChshRow {
    run_index: usize,
    #[serde(rename = "E1")]
    e1: f64,
    #[serde(rename = "E2")]
    e2: f64,
    #[serde(rename = "E3")]
    e3: f64,
    #[serde(rename = "E4")]
    e4: f64,
    #[serde(rename = "S")]
    s: f64,
}

#[derive(Debug, Serialize)]
struct ChshJson<'a> {
    experiment: &'a Experiment,
    chsh: &'a ChshResult,
    report: &'a Report,
}

pub fn cmd_chsh(exp: &Experiment, format: Format) -> Result<Output> {
    let cfg = exp.run_config(exp.chsh_settings()?)?;
    let rep = reproduce(&cfg)?;
    let chsh = rep.chsh.as_ref().expect("CHSH settings were validated");

    let mut report = String::from("spinlab chsh\n");
    echo_config(&mut report, exp);
    let _ = writeln!(
        report,
        "model {}  mode {:?}  N = {}  M = {}  seed = {}",
        cfg.model, cfg.mode, cfg.pairs_per_run, cfg.runs, cfg.seed
    );
    let dirs = [
        ("E(A,B)", &cfg.settings[0]),
        ("E(A,B')", &cfg.settings[1]),
        ("E(A',B')", &cfg.settings[2]),
        ("E(A',B)", &cfg.settings[3]),
    ];
    for (k, (label, pair)) in dirs.iter().enumerate() {
        let e = chsh.e_hat[k];
        let u = chsh.e_unconditional[k];
        let _ = writeln!(
            report,
            "{label:<9} {} {}  conditional {:+.6} ± {:.6}  unconditional {:+.6} ± {:.6}  ({} coincidences)",
            fmt_dir(&pair.first.orientation()),
            fmt_dir(&pair.second.orientation()),
            e.value, e.stderr, u.value, u.stderr, e.n
        );
    }
    let _ = writeln!(report, "S = {:.6} ± {:.6}", chsh.s, chsh.stderr_s);
    match chsh.z_score {
        Some(z) => {
            let _ = writeln!(report, "z vs {CHSH_BOUND} = {z:.2}");
        }
        None => {
            let _ = writeln!(report, "z vs {CHSH_BOUND} undefined (zero standard error)");
        }
    }
    let above = chsh.per_run_s.iter().filter(|&&s| s > CHSH_BOUND).count();
    let _ = writeln!(
        report,
        "per-run S: mean {:.6} ± {:.6}, max {:.6}, runs with S > 2: {above}/{}",
        chsh.mean_run_s.value,
        chsh.mean_run_s.stderr,
        chsh.per_run_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        chsh.per_run_s.len()
    );

    let data = match format {
        Format::Csv => {
            let rows: Vec<ChshRow> = chsh
                .per_run_e
                .iter()
                .zip(&chsh.per_run_s)
                .enumerate()
                .map(|(i, (e, &s))| ChshRow { run_index: i, e1: e[0], e2: e[1], e3: e[2], e4: e[3], s })
                .collect();
            csv_bytes(&rows)?
        }
        Format::Json => json_bytes(&ChshJson { experiment: exp, chsh, report: &rep })?,
    };
    Ok(Output { report, data })
}

#[derive(Debug, Serialize)]
struct HerbertRow {
    theta: f64,
    d_theta: f64,
    d_2theta: f64,
    two_d_theta: f64,
    violated: bool,
    d_theta_lo: f64,
    d_theta_hi: f64,
    d_2theta_lo: f64,
    d_2theta_hi: f64,
}

pub fn cmd_herbert(exp: &Experiment, format: Format) -> Result<Output> {
    let opts = exp
        .herbert
        .as_ref()
        .ok_or_else(|| Error::Config("herbert needs a \"herbert\": {\"thetas\": [...]} section".into()))?;
    let thetas: Vec<f64> = opts.thetas.iter().map(|a| a.radians()).collect();
    let seed = exp.require_seed()?;
    let results = herbert_scan(&exp.model, &thetas, exp.pairs, seed, exp.workers, opts.ci_level)
        .map_err(|e| match e {
            Error::Domain { .. } => Error::Config(format!("herbert: {e}")),
            other => other,
        })?;

    let mut report = String::from("spinlab herbert\n");
    echo_config(&mut report, exp);
    let _ = writeln!(
        report,
        "model {}  N = {}  seed = {}  CI level {}",
        exp.model, exp.pairs, seed, opts.ci_level
    );
    let _ = writeln!(
        report,
        "{:>9} {:>10} {:>10} {:>10} {:>9}  Wilson CIs",
        "theta", "d(theta)", "d(2theta)", "2d(theta)", "verdict"
    );
    for r in &results {
        let verdict = match r.verdict {
            HerbertVerdict::Holds => "holds",
            HerbertVerdict::Saturated => "equal",
            HerbertVerdict::Violated => "VIOLATED",
        };
        let _ = writeln!(
            report,
            "{:>9.5} {:>10.6} {:>10.6} {:>10.6} {:>9}  [{:.6}, {:.6}] [{:.6}, {:.6}]",
            r.theta, r.d_theta.value, r.d_2theta.value, r.two_d_theta(), verdict,
            r.d_theta_ci.lower, r.d_theta_ci.upper, r.d_2theta_ci.lower, r.d_2theta_ci.upper
        );
    }
    let data = match format {
        Format::Csv => csv_bytes(&results.iter().map(herbert_row).collect::<Vec<_>>())?,
        Format::Json => json_bytes(&results)?,
    };
    Ok(Output { report, data })
}

fn herbert_row(r: &HerbertResult) -> HerbertRow {
    HerbertRow {
        theta: r.theta,
        d_theta: r.d_theta.value,
        d_2theta: r.d_2theta.value,
        two_d_theta: r.two_d_theta(),
        violated: !r.satisfied,
        d_theta_lo: r.d_theta_ci.lower,
        d_theta_hi: r.d_theta_ci.upper,
        d_2theta_lo: r.d_2theta_ci.lower,
        d_2theta_hi: r.d_2theta_ci.upper,
    }
}

#[derive(Debug, Serialize)]
struct ScanRow {
    theta: f64,
    #[serde(rename = "E_qm_closed")]
    e_qm_closed: f64,
    #[serde(rename = "E_model_mc")]
    e_model_mc: f64,
    stderr: f64,
}

pub fn cmd_scan(exp: &Experiment, format: Format) -> Result<Output> {
    let grid = match &exp.scan {
        Some(s) => s.grid()?,
        None => {
            let n = 19;
            (0..n).map(|k| std::f64::consts::PI * k as f64 / (n - 1) as f64).collect()
        }
    };
    let seed = exp.require_seed()?;
    let sharp = AnalyzerSpec::sharp(Direction::Z);
    let first = exp.scan_analyzers.0.unwrap_or(sharp);
    let second = exp.scan_analyzers.1.unwrap_or(sharp);
    let points: Vec<ScanPoint> = correlation_scan(&exp.model, &first, &second, &grid, exp.pairs, seed, exp.workers)?;

    let mut report = String::from("spinlab scan\n");
    echo_config(&mut report, exp);
    let _ = writeln!(report, "model {}  N = {} per point  seed = {}", exp.model, exp.pairs, seed);
    let _ = writeln!(report, "{:>9} {:>11} {:>11} {:>9}", "theta", "E_qm", "E_model", "stderr");
    for p in &points {
        let _ = writeln!(
            report,
            "{:>9.5} {:>11.6} {:>11.6} {:>9.6}",
            p.theta, p.e_qm_closed, p.e_model_mc, p.stderr
        );
    }
    let data = match format {
        Format::Csv => csv_bytes(
            &points
                .iter()
                .map(|p| ScanRow { theta: p.theta, e_qm_closed: p.e_qm_closed, e_model_mc: p.e_model_mc, stderr: p.stderr })
                .collect::<Vec<_>>(),
        )?,
        Format::Json => json_bytes(&points)?,
    };
    Ok(Output { report, data })
}

type CommandFn = fn(&Experiment, Format) -> Result<Output>;

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<Output> {
    let (args, f): (&CommonArgs, CommandFn) = match &cli.command {
        Command::Predict(a) => (a, cmd_predict),
        Command::Chsh(a) => (a, cmd_chsh),
        Command::Herbert(a) => (a, cmd_herbert),
        Command::Scan(a) => (a, cmd_scan),
    };
    let exp = args.experiment()?;
    f(&exp, args.format)
}

/// Parses `argv`, runs the command and writes its output; returns the exit
/// code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let out_path = match &cli.command {
        Command::Predict(a) | Command::Chsh(a) | Command::Herbert(a) | Command::Scan(a) => a.out.clone(),
    };
    let result = execute(&cli).and_then(|out| {
        use std::io::Write;
        match &out_path {
            Some(path) => {
                std::fs::write(path, &out.data)?;
                print!("{}", out.report);
            }
            None => {
                eprint!("{}", out.report);
                std::io::stdout().write_all(&out.data)?;
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
