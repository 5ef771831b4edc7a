//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::applications::{portfolio_loss_prob, tcell_activation_prob};
use crate::config::{read_json, OutputFormat, PortfolioConfig, Run, RunConfig, TcellConfig};
use crate::curves::DeterministicCurves;
use crate::environment::SeedProvenance;
use crate::error::{Error, Result};
use crate::fclt::{default_grid, run_fclt, DEFAULT_GRID_POINTS};
use crate::oracle::{exact_enum, naive_mc, tilted_mc, McConfig};
use crate::saddle::ConditionalSum;
use crate::sldp::{check_conditions, sldp_estimate, ConditionReport, Method, TGrid, TailEstimate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "condtail", version, about = "Sharp conditional tail approximations for weighted sums")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Write the result here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleMode {
    Tilted,
    Naive,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct GridArgs {
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,
    #[arg(long)]
    pub grid_count: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Strong large deviation approximation with condition diagnostics.
    Approx {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Monte Carlo or exact reference estimate.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: SampleMode,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        /// Total draws, split evenly across batches.
        #[arg(long)]
        draws: Option<u64>,
        #[arg(long)]
        batches: Option<usize>,
        /// Monte Carlo seed; the environment seed comes from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fluctuations of the random rate function across environment replicas.
    Fclt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
        /// Comma-separated thresholds, e.g. `0.1,0.2,0.3`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Covariance pairs `(a, a', empirical, analytic)` as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Finite-n statistics for the conditions behind the approximation.
    CheckConditions {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// T-cell activation probability.
    Tcell {
        #[command(flatten)]
        common: Common,
    },
    /// Portfolio loss probability.
    Portfolio {
        #[command(flatten)]
        common: Common,
    },
    /// Compare estimates of the same tail probability.
    Report {
        /// Files holding one estimate, an array of estimates, or one estimate per line.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Record emitted by `approx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxRecord {
    pub n: usize,
    pub a: f64,
    pub theta: f64,
    pub rate: f64,
    pub sigma2: f64,
    pub log_p: f64,
    pub p: f64,
    pub iterations: usize,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<SeedProvenance>,
    pub conditions: ConditionsRecord,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsRecord {
    #[serde(flatten)]
    pub report: ConditionReport,
    /// Whether `t_grid` is the built-in default rather than a user choice.
    pub default_grid: bool,
}

/// Row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub p: f64,
    pub log_p: f64,
    pub stderr: Option<f64>,
    /// `p / p_reference`, the reference being the analytic row when present,
    /// otherwise the exact row.
    pub ratio: Option<f64>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidModel(_) | Error::InvalidInput(_) | Error::MismatchedRuns(_) => EXIT_VALIDATION,
        Error::DegenerateEnvironment { .. }
        | Error::QuadratureFailure { .. }
        | Error::EmptyInterval { .. }
        | Error::OutOfRange { .. }
        | Error::NonConvergence { .. }
        | Error::PrefactorDegenerate { .. } => EXIT_NUMERIC,
        Error::InsufficientHits { .. } | Error::TooLarge { .. } | Error::InsufficientReplicas { .. } => EXIT_CAPACITY,
    }
}

/// Single-line JSON diagnostic.
pub fn diagnostic(e: &Error) -> String {
    serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": exit_code(e),
    })
    .to_string()
}

/// Parses `args` (program name first) and executes; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = out.write_all(text.as_bytes());
            } else {
                let msg = text.lines().next().unwrap_or("invalid arguments").to_string();
                let _ = writeln!(err, "{}", diagnostic(&Error::InvalidInput(msg)));
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{}", diagnostic(&e));
            exit_code(&e)
        }
    }
}

struct Sink<'a> {
    path: Option<PathBuf>,
    out: &'a mut dyn Write,
}

impl Sink<'_> {
    fn emit(&mut self, text: &str) -> Result<()> {
        match &self.path {
            Some(p) => std::fs::write(p, text)
                .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", p.display()))),
            None => self
                .out
                .write_all(text.as_bytes())
                .map_err(|e| Error::InvalidInput(format!("cannot write output: {e}"))),
        }
    }
}

fn load_run(common: &Common, n: Option<usize>, a: Option<f64>) -> Result<(Run, Format, Option<PathBuf>)> {
    let mut spec: RunConfig = read_json(&common.config)?;
    if n.is_some() {
        spec.n = n;
    }
    if a.is_some() {
        spec.a = a;
    }
    let format = common.format.unwrap_or(match spec.output.format {
        OutputFormat::Json => Format::Json,
        OutputFormat::Csv => Format::Csv,
    });
    let path = common.output.clone().or_else(|| spec.output.path.as_ref().map(PathBuf::from));
    Ok((spec.validate()?, format, path))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("records serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn finite(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

/// `method,n,a,p,log_p,stderr,hits,draws`
pub fn estimate_csv(e: &TailEstimate) -> String {
    format!(
        "method,n,a,p,log_p,stderr,hits,draws\n{},{},{:?},{:?},{},{},{},{}\n",
        e.method.as_str(),
        e.n,
        e.a,
        e.value,
        finite(e.log_value),
        opt(e.stderr),
        e.hits.map(|h| h.to_string()).unwrap_or_default(),
        e.draws.map(|h| h.to_string()).unwrap_or_default(),
    )
}

fn emit_estimate(sink: &mut Sink, format: Format, e: &TailEstimate) -> Result<()> {
    match format {
        Format::Json => sink.emit(&to_json(e)),
        Format::Csv => sink.emit(&estimate_csv(e)),
    }
}

fn grid_from(args: &GridArgs, config: Option<TGrid>) -> Result<(TGrid, bool)> {
    let base = config.unwrap_or_default();
    if args.delta1.is_none() && args.delta2.is_none() && args.grid_count.is_none() {
        return Ok((base, config.is_none()));
    }
    let g = TGrid::new(
        args.delta1.unwrap_or(base.delta1),
        args.delta2.unwrap_or(base.delta2),
        args.grid_count.unwrap_or(base.count),
    )?;
    Ok((g, false))
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Approx { common, a, n, grid } => {
            let (run, format, path) = load_run(&common, n, a)?;
            let (grid, default_grid) = grid_from(&grid, run.spec.conditions)?;
            let a = run.a()?;
            let env = run.environment()?;
            let sol = ConditionalSum::homogeneous(&env, &run.model).solve_saddle(a, run.spec.theta_star)?;
            let est = sldp_estimate(&sol, env.len())?;
            let report = check_conditions(&env, &run.model, &sol, grid)?;
            let mut warnings = est.warnings.clone();
            if default_grid {
                warnings.push(format!(
                    "condition grid uses the built-in defaults delta1 = {}, delta2 = {}, count = {}",
                    grid.delta1, grid.delta2, grid.count
                ));
            }
            let rec = ApproxRecord {
                n: env.len(),
                a,
                theta: sol.theta,
                rate: sol.rate,
                sigma2: sol.sigma2,
                log_p: est.log_value,
                p: est.value,
                iterations: sol.iterations,
                residual: sol.residual,
                env_seed: env.provenance(),
                conditions: ConditionsRecord {
                    report,
                    default_grid,
                },
                warnings,
            };
            let text = match format {
                Format::Json => to_json(&rec),
                Format::Csv => format!(
                    "n,a,theta,rate,sigma2,log_p,p,theta_sqrt_n,cf_sup\n{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                    rec.n,
                    rec.a,
                    rec.theta,
                    rec.rate,
                    rec.sigma2,
                    rec.log_p,
                    rec.p,
                    rec.conditions.report.theta_sqrt_n,
                    rec.conditions.report.cf_sup
                ),
            };
            Sink { path, out }.emit(&text)
        }
        Command::Sample {
            common,
            mode,
            a,
            n,
            draws,
            batches,
            seed,
        } => {
            let (run, format, path) = load_run(&common, n, a)?;
            let a = run.a()?;
            let mut cfg = run.spec.mc;
            if let Some(d) = draws {
                cfg = McConfig::with_draws(d, batches.unwrap_or(cfg.batches), cfg.seed);
            } else if let Some(b) = batches {
                cfg = McConfig::with_draws(cfg.draws(), b, cfg.seed);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let env = run.environment()?;
            let result = match mode {
                SampleMode::Exact => exact_enum(&env, &run.model, a),
                SampleMode::Naive => naive_mc(&env, &run.model, a, &cfg),
                SampleMode::Tilted => {
                    let sol = ConditionalSum::homogeneous(&env, &run.model).solve_saddle(a, run.spec.theta_star)?;
                    tilted_mc(&env, &run.model, a, &sol, &cfg)
                }
            };
            let mut sink = Sink { path, out };
            match result {
                Ok(e) => emit_estimate(&mut sink, format, &e),
                Err(Error::InsufficientHits { hits, estimate }) => {
                    // The estimate is still useful as data; emit it, then fail loudly.
                    let est = estimate.with_env_seed(env.provenance());
                    emit_estimate(&mut sink, format, &est)?;
                    Err(Error::InsufficientHits {
                        hits,
                        estimate: Box::new(est),
                    })
                }
                Err(e) => Err(e),
            }
        }
        Command::Fclt {
            common,
            n,
            replicas,
            grid,
            seed,
            csv,
        } => {
            let (mut run, format, path) = load_run(&common, n, None)?;
            if let Some(s) = seed {
                run.spec.seed = s;
            }
            let wm = run.weight_model()?.clone();
            let n = run.n()?;
            let curves = DeterministicCurves::build(&wm, &run.model, run.spec.theta_star)?;
            let a_grid = grid
                .or_else(|| run.spec.a_grid.clone())
                .unwrap_or_else(|| default_grid(&curves, DEFAULT_GRID_POINTS));
            let report = run_fclt(&wm, &run.model, &curves, &a_grid, n, replicas, run.spec.seed)?;
            if let Some(p) = csv {
                Sink { path: Some(p), out: &mut *err }.emit(&report.covariance_csv())?;
            }
            let text = match format {
                Format::Json => to_json(&report),
                Format::Csv => report.covariance_csv(),
            };
            Sink { path, out }.emit(&text)
        }
        Command::CheckConditions { common, a, n, grid } => {
            let (run, _, path) = load_run(&common, n, a)?;
            let (grid, _) = grid_from(&grid, run.spec.conditions)?;
            let env = run.environment()?;
            let sol = ConditionalSum::homogeneous(&env, &run.model).solve_saddle(run.a()?, run.spec.theta_star)?;
            let report = check_conditions(&env, &run.model, &sol, grid)?;
            Sink { path, out }.emit(&to_json(&report))
        }
        Command::Tcell { common } => {
            let cfg: TcellConfig = read_json(&common.config)?;
            let sc = cfg.build()?;
            let est = tcell_activation_prob(&sc, cfg.seed)?;
            emit_estimate(
                &mut Sink {
                    path: common.output,
                    out,
                },
                common.format.unwrap_or(Format::Json),
                &est,
            )
        }
        Command::Portfolio { common } => {
            let cfg: PortfolioConfig = read_json(&common.config)?;
            let sc = cfg.build()?;
            let est = portfolio_loss_prob(&sc, cfg.seed)?;
            emit_estimate(
                &mut Sink {
                    path: common.output,
                    out,
                },
                common.format.unwrap_or(Format::Json),
                &est,
            )
        }
        Command::Report { inputs, format, output } => {
            let mut estimates = Vec::new();
            for p in &inputs {
                estimates.extend(read_estimates(p)?);
            }
            let rows = report_rows(&estimates)?;
            let text = match format {
                ReportFormat::Csv => report_csv(&rows),
                ReportFormat::Table => report_table(&rows),
            };
            Sink { path: output, out }.emit(&text)
        }
    }
}

fn read_estimates(path: &PathBuf) -> Result<Vec<TailEstimate>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Error::InvalidInput(format!("{}: not a tail estimate: {e}", path.display()));
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(bad);
    }
    if let Ok(one) = serde_json::from_str::<TailEstimate>(trimmed) {
        return Ok(vec![one]);
    }
    trimmed
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(bad))
        .collect()
}

/// Joins estimates of the same `(environment seed, n, a)`.
pub fn report_rows(estimates: &[TailEstimate]) -> Result<Vec<ReportRow>> {
    if estimates.len() < 2 {
        return Err(Error::MismatchedRuns(format!(
            "a comparison needs at least 2 estimates, got {}",
            estimates.len()
        )));
    }
    let first = &estimates[0];
    for e in &estimates[1..] {
        if e.n != first.n || e.a.to_bits() != first.a.to_bits() || e.env_seed != first.env_seed {
            return Err(Error::MismatchedRuns(format!(
                "({:?}, n = {}, a = {}) differs from ({:?}, n = {}, a = {})",
                e.env_seed, e.n, e.a, first.env_seed, first.n, first.a
            )));
        }
    }
    let reference = estimates
        .iter()
        .find(|e| e.method == Method::SldpAnalytic)
        .or_else(|| estimates.iter().find(|e| e.method == Method::ExactEnum))
        .map(|e| e.log_value);
    Ok(estimates
        .iter()
        .map(|e| ReportRow {
            method: e.method,
            p: e.value,
            log_p: e.log_value,
            stderr: e.stderr,
            ratio: reference.filter(|r| r.is_finite()).map(|r| (e.log_value - r).exp()),
        })
        .collect())
}

/// Columns `method,p,log_p,stderr,ratio`.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("method,p,log_p,stderr,ratio\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:?},{},{},{}",
            r.method.as_str(),
            r.p,
            finite(r.log_p),
            opt(r.stderr),
            opt(r.ratio)
        );
    }
    s
}

pub fn report_table(rows: &[ReportRow]) -> String {
    let mut s = format!("{:<14} {:>14} {:>12} {:>12} {:>10}\n", "method", "p", "log_p", "stderr", "ratio");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<14} {:>14.6e} {:>12.4} {:>12} {:>10}",
            r.method.as_str(),
            r.p,
            r.log_p,
            r.stderr.map(|v| format!("{v:.3e}")).unwrap_or_default(),
            r.ratio.map(|v| format!("{v:.5}")).unwrap_or_default(),
        );
    }
    s
}
