//! `qfim` command line: validation suites and the experiment drivers.
//!
//! Flags are parsed into a [`RunConfig`], which is written into every
//! artifact. Feeding any artifact back through `--config` replays the run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ansatz::build_ansatz;
use crate::error::{QfimError, Result};
use crate::fisher::DEFAULT_PROB_FLOOR;
use crate::montecarlo::{estimate_qfim, EstimateConfig, SamplerOptions};
use crate::output::{
    fmt_f64, read_config, write_csv, write_json, Runtime, BOUND_HEADER, CCDF_HEADER, HIST_HEADER, SWEEP_HEADER,
};
use crate::parallel::with_workers;
use crate::tails::{
    bound_violation_report, empirical_ccdf, fit_tail_constant, histogram, sample_errors, sandwich_summary,
    sweep_scaled_error, max_norm_tail_bound, frobenius_tail_bound, eigenvalue_sandwich_bound, TailFitConfig, ThetaPolicy, BOUND_GRID_POINTS,
    MIN_TAIL_SAMPLES,
};
use crate::validate::{all_passed, run_suites, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qfim", version, about = "Randomized-measurement estimation of the quantum Fisher information matrix")]
#[command(args_conflicts_with_subcommands = true, subcommand_required = false, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,

    /// Replay the configuration embedded in an earlier artifact.
    #[arg(long, value_name = "ARTIFACT")]
    config: Option<PathBuf>,

    /// Output directory when replaying.
    #[arg(long, requires = "config")]
    out: Option<PathBuf>,

    #[arg(long, requires = "config")]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Cross-form, Jacobian, Haar-moment and projection-sum self checks.
    Validate {
        #[arg(short = 'N', long = "dim", default_value_t = 16)]
        n: usize,
        #[arg(short = 'm', long = "params", default_value_t = 4)]
        m: usize,
        /// Samples for the Haar-moment and projection-sum checks.
        #[arg(short = 'K', long = "samples", default_value_t = 100_000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo QFIM estimate with empirical and predicted variances.
    Estimate {
        #[arg(short = 'N', long = "dim")]
        n: usize,
        #[arg(short = 'm', long = "params")]
        m: usize,
        #[arg(short = 'K', long = "samples")]
        samples: usize,
        #[command(flatten)]
        theta: ThetaArg,
        #[command(flatten)]
        common: Common,
    },
    /// √N-scaled mean relative error across dimensions.
    Sweep {
        #[arg(long = "Ns", value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(short = 'm', long = "params", default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Histograms of the relative error.
    Hist {
        #[arg(long = "Ns", value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(short = 'm', long = "params", default_value_t = 10)]
        m: usize,
        #[arg(short = 'K', long = "samples", default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[command(flatten)]
        theta: ThetaArg,
        #[command(flatten)]
        common: Common,
    },
    /// Empirical tails and fitted exp(−cNt²) constants.
    Tail {
        #[arg(long = "Ns", value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(short = 'm', long = "params", default_value_t = 10)]
        m: usize,
        #[arg(short = 'K', long = "samples", default_value_t = 10_000)]
        samples: usize,
        #[command(flatten)]
        theta: ThetaArg,
        #[command(flatten)]
        common: Common,
    },
    /// Tail-bound formulas on a grid against the empirical tails.
    Bounds {
        #[arg(short = 'N', long = "dim")]
        n: usize,
        #[arg(short = 'm', long = "params", default_value_t = 10)]
        m: usize,
        #[arg(short = 'K', long = "samples", default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[command(flatten)]
        theta: ThetaArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "prob-floor", default_value_t = DEFAULT_PROB_FLOOR)]
    prob_floor: f64,
    #[arg(long, default_value = "qfim-out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ThetaArg {
    /// JSON array of m parameter values; defaults to a seeded uniform draw.
    #[arg(long = "theta-file")]
    theta_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Estimate,
    Sweep,
    Hist,
    Tail,
    Bounds,
}

/// Fully resolved run description; fields a command does not use are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub n: Option<usize>,
    pub ns: Option<Vec<usize>>,
    pub m: usize,
    pub samples: Option<usize>,
    pub trials: Option<usize>,
    pub bins: Option<usize>,
    pub seed: u64,
    pub theta_policy: ThetaPolicy,
    pub prob_floor: f64,
    pub eps: Option<f64>,
    /// Where artifacts go; not part of the recorded configuration.
    #[serde(skip, default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub format: Format,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("qfim-out")
}

impl RunConfig {
    fn base(command: Command, m: usize, common: &Common, default_format: Format) -> Self {
        Self {
            command,
            n: None,
            ns: None,
            m,
            samples: None,
            trials: None,
            bins: None,
            seed: common.seed,
            theta_policy: ThetaPolicy::SeededUniform,
            prob_floor: common.prob_floor,
            eps: None,
            out_dir: common.out.clone(),
            format: common.format.unwrap_or(default_format),
        }
    }

    /// Range checks that clap cannot express.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let dims: Vec<usize> = self.n.into_iter().chain(self.ns.iter().flatten().copied()).collect();
        if dims.is_empty() {
            return Err("no dimension given".into());
        }
        if let Some(&bad) = dims.iter().find(|&&n| n < 2) {
            return Err(format!("dimension must be >= 2, got {bad}"));
        }
        if self.m == 0 {
            return Err("m must be >= 1".into());
        }
        if self.samples == Some(0) {
            return Err("sample count must be >= 1".into());
        }
        if self.command == Command::Tail && self.samples.is_some_and(|k| k < MIN_TAIL_SAMPLES) {
            return Err(format!("tail fits need at least {MIN_TAIL_SAMPLES} samples"));
        }
        if self.command == Command::Validate && self.samples.is_some_and(|k| k < 2) {
            return Err("validate needs at least 2 samples".into());
        }
        if self.trials.is_some_and(|t| t < 2) {
            return Err("trials must be >= 2".into());
        }
        if self.bins == Some(0) {
            return Err("bins must be >= 1".into());
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e < 0.5) {
                return Err(format!("eps must lie in (0, 0.5), got {e}"));
            }
        }
        if !(self.prob_floor.is_finite() && self.prob_floor >= 0.0) {
            return Err(format!("prob-floor must be finite and >= 0, got {}", self.prob_floor));
        }
        if let ThetaPolicy::Explicit(t) = &self.theta_policy {
            if t.len() != self.m {
                return Err(format!("theta file has {} values, expected m = {}", t.len(), self.m));
            }
            if t.iter().any(|x| !x.is_finite()) {
                return Err("theta values must be finite".into());
            }
        }
        Ok(())
    }

    pub fn sampler_options(&self) -> SamplerOptions {
        SamplerOptions { prob_floor: self.prob_floor, ..SamplerOptions::default() }
    }
}

fn read_theta(path: &Option<PathBuf>) -> std::result::Result<ThetaPolicy, String> {
    match path {
        None => Ok(ThetaPolicy::SeededUniform),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            let v: Vec<f64> = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok(ThetaPolicy::Explicit(v))
        }
    }
}

fn resolve(cmd: Cmd) -> std::result::Result<(RunConfig, Option<usize>), String> {
    let (cfg, workers) = match cmd {
        Cmd::Validate { n, m, samples, common } => {
            let mut c = RunConfig::base(Command::Validate, m, &common, Format::Json);
            c.n = Some(n);
            c.samples = Some(samples);
            (c, common.workers)
        }
        Cmd::Estimate { n, m, samples, theta, common } => {
            let mut c = RunConfig::base(Command::Estimate, m, &common, Format::Json);
            c.n = Some(n);
            c.samples = Some(samples);
            c.theta_policy = read_theta(&theta.theta_file)?;
            (c, common.workers)
        }
        Cmd::Sweep { ns, m, trials, common } => {
            let mut c = RunConfig::base(Command::Sweep, m, &common, Format::Csv);
            c.ns = Some(ns);
            c.trials = Some(trials);
            (c, common.workers)
        }
        Cmd::Hist { ns, m, samples, bins, theta, common } => {
            let mut c = RunConfig::base(Command::Hist, m, &common, Format::Csv);
            c.ns = Some(ns);
            c.samples = Some(samples);
            c.bins = Some(bins);
            c.theta_policy = read_theta(&theta.theta_file)?;
            (c, common.workers)
        }
        Cmd::Tail { ns, m, samples, theta, common } => {
            let mut c = RunConfig::base(Command::Tail, m, &common, Format::Csv);
            c.ns = Some(ns);
            c.samples = Some(samples);
            c.theta_policy = read_theta(&theta.theta_file)?;
            (c, common.workers)
        }
        Cmd::Bounds { n, m, samples, eps, theta, common } => {
            let mut c = RunConfig::base(Command::Bounds, m, &common, Format::Csv);
            c.n = Some(n);
            c.samples = Some(samples);
            c.eps = Some(eps);
            c.theta_policy = read_theta(&theta.theta_file)?;
            (c, common.workers)
        }
    };
    cfg.validate()?;
    Ok((cfg, workers))
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let resolved = match (cli.command, cli.config) {
        (Some(cmd), None) => resolve(cmd),
        (None, Some(path)) => replay_config(&path, cli.out, cli.workers),
        _ => Err("give a subcommand or --config".into()),
    };
    let (config, workers) = match resolved {
        Ok(r) => r,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    match run(&config, workers) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn replay_config(path: &Path, out: Option<PathBuf>, workers: Option<usize>) -> std::result::Result<(RunConfig, Option<usize>), String> {
    let value = read_config(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    cfg.validate()?;
    Ok((cfg, workers))
}

/// Execute a resolved configuration. `Ok(false)` means a requested check failed.
pub fn run(config: &RunConfig, workers: Option<usize>) -> Result<bool> {
    std::fs::create_dir_all(&config.out_dir)?;
    let start = Instant::now();
    let value = serde_json::to_value(config)?;
    let runtime = |start: Instant| Runtime {
        wall_seconds: start.elapsed().as_secs_f64(),
        workers: workers.unwrap_or_else(rayon::current_num_threads),
    };
    with_workers(workers, || match config.command {
        Command::Validate => run_validate(config, &value, start, runtime),
        Command::Estimate => run_estimate(config, &value, start, runtime),
        Command::Sweep => run_sweep(config, &value, start, runtime),
        Command::Hist => run_hist(config, &value, start, runtime),
        Command::Tail => run_tail(config, &value, start, runtime),
        Command::Bounds => run_bounds(config, &value, start, runtime),
    })
}

fn required<T: Copy>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| QfimError::InvalidArgument(format!("missing {what}")))
}

fn dims(config: &RunConfig) -> Vec<usize> {
    config.n.into_iter().chain(config.ns.iter().flatten().copied()).collect()
}

fn run_validate(config: &RunConfig, value: &Value, start: Instant, runtime: impl Fn(Instant) -> Runtime) -> Result<bool> {
    let n = required(config.n, "N")?;
    let k = required(config.samples, "samples")?;
    let suite = SuiteConfig { haar_samples: k, projection_samples: k, ..SuiteConfig::new(n, config.m, config.seed) };
    let checks = run_suites(&suite)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let passed = all_passed(&checks);
    write_json(
        &config.out_dir.join("validate.json"),
        value,
        &json!({ "all_passed": passed, "checks": checks }),
        runtime(start),
    )?;
    Ok(passed)
}

fn run_estimate(config: &RunConfig, value: &Value, start: Instant, runtime: impl Fn(Instant) -> Runtime) -> Result<bool> {
    let n = required(config.n, "N")?;
    let k = required(config.samples, "samples")?;
    let ansatz = build_ansatz(n, config.m, config.seed)?;
    let theta = config.theta_policy.resolve(config.m, config.seed)?;
    let est = EstimateConfig { sampler: config.sampler_options(), workers: None };
    let report = estimate_qfim(&ansatz, &theta, k, config.seed, &est)?;
    println!(
        "N={n} m={} K={k}: relative error {:.4e} (max) {:.4e} (Frobenius)",
        config.m, report.rel_err_max, report.rel_err_frob
    );
    match config.format {
        Format::Json => write_json(&config.out_dir.join("estimate.json"), value, &report, runtime(start))?,
        Format::Csv => {
            let mut rows = Vec::new();
            for i in 0..report.m {
                for j in 0..report.m {
                    rows.push(vec![
                        i.to_string(),
                        j.to_string(),
                        fmt_f64(report.qfim[(i, j)]),
                        fmt_f64(report.mean_cfim[(i, j)]),
                        fmt_f64(report.empirical_variance[(i, j)]),
                        fmt_f64(report.predicted_variance[(i, j)]),
                    ]);
                }
            }
            let header = ["i", "j", "qfim", "mean_cfim", "empirical_variance", "predicted_variance"];
            write_csv(&config.out_dir.join("estimate.csv"), value, &header, rows)?;
            write_csv(
                &config.out_dir.join("rel_frob.csv"),
                value,
                &["index", "rel_frob"],
                report.per_sample_rel_frob.iter().enumerate().map(|(i, e)| vec![i.to_string(), fmt_f64(*e)]),
            )?;
        }
    }
    Ok(true)
}

fn run_sweep(config: &RunConfig, value: &Value, start: Instant, runtime: impl Fn(Instant) -> Runtime) -> Result<bool> {
    let ns = dims(config);
    let trials = required(config.trials, "trials")?;
    let rows = sweep_scaled_error(&ns, config.m, trials, config.seed, config.sampler_options(), None)?;
    for r in &rows {
        println!("N={:<5} mean_rel={:.4e} sqrt(N)*mean={:.4}", r.n, r.mean_rel, r.scaled);
    }
    match config.format {
        Format::Csv => write_csv(
            &config.out_dir.join("sweep.csv"),
            value,
            &SWEEP_HEADER,
            rows.iter().map(|r| {
                vec![r.n.to_string(), fmt_f64(r.mean_rel), fmt_f64(r.scaled), fmt_f64(r.std_rel), r.trials.to_string(), r.seed.to_string()]
            }),
        )?,
        Format::Json => write_json(&config.out_dir.join("sweep.json"), value, &rows, runtime(start))?,
    }
    Ok(true)
}

fn run_hist(config: &RunConfig, value: &Value, start: Instant, runtime: impl Fn(Instant) -> Runtime) -> Result<bool> {
    let k = required(config.samples, "samples")?;
    let bins = required(config.bins, "bins")?;
    let mut rows = Vec::new();
    for n in dims(config) {
        let errs = sample_errors(n, config.m, &config.theta_policy, k, config.seed, config.sampler_options(), None)?;
        for b in histogram(&errs.rel_frob, bins)? {
            rows.push(crate::output::HistRow { n, bin_left: b.left, bin_right: b.right, count: b.count });
        }
        println!("N={n}: {k} samples in {bins} bins");
    }
    match config.format {
        Format::Csv => write_csv(
            &config.out_dir.join("hist.csv"),
            value,
            &HIST_HEADER,
            rows.iter().map(|r| vec![r.n.to_string(), fmt_f64(r.bin_left), fmt_f64(r.bin_right), r.count.to_string()]),
        )?,
        Format::Json => write_json(&config.out_dir.join("hist.json"), value, &rows, runtime(start))?,
    }
    Ok(true)
}

fn run_tail(config: &RunConfig, value: &Value, start: Instant, runtime: impl Fn(Instant) -> Runtime) -> Result<bool> {
    let k = required(config.samples, "samples")?;
    let fit_cfg = TailFitConfig::default();
    let mut ccdf_rows = Vec::new();
    let mut fits = Vec::new();
    for n in dims(config) {
        let errs = sample_errors(n, config.m, &config.theta_policy, k, config.seed, config.sampler_options(), None)?;
        let fit = fit_tail_constant(&errs.rel_frob, n, config.m, &fit_cfg)?;
        println!(
            "N={n:<5} c_regression={:.4} c_adjusted={:.4e} r2={:.4}",
            fit.c_regression, fit.c_adjusted, fit.r_squared
        );
        for p in empirical_ccdf(&errs.rel_frob)? {
            ccdf_rows.push(crate::output::CcdfRow { n, t: p.t, ccdf: p.ccdf });
        }
        fits.push(fit);
    }
    match config.format {
        Format::Csv => write_csv(
            &config.out_dir.join("ccdf.csv"),
            value,
            &CCDF_HEADER,
            ccdf_rows.iter().map(|r| vec![r.n.to_string(), fmt_f64(r.t), fmt_f64(r.ccdf)]),
        )?,
        Format::Json => write_json(&config.out_dir.join("ccdf.json"), value, &ccdf_rows, runtime(start))?,
    }
    write_json(&config.out_dir.join("tailfit.json"), value, &json!({ "seed": config.seed, "fits": fits }), runtime(start))?;
    Ok(true)
}

fn run_bounds(config: &RunConfig, value: &Value, start: Instant, runtime: impl Fn(Instant) -> Runtime) -> Result<bool> {
    let n = required(config.n, "N")?;
    let k = required(config.samples, "samples")?;
    let eps = required(config.eps, "eps")?;
    let m = config.m;
    let errs = sample_errors(n, m, &config.theta_policy, k, config.seed, config.sampler_options(), None)?;
    let report = bound_violation_report(&errs.rel_max, &errs.rel_frob, n, m)?;
    let eig_bound = eigenvalue_sandwich_bound(eps, n, m)?;
    let sandwich = sandwich_summary(n, m, &config.theta_policy, k, config.seed, config.sampler_options(), None)?;

    let inside = sandwich.samples_within(eps);

    println!("max-norm bound: {}", report.max_norm.status());
    println!("Frobenius bound (offset {:.3}): {}", report.frobenius_offset, report.frobenius.status());
    println!(
        "eigenvalue bound at eps={eps}: precondition {}; smallest eps passing all {k} samples = {:.4}; {inside}/{k} inside",
        if eig_bound.precondition_met { "met" } else { "unmet at this scale" },
        sandwich.smallest_passing_epsilon
    );

    let max_err = |xs: &[f64]| xs.iter().copied().fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    let t_top = 1.5 * max_err(&errs.rel_max).max(max_err(&errs.rel_frob));
    let tail_ge = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x >= t).count() as f64 / xs.len() as f64;
    let mut rows = Vec::with_capacity(BOUND_GRID_POINTS);
    for i in 1..=BOUND_GRID_POINTS {
        let t = t_top * i as f64 / BOUND_GRID_POINTS as f64;
        let b3 = max_norm_tail_bound(t, n, m)?;
        let b4 = frobenius_tail_bound(t, n, m)?;
        rows.push(crate::output::BoundRow {
            n,
            t,
            max_norm_bound: b3,
            max_norm_empirical: tail_ge(&errs.rel_max, t),
            frobenius_threshold: b4.threshold,
            frobenius_bound: b4.probability,
            frobenius_empirical: tail_ge(&errs.rel_frob, b4.threshold),
        });
    }
    let passed = report.max_norm.violations.is_empty() && report.frobenius.violations.is_empty();
    let result = json!({
        "report": report,
        "eigenvalue_bound": eig_bound,
        "eps": eps,
        "samples_inside_sandwich": inside,
        "sandwich": sandwich,
    });
    match config.format {
        Format::Csv => write_csv(
            &config.out_dir.join("bounds.csv"),
            value,
            &BOUND_HEADER,
            rows.iter().map(|r| {
                vec![
                    r.n.to_string(),
                    fmt_f64(r.t),
                    fmt_f64(r.max_norm_bound),
                    fmt_f64(r.max_norm_empirical),
                    fmt_f64(r.frobenius_threshold),
                    fmt_f64(r.frobenius_bound),
                    fmt_f64(r.frobenius_empirical),
                ]
            }),
        )?,
        Format::Json => write_json(&config.out_dir.join("bounds_grid.json"), value, &rows, runtime(start))?,
    }
    write_json(&config.out_dir.join("bounds.json"), value, &result, runtime(start))?;
    Ok(passed)
}

