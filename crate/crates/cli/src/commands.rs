//! Subcommand bodies. Each returns the text for stdout or a [`Failure`].
//!
//! Exit codes: 0 success, 1 validation failure (bad input, violated
//! hypothesis, failed check or tolerance), 2 a run whose only failure is that
//! some replicates diverged.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use truncsa::linalg::matrix_from_rows;
use truncsa::montecarlo::{write_samples_csv, write_summary_json, SCHEMA_VERSION};
use truncsa::problems::{check_hypotheses, h5_min_eigenvalue, HypothesisReport};
use truncsa::proofcheck::{run_battery, BatteryOptions};
use truncsa::{limit_covariance, run_ensemble, Error, LimitCovariance, Problem, Regime};

use crate::config::ExperimentConfig;
use crate::plot;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_DIVERGENCE: u8 = 2;

/// Environment variable naming the artifact directory when neither `--out`
/// nor `[run] out_dir` is given.
pub const OUT_DIR_ENV: &str = "TRUNCSA_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "truncsa-out";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    /// Partial output still worth printing, e.g. a failing report.
    pub stdout: Option<String>,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
            stdout: None,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type Outcome = Result<String, Failure>;

fn load(path: &Path) -> Result<(ExperimentConfig, Problem), Failure> {
    let cfg = ExperimentConfig::load(path).map_err(Failure::validation)?;
    let problem = cfg
        .validate()
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    Ok((cfg, problem))
}

/// `V` and `Q`, with an `alpha = 1` regime violation reported as H5.
fn theory(cfg: &ExperimentConfig, problem: &Problem) -> Result<LimitCovariance, Failure> {
    limit_covariance(problem.jacobian(), problem.noise_cov(), &cfg.schedule).map_err(|e| match e {
        Error::RegimeBoundary { min_eigenvalue } => Failure::validation(format!(
            "H5 violated: alpha = 1 requires that gamma*A - I/2 is positive definite, \
             but its minimal eigenvalue is {min_eigenvalue} (gamma = {})",
            cfg.schedule.gamma()
        )),
        other => Failure::validation(other.to_string()),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn io_failure(path: &Path, e: impl fmt::Display) -> Failure {
    Failure::validation(format!("{}: {e}", path.display()))
}

pub struct RunArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: usize,
    pub seed_override: Option<u64>,
    pub checkpoints: Option<Vec<u64>>,
}

/// Output directory: `--out`, then `[run] out_dir`, then the environment,
/// then [`DEFAULT_OUT_DIR`].
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.run.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn cmd_run(args: &RunArgs) -> Outcome {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(Failure::validation)?;
    if let Some(seed) = args.seed_override {
        cfg.run.base_seed = seed;
    }
    if let Some(cps) = &args.checkpoints {
        cfg.run.checkpoints = cps.clone();
    }
    let problem = cfg
        .validate()
        .map_err(|e| Failure::validation(format!("{}: {e}", args.config.display())))?;
    // Gate before any simulation.
    theory(&cfg, &problem)?;

    let run = run_ensemble(&cfg.ensemble(), args.threads)
        .map_err(|e| Failure::validation(e.to_string()))?;

    let out_dir = resolve_out_dir(args.out.as_deref(), &cfg);
    fs::create_dir_all(&out_dir).map_err(|e| io_failure(&out_dir, e))?;
    let samples = out_dir.join(SAMPLES_FILE);
    let file = fs::File::create(&samples).map_err(|e| io_failure(&samples, e))?;
    write_samples_csv(&run, BufWriter::new(file)).map_err(|e| io_failure(&samples, e))?;
    let summary_path = out_dir.join(SUMMARY_FILE);
    let file = fs::File::create(&summary_path).map_err(|e| io_failure(&summary_path, e))?;
    write_summary_json(&run.summary, BufWriter::new(file))
        .map_err(|e| io_failure(&summary_path, e))?;

    let s = &run.summary;
    let last = s
        .checkpoints
        .last()
        .expect("validated: at least one checkpoint");
    let within = cfg.run.cov_tolerance.map(|tol| last.cov_rel_err <= tol);
    let verdict = match (within, s.divergence_count) {
        (Some(false), _) => "FAIL",
        (_, d) if d > 0 => "DIVERGED",
        _ => "OK",
    };
    let tolerance = cfg
        .run
        .cov_tolerance
        .map_or(String::new(), |t| format!(" (tolerance {t})"));
    let line = format!(
        "{verdict}: cov_rel_err = {:.4}{tolerance} at n = {} over {} of {} replicates; \
         {} diverged; artifacts in {}\n",
        last.cov_rel_err,
        last.n,
        last.samples,
        s.replicates,
        s.divergence_count,
        out_dir.display()
    );
    match verdict {
        "OK" => Ok(line),
        "FAIL" => Err(Failure {
            code: EXIT_VALIDATION,
            message: "empirical covariance outside tolerance".into(),
            stdout: Some(line),
        }),
        _ => Err(Failure {
            code: EXIT_DIVERGENCE,
            message: format!("{} replicates diverged", s.divergence_count),
            stdout: Some(line),
        }),
    }
}

#[derive(Serialize)]
struct TheoryReport<'a> {
    schema_version: u32,
    problem: &'a str,
    gamma: f64,
    alpha: f64,
    regime: Regime,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    /// Minimal eigenvalue of the symmetric part of `gamma A - I/2`; binding
    /// only when `alpha = 1`.
    h5_min_eigenvalue: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    truncsa::linalg::matrix_to_rows(m)
}

pub fn cmd_theory(config: &Path) -> Outcome {
    let (cfg, problem) = load(config)?;
    let lc = theory(&cfg, &problem)?;
    Ok(to_json(&TheoryReport {
        schema_version: SCHEMA_VERSION,
        problem: problem.name(),
        gamma: cfg.schedule.gamma(),
        alpha: cfg.schedule.alpha(),
        regime: lc.regime,
        v: rows(&lc.v),
        q: rows(&lc.q),
        h5_min_eigenvalue: h5_min_eigenvalue(problem.jacobian(), cfg.schedule.gamma()),
    }))
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    schema_version: u32,
    problem: &'a str,
    all_hold: bool,
    report: &'a HypothesisReport,
}

pub fn cmd_check(config: &Path) -> Outcome {
    let (cfg, problem) = load(config)?;
    let report = check_hypotheses(
        &problem,
        &cfg.schedule,
        &cfg.compacts,
        cfg.run.eta,
        &cfg.check_options(),
    );
    let text = to_json(&CheckOutput {
        schema_version: SCHEMA_VERSION,
        problem: problem.name(),
        all_hold: report.all_hold(),
        report: &report,
    });
    if report.all_hold() {
        Ok(text)
    } else {
        Err(Failure {
            code: EXIT_VALIDATION,
            message: "at least one hypothesis fails; see the report".into(),
            stdout: Some(text),
        })
    }
}

pub struct ProofcheckArgs {
    /// Rows separated by `;`, entries by `,`; identity of size 1 when absent.
    pub q: Option<String>,
    pub seed: u64,
    pub replays: usize,
    pub series_replays: usize,
}

/// Parses `"1, 0.5; -0.5, 1"` into a matrix.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let rows = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("bad matrix entry {:?}: {e}", v.trim()))
                })
                .collect::<Result<Vec<f64>, String>>()
        })
        .collect::<Result<Vec<_>, String>>()?;
    matrix_from_rows(&rows, "Q").map_err(|e| e.to_string())
}

pub fn cmd_proofcheck(args: &ProofcheckArgs) -> Outcome {
    let q = match &args.q {
        Some(text) => parse_matrix(text).map_err(|e| Failure::validation(format!("--q: {e}")))?,
        None => DMatrix::identity(1, 1),
    };
    let report = run_battery(&BatteryOptions {
        q,
        seed: args.seed,
        replays: args.replays,
        series_replays: args.series_replays,
    })
    .map_err(|e| Failure::validation(e.to_string()))?;
    let text = to_json(&report);
    if report.passed {
        Ok(text)
    } else {
        let failed: Vec<&str> = report
            .properties
            .iter()
            .filter(|p| !p.passed)
            .map(|p| p.name.as_str())
            .collect();
        Err(Failure {
            code: EXIT_VALIDATION,
            message: format!("failed properties: {}", failed.join(", ")),
            stdout: Some(text),
        })
    }
}

pub struct PlotArgs {
    pub summary: PathBuf,
    /// Defaults to `samples.csv` next to the summary.
    pub samples: Option<PathBuf>,
    /// Defaults to the summary's directory.
    pub out: Option<PathBuf>,
}

pub fn cmd_plot(args: &PlotArgs) -> Outcome {
    let dir = args
        .summary
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let samples_path = args
        .samples
        .clone()
        .unwrap_or_else(|| dir.join(SAMPLES_FILE));
    let summary_text =
        fs::read_to_string(&args.summary).map_err(|e| io_failure(&args.summary, e))?;
    let summary = plot::parse_summary(&summary_text).map_err(|e| io_failure(&args.summary, e))?;
    let samples_text =
        fs::read_to_string(&samples_path).map_err(|e| io_failure(&samples_path, e))?;
    let samples = plot::parse_samples(&samples_text).map_err(|e| io_failure(&samples_path, e))?;
    let scripts = plot::render(&summary, &samples).map_err(Failure::validation)?;

    let out = args.out.clone().unwrap_or(dir);
    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
    let mut listing = String::new();
    for script in &scripts {
        let path = out.join(&script.file_name);
        fs::write(&path, &script.contents).map_err(|e| io_failure(&path, e))?;
        listing.push_str(&format!("{}\n", path.display()));
    }
    Ok(listing)
}
