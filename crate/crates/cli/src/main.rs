use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use truncsa_cli::commands::{
    cmd_check, cmd_plot, cmd_proofcheck, cmd_run, cmd_theory, Outcome, PlotArgs, ProofcheckArgs,
    RunArgs, EXIT_OK, EXIT_VALIDATION,
};

/// Truncated stochastic approximation experiments.
///
/// Exit status: 0 success, 1 validation failure (malformed input, violated
/// hypothesis, failed check or tolerance), 2 run completed but some
/// replicates diverged.
#[derive(Parser)]
#[command(name = "truncsa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ensemble and write samples.csv and summary.json.
    Run(RunCmd),
    /// Print the limit covariance V, Q, the regime and the H5 eigenvalue as JSON.
    Theory(ConfigArg),
    /// Print the hypothesis report as JSON; fails when any hypothesis fails.
    Check(ConfigArg),
    /// Run the weighted-sum and series property battery for a drift matrix Q.
    Proofcheck(ProofcheckCmd),
    /// Write gnuplot scripts for the output of `run`.
    Plot(PlotCmd),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunCmd {
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; overrides `[run] out_dir` and $TRUNCSA_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Replaces `[run] base_seed`.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Replaces `[run] checkpoints`, comma separated.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<u64>>,
}

#[derive(Args)]
struct ProofcheckCmd {
    /// Drift matrix, rows separated by `;` and entries by `,` (default `1`).
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replays of the stochastic weighted-sum property.
    #[arg(long, default_value_t = 1000)]
    replays: usize,
    /// Replays of the Monte Carlo check of the series variance.
    #[arg(long, default_value_t = 10_000)]
    series_replays: usize,
}

#[derive(Args)]
struct PlotCmd {
    /// summary.json written by `run`.
    #[arg(long)]
    summary: PathBuf,
    /// Samples CSV; defaults to samples.csv next to the summary.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Directory for the scripts; defaults to the summary's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Run(c) => cmd_run(&RunArgs {
            config: c.config,
            out: c.out,
            threads: c.threads,
            seed_override: c.seed_override,
            checkpoints: c.checkpoints,
        }),
        Command::Theory(c) => cmd_theory(&c.config),
        Command::Check(c) => cmd_check(&c.config),
        Command::Proofcheck(c) => cmd_proofcheck(&ProofcheckArgs {
            q: c.q,
            seed: c.seed,
            replays: c.replays,
            series_replays: c.series_replays,
        }),
        Command::Plot(c) => cmd_plot(&PlotArgs {
            summary: c.summary,
            samples: c.samples,
            out: c.out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are validation failures; exit 2 means divergence
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut stdout = std::io::stdout().lock();
    match dispatch(cli.command) {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::from(EXIT_OK)
        }
        Err(failure) => {
            if let Some(text) = &failure.stdout {
                let _ = stdout.write_all(text.as_bytes());
            }
            let _ = stdout.flush();
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
