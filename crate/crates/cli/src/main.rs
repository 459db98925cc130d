//! `isslab`: runs ISS experiments from JSON configurations.
//!
//! Exit codes: 0 all audits pass, 1 an audit failed, 2 configuration or
//! I/O error, 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod output;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

const SCHEMA: &str = include_str!("../schema/run_config.schema.json");

#[derive(Parser, Debug)]
#[command(name = "isslab", version, about = "Input-to-state stability experiments")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Option<Cmd>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one configuration and write results.csv and summary.json.
    Run(RunArgs),
    /// Aggregate finished runs into aggregate.csv and report.md.
    Report {
        /// Run directories holding summary.json.
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the JSON schema of run configurations.
    Schema,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to ISSLAB_JOBS, then the available cores.
    #[arg(long, env = "ISSLAB_JOBS")]
    jobs: Option<usize>,
    /// Suppress the one-line summary on stderr.
    #[arg(long)]
    quiet: bool,
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    let path = args.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out.clone();
    }
    if cfg.out_dir.is_none() {
        return Err(CliError::Config("no output directory: set out_dir or pass --out".into()));
    }
    Ok(cfg)
}

fn run_config(cfg: &RunConfig, jobs: Option<usize>, quiet: bool) -> Result<bool, CliError> {
    let threads = match jobs {
        Some(0) => return Err(CliError::Config("--jobs must be >= 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| run::execute(cfg))?;
    let dir = cfg.out_dir.as_deref().expect("checked in load");
    output::write_outcome(dir, cfg, &outcome)?;
    if !quiet {
        eprintln!(
            "{}: {} ({}/{} checks) -> {}",
            cfg.command.name(),
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.passed,
            outcome.total,
            dir.display()
        );
    }
    Ok(outcome.pass)
}

fn report_error(err: &CliError, out_dir: Option<&Path>) -> ExitCode {
    let body = serde_json::to_string_pretty(&err.to_json()).expect("error serializes");
    eprintln!("{body}");
    if let Some(d) = out_dir {
        if std::fs::create_dir_all(d).is_ok() {
            let _ = std::fs::write(d.join("error.json"), body + "\n");
        }
    }
    ExitCode::from(err.exit_code())
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => return report_error(&e, args.out.as_deref()),
    };
    match run_config(&cfg, args.jobs, args.quiet) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => report_error(&e, cfg.out_dir.as_deref()),
    }
}

fn cmd_report(dirs: &[PathBuf], out: &Path) -> ExitCode {
    let rep = report::collect(dirs);
    if let Err(e) = report::write(&rep, out) {
        return report_error(&e, None);
    }
    for (d, why) in &rep.missing {
        eprintln!("missing summary in {}: {why}", d.display());
    }
    if rep.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Some(Cmd::Run(args)) => cmd_run(args),
        Some(Cmd::Report { dirs, out }) => cmd_report(&dirs, &out),
        Some(Cmd::Schema) => {
            print!("{SCHEMA}");
            ExitCode::SUCCESS
        }
        None if cli.run.config.is_some() => cmd_run(cli.run),
        None => {
            eprintln!("nothing to do; see `isslab --help`");
            ExitCode::from(2)
        }
    }
}
