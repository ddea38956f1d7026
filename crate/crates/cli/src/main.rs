//! `krflow`: command-line entry point for flow runs, sweeps and re-checks.
//!
//! Flags take precedence over environment variables (`KRFLOW_OUTPUT`,
//! `KRFLOW_SEED`, `KRFLOW_WORKERS`), which take precedence over the file.

use clap::{Parser, Subcommand};
use kahler_flow::harness::{
    apply_overrides, check_run_dir, execute, load_config, sweep, CheckMap, CheckStatus, ExitStatus, HarnessError,
    Overrides, RunConfig,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "krflow", version, about = "Calabi-symmetric Kähler-Ricci flow runs and singularity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunFlags {
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, env = "KRFLOW_OUTPUT")]
    output: Option<PathBuf>,
    /// Seed for the randomized oracle suites.
    #[arg(long, env = "KRFLOW_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run every configuration matching a glob, concurrently.
    Sweep {
        pattern: String,
        #[command(flatten)]
        flags: RunFlags,
        /// Maximum number of concurrent runs.
        #[arg(long, env = "KRFLOW_WORKERS", default_value_t = 1)]
        workers: usize,
    },
    /// Re-evaluate the acceptance checks of a stored run directory.
    Check { run_dir: PathBuf },
}

fn print_checks(checks: &CheckMap) {
    for (name, c) in checks {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "skip",
        };
        let value = c.value.map_or("-".to_string(), |v| format!("{v:.6e}"));
        println!("  {tag} {name:<18} value={value:<13} ({})", c.bound);
    }
}

fn fail(e: &HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_status().code() as u8)
}

fn run(config: &Path, flags: &RunFlags) -> Result<ExitStatus, HarnessError> {
    let cfg = apply_overrides(
        load_config(config)?,
        &Overrides {
            output_dir: flags.output.clone(),
            seed: flags.seed,
        },
    );
    let m = execute(&cfg)?;
    println!(
        "{} run -> {} (stop: {:?}, T_predicted {:?}, T_observed {:?}, {:?})",
        cfg.scenario_name(),
        cfg.output_dir.display(),
        m.stop_reason,
        m.t_predicted,
        m.t_observed,
        m.classification
    );
    if let Some(e) = &m.error {
        eprintln!("error: {e}");
    }
    print_checks(&m.checks);
    Ok(m.exit_status)
}

fn run_sweep(pattern: &str, flags: &RunFlags, workers: usize) -> Result<ExitStatus, HarnessError> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| HarnessError::Invalid(format!("bad glob `{pattern}`: {e}")))?
        .filter_map(Result::ok)
        .collect();
    if paths.is_empty() {
        return Err(HarnessError::Invalid(format!("no configuration matches `{pattern}`")));
    }
    let mut configs: Vec<(PathBuf, RunConfig)> = Vec::new();
    for path in paths {
        let stem = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
        let cfg = apply_overrides(
            load_config(&path)?,
            &Overrides {
                output_dir: flags.output.as_ref().map(|d| d.join(&stem)),
                seed: flags.seed,
            },
        );
        configs.push((path, cfg));
    }
    let summary_dir = flags.output.clone().unwrap_or_else(|| {
        configs[0]
            .1
            .output_dir
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    let s = sweep(&configs, workers, &summary_dir)?;
    for m in &s.members {
        println!(
            "  exit {} {} -> {} (probe residual {:?})",
            m.exit_code,
            m.config_path.display(),
            m.output_dir.display(),
            m.probe_heat_residual
        );
    }
    match s.convergence_order {
        Some(o) => println!("heat-residual convergence order {o:.3} (threshold {})", s.order_threshold),
        None => println!("heat-residual convergence order: not measured (need probe_time in at least two members)"),
    }
    println!("summary -> {}", summary_dir.join("sweep_summary.json").display());
    Ok(s.exit_status)
}

fn check(dir: &Path) -> Result<ExitStatus, HarnessError> {
    let r = check_run_dir(dir)?;
    println!(
        "{}: {} (matches stored manifest: {})",
        dir.display(),
        if r.passed { "pass" } else { "FAIL" },
        r.matches_manifest
    );
    print_checks(&r.checks);
    Ok(r.exit_status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, flags } => run(config, flags),
        Command::Sweep { pattern, flags, workers } => run_sweep(pattern, flags, *workers),
        Command::Check { run_dir } => check(run_dir),
    };
    match result {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => fail(&e),
    }
}
