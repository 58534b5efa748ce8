use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isogftns_cli::commands::{self, StateSource};
use isogftns_cli::config::ValidatedConfig;
use isogftns_cli::CliError;

#[derive(Debug, Parser)]
#[command(name = "isogftns-cli", version, about = "Isometric Gaussian fermionic tensor network experiments")]
struct Cli {
    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (pattern, n_v) pair of a config.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit observables of a checkpoint or of the exact ground state.
    Observe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "exact", required_unless_present = "exact")]
        checkpoint: Option<PathBuf>,
        /// Use the exact ground state instead of a checkpoint.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the sequential-circuit schedule of an arrow layout as JSON.
    Circuit {
        /// uniform, alternating or custom:<legs>,...
        layout: String,
        lx: usize,
        ly: usize,
        chi: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the quantum-double tensor of a group (Zn or S3) for isometry.
    Qdcheck {
        group: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run fast built-in consistency checks.
    Selftest,
}

fn emit_json(value: &impl serde::Serialize, out: Option<&PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))? + "\n";
    match out {
        Some(path) => std::fs::write(path, &text).map_err(|e| CliError::Run(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &ValidatedConfig) -> PathBuf {
    flag.or_else(|| cfg.raw.out.clone()).unwrap_or_else(|| PathBuf::from("results"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
    }
    match cli.command {
        Command::Optimize { config, seed, out } => {
            let cfg = ValidatedConfig::load(&config)?.with_seed(seed);
            let dir = out_dir(out, &cfg);
            let outcome = commands::optimize(&cfg, &dir)?;
            for r in &outcome.records {
                println!(
                    "{} n_v={} error_per_site={:e} grad_norm={:e}",
                    r.pattern, r.n_v, r.error_per_site, r.final_grad_norm
                );
            }
            println!("wrote {} files to {}", outcome.files.len(), dir.display());
            Ok(())
        }
        Command::Observe {
            config,
            checkpoint,
            exact,
            seed,
            out,
        } => {
            let cfg = ValidatedConfig::load(&config)?.with_seed(seed);
            let source = match (checkpoint, exact) {
                (Some(path), false) => StateSource::Checkpoint(path),
                _ => StateSource::Exact,
            };
            for path in commands::observe(&cfg, &source, &out_dir(out, &cfg))? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Circuit { layout, lx, ly, chi, out } => emit_json(&commands::circuit(&layout, lx, ly, chi)?, out.as_ref()),
        Command::Qdcheck { group, out } => {
            let report = commands::qdcheck(&group)?;
            emit_json(&report, out.as_ref())?;
            if report.passes {
                Ok(())
            } else {
                Err(CliError::Verification(format!("quantum double of {} is not an isometry", report.group)))
            }
        }
        Command::Selftest => {
            let lines = commands::selftest()?;
            for l in &lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
            }
            let failed = lines.iter().filter(|l| !l.passed).count();
            if failed == 0 {
                Ok(())
            } else {
                Err(CliError::Verification(format!("{failed} self-test check(s) failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
