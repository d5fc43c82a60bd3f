use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pathsgd::commands::{self, RatioStudy};
use pathsgd::config::RunConfig;
use pathsgd::{datafile, exit, CliError};
use pathsgd_core::train::RunStatus;
use pathsgd_core::verify::{Faults, Level};

#[derive(Parser)]
#[command(name = "pathsgd", version, about = "Path-normalized training of plain ReLU RNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network; writes metrics.csv and checkpoints to the output directory.
    Train {
        /// Flat TOML config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key (repeatable), e.g. `--set lr=1e-4`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        optimizer: Option<String>,
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print the effective config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Check the closed-form quantities against independent oracles.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: LevelArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_kappa_fault: bool,
    },
    /// Tabulate ||kappa2|| / ||kappa1|| for single-layer RNNs.
    KappaRatio {
        #[arg(long, value_delimiter = ',', default_value = "20,100")]
        hidden: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,20")]
        lengths: Vec<usize>,
        /// Input and output width.
        #[arg(long, default_value_t = 10_000)]
        io: usize,
        #[arg(long, default_value_t = 0.1)]
        init_range: f64,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compare the matrix formula with path enumeration (small sizes only).
        #[arg(long)]
        check_bruteforce: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a task dataset in its text format.
    GenData {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 100)]
        length: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        slope: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn train_config(
    config: Option<PathBuf>,
    set: Vec<String>,
    flags: [(&str, Option<String>); 6],
    print_config: bool,
) -> Result<Option<RunConfig>, CliError> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(&path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    for s in &set {
        cfg.set(s)?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(&format!("{key}={v}"))?;
        }
    }
    if print_config {
        print!("{}", cfg.to_text());
        return Ok(None);
    }
    Ok(Some(cfg))
}

fn quoted(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| format!("{:?}", p.display().to_string()))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut stdout = io::stdout();
    match cli.command {
        Command::Train { config, set, out_dir, seed, steps, lr, optimizer, resume, print_config } => {
            let flags = [
                ("out_dir", quoted(out_dir)),
                ("seed", seed.map(|v| v.to_string())),
                ("steps", steps.map(|v| v.to_string())),
                ("lr", lr.map(|v| format!("{v:e}"))),
                ("optimizer", optimizer),
                ("resume", quoted(resume)),
            ];
            let Some(cfg) = train_config(config, set, flags, print_config)? else {
                return Ok(exit::SUCCESS);
            };
            let summary = commands::cmd_train(&cfg, &mut stdout)?;
            Ok(match summary.status {
                RunStatus::Diverged => exit::DIVERGED,
                RunStatus::Converged | RunStatus::BudgetExhausted => exit::SUCCESS,
            })
        }
        Command::Verify { level, seed, inject_kappa_fault } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let faults = Faults { kappa_times_two: inject_kappa_fault };
            let passed = commands::cmd_verify(level, seed, faults, &mut stdout)?;
            Ok(if passed { exit::SUCCESS } else { exit::VERIFY_FAILED })
        }
        Command::KappaRatio { hidden, lengths, io, init_range, seeds, seed, check_bruteforce, csv } => {
            let study = RatioStudy { hidden, lengths, io, init_range, seeds, seed, check_bruteforce };
            let cells = commands::kappa_ratio_study(&study)?;
            commands::print_ratio_table(&cells, &mut stdout);
            if let Some(path) = csv {
                commands::write_ratio_csv(&cells, &path)?;
            }
            Ok(exit::SUCCESS)
        }
        Command::GenData { task, length, n, seed, slope, out } => {
            let written = datafile::generate(&task, length, n, seed, slope, &out)?;
            println!("wrote {written} records to {}", out.display());
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::SUCCESS as u8 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::USAGE as u8)
        }
    }
}
