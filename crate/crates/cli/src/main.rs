use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pair_grpo::par::Exec;
use pair_grpo_cli::commands::{self, CliError};
use pair_grpo_cli::Config;

#[derive(Parser, Debug)]
#[command(name = "pair-grpo", version, about = "Pairwise GRPO on tabular preference bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// grpo, soft_pair or hard_pair (train only).
    #[arg(long, global = true)]
    method: Option<String>,

    /// Base seed: train.seed, or analysis.seed for verify.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// train.epochs, or ablate.epochs for ablate.
    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Comma-separated suite names for verify, or `all`.
    #[arg(long, global = true)]
    suite: Option<String>,

    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Disable step-size decay (train), or add the fixed-delta row (ablate).
    #[arg(long, global = true)]
    fixed_delta: bool,

    /// Clip the product ratio * advantage instead of the ratio.
    #[arg(long, global = true)]
    literal_clip: bool,

    /// Fill the wall_ms column. Makes epochs.csv non-reproducible.
    #[arg(long, global = true)]
    wall_clock: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Run the property suites.
    Verify,
    /// Train one method.
    Train,
    /// Train all three methods on the same seeds.
    Compare,
    /// Step-size schedule ablation for hard_pair.
    Ablate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Train => "train",
            Command::Compare => "compare",
            Command::Ablate => "ablate",
        }
    }
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let mut config = Config::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    config.apply_env(std::env::vars())?;
    if let Some(m) = &cli.method {
        config.set("train.method", m)?;
    }
    if let Some(s) = cli.seed {
        let key = if cli.command == Command::Verify { "analysis.seed" } else { "train.seed" };
        config.set(key, &s.to_string())?;
    }
    if let Some(e) = cli.epochs {
        let key = if cli.command == Command::Ablate { "ablate.epochs" } else { "train.epochs" };
        config.set(key, &e.to_string())?;
    }
    if let Some(s) = &cli.suite {
        config.set("verify.suites", s)?;
    }
    if cli.fixed_delta {
        let key = if cli.command == Command::Ablate { "ablate.include_fixed" } else { "train.fixed_delta" };
        config.set(key, "true")?;
    }
    if cli.literal_clip {
        config.set("hp.clip_mode", "product")?;
    }
    if cli.wall_clock {
        config.set("output.wall_clock", "true")?;
    }
    config.validate()?;
    Ok(config)
}

fn executor(jobs: Option<usize>) -> Exec {
    match jobs {
        Some(1) => Exec::Sequential,
        #[cfg(feature = "parallel")]
        Some(n) => {
            // Fails only if the pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Exec::Auto
        }
        _ => Exec::Auto,
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = resolve(cli)?;
    let exec = executor(cli.jobs);
    let out = &cli.out;
    match cli.command {
        Command::Verify => {
            let summary = commands::run_verify(&config, out, exec)?;
            print!("{}", summary.report());
            let failed = summary.failed();
            if failed > 0 {
                return Err(CliError::SuiteFailure {
                    failed,
                    total: summary.total(),
                });
            }
        }
        Command::Train => {
            let s = commands::run_train(&config, out)?;
            println!(
                "{} epochs; J {} -> {}; wrote {}",
                s.epochs,
                s.initial_return,
                s.final_return,
                out.display()
            );
        }
        Command::Compare => {
            let s = commands::run_compare(&config, out, exec)?;
            print!("{}", s.report());
        }
        Command::Ablate => {
            for row in commands::run_ablate(&config, out, exec)? {
                println!(
                    "{}: median final J {}, median oscillation {}",
                    row.setting.label, row.median_final_return, row.median_oscillation
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pair-grpo {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
