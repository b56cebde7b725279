use std::path::PathBuf;
use std::process::ExitCode;

use apfv::{convergence, run, CliResult, ConvergenceConfig, ConvergenceOptions, RunConfig, RunOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "apfv", version, about = "Semi-implicit finite volume runs and convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] directory`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for the perturbation phases; overrides `[perturbation] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single run with per-step diagnostics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Exit with status 4 if any step breaks an energy, entropy,
        /// positivity or balance check.
        #[arg(long)]
        assert_inequalities: bool,
    },
    /// Grid convergence study.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Worker threads for independent grid runs.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            common,
            assert_inequalities,
        } => {
            let cfg = RunConfig::load(&common.config.to_string_lossy())?;
            let opts = RunOptions {
                output: common.output,
                seed: common.seed,
                assert_inequalities,
            };
            let s = run(&cfg, &opts)?;
            println!(
                "{} steps to t = {:.6}, KE ratio {:.6}, {} check violation(s); output in {}",
                s.steps,
                s.final_time,
                s.ke_ratio,
                s.violations.len(),
                s.output_dir.display()
            );
        }
        Command::Convergence { common, threads } => {
            let cfg = ConvergenceConfig::load(&common.config.to_string_lossy())?;
            let opts = ConvergenceOptions {
                output: common.output,
                threads,
                seed: common.seed,
            };
            let table = convergence(&cfg, &opts)?;
            for r in &table.rows {
                let cells: Vec<String> = table
                    .error_names
                    .iter()
                    .zip(r.errors.iter().zip(&r.eocs))
                    .map(|(name, (e, rate))| match rate {
                        Some(q) => format!("{name} {e:.3e} ({q:.3})"),
                        None => format!("{name} {e:.3e}"),
                    })
                    .collect();
                println!("eps {:.3e} n {:4}: {}", r.eps, r.n, cells.join(", "));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
