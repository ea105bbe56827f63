use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kramers::commands::{cmd_check, cmd_rate, cmd_rayleigh, cmd_simulate, cmd_sweep, CommandOutcome};
use kramers::config::{parse_epsilon_list, Overrides, RunConfig};
use kramers::Result;

#[derive(Parser)]
#[command(name = "kramers", version, about = "Kramers-Smoluchowski high-activation-energy laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    potential: Option<String>,
    /// Comma-separated ε values
    #[arg(long, global = true)]
    eps: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    u0: Option<f64>,
    /// Time horizon
    #[arg(long = "T", global = true)]
    t_end: Option<f64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print JSON instead of tables
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Audit the potential and tabulate the barrier and well integrals
    Check,
    /// Print k, τ_ε and the partition function
    Rate,
    /// Evolve each ε and write snapshots and diagnostics
    Simulate,
    /// Run the ε sweep and write the convergence report
    Sweep,
    /// Compare Rayleigh functionals against the limit
    Rayleigh,
}

fn load(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        potential: c.potential.clone(),
        epsilons: c.eps.as_deref().map(parse_epsilon_list).transpose()?,
        alpha: c.alpha,
        u0: c.u0,
        t_end: c.t_end,
        out: c.out.clone(),
        seed: c.seed,
    });
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<CommandOutcome> {
    let cfg = load(&cli.common)?;
    match cli.command {
        Command::Check => cmd_check(&cfg),
        Command::Rate => cmd_rate(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Rayleigh => cmd_rayleigh(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.common.json {
                println!("{}", serde_json::to_string_pretty(&out.json).unwrap_or_default());
            } else {
                print!("{}", out.text);
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
