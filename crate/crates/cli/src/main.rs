use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use obslab_cli::{
    cmd_simulate, cmd_synthesize, cmd_verify, exit, CliError, Context, Overrides, ScenarioConfig, PENDUBOT_SCENARIO,
};

/// Saturated high-gain velocity observer toolkit.
#[derive(Debug, Parser)]
#[command(name = "obslab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML); `pendubot-demo` defaults to the shipped scenario.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory [default: output.dir from the config, else ./obslab-out]
    #[arg(long, global = true, value_name = "DIR", env = "OBSLAB_OUT_DIR")]
    out: Option<PathBuf>,
    /// Integration step size override.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Observer gain override.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Seed override for sampling and campaigns.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Campaign trial count override.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute ‖S‖, M0, B, L and the minimal gain theta*.
    Synthesize,
    /// Simulate plant and observer; write the trajectory CSV and a summary.
    Simulate,
    /// Run the convergence checks and the initial-state campaign.
    Verify,
    /// Synthesize, simulate and verify the shipped Pendubot scenario.
    PendubotDemo,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut raw = match (&cli.config, &cli.command) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Command::PendubotDemo) => ScenarioConfig::from_toml(PENDUBOT_SCENARIO)?,
        (None, _) => return Err(CliError::Config("--config PATH is required".into())),
    };
    raw.apply(&Overrides {
        dt: cli.dt,
        theta: cli.theta,
        seed: cli.seed,
        trials: cli.trials,
    });
    let scenario = raw.validate()?;
    let ctx = Context {
        out_dir: scenario.out_dir(cli.out.as_deref()),
        quiet: cli.quiet,
    };
    let verify = |ctx: &Context| -> Result<(), CliError> {
        let report = cmd_verify(&scenario, ctx)?;
        if report.passed() {
            Ok(())
        } else {
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| c.status == obslab_cli::commands::CheckStatus::Violated)
                .map(|c| c.name.as_str())
                .collect();
            Err(CliError::Verification(failed.join(", ")))
        }
    };
    match cli.command {
        Command::Synthesize => cmd_synthesize(&scenario, &ctx).map(drop),
        Command::Simulate => cmd_simulate(&scenario, &ctx).map(drop),
        Command::Verify => verify(&ctx),
        Command::PendubotDemo => {
            cmd_synthesize(&scenario, &ctx)?;
            cmd_simulate(&scenario, &ctx)?;
            verify(&ctx)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
