use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use autoskill::deployer::DeployConfig;
use autoskill::oracle::FaultConfig;
use autoskill_cli::backend::{load_library, load_scene, BackendArgs, NoiseArgs};
use autoskill_cli::commands::{self, BenchArgs, DeployArgs, ExploreArgs, ReplayArgs, SkillsCmd};
use autoskill_cli::server::{self, AppState};
use autoskill_cli::{CliError, CliResult};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autoskill", version, about = "Explore tabletop scenes, learn skills and serve instructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate tasks for a scene, solve them and grow a skill library.
    Explore(ExploreArgs),
    /// Serve an instruction with precondition checks and backtracking.
    Deploy(DeployArgs),
    /// Run a seeded benchmark suite.
    Bench(BenchArgs),
    /// Inspect or prune a skill library.
    #[command(subcommand)]
    Skills(SkillsCmd),
    /// Re-run a recorded exploration and compare reports.
    Replay(ReplayArgs),
    /// Start the episode server.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "blocks_world")]
    scenario: String,
    #[arg(long)]
    library: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 5)]
    budget: u32,
    #[command(flatten)]
    noise: NoiseArgs,
}

fn serve(a: ServeArgs) -> CliResult {
    let scene = load_scene(&a.scenario)?.with_seed(a.noise.seed).with_noise(a.noise.noise());
    let library = load_library(a.library.as_ref())?;
    // Build once up front so configuration problems fail at startup.
    a.backend.build(FaultConfig::default())?;
    let backend = a.backend.clone();
    let factory: server::OracleFactory =
        Arc::new(move || backend.build(FaultConfig::default()).map_err(|e| anyhow::anyhow!("{e}")));
    let state = AppState::new(scene, library, factory, DeployConfig { budget: a.budget, ..Default::default() });
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.into()))?;
    rt.block_on(server::serve(state, a.port)).map_err(CliError::Runtime)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Bad flags are configuration errors; help and version are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Explore(a) => commands::explore(&a),
        Command::Deploy(a) => commands::deploy(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Skills(c) => commands::skills(&c),
        Command::Replay(a) => commands::replay(&a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
