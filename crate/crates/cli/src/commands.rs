use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use autoskill::deployer::{run_deployment, CheckSource, DeployConfig, EpisodeIo, EpisodeTrace, TimedEvent, TraceEvent};
use autoskill::explorer::{ExplorationConfig, VerificationMode};
use autoskill::harness::{self, HarnessError, MetricsTable, RunConfig};
use autoskill::oracle::FaultConfig;
use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;

use crate::backend::{load_library, load_scene, probability, BackendArgs, BackendKind, NoiseArgs};
use crate::{CliError, CliResult};

fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string()).map_err(CliError::Runtime)?;
    }
    std::fs::write(path, text).with_context(|| path.display().to_string()).map_err(CliError::Runtime)
}

fn harness_error(e: HarnessError) -> CliError {
    match e {
        HarnessError::Config(_) | HarnessError::ConfigMismatch(_) | HarnessError::Sim(_) => CliError::config(e),
        HarnessError::Explorer(autoskill::explorer::ExplorerError::Config(_)) => CliError::config(e),
        HarnessError::Io { .. } | HarnessError::Json { .. } => CliError::config(e),
        other => CliError::runtime(other),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerifyArg {
    Code,
    Vision,
    Both,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub scenario: String,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long, default_value_t = 10)]
    pub max_tasks: usize,
    /// Do not add skills to the library.
    #[arg(long)]
    pub no_skills: bool,
    /// Count any plan that runs without error as a success.
    #[arg(long)]
    pub no_verify: bool,
    #[arg(long, value_enum, default_value = "both")]
    pub verification: VerifyArg,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value = "runs/explore")]
    pub out: PathBuf,
}

pub fn explore(a: &ExploreArgs) -> CliResult {
    load_scene(&a.scenario)?;
    let config = ExplorationConfig {
        num_retries: a.retries,
        max_tasks: a.max_tasks,
        verification_mode: match a.verification {
            VerifyArg::Code => VerificationMode::Code,
            VerifyArg::Vision => VerificationMode::Vision,
            VerifyArg::Both => VerificationMode::Both,
        },
        verify: !a.no_verify,
        skill_learning: !a.no_skills,
        seed: a.noise.seed,
        noise: a.noise.noise(),
    };
    let faults = (a.backend.backend == BackendKind::Rule).then(FaultConfig::default);
    let oracle = a.backend.build(FaultConfig::default())?;
    let run = harness::record_exploration(&config, &a.scenario, oracle, faults, &a.out).map_err(harness_error)?;
    let r = &run.report;
    for (o, ms) in r.outcomes.iter().zip(&run.timings.per_task_ms) {
        let skill = o.skill_added.as_deref().map(|s| format!(", learned {s}")).unwrap_or_default();
        println!(
            "{:<36} {:<7} attempts {}{skill} ({ms:.0} ms)",
            o.task.name,
            if o.success { "success" } else { "failure" },
            o.attempts
        );
    }
    println!("{}/{} tasks succeeded, {} skills, written to {}", r.successes(), r.outcomes.len(), r.library.len(), a.out.display());
    match &r.aborted {
        Some(why) => Err(CliError::runtime(format!("exploration aborted: {why}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ChecksArg {
    GroundTruth,
    Oracle,
}

#[derive(Debug, Args)]
pub struct DeployArgs {
    #[arg(long)]
    pub scenario: String,
    /// Skill library JSON. Defaults to the bundled templates.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 5)]
    pub budget: u32,
    #[arg(long, default_value_t = 20)]
    pub turn_cap: usize,
    #[arg(long, value_enum, default_value = "ground-truth")]
    pub checks: ChecksArg,
    #[arg(long, conflicts_with = "interactive", required_unless_present = "interactive")]
    pub instruction: Option<String>,
    /// Read one instruction per line from standard input.
    #[arg(long)]
    pub interactive: bool,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Event log, one JSON object per line.
    #[arg(long, default_value = "trace.jsonl")]
    pub out: PathBuf,
}

/// Prints events as they happen.
pub struct Console;

pub fn render_event(e: &TimedEvent) -> String {
    match &e.event {
        TraceEvent::ControllerTurn { speaker, text, data } => match data.get("Action").and_then(|a| a.as_str()) {
            Some(action) => format!("[{speaker:?}] {action} {}", data["Action input"]),
            None => format!("[{speaker:?}] {text}"),
        },
        TraceEvent::PlanReady { task, steps, .. } => format!("  plan for '{}': {}", task.name, steps.join(" | ")),
        TraceEvent::PreconditionChecked { step_index, text, verdict } => {
            format!("  step {step_index} precondition '{text}': {}", if *verdict { "holds" } else { "fails" })
        }
        TraceEvent::StepExecuted { step_index, name, ok, error, reverted, .. } => {
            let status = match (ok, reverted, error) {
                (true, false, _) => "done".to_string(),
                (true, true, _) => "undone by the world".to_string(),
                (false, _, e) => format!("error: {}", e.as_deref().unwrap_or("?")),
            };
            format!("  step {step_index} {name}: {status}")
        }
        TraceEvent::Backtracked { from, to } => format!("  backtrack {from} -> {to}"),
        TraceEvent::TaskFinished { task, success } => format!("  task '{task}': {}", if *success { "success" } else { "failure" }),
        TraceEvent::Finished { success, message } => {
            format!("finished({}): {message}", if *success { "success" } else { "failure" })
        }
    }
}

impl EpisodeIo for Console {
    fn emit(&mut self, e: &TimedEvent) {
        println!("{}", render_event(e));
    }
}

pub fn deploy(a: &DeployArgs) -> CliResult {
    let mut scene = load_scene(&a.scenario)?.with_seed(a.noise.seed).with_noise(a.noise.noise());
    let lib = load_library(a.library.as_ref())?;
    let oracle = a.backend.build(FaultConfig::default())?;
    let config = DeployConfig {
        budget: a.budget,
        turn_cap: a.turn_cap,
        checks: match a.checks {
            ChecksArg::GroundTruth => CheckSource::GroundTruth,
            ChecksArg::Oracle => CheckSource::Oracle,
        },
        ..Default::default()
    };
    let mut log = String::new();
    let mut all_ok = true;
    let mut serve = |instruction: &str| {
        let trace: EpisodeTrace = run_deployment(instruction, &mut scene, &lib, &oracle, &config, &mut Console);
        all_ok &= trace.finished().is_some_and(|f| f.0);
        log.push_str(&trace.to_jsonl());
        std::io::stdout().flush().ok();
    };
    match &a.instruction {
        Some(i) => serve(i),
        None => {
            for line in std::io::stdin().lock().lines().map_while(Result::ok) {
                if !line.trim().is_empty() {
                    serve(line.trim());
                }
            }
        }
    }
    write_file(&a.out, &log)?;
    if all_ok {
        Ok(())
    } else {
        Err(CliError::runtime("the episode did not finish successfully"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Ablation,
    Backtracking,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Slip and motion-error rate for the ablation, per-step fault rate
    /// for the backtracking suite.
    #[arg(long, value_parser = probability)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub budget: u32,
    /// Backtracking scenes to run. Defaults to the cup and desk scenes.
    #[arg(long)]
    pub scenario: Vec<String>,
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Run seeds one after another instead of in parallel.
    #[arg(long)]
    pub serial: bool,
    #[arg(long, default_value = "runs/bench")]
    pub out: PathBuf,
}

pub fn bench_configs(a: &BenchArgs) -> Vec<RunConfig> {
    let seeds = 0..a.seeds;
    match a.suite {
        Suite::Ablation => harness::ablation_configs(seeds, a.noise.unwrap_or(0.25)),
        Suite::Backtracking => {
            let scenes =
                if a.scenario.is_empty() { vec!["cup_drawer".to_string(), "desktop_organization".to_string()] } else { a.scenario.clone() };
            scenes.iter().flat_map(|s| harness::backtracking_configs(s, seeds.clone(), a.noise.unwrap_or(0.2), a.budget)).collect()
        }
    }
}

pub fn bench(a: &BenchArgs) -> CliResult {
    let configs = bench_configs(a);
    let table: MetricsTable = match a.suite {
        Suite::Ablation => harness::run_ablation(&configs, !a.serial),
        Suite::Backtracking => {
            let lib = load_library(a.library.as_ref())?;
            harness::run_backtracking_bench(&configs, &lib, !a.serial)
        }
    }
    .map_err(harness_error)?;
    print!("{}", table.to_pretty());
    write_file(&a.out.join("table.csv"), &table.to_csv())?;
    write_file(&a.out.join("table.txt"), &table.to_pretty())?;
    write_file(&a.out.join("table.json"), &serde_json::to_string_pretty(&table).expect("table"))?;
    write_file(&a.out.join("manifest.json"), &serde_json::to_string_pretty(&json!({"configs": configs})).expect("configs"))?;
    Ok(())
}

#[derive(Debug, Subcommand)]
pub enum SkillsCmd {
    /// Print every skill's signature.
    List {
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Print one skill in library format.
    Show {
        name: String,
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Remove skills no other skill depends on.
    Prune {
        names: Vec<String>,
        #[arg(long)]
        library: PathBuf,
        /// Where to write the result. Defaults to overwriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn skills(cmd: &SkillsCmd) -> CliResult {
    match cmd {
        SkillsCmd::List { library } => {
            let lib = load_library(library.as_ref())?;
            for s in lib.iter() {
                println!("{:<40} {}", s.signature(), s.description);
            }
        }
        SkillsCmd::Show { name, library } => {
            let lib = load_library(library.as_ref())?;
            let s = lib.get(name).ok_or_else(|| CliError::config(format!("no skill named '{name}'")))?;
            let key = s.signature();
            println!("{}", serde_json::to_string_pretty(&json!({&key: lib.to_json()[&key]})).expect("skill"));
        }
        SkillsCmd::Prune { names, library, out } => {
            let lib = load_library(Some(library))?;
            let next = lib.prune(names).map_err(CliError::config)?;
            let out = out.as_ref().unwrap_or(library);
            next.save(out).map_err(CliError::runtime)?;
            println!("{} skills left in {}", next.len(), out.display());
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory written by `explore`.
    pub dir: PathBuf,
    /// Expected seed; refused when it differs from the recording.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn replay(a: &ReplayArgs) -> CliResult {
    let manifest: harness::RunManifest = serde_json::from_str(
        &std::fs::read_to_string(a.dir.join(harness::MANIFEST_FILE)).map_err(|e| CliError::config(format!("{}: {e}", a.dir.display())))?,
    )
    .map_err(CliError::config)?;
    let expected = ExplorationConfig { seed: a.seed.unwrap_or(manifest.config.seed), ..manifest.config.clone() };
    let run = harness::replay_exploration(&a.dir, Some(&expected)).map_err(|e| match e {
        HarnessError::Oracle(_) => CliError::runtime(e),
        e => harness_error(e),
    })?;
    let recorded = std::fs::read_to_string(a.dir.join(harness::REPORT_FILE)).unwrap_or_default();
    if run.report.to_json_string() == recorded {
        println!("replay matches the recorded report ({} tasks)", run.report.outcomes.len());
        Ok(())
    } else {
        Err(CliError::runtime("replayed report differs from the recording"))
    }
}
