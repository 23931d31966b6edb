//! Seeded experiments: exploration ablations, open-loop against
//! backtracking execution, and record/replay of exploration runs.


use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deployer::{
    generate_preconditions, run_open_loop, run_with_backtracking, DeployConfig, EpisodeIo, EpisodeTrace,
};
use crate::explorer::{explore_scene, plan_task, ExplorationConfig, ExplorationReport, ExplorationRun, ExplorerError, Timings};
use crate::oracle::rule::{self, FaultConfig, RuleBased};
use crate::oracle::{Oracle, OracleError, ReplayBackend, Transcript};
use crate::sim::scenario::load_named;
use crate::sim::{describe, NoiseConfig, Relation, RelationKind, Scene, SimError};
use crate::skilldsl::SkillLibrary;
use crate::task::TaskSpec;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration differs from the recording: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Explorer(#[from] ExplorerError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoSkills,
    NoVerification,
    OpenLoop,
    Backtracking,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSkills => "no_skills",
            Variant::NoVerification => "no_verification",
            Variant::OpenLoop => "open_loop",
            Variant::Backtracking => "backtracking",
        }
    }
}

fn default_budget() -> u32 {
    5
}
fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: String,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Chance the rule planner drops the lift from a primitive pick-and-place.
    #[serde(default)]
    pub motion_error: f64,
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default = "default_retries")]
    pub num_retries: u32,
}

impl RunConfig {
    pub fn new(scenario: &str, variant: Variant, seeds: impl IntoIterator<Item = u64>) -> Self {
        RunConfig {
            scenario: scenario.into(),
            variant,
            seeds: seeds.into_iter().collect(),
            noise: NoiseConfig::default(),
            motion_error: 0.0,
            budget: default_budget(),
            num_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(HarnessError::Config("seeds must be distinct".into()));
        }
        self.noise.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.motion_error) {
            return Err(HarnessError::Config(format!("motion_error = {} is not a probability", self.motion_error)));
        }
        if self.num_retries == 0 {
            return Err(HarnessError::Config("num_retries must be at least 1".into()));
        }
        Ok(())
    }
}

/// The three ablation variants on blocks_world with slip and planner
/// motion errors both set to `p`.
pub fn ablation_configs(seeds: impl IntoIterator<Item = u64> + Clone, p: f64) -> Vec<RunConfig> {
    [Variant::Full, Variant::NoSkills, Variant::NoVerification]
        .into_iter()
        .map(|v| RunConfig {
            noise: NoiseConfig { grasp_slip_prob: p, step_fail_prob: 0.0 },
            motion_error: p,
            ..RunConfig::new("blocks_world", v, seeds.clone())
        })
        .collect()
}

/// Open-loop and backtracking on one scenario with per-step fault rate `q`.
pub fn backtracking_configs(scenario: &str, seeds: impl IntoIterator<Item = u64> + Clone, q: f64, budget: u32) -> Vec<RunConfig> {
    [Variant::OpenLoop, Variant::Backtracking]
        .into_iter()
        .map(|v| RunConfig {
            noise: NoiseConfig { grasp_slip_prob: 0.0, step_fail_prob: q },
            budget,
            ..RunConfig::new(scenario, v, seeds.clone())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: String,
    pub variant: Variant,
    pub success_rate: f64,
    pub attempts_mean: f64,
    pub skill_count_mean: f64,
    /// Wall-clock, so excluded from equality.
    pub runtime_ms_mean: f64,
    pub runs: usize,
}

impl PartialEq for MetricRow {
    fn eq(&self, o: &Self) -> bool {
        self.task == o.task
            && self.variant == o.variant
            && self.success_rate == o.success_rate
            && self.attempts_mean == o.attempts_mean
            && self.skill_count_mean == o.skill_count_mean
            && self.runs == o.runs
    }
}

pub const AVERAGE: &str = "Average";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    pub fn get(&self, task: &str, variant: Variant) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.task == task && r.variant == variant)
    }

    pub fn rate(&self, task: &str, variant: Variant) -> Option<f64> {
        self.get(task, variant).map(|r| r.success_rate)
    }

    /// Row labels in first-seen order.
    pub fn tasks(&self) -> Vec<&str> {
        let mut seen = indexmap::IndexSet::new();
        for r in &self.rows {
            seen.insert(r.task.as_str());
        }
        seen.into_iter().collect()
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut seen = indexmap::IndexSet::new();
        for r in &self.rows {
            seen.insert(r.variant);
        }
        seen.into_iter().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,variant,success_rate,attempts_mean,skill_count_mean,runtime_ms_mean,runs\n");
        for r in &self.rows {
            let task = if r.task.contains([',', '"']) { format!("\"{}\"", r.task.replace('"', "\"\"")) } else { r.task.clone() };
            writeln!(
                out,
                "{task},{},{:.4},{:.3},{:.3},{:.1},{}",
                r.variant.as_str(),
                r.success_rate,
                r.attempts_mean,
                r.skill_count_mean,
                r.runtime_ms_mean,
                r.runs
            )
            .unwrap();
        }
        out
    }

    /// One line per task, one success-rate column per variant.
    pub fn to_pretty(&self) -> String {
        let tasks = self.tasks();
        let variants = self.variants();
        let w = tasks.iter().map(|t| t.len()).max().unwrap_or(4).max(4);
        let cols: Vec<usize> = variants.iter().map(|v| v.as_str().len().max(6)).collect();
        let mut out = format!("{:<w$}", "Task");
        for (v, c) in variants.iter().zip(&cols) {
            write!(out, "  {:>c$}", v.as_str()).unwrap();
        }
        out.push('\n');
        out.push_str(&"-".repeat(w + cols.iter().map(|c| c + 2).sum::<usize>()));
        out.push('\n');
        for t in tasks {
            write!(out, "{t:<w$}").unwrap();
            for (v, c) in variants.iter().zip(&cols) {
                match self.rate(t, *v) {
                    Some(r) => write!(out, "  {r:>c$.2}").unwrap(),
                    None => write!(out, "  {:>c$}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Whether the rule interpretation of `task` holds in `scene`. The harness
/// uses this as ground truth, independent of what the explorer believed.
pub fn task_achieved(task: &TaskSpec, scene: &Scene) -> bool {
    let Some(intent) = rule::interpret(task) else { return false };
    let d = describe(scene);
    intent.goals.iter().all(|g| g.holds(&d))
}

#[derive(Debug, Clone)]
struct TaskResult {
    task: String,
    success: bool,
    attempts: u32,
    skills: usize,
    runtime_ms: f64,
}

fn for_seeds<T: Send>(seeds: &[u64], parallel: bool, f: impl Fn(u64) -> Result<T, HarnessError> + Sync) -> Result<Vec<T>, HarnessError> {
    if parallel {
        seeds.par_iter().map(|&s| f(s)).collect()
    } else {
        seeds.iter().map(|&s| f(s)).collect()
    }
}

/// Average per-seed results into rows. Tasks a seed never reached count as
/// failures, so every rate is successes over the number of seeds.
fn aggregate(variant: Variant, per_seed: &[Vec<TaskResult>], table: &mut MetricsTable, with_average: bool) {
    let n = per_seed.len() as f64;
    let mut sums: IndexMap<String, (f64, f64, f64, f64)> = IndexMap::new();
    for seed in per_seed {
        for r in seed {
            let e = sums.entry(r.task.clone()).or_default();
            e.0 += r.success as u8 as f64;
            e.1 += r.attempts as f64;
            e.2 += r.skills as f64;
            e.3 += r.runtime_ms;
        }
    }
    let rows: Vec<MetricRow> = sums
        .into_iter()
        .map(|(task, (s, a, k, t))| MetricRow {
            task,
            variant,
            success_rate: s / n,
            attempts_mean: a / n,
            skill_count_mean: k / n,
            runtime_ms_mean: t / n,
            runs: per_seed.len(),
        })
        .collect();
    if with_average && !rows.is_empty() {
        let m = rows.len() as f64;
        let mean = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / m;
        let avg = MetricRow {
            task: AVERAGE.into(),
            variant,
            success_rate: mean(|r| r.success_rate),
            attempts_mean: mean(|r| r.attempts_mean),
            skill_count_mean: mean(|r| r.skill_count_mean),
            runtime_ms_mean: mean(|r| r.runtime_ms_mean),
            runs: per_seed.len(),
        };
        table.rows.extend(rows);
        table.rows.push(avg);
    } else {
        table.rows.extend(rows);
    }
}

fn ablation_seed(cfg: &RunConfig, seed: u64) -> Result<Vec<TaskResult>, HarnessError> {
    let exp = ExplorationConfig {
        num_retries: cfg.num_retries,
        verify: cfg.variant != Variant::NoVerification,
        skill_learning: cfg.variant != Variant::NoSkills,
        seed,
        noise: cfg.noise,
        ..Default::default()
    };
    let oracle = Oracle::new(RuleBased::new(FaultConfig { inline_motion_error: cfg.motion_error, seed, ..Default::default() }));
    let scene = load_named(&cfg.scenario)?;
    let mut results = Vec::new();
    let mut skills = 0;
    let run = explore_scene(&exp, scene, SkillLibrary::new(), &oracle, &mut |o, s| {
        skills += o.skill_added.is_some() as usize;
        results.push(TaskResult {
            task: o.task.name.clone(),
            success: task_achieved(&o.task, s),
            attempts: o.attempts,
            skills,
            runtime_ms: 0.0,
        });
    })?;
    for (r, t) in results.iter_mut().zip(&run.timings.per_task_ms) {
        r.runtime_ms = *t;
    }
    Ok(results)
}

/// Explore each configuration's scenario once per seed and report ground
/// truth success per task, plus an average row per variant.
pub fn run_ablation(configs: &[RunConfig], parallel: bool) -> Result<MetricsTable, HarnessError> {
    let mut table = MetricsTable::default();
    for cfg in configs {
        cfg.validate()?;
        if !matches!(cfg.variant, Variant::Full | Variant::NoSkills | Variant::NoVerification) {
            return Err(HarnessError::Config(format!("{} is not an ablation variant", cfg.variant.as_str())));
        }
        let per_seed = for_seeds(&cfg.seeds, parallel, |s| ablation_seed(cfg, s))?;
        aggregate(cfg.variant, &per_seed, &mut table, true);
    }
    Ok(table)
}

/// A named portion of a benchmark task: the steps it owns end at
/// `last_step`, and it is achieved when all `goal` relations hold.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTask {
    pub name: String,
    pub last_step: usize,
    pub goal: Vec<Relation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTask {
    pub task: TaskSpec,
    pub subtasks: Vec<SubTask>,
}

/// The whole task and its sub-tasks for the two benchmark scenes.
pub fn bench_task(scene: &Scene) -> Result<BenchTask, HarnessError> {
    let names: Vec<String> = describe(scene).objects.into_iter().map(|o| o.name).collect();
    let find = |pred: &dyn Fn(&str) -> bool| names.iter().find(|n| pred(n)).cloned();
    match rule::family(&names) {
        Some(rule::Family::CupDrawer) => {
            let drawer = find(&|n| n.contains("drawer")).expect("drawer family");
            let cup = scene
                .objects
                .keys()
                .find(|n| n.contains("cup"))
                .cloned()
                .ok_or_else(|| HarnessError::Config("no cup in the scene".into()))?;
            let task = TaskSpec::new(
                "Retrieve the Cup from the Drawer",
                &[&cup, &drawer],
                "Open the drawer, put the cup on the table and close the drawer.",
            );
            let sub = |name: &str, last_step, goal| SubTask { name: name.into(), last_step, goal };
            Ok(BenchTask {
                task,
                subtasks: vec![
                    sub("Open the Drawer", 0, vec![Relation::new(&drawer, RelationKind::Open, None)]),
                    sub("Pick and Place the Cup", 1, vec![Relation::new(&cup, RelationKind::On, Some(crate::sim::TABLE))]),
                    sub("Close the Drawer", 2, vec![Relation::new(&drawer, RelationKind::Closed, None)]),
                ],
            })
        }
        Some(rule::Family::DesktopOrganization) => {
            let spec = rule::curriculum(&names)
                .into_iter()
                .find(|t| t.name == "Organize the Desk")
                .ok_or_else(|| HarnessError::Config("desk has nothing to organize".into()))?;
            let bin = find(&|n| n.contains("bin")).expect("desk family");
            let shelf = find(&|n| n.contains("shelf")).expect("desk family");
            let rubbish: Vec<&String> = spec.objects.iter().filter(|o| rule::intent::is_rubbish(o)).collect();
            let items: Vec<&String> =
                spec.objects.iter().filter(|o| !rule::intent::is_rubbish(o) && !rule::intent::is_furniture(o)).collect();
            let subtasks = vec![
                SubTask {
                    name: "Clear the Rubbish".into(),
                    last_step: rubbish.len() - 1,
                    goal: rubbish.iter().map(|r| Relation::new(*r, RelationKind::Inside, Some(&bin))).collect(),
                },
                SubTask {
                    name: "Place the Items".into(),
                    last_step: rubbish.len() + items.len() - 1,
                    goal: items.iter().map(|i| Relation::new(*i, RelationKind::On, Some(&shelf))).collect(),
                },
            ];
            Ok(BenchTask { task: spec, subtasks })
        }
        _ => Err(HarnessError::Config(format!("no backtracking benchmark for scenario '{}'", scene.scenario))),
    }
}

/// A sub-task is latched once its goal holds right after one of its own
/// steps (or a later one) has run. Later steps may legitimately undo it, as
/// closing the drawer undoes opening it.
struct Latch<'a> {
    subtasks: &'a [SubTask],
    done: Vec<bool>,
}

impl EpisodeIo for Latch<'_> {
    fn emit(&mut self, _: &crate::deployer::TimedEvent) {}

    fn after_step(&mut self, step: usize, scene: &Scene) {
        let d = describe(scene);
        for (s, done) in self.subtasks.iter().zip(&mut self.done) {
            if step >= s.last_step && s.goal.iter().all(|g| d.holds(g)) {
                *done = true;
            }
        }
    }
}

fn backtracking_seed(cfg: &RunConfig, lib: &SkillLibrary, seed: u64) -> Result<Vec<TaskResult>, HarnessError> {
    let mut scene = load_named(&cfg.scenario)?.with_seed(seed).with_noise(cfg.noise);
    let bench = bench_task(&scene)?;
    let oracle = Oracle::new(RuleBased::default());
    let plan = plan_task(&bench.task, lib, &oracle, &describe(&scene), 0)?;
    let expected = bench.subtasks.last().map_or(0, |s| s.last_step + 1);
    if plan.len() != expected {
        return Err(HarnessError::Config(format!("expected a {expected}-step plan, got {} steps", plan.len())));
    }
    let deploy = DeployConfig { budget: cfg.budget, ..Default::default() };
    let mut latch = Latch { subtasks: &bench.subtasks, done: vec![false; bench.subtasks.len()] };
    let mut trace = EpisodeTrace::default();
    let began = Instant::now();
    let outcome = if cfg.variant == Variant::Backtracking {
        let pre = generate_preconditions(&bench.task, &plan, lib, &oracle)?;
        run_with_backtracking(&bench.task, &plan, &pre, &mut scene, lib, &oracle, &deploy, &mut trace, &mut latch)?
    } else {
        run_open_loop(&bench.task, &plan, &mut scene, lib, &oracle, &deploy, &mut trace, &mut latch)?
    };
    let runtime_ms = began.elapsed().as_secs_f64() * 1000.0;
    let attempts = outcome.backtracks + 1;
    let mut out = vec![TaskResult {
        task: bench.task.name.clone(),
        success: task_achieved(&bench.task, &scene),
        attempts,
        skills: lib.len(),
        runtime_ms,
    }];
    for (s, done) in bench.subtasks.iter().zip(latch.done) {
        out.push(TaskResult { task: format!("  {}", s.name), success: done, attempts, skills: lib.len(), runtime_ms });
    }
    Ok(out)
}

/// Run one benchmark task per seed, open loop or with backtracking, and
/// report whole-task and sub-task success. Attempts count backtracks + 1.
pub fn run_backtracking_bench(configs: &[RunConfig], lib: &SkillLibrary, parallel: bool) -> Result<MetricsTable, HarnessError> {
    let mut table = MetricsTable::default();
    for cfg in configs {
        cfg.validate()?;
        if !matches!(cfg.variant, Variant::OpenLoop | Variant::Backtracking) {
            return Err(HarnessError::Config(format!("{} is not an execution variant", cfg.variant.as_str())));
        }
        let per_seed = for_seeds(&cfg.seeds, parallel, |s| backtracking_seed(cfg, lib, s))?;
        aggregate(cfg.variant, &per_seed, &mut table, false);
    }
    Ok(table)
}

/// The library the bundled rule backend knows how to generalise into.
pub fn default_deploy_library() -> SkillLibrary {
    rule::templates().clone()
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const LIBRARY_FILE: &str = "library.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const TIMINGS_FILE: &str = "timings.json";

/// Everything needed to re-run an exploration offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub backend: String,
    pub config: ExplorationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faults: Option<FaultConfig>,
    pub transcript: String,
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.into(), source })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.into(), source })
}

/// Write the report, library, timings, transcript and manifest of a run.
pub fn save_run(dir: &Path, run: &ExplorationRun, manifest: &RunManifest, transcript: Option<&Transcript>) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.into(), source })?;
    write(&dir.join(REPORT_FILE), &run.report.to_json_string())?;
    write(&dir.join(LIBRARY_FILE), &run.report.library.to_json_string())?;
    write(&dir.join(TIMINGS_FILE), &serde_json::to_string_pretty(&run.timings).expect("timings"))?;
    if let Some(t) = transcript {
        write(&dir.join(TRANSCRIPT_FILE), &t.to_jsonl())?;
    }
    write(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(manifest).expect("manifest"))?;
    Ok(())
}

/// Explore with a recording oracle and write the run to `dir`.
pub fn record_exploration(
    config: &ExplorationConfig,
    scenario: &str,
    oracle: Oracle,
    faults: Option<FaultConfig>,
    dir: &Path,
) -> Result<ExplorationRun, HarnessError> {
    let oracle = oracle.recording();
    let scene = load_named(scenario)?;
    let run = explore_scene(config, scene, SkillLibrary::new(), &oracle, &mut |_, _| {})?;
    let manifest = RunManifest {
        scenario: scenario.into(),
        backend: oracle.backend_name().into(),
        config: config.clone(),
        faults,
        transcript: TRANSCRIPT_FILE.into(),
    };
    save_run(dir, &run, &manifest, oracle.transcript().as_ref())?;
    Ok(run)
}

/// Re-run a recorded exploration from its transcript. A `config` that
/// differs from the recorded one is refused.
pub fn replay_exploration(dir: &Path, config: Option<&ExplorationConfig>) -> Result<ExplorationRun, HarnessError> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if let Some(c) = config {
        if *c != manifest.config {
            let want = serde_json::to_string(&manifest.config).expect("config");
            let got = serde_json::to_string(c).expect("config");
            return Err(HarnessError::ConfigMismatch(format!("recorded {want}, requested {got}")));
        }
    }
    let transcript = Transcript::load(&dir.join(&manifest.transcript))?;
    let oracle = Oracle::new(ReplayBackend::new(&transcript));
    let scene = load_named(&manifest.scenario)?;
    let mut run = explore_scene(&manifest.config, scene, SkillLibrary::new(), &oracle, &mut |_, _| {})?;
    // The answers are the recorded backend's, so the report names it.
    run.report.backend = manifest.backend.clone();
    Ok(run)
}

pub fn load_report(path: &Path) -> Result<ExplorationReport, HarnessError> {
    read_json(path)
}

pub fn load_timings(path: &Path) -> Result<Timings, HarnessError> {
    read_json(path)
}
