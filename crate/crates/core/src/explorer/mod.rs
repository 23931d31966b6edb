//! Self-directed exploration: look at the scene, propose tasks from easy to
//! hard, plan and run each one, check the outcome, repair failures by error
//! class, and turn successes into reusable skills.


use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::oracle::{decode_blocks, Context, ErrorClass, FailureReport, Oracle, OracleError, OracleRequest, OracleRole};
use crate::sim::scenario::load_named;
use crate::sim::{describe, DescribedObject, NoiseConfig, Scene, SceneDescription, SceneState};
use crate::skilldsl::{
    interpret, interpret_in, parse, validate_with, Env, ExecError, ExecutionTrace, GroundError, GroundErrorKind, Mode,
    SkillDef, SkillLibrary,
};
use crate::task::{Plan, PlanStep, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMode {
    Code,
    Vision,
    #[default]
    Both,
}

fn default_retries() -> u32 {
    3
}
fn default_max_tasks() -> usize {
    10
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    #[serde(default = "default_retries")]
    pub num_retries: u32,
    #[serde(default = "default_max_tasks")]
    pub max_tasks: usize,
    #[serde(default)]
    pub verification_mode: VerificationMode,
    /// When off, a plan that runs without error counts as a success.
    #[serde(default = "yes")]
    pub verify: bool,
    #[serde(default = "yes")]
    pub skill_learning: bool,
    /// Seed for the scene's random stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig {
            num_retries: default_retries(),
            max_tasks: default_max_tasks(),
            verification_mode: VerificationMode::default(),
            verify: true,
            skill_learning: true,
            seed: 0,
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplorerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// One logged failure inside a task's retry loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub attempt: u32,
    pub class: ErrorClass,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: TaskSpec,
    pub success: bool,
    pub attempts: u32,
    pub error_log: Vec<ErrorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_added: Option<String>,
    /// Last plan that was executed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedTask {
    pub task: TaskSpec,
    pub reason: String,
}

mod library_json {
    use super::*;

    pub fn serialize<S: Serializer>(lib: &SkillLibrary, s: S) -> Result<S::Ok, S::Error> {
        lib.to_json().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SkillLibrary, D::Error> {
        let doc = Json::deserialize(d)?;
        SkillLibrary::from_json(&doc).map_err(serde::de::Error::custom)
    }
}

/// Everything an exploration episode produced. Wall-clock timings live in
/// [`Timings`] so that replays compare equal byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub scenario: String,
    pub seed: u64,
    pub backend: String,
    pub scene_description: String,
    pub rejected_tasks: Vec<RejectedTask>,
    pub outcomes: Vec<TaskOutcome>,
    #[serde(with = "library_json")]
    pub library: SkillLibrary,
    /// Set when an oracle failure ended the episode early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl ExplorationReport {
    pub fn successes(&self) -> usize {
        self.outcomes.iter().filter(|o| o.success).count()
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub per_task_ms: Vec<f64>,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ExplorationRun {
    pub report: ExplorationReport,
    pub timings: Timings,
    pub scene: Scene,
}

/// A plan step that stopped execution.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub step_index: usize,
    pub error: ExecError,
    /// Primitive calls completed before the failure.
    pub trace: ExecutionTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vision: Option<bool>,
    pub evidence: Vec<String>,
}

fn observe_ctx(desc: &SceneDescription) -> Context {
    Context { observation: Some(desc.clone()), ..Default::default() }
}

/// Ask the scene describer for the objects in view. Relations always come
/// from the simulator, restricted to the objects the describer reported.
pub fn understand_scene(scene: &Scene, oracle: &Oracle) -> Result<SceneDescription, OracleError> {
    #[derive(Deserialize)]
    struct Obj {
        #[serde(rename = "Name")]
        name: String,
        #[serde(rename = "Color", default)]
        color: String,
    }
    #[derive(Deserialize)]
    struct Reply {
        #[serde(rename = "Description")]
        text: String,
        #[serde(rename = "Objects on table", default)]
        objects: Vec<Obj>,
    }
    let truth = describe(scene);
    let req = OracleRequest::new(OracleRole::SceneDescriber, observe_ctx(&truth), &SkillLibrary::new());
    let reply: Reply = oracle.call_checked(&req, |r| {
        decode_blocks::<Reply>(r)?.into_iter().next().ok_or_else(|| "expected one description block".to_string())
    })?;
    let objects: Vec<DescribedObject> =
        reply.objects.into_iter().map(|o| DescribedObject { name: o.name, color: o.color }).collect();
    let seen = |n: &str| n == crate::sim::TABLE || objects.iter().any(|o| o.name == n);
    let relations =
        truth.relations.iter().filter(|r| seen(&r.subject) && r.object.as_deref().is_none_or(seen)).cloned().collect();
    Ok(SceneDescription { text: reply.text, objects, relations })
}

fn words(s: &str) -> BTreeSet<String> {
    s.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_string).collect()
}

fn similar(a: &str, b: &str) -> bool {
    let (a, b) = (words(a), words(b));
    let union = a.union(&b).count();
    union == 0 || a.intersection(&b).count() as f64 / union as f64 >= 0.8
}

/// Ask for a curriculum and keep the tasks that name only visible objects
/// and are not repeats of an earlier task.
pub fn generate_tasks(
    desc: &SceneDescription,
    oracle: &Oracle,
    max_tasks: usize,
) -> Result<(Vec<TaskSpec>, Vec<RejectedTask>), OracleError> {
    let ctx = Context { max_tasks: Some(max_tasks), ..observe_ctx(desc) };
    let req = OracleRequest::new(OracleRole::TaskGenerator, ctx, &SkillLibrary::new());
    let proposed: Vec<TaskSpec> = oracle.call_checked(&req, decode_blocks::<TaskSpec>)?;
    let mut accepted: Vec<TaskSpec> = Vec::new();
    let mut rejected = Vec::new();
    for task in proposed {
        let reason = if task.objects.is_empty() {
            Some("the task names no objects".to_string())
        } else if let Some(missing) = task.objects.iter().find(|o| !desc.objects.iter().any(|d| d.name.eq_ignore_ascii_case(o))) {
            Some(format!("'{missing}' is not in view"))
        } else {
            let mut objs: Vec<String> = task.objects.iter().map(|o| o.to_lowercase()).collect();
            objs.sort();
            accepted
                .iter()
                .find(|t| {
                    let mut other: Vec<String> = t.objects.iter().map(|o| o.to_lowercase()).collect();
                    other.sort();
                    t.name.eq_ignore_ascii_case(&task.name) || (other == objs && similar(&t.description, &task.description))
                })
                .map(|t| format!("duplicates '{}'", t.name))
        };
        match reason {
            Some(reason) => {
                log::info!("dropping task '{}': {reason}", task.name);
                rejected.push(RejectedTask { task, reason });
            }
            None if accepted.len() < max_tasks => accepted.push(task),
            None => rejected.push(RejectedTask { task, reason: format!("over the limit of {max_tasks} tasks") }),
        }
    }
    Ok((accepted, rejected))
}

fn decode_plan(r: &crate::oracle::OracleResponse) -> Result<Plan, String> {
    let steps: Vec<PlanStep> = decode_blocks(r)?;
    if steps.is_empty() {
        return Err("the plan has no steps".into());
    }
    Ok(Plan::new(steps))
}

/// Ask the planner for a fresh plan.
pub fn plan_task(
    task: &TaskSpec,
    lib: &SkillLibrary,
    oracle: &Oracle,
    desc: &SceneDescription,
    attempt: u32,
) -> Result<Plan, OracleError> {
    let ctx = Context { task: Some(task.clone()), attempt: Some(attempt), ..observe_ctx(desc) };
    oracle.call_checked(&OracleRequest::new(OracleRole::Planner, ctx, lib), decode_plan)
}

/// Validate every step, then run them in order in one shared environment.
/// Nothing is executed if any step fails to parse or validate.
pub fn execute_plan(plan: &Plan, lib: &SkillLibrary, scene: &mut Scene) -> Result<ExecutionTrace, StepFailure> {
    let fail = |step_index, error, trace| Err(StepFailure { step_index, error, trace });
    let mut programs = Vec::with_capacity(plan.len());
    let mut bound = BTreeSet::new();
    for (i, step) in plan.steps.iter().enumerate() {
        let p = match parse(&step.code) {
            Ok(p) => p,
            Err(e) => return fail(i, ExecError::Interp(e), ExecutionTrace::default()),
        };
        if let Err(e) = validate_with(&p, lib, &mut bound, Mode::Action) {
            return fail(i, ExecError::Interp(e), ExecutionTrace::default());
        }
        programs.push(p);
    }
    let mut env = Env::new();
    let mut trace = ExecutionTrace::default();
    for (i, p) in programs.iter().enumerate() {
        match interpret_in(p, &mut env, lib, scene) {
            Ok(t) => trace.calls.extend(t.calls),
            Err((e, t)) => {
                trace.calls.extend(t.calls);
                let e = match e {
                    ExecError::Ground(g) => ExecError::Ground(GroundError { step_index: i, ..g }),
                    other => other,
                };
                return fail(i, e, trace);
            }
        }
    }
    Ok(trace)
}

pub fn classify_error(e: &ExecError) -> ErrorClass {
    match e {
        ExecError::Interp(_) => ErrorClass::Interpretation,
        ExecError::Ground(_) => ErrorClass::Grounding,
    }
}

/// Oracle failures that are the model's fault rather than the transport's.
pub fn classify_oracle_error(e: &OracleError) -> Option<ErrorClass> {
    matches!(e, OracleError::Format { .. }).then_some(ErrorClass::Interpretation)
}

fn error_kind(e: &ExecError) -> String {
    match e {
        ExecError::Interp(i) => format!("{:?}", i.kind),
        ExecError::Ground(g) => g.kind.to_string(),
    }
}

fn error_message(e: &ExecError) -> String {
    match e {
        ExecError::Interp(i) => i.to_string(),
        ExecError::Ground(g) => g.message.clone(),
    }
}

pub fn failure_report(f: &StepFailure) -> FailureReport {
    FailureReport {
        step_index: f.step_index,
        class: classify_error(&f.error),
        kind: error_kind(&f.error),
        message: error_message(&f.error),
    }
}

/// Regenerate the code of one step. Names, explanations and every other
/// step are kept exactly as they were.
pub fn repair_interpretation(
    task: &TaskSpec,
    plan: &Plan,
    report: &FailureReport,
    lib: &SkillLibrary,
    oracle: &Oracle,
    desc: &SceneDescription,
    attempt: u32,
) -> Result<Plan, OracleError> {
    let ctx = Context {
        task: Some(task.clone()),
        plan: Some(plan.clone()),
        failure: Some(report.clone()),
        failed_step: Some(report.step_index),
        attempt: Some(attempt),
        ..observe_ctx(desc)
    };
    let step: PlanStep = oracle.call_checked(&OracleRequest::new(OracleRole::Planner, ctx, lib), |r| {
        decode_blocks::<PlanStep>(r)?.into_iter().next().ok_or_else(|| "expected one step".to_string())
    })?;
    let mut repaired = plan.clone();
    repaired.steps[report.step_index].code = step.code;
    Ok(repaired)
}

/// Ask for a revised plan given what went wrong in the world.
pub fn repair_grounding(
    task: &TaskSpec,
    plan: &Plan,
    report: &FailureReport,
    lib: &SkillLibrary,
    oracle: &Oracle,
    desc: &SceneDescription,
    attempt: u32,
) -> Result<Plan, OracleError> {
    let ctx = Context {
        task: Some(task.clone()),
        plan: Some(plan.clone()),
        failure: Some(report.clone()),
        attempt: Some(attempt),
        ..observe_ctx(desc)
    };
    oracle.call_checked(&OracleRequest::new(OracleRole::Planner, ctx, lib), decode_plan)
}

/// Generate a read-only predicate for the task and evaluate it on a copy of
/// the scene. Runtime errors count as "not satisfied".
pub fn verify_with_code(task: &TaskSpec, scene: &Scene, oracle: &Oracle) -> Result<(bool, String), OracleError> {
    let ctx = Context { task: Some(task.clone()), ..observe_ctx(&describe(scene)) };
    let req = OracleRequest::new(OracleRole::CodeVerifierGen, ctx, &SkillLibrary::new());
    let program = oracle.call_checked(&req, |r| {
        let code = r.blocks.first().and_then(|b| b["Code"].as_str()).ok_or("expected a block with \"Code\"")?;
        let p = parse(code).map_err(|e| e.to_string())?;
        validate_with(&p, &SkillLibrary::new(), &mut BTreeSet::new(), Mode::ReadOnly).map_err(|e| e.to_string())?;
        Ok(p)
    })?;
    let mut probe = scene.clone();
    Ok(match interpret(&program, Env::new(), &SkillLibrary::new(), &mut probe) {
        Ok(t) => match t.checks.iter().find(|c| !c.passed) {
            None if t.checks.is_empty() => (false, "predicate made no checks".into()),
            None => (true, format!("{} checks passed", t.checks.len())),
            Some(c) => (false, format!("check failed: {}", c.message)),
        },
        Err((e, _)) => (false, format!("predicate failed: {e}")),
    })
}

pub fn verify_with_vision(
    task: &TaskSpec,
    scene: &Scene,
    initial: &SceneDescription,
    oracle: &Oracle,
) -> Result<(bool, String), OracleError> {
    let ctx = Context {
        task: Some(task.clone()),
        initial_observation: Some(initial.clone()),
        ..observe_ctx(&describe(scene))
    };
    oracle.call_checked(&OracleRequest::new(OracleRole::VisionVerifier, ctx, &SkillLibrary::new()), |r| {
        let b = r.blocks.first().ok_or("expected a verdict block")?;
        let ok = b["Satisfied"].as_bool().ok_or("\"Satisfied\" must be true or false")?;
        Ok((ok, b["Reason"].as_str().unwrap_or_default().to_string()))
    })
}

/// Judge the final scene. In `Both` mode the two verifiers must agree.
pub fn verify_success(
    task: &TaskSpec,
    scene: &Scene,
    initial: &SceneDescription,
    mode: VerificationMode,
    oracle: &Oracle,
) -> Result<Verdict, OracleError> {
    let mut v = Verdict { success: false, code: None, vision: None, evidence: Vec::new() };
    if matches!(mode, VerificationMode::Code | VerificationMode::Both) {
        let (ok, why) = verify_with_code(task, scene, oracle)?;
        v.code = Some(ok);
        v.evidence.push(format!("code: {why}"));
    }
    if matches!(mode, VerificationMode::Vision | VerificationMode::Both) {
        let (ok, why) = verify_with_vision(task, scene, initial, oracle)?;
        v.vision = Some(ok);
        v.evidence.push(format!("vision: {why}"));
    }
    v.success = v.code.unwrap_or(true) && v.vision.unwrap_or(true);
    Ok(v)
}

fn skill_from_reply(block: &Json) -> Result<Option<SkillDef>, String> {
    if block.get("Decline").is_some() {
        return Ok(None);
    }
    let sig = block["Function name"].as_str().ok_or("missing \"Function name\"")?;
    let mut entry = block.clone();
    if let Some(o) = entry.as_object_mut() {
        o.remove("Function name");
        o.entry("Type").or_insert(json!("function"));
    }
    SkillDef::from_entry(sig, &entry).map(Some).map_err(|e| e.to_string())
}

/// Check a proposed skill: it must validate against the library, declare
/// exactly the callees it uses, and its example must be a single call.
pub fn check_skill(def: &SkillDef, lib: &SkillLibrary) -> Result<SkillLibrary, String> {
    let next = lib.add_skill(def.clone()).map_err(|e| match e {
        crate::skilldsl::LibraryError::Duplicate(n) => format!("a function named '{n}' already exists; choose a unique name"),
        other => other.to_string(),
    })?;
    let declared: BTreeSet<String> = def.related.iter().cloned().collect();
    if declared != def.callees() {
        return Err(format!(
            "\"Related functions\" lists {:?} but the code calls {:?}",
            declared,
            def.callees()
        ));
    }
    let example = parse(&def.example).map_err(|e| format!("example does not parse: {e}"))?;
    if example.callees_in_order().first().map(String::as_str) != Some(def.name.as_str()) {
        return Err("the example must call the new function".into());
    }
    validate_with(&example, &next, &mut BTreeSet::new(), Mode::Action).map_err(|e| format!("example is invalid: {e}"))?;
    Ok(next)
}

/// Ask the reflector for a reusable skill. `accept` runs extra checks on a
/// well-formed candidate (the explorer replays the example). Returns
/// `None` when the reflector declines or two proposals are rejected.
pub fn reflect_skill(
    task: &TaskSpec,
    plan: &Plan,
    lib: &SkillLibrary,
    oracle: &Oracle,
    desc: &SceneDescription,
    accept: &mut dyn FnMut(&SkillDef, &SkillLibrary) -> Result<(), String>,
) -> Result<Option<SkillDef>, OracleError> {
    let mut ctx = Context { task: Some(task.clone()), plan: Some(plan.clone()), ..observe_ctx(desc) };
    for _ in 0..2 {
        let req = OracleRequest::new(OracleRole::Reflector, ctx.clone(), lib);
        let resp = match oracle.call(&req) {
            Ok(r) => r,
            Err(e @ OracleError::Format { .. }) => {
                log::warn!("reflection for '{}' skipped: {e}", task.name);
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let verdict = resp
            .blocks
            .first()
            .ok_or_else(|| "expected one block".to_string())
            .and_then(skill_from_reply)
            .and_then(|d| match d {
                None => Ok(None),
                Some(d) => {
                    let next = check_skill(&d, lib)?;
                    accept(&d, &next)?;
                    Ok(Some(d))
                }
            });
        match verdict {
            Ok(d) => return Ok(d),
            Err(complaint) => {
                log::info!("rejected skill for '{}': {complaint}", task.name);
                ctx.note = Some(format!("Your previous function was rejected: {complaint}"));
            }
        }
    }
    Ok(None)
}

enum Next {
    Fresh,
    Interp(Plan, FailureReport),
    Ground(Plan, FailureReport),
}

/// Run one task with retries. The scene is returned to the task's starting
/// state before every retry.
pub fn explore_task(
    task: &TaskSpec,
    config: &ExplorationConfig,
    scene: &mut Scene,
    lib: &mut SkillLibrary,
    oracle: &Oracle,
) -> Result<TaskOutcome, OracleError> {
    let start: SceneState = scene.state();
    let initial = describe(scene);
    let mut out =
        TaskOutcome { task: task.clone(), success: false, attempts: 0, error_log: Vec::new(), skill_added: None, plan: None };
    let mut next = Next::Fresh;
    while out.attempts < config.num_retries {
        let attempt = out.attempts;
        out.attempts += 1;
        if attempt > 0 {
            scene.restore(&start);
        }
        let planned = match &next {
            Next::Fresh => plan_task(task, lib, oracle, &initial, attempt),
            Next::Interp(p, r) => repair_interpretation(task, p, r, lib, oracle, &initial, attempt),
            Next::Ground(p, r) => repair_grounding(task, p, r, lib, oracle, &initial, attempt),
        };
        let plan = match planned {
            Ok(p) => p,
            Err(e @ OracleError::Format { .. }) => {
                out.error_log.push(ErrorRecord {
                    attempt,
                    class: ErrorClass::Interpretation,
                    kind: "FormatError".into(),
                    step_index: None,
                    message: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        out.plan = Some(plan.clone());
        if let Err(f) = execute_plan(&plan, lib, scene) {
            let report = failure_report(&f);
            out.error_log.push(ErrorRecord {
                attempt,
                class: report.class,
                kind: report.kind.clone(),
                step_index: Some(report.step_index),
                message: report.message.clone(),
            });
            next = match report.class {
                ErrorClass::Interpretation => Next::Interp(plan, report),
                ErrorClass::Grounding => Next::Ground(plan, report),
            };
            continue;
        }
        if config.verify {
            let verdict = match verify_success(task, scene, &initial, config.verification_mode, oracle) {
                Ok(v) => v,
                Err(e @ OracleError::Format { .. }) => {
                    out.error_log.push(ErrorRecord {
                        attempt,
                        class: ErrorClass::Interpretation,
                        kind: "FormatError".into(),
                        step_index: None,
                        message: e.to_string(),
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            if !verdict.success {
                let report = FailureReport {
                    step_index: plan.len() - 1,
                    class: ErrorClass::Grounding,
                    kind: GroundErrorKind::VerificationFailed.to_string(),
                    message: format!("the task was not achieved ({})", verdict.evidence.join("; ")),
                };
                out.error_log.push(ErrorRecord {
                    attempt,
                    class: report.class,
                    kind: report.kind.clone(),
                    step_index: None,
                    message: report.message.clone(),
                });
                next = Next::Ground(plan, report);
                continue;
            }
        }
        out.success = true;
        if config.skill_learning {
            let mut replay = |def: &SkillDef, with: &SkillLibrary| -> Result<(), String> {
                let mut probe = scene.clone();
                probe.restore(&start);
                probe.noise = NoiseConfig::default();
                let example = parse(&def.example).map_err(|e| e.to_string())?;
                interpret(&example, Env::new(), with, &mut probe)
                    .map_err(|(e, _)| format!("running the example failed: {e}"))?;
                if config.verify {
                    let v = verify_success(task, &probe, &initial, config.verification_mode, oracle)
                        .map_err(|e| e.to_string())?;
                    if !v.success {
                        return Err("the example does not accomplish the task".into());
                    }
                }
                Ok(())
            };
            if let Some(def) = reflect_skill(task, &plan, lib, oracle, &describe(scene), &mut replay)? {
                log::info!("learned {}", def.signature());
                out.skill_added = Some(def.name.clone());
                lib.insert(def).expect("checked before acceptance");
            }
        }
        break;
    }
    Ok(out)
}

/// Explore a loaded scene starting from `lib`. `on_task` sees every
/// outcome together with the scene right after the task.
pub fn explore_scene(
    config: &ExplorationConfig,
    scene: Scene,
    lib: SkillLibrary,
    oracle: &Oracle,
    on_task: &mut dyn FnMut(&TaskOutcome, &Scene),
) -> Result<ExplorationRun, ExplorerError> {
    if config.num_retries == 0 {
        return Err(ExplorerError::Config("num_retries must be at least 1".into()));
    }
    if config.max_tasks == 0 {
        return Err(ExplorerError::Config("max_tasks must be at least 1".into()));
    }
    config.noise.validate().map_err(|e| ExplorerError::Config(e.to_string()))?;
    let began = Instant::now();
    let mut scene = scene.with_seed(config.seed).with_noise(config.noise);
    let mut lib = lib;
    let mut report = ExplorationReport {
        scenario: scene.scenario.clone(),
        seed: config.seed,
        backend: oracle.backend_name().to_string(),
        scene_description: String::new(),
        rejected_tasks: Vec::new(),
        outcomes: Vec::new(),
        library: lib.clone(),
        aborted: None,
    };
    let mut timings = Timings::default();
    let finish = |mut report: ExplorationReport, lib: SkillLibrary, mut timings: Timings, scene, err: Option<OracleError>| {
        report.library = lib;
        report.aborted = err.map(|e| e.to_string());
        timings.total_ms = began.elapsed().as_secs_f64() * 1000.0;
        ExplorationRun { report, timings, scene }
    };
    let tasks = match understand_scene(&scene, oracle).and_then(|d| {
        report.scene_description = d.text.clone();
        generate_tasks(&d, oracle, config.max_tasks)
    }) {
        Ok((tasks, rejected)) => {
            report.rejected_tasks = rejected;
            tasks
        }
        Err(e) => return Ok(finish(report, lib, timings, scene, Some(e))),
    };
    for task in &tasks {
        let t0 = Instant::now();
        scene.reset_for_task();
        match explore_task(task, config, &mut scene, &mut lib, oracle) {
            Ok(outcome) => {
                timings.per_task_ms.push(t0.elapsed().as_secs_f64() * 1000.0);
                on_task(&outcome, &scene);
                report.outcomes.push(outcome);
            }
            Err(e) => return Ok(finish(report, lib, timings, scene, Some(e))),
        }
    }
    Ok(finish(report, lib, timings, scene, None))
}

/// Load a scenario by built-in name or path and explore it from an empty
/// library.
pub fn run_exploration(config: &ExplorationConfig, scenario: &str, oracle: &Oracle) -> Result<ExplorationRun, ExplorerError> {
    let scene = load_named(scenario).map_err(|e| ExplorerError::Config(e.to_string()))?;
    explore_scene(config, scene, SkillLibrary::new(), oracle, &mut |_, _| {})
}
