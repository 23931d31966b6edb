//! Serving instructions after exploration: a controller that alternates
//! between looking and acting, and a step executor that checks each step's
//! precondition and backs up to the nearest step whose precondition holds.

#[cfg(test)]
mod tests;

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::explorer::{plan_task, verify_success, VerificationMode};
use crate::oracle::{decode_blocks, Context, Oracle, OracleError, OracleRequest, OracleRole, Speaker, Turn};
use crate::sim::{describe, Relation, Scene, SceneState};
use crate::skilldsl::{interpret_in, parse, replay_trace, Env, PrimitiveCall, Program, SkillLibrary, Stmt};
use crate::task::{parse_condition, Plan, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControllerAction {
    Observe { query: String },
    ExecuteTask { task: TaskSpec },
    Finish { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerDecision {
    pub thought: String,
    #[serde(flatten)]
    pub action: ControllerAction,
}

impl ControllerDecision {
    /// Back to the controller's own reply schema.
    pub fn to_reply(&self) -> Json {
        let (name, input) = match &self.action {
            ControllerAction::Observe { query } => ("observe()", json!({"query": query})),
            ControllerAction::ExecuteTask { task } => ("execute_task()", serde_json::to_value(task).expect("task")),
            ControllerAction::Finish { message } => ("finish()", json!({"message": message})),
        };
        json!({"Thought": self.thought, "Action": name, "Action input": input})
    }
}

fn decode_decision(block: &Json) -> Result<ControllerDecision, String> {
    let thought = block["Thought"].as_str().unwrap_or_default().to_string();
    let input = &block["Action input"];
    let action = match block["Action"].as_str().map(|a| a.trim().trim_end_matches("()")) {
        Some("observe") => ControllerAction::Observe {
            query: input["query"].as_str().ok_or("observe() needs \"query\"")?.to_string(),
        },
        Some("execute_task") => {
            let task: TaskSpec = serde_json::from_value(input.clone()).map_err(|e| format!("bad task: {e}"))?;
            ControllerAction::ExecuteTask { task }
        }
        Some("finish") => ControllerAction::Finish { message: input["message"].as_str().unwrap_or_default().to_string() },
        other => return Err(format!("unknown action {other:?}")),
    };
    Ok(ControllerDecision { thought, action })
}

pub fn controller_step(history: &[Turn], lib: &SkillLibrary, oracle: &Oracle) -> Result<ControllerDecision, OracleError> {
    let ctx = Context { history: history.to_vec(), ..Default::default() };
    oracle.call_checked(&OracleRequest::new(OracleRole::Controller, ctx, lib), |r| {
        decode_decision(r.blocks.first().ok_or("expected one action block")?)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub answer: String,
    pub observed_objs: Vec<String>,
}

/// Answer a question about the current scene. Objects the observer names
/// but that are not actually in view are dropped.
pub fn observe(query: &str, scene: &Scene, oracle: &Oracle) -> Result<Observation, OracleError> {
    let desc = describe(scene);
    let ctx = Context { observation: Some(desc.clone()), query: Some(query.to_string()), ..Default::default() };
    let mut obs: Observation = oracle.call_checked(&OracleRequest::new(OracleRole::VisionVerifier, ctx, &SkillLibrary::new()), |r| {
        decode_blocks::<Observation>(r)?.into_iter().next().ok_or_else(|| "expected one answer block".to_string())
    })?;
    obs.observed_objs.retain(|o| desc.has_object(o));
    Ok(obs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precondition {
    pub step_index: usize,
    pub text: String,
    /// `None` means the condition always holds.
    pub compiled: Option<Relation>,
}

impl Precondition {
    pub fn vacuous(step_index: usize) -> Self {
        Precondition { step_index, text: "none".into(), compiled: None }
    }
}

/// One precondition per step. Sentences that do not compile are re-asked
/// once and then treated as always true.
pub fn generate_preconditions(
    task: &TaskSpec,
    plan: &Plan,
    lib: &SkillLibrary,
    oracle: &Oracle,
) -> Result<Vec<Precondition>, OracleError> {
    let mut ctx = Context { task: Some(task.clone()), plan: Some(plan.clone()), ..Default::default() };
    let ask = |ctx: &Context| {
        oracle.call_checked(&OracleRequest::new(OracleRole::PreconditionGen, ctx.clone(), lib), |r| {
            let texts: Vec<String> = r
                .blocks
                .first()
                .and_then(|b| serde_json::from_value(b["Preconditions"].clone()).ok())
                .ok_or("expected {\"Preconditions\": [..]}")?;
            if texts.len() != plan.len() {
                return Err(format!("expected {} preconditions, got {}", plan.len(), texts.len()));
            }
            Ok(texts)
        })
    };
    let mut texts = ask(&ctx)?;
    let bad: Vec<usize> = (1..texts.len()).filter(|&i| parse_condition(&texts[i]).is_none()).collect();
    if !bad.is_empty() {
        ctx.note = Some(format!(
            "Preconditions {bad:?} could not be understood. Write each as a short sentence such as 'the X is on the Y' or 'the X is open'."
        ));
        texts = ask(&ctx)?;
    }
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| match (i, parse_condition(&text)) {
            (0, _) => Precondition { step_index: 0, text, compiled: None },
            (_, Some(compiled)) => Precondition { step_index: i, text, compiled },
            (_, None) => {
                log::warn!("precondition {i} '{text}' is not understood; treating it as always true");
                Precondition { step_index: i, text, compiled: None }
            }
        })
        .collect())
}

/// Where precondition verdicts come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSource {
    /// Relation lookup in the simulator's own description.
    #[default]
    GroundTruth,
    /// Ask the vision verifier about the sentence.
    Oracle,
}

pub fn verify_precondition(pre: &Precondition, scene: &Scene, source: CheckSource, oracle: &Oracle) -> bool {
    let Some(rel) = &pre.compiled else { return true };
    match source {
        CheckSource::GroundTruth => describe(scene).holds(rel),
        CheckSource::Oracle => {
            let ctx = Context { observation: Some(describe(scene)), condition: Some(pre.text.clone()), ..Default::default() };
            oracle
                .call_checked(&OracleRequest::new(OracleRole::VisionVerifier, ctx, &SkillLibrary::new()), |r| {
                    r.blocks.first().and_then(|b| b["Satisfied"].as_bool()).ok_or_else(|| "expected \"Satisfied\"".to_string())
                })
                .unwrap_or_else(|e| {
                    log::warn!("precondition check failed: {e}");
                    false
                })
        }
    }
}

/// Largest `j <= failed` whose verdict holds, else 0.
pub fn backtrack_index(holds: impl Fn(usize) -> bool, failed: usize) -> usize {
    (1..=failed).rev().find(|&j| holds(j)).unwrap_or(0)
}

pub fn backtrack_target(
    preconds: &[Precondition],
    failed: usize,
    scene: &Scene,
    source: CheckSource,
    oracle: &Oracle,
) -> usize {
    backtrack_index(|j| verify_precondition(&preconds[j], scene, source, oracle), failed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    ControllerTurn {
        speaker: Speaker,
        text: String,
        #[serde(default, skip_serializing_if = "Json::is_null")]
        data: Json,
    },
    PlanReady {
        task: TaskSpec,
        steps: Vec<String>,
        preconditions: Vec<String>,
    },
    PreconditionChecked {
        step_index: usize,
        text: String,
        verdict: bool,
    },
    StepExecuted {
        step_index: usize,
        name: String,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        /// An exogenous fault undid the step after it ran.
        #[serde(default)]
        reverted: bool,
        calls: Vec<PrimitiveCall>,
    },
    Backtracked {
        from: usize,
        to: usize,
    },
    TaskFinished {
        task: String,
        success: bool,
    },
    Finished {
        success: bool,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub seq: u64,
    /// Milliseconds since the episode started.
    pub t_ms: f64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Receives events as they happen and supplies user turns mid-episode.
pub trait EpisodeIo {
    fn emit(&mut self, event: &TimedEvent);
    fn poll_user(&mut self) -> Option<String> {
        None
    }
    /// Called after every executed step, reverted or not.
    fn after_step(&mut self, _step_index: usize, _scene: &Scene) {}
}

/// Discards events.
pub struct NoIo;

impl EpisodeIo for NoIo {
    fn emit(&mut self, _: &TimedEvent) {}
}

pub struct EpisodeTrace {
    pub events: Vec<TimedEvent>,
    started: Instant,
}

impl Default for EpisodeTrace {
    fn default() -> Self {
        EpisodeTrace { events: Vec::new(), started: Instant::now() }
    }
}

impl EpisodeTrace {
    pub fn push(&mut self, event: TraceEvent, io: &mut dyn EpisodeIo) {
        let e = TimedEvent { seq: self.events.len() as u64, t_ms: self.started.elapsed().as_secs_f64() * 1000.0, event };
        io.emit(&e);
        self.events.push(e);
    }

    pub fn kinds(&self) -> impl DoubleEndedIterator<Item = &TraceEvent> {
        self.events.iter().map(|e| &e.event)
    }

    pub fn backtracks(&self) -> Vec<(usize, usize)> {
        self.kinds()
            .filter_map(|e| match e {
                TraceEvent::Backtracked { from, to } => Some((*from, *to)),
                _ => None,
            })
            .collect()
    }

    pub fn finished(&self) -> Option<(bool, &str)> {
        self.kinds().rev().find_map(|e| match e {
            TraceEvent::Finished { success, message } => Some((*success, message.as_str())),
            _ => None,
        })
    }

    /// JSON-lines, one event per line.
    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).expect("event serializes") + "\n").collect()
    }
}

impl std::fmt::Debug for EpisodeTrace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.kinds()).finish()
    }
}

fn default_budget() -> u32 {
    5
}
fn default_turn_cap() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployConfig {
    /// Backtracks allowed per task.
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default = "default_turn_cap")]
    pub turn_cap: usize,
    #[serde(default)]
    pub checks: CheckSource,
    #[serde(default)]
    pub verification_mode: VerificationMode,
}

impl Default for DeployConfig {
    fn default() -> Self {
        DeployConfig {
            budget: default_budget(),
            turn_cap: default_turn_cap(),
            checks: CheckSource::default(),
            verification_mode: VerificationMode::default(),
        }
    }
}

/// Re-read every value the first `upto` steps assigned, against the current
/// scene, so a resumed step sees fresh positions rather than stale ones.
fn rebuild_env(plan: &Plan, upto: usize, lib: &SkillLibrary, scene: &mut Scene) -> Env {
    let mut env = Env::new();
    for step in &plan.steps[..upto] {
        let Ok(p) = parse(&step.code) else { continue };
        let lets: Vec<Stmt> = p.statements.into_iter().filter(|s| matches!(s, Stmt::Let(..))).collect();
        for s in lets {
            let _ = interpret_in(&Program::new(vec![s]), &mut env, lib, scene);
        }
    }
    env
}

/// Run one step in `env`. On success the scene may draw an exogenous fault
/// that puts it back the way it was.
fn run_step(
    plan: &Plan,
    i: usize,
    env: &mut Env,
    lib: &SkillLibrary,
    scene: &mut Scene,
) -> (Result<(), String>, bool, Vec<PrimitiveCall>) {
    let before: SceneState = scene.state();
    let program = match parse(&plan.steps[i].code) {
        Ok(p) => p,
        Err(e) => return (Err(e.to_string()), false, Vec::new()),
    };
    let mut bound: BTreeSet<String> = env.keys().cloned().collect();
    if let Err(e) = crate::skilldsl::validate_with(&program, lib, &mut bound, crate::skilldsl::Mode::Action) {
        return (Err(e.to_string()), false, Vec::new());
    }
    match interpret_in(&program, env, lib, scene) {
        Ok(t) => {
            let reverted = scene.draw_step_fault();
            if reverted {
                scene.restore(&before);
            }
            (Ok(()), reverted, t.calls)
        }
        Err((e, t)) => (Err(e.to_string()), false, t.calls),
    }
}

/// Outcome of executing one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub success: bool,
    pub backtracks: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn final_check(
    task: &TaskSpec,
    scene: &Scene,
    initial: &crate::sim::SceneDescription,
    config: &DeployConfig,
    oracle: &Oracle,
) -> Result<bool, OracleError> {
    Ok(verify_success(task, scene, initial, config.verification_mode, oracle)?.success)
}

/// Execute with per-step precondition checks. Each failed check, failed
/// step or failed final verification backs up to the nearest step whose
/// precondition holds and costs one unit of `config.budget`.
#[allow(clippy::too_many_arguments)]
pub fn run_with_backtracking(
    task: &TaskSpec,
    plan: &Plan,
    preconds: &[Precondition],
    scene: &mut Scene,
    lib: &SkillLibrary,
    oracle: &Oracle,
    config: &DeployConfig,
    trace: &mut EpisodeTrace,
    io: &mut dyn EpisodeIo,
) -> Result<RunOutcome, OracleError> {
    assert_eq!(preconds.len(), plan.len(), "one precondition per step");
    let initial = describe(scene);
    let n = plan.len();
    let mut env = Env::new();
    let mut i = 0;
    let mut used = 0;
    let mut last_error;
    loop {
        let failed_at = if i == n {
            if final_check(task, scene, &initial, config, oracle)? {
                return Ok(RunOutcome { success: true, backtracks: used, error: None });
            }
            last_error = Some("the task is not achieved".to_string());
            n - 1
        } else {
            let pre = &preconds[i];
            let verdict = verify_precondition(pre, scene, config.checks, oracle);
            trace.push(TraceEvent::PreconditionChecked { step_index: i, text: pre.text.clone(), verdict }, io);
            if verdict {
                let (result, reverted, calls) = run_step(plan, i, &mut env, lib, scene);
                io.after_step(i, scene);
                trace.push(
                    TraceEvent::StepExecuted {
                        step_index: i,
                        name: plan.steps[i].name.clone(),
                        ok: result.is_ok(),
                        error: result.clone().err(),
                        reverted,
                        calls,
                    },
                    io,
                );
                match result {
                    Ok(()) => {
                        i += 1;
                        continue;
                    }
                    Err(e) => last_error = Some(e),
                }
            } else {
                last_error = Some(format!("precondition of step {i} does not hold: {}", pre.text));
            }
            i
        };
        if used >= config.budget {
            return Ok(RunOutcome { success: false, backtracks: used, error: last_error });
        }
        used += 1;
        let to = backtrack_target(preconds, failed_at, scene, config.checks, oracle);
        trace.push(TraceEvent::Backtracked { from: failed_at, to }, io);
        env = rebuild_env(plan, to, lib, scene);
        i = to;
    }
}

/// Baseline: run every step once, in order, with no checks. Stops at the
/// first step that errors.
pub fn run_open_loop(
    task: &TaskSpec,
    plan: &Plan,
    scene: &mut Scene,
    lib: &SkillLibrary,
    oracle: &Oracle,
    config: &DeployConfig,
    trace: &mut EpisodeTrace,
    io: &mut dyn EpisodeIo,
) -> Result<RunOutcome, OracleError> {
    let initial = describe(scene);
    let mut env = Env::new();
    for i in 0..plan.len() {
        let (result, reverted, calls) = run_step(plan, i, &mut env, lib, scene);
        io.after_step(i, scene);
        let error = result.err();
        trace.push(
            TraceEvent::StepExecuted {
                step_index: i,
                name: plan.steps[i].name.clone(),
                ok: error.is_none(),
                error: error.clone(),
                reverted,
                calls,
            },
            io,
        );
        if error.is_some() {
            return Ok(RunOutcome { success: false, backtracks: 0, error });
        }
    }
    let success = final_check(task, scene, &initial, config, oracle)?;
    Ok(RunOutcome { success, backtracks: 0, error: (!success).then(|| "the task is not achieved".to_string()) })
}

/// Plan a task, attach preconditions and execute it with backtracking.
pub fn execute_task(
    task: &TaskSpec,
    scene: &mut Scene,
    lib: &SkillLibrary,
    oracle: &Oracle,
    config: &DeployConfig,
    trace: &mut EpisodeTrace,
    io: &mut dyn EpisodeIo,
) -> Result<RunOutcome, OracleError> {
    let plan = plan_task(task, lib, oracle, &describe(scene), 0)?;
    let preconds = generate_preconditions(task, &plan, lib, oracle)?;
    trace.push(
        TraceEvent::PlanReady {
            task: task.clone(),
            steps: plan.steps.iter().map(|s| s.name.clone()).collect(),
            preconditions: preconds.iter().map(|p| p.text.clone()).collect(),
        },
        io,
    );
    run_with_backtracking(task, &plan, &preconds, scene, lib, oracle, config, trace, io)
}

/// Serve one instruction: alternate between controller decisions and the
/// observer or executor until the controller finishes or the turn cap is hit.
/// The episode succeeds when the controller finishes and no task it ran
/// failed.
pub fn run_deployment(
    instruction: &str,
    scene: &mut Scene,
    lib: &SkillLibrary,
    oracle: &Oracle,
    config: &DeployConfig,
    io: &mut dyn EpisodeIo,
) -> EpisodeTrace {
    let mut trace = EpisodeTrace::default();
    let mut history = vec![Turn::new(Speaker::User, instruction, Json::Null)];
    trace.push(TraceEvent::ControllerTurn { speaker: Speaker::User, text: instruction.into(), data: Json::Null }, io);
    let mut all_ok = true;
    let fail = |trace: &mut EpisodeTrace, io: &mut dyn EpisodeIo, message: String| {
        trace.push(TraceEvent::Finished { success: false, message }, io);
    };
    for _ in 0..config.turn_cap {
        while let Some(msg) = io.poll_user() {
            trace.push(TraceEvent::ControllerTurn { speaker: Speaker::User, text: msg.clone(), data: Json::Null }, io);
            history.push(Turn::new(Speaker::User, msg, Json::Null));
        }
        let decision = match controller_step(&history, lib, oracle) {
            Ok(d) => d,
            Err(e) => {
                fail(&mut trace, io, format!("controller error: {e}"));
                return trace;
            }
        };
        let reply = decision.to_reply();
        trace.push(
            TraceEvent::ControllerTurn { speaker: Speaker::Controller, text: decision.thought.clone(), data: reply.clone() },
            io,
        );
        history.push(Turn::new(Speaker::Controller, decision.thought.clone(), reply));
        match decision.action {
            ControllerAction::Observe { query } => match observe(&query, scene, oracle) {
                Ok(obs) => {
                    let data = json!({"query": query, "answer": obs.answer, "observed_objs": obs.observed_objs});
                    trace.push(TraceEvent::ControllerTurn { speaker: Speaker::Observer, text: obs.answer.clone(), data: data.clone() }, io);
                    history.push(Turn::new(Speaker::Observer, obs.answer, data));
                }
                Err(e) => {
                    fail(&mut trace, io, format!("observer error: {e}"));
                    return trace;
                }
            },
            ControllerAction::ExecuteTask { task } => {
                let outcome = match execute_task(&task, scene, lib, oracle, config, &mut trace, io) {
                    Ok(o) => o,
                    Err(e) => RunOutcome { success: false, backtracks: 0, error: Some(e.to_string()) },
                };
                all_ok &= outcome.success;
                trace.push(TraceEvent::TaskFinished { task: task.name.clone(), success: outcome.success }, io);
                let text = if outcome.success {
                    format!("'{}' succeeded.", task.name)
                } else {
                    format!("'{}' failed: {}", task.name, outcome.error.as_deref().unwrap_or("unknown error"))
                };
                let data = json!({"task": task, "success": outcome.success});
                trace.push(TraceEvent::ControllerTurn { speaker: Speaker::Executor, text: text.clone(), data: data.clone() }, io);
                history.push(Turn::new(Speaker::Executor, text, data));
            }
            ControllerAction::Finish { message } => {
                trace.push(TraceEvent::Finished { success: all_ok, message }, io);
                return trace;
            }
        }
    }
    fail(&mut trace, io, format!("no answer within {} controller turns", config.turn_cap));
    trace
}

/// Re-issue the recorded primitive calls of every executed step against a
/// scene with the same seed, redrawing the step-fault stream so that
/// reverts land where they did originally.
pub fn replay_episode(trace: &EpisodeTrace, scene: &mut Scene) -> Result<(), crate::sim::SimError> {
    for e in trace.kinds() {
        if let TraceEvent::StepExecuted { ok, reverted, calls, .. } = e {
            let before = scene.state();
            let t = crate::skilldsl::ExecutionTrace { calls: calls.clone(), checks: Vec::new() };
            replay_trace(&t, scene)?;
            if *ok {
                let drawn = scene.draw_step_fault();
                debug_assert_eq!(drawn, *reverted);
                if *reverted {
                    scene.restore(&before);
                }
            }
        }
    }
    Ok(())
}
