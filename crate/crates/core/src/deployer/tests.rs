use proptest::prelude::*;

use super::*;
use crate::oracle::{rule, Backend, RuleBased};
use crate::sim::scenario::load_named;
use crate::sim::{NoiseConfig, RelationKind};

fn rule_oracle() -> Oracle {
    Oracle::new(RuleBased::default())
}

fn cup_task() -> TaskSpec {
    TaskSpec::new("Retrieve the Cup from the Drawer", &["cup", "drawer"], "Take the cup out of the drawer and put it on the table.")
}

fn cup_scene(q: f64, seed: u64) -> Scene {
    load_named("cup_drawer").unwrap().with_seed(seed).with_noise(NoiseConfig { step_fail_prob: q, ..Default::default() })
}

fn cup_plan(scene: &Scene) -> (Plan, Vec<Precondition>) {
    let lib = rule::templates();
    let o = rule_oracle();
    let plan = plan_task(&cup_task(), lib, &o, &describe(scene), 0).unwrap();
    let pre = generate_preconditions(&cup_task(), &plan, lib, &o).unwrap();
    (plan, pre)
}

fn run_cup(q: f64, seed: u64, budget: u32) -> (RunOutcome, EpisodeTrace) {
    let mut scene = cup_scene(q, seed);
    let (plan, pre) = cup_plan(&scene);
    let cfg = DeployConfig { budget, ..Default::default() };
    let mut trace = EpisodeTrace::default();
    let out = run_with_backtracking(&cup_task(), &plan, &pre, &mut scene, rule::templates(), &rule_oracle(), &cfg, &mut trace, &mut NoIo)
        .unwrap();
    (out, trace)
}

fn reverted_steps(trace: &EpisodeTrace) -> Vec<usize> {
    trace
        .kinds()
        .filter_map(|e| match e {
            TraceEvent::StepExecuted { step_index, reverted: true, .. } => Some(*step_index),
            _ => None,
        })
        .collect()
}

#[test]
fn preconditions_compile() {
    let (plan, pre) = cup_plan(&cup_scene(0.0, 0));
    assert_eq!(plan.len(), 3);
    assert_eq!(pre[0].compiled, None);
    assert_eq!(pre[1].compiled, Some(Relation::new("drawer", RelationKind::Open, None)));
    assert_eq!(pre[2].compiled, Some(Relation::new("cup", RelationKind::On, Some("table"))));
}

#[test]
fn backtrack_index_picks_latest_holding_step() {
    let v = [true, false, true, false, false];
    assert_eq!(backtrack_index(|j| v[j], 4), 2);
    assert_eq!(backtrack_index(|j| v[j], 1), 0);
    assert_eq!(backtrack_index(|_| false, 3), 0);
    assert_eq!(backtrack_index(|_| true, 3), 3);
}

#[test]
fn clean_run_needs_no_backtracking() {
    let (out, trace) = run_cup(0.0, 1, 5);
    assert!(out.success);
    assert_eq!(out.backtracks, 0);
    assert!(trace.backtracks().is_empty());
}

#[test]
fn revert_of_middle_step_resumes_there() {
    let (out, trace) = (0..200)
        .map(|seed| run_cup(0.2, seed, 5))
        .find(|(_, t)| reverted_steps(t) == [1])
        .expect("some seed reverts only the middle step");
    assert!(out.success);
    assert_eq!(trace.backtracks(), [(2, 1)]);
}

#[test]
fn revert_of_last_step_is_caught_by_final_check() {
    let (out, trace) = (0..200).map(|seed| run_cup(0.2, seed, 5)).find(|(_, t)| reverted_steps(t) == [2]).unwrap();
    assert!(out.success);
    assert_eq!(trace.backtracks(), [(2, 2)]);
}

#[test]
fn revert_of_first_step_restarts() {
    let (_, trace) = (0..200).map(|seed| run_cup(0.2, seed, 5)).find(|(_, t)| reverted_steps(t) == [0]).unwrap();
    assert_eq!(trace.backtracks(), [(1, 0)]);
}

#[test]
fn zero_budget_fails_on_first_fault() {
    let (out, trace) = run_cup(1.0, 0, 0);
    assert!(!out.success);
    assert!(trace.backtracks().is_empty());
    assert!(out.error.is_some());
}

#[test]
fn open_loop_stops_at_the_first_error() {
    let mut scene = cup_scene(1.0, 0);
    let (plan, _) = cup_plan(&scene);
    let mut trace = EpisodeTrace::default();
    let out = run_open_loop(&cup_task(), &plan, &mut scene, rule::templates(), &rule_oracle(), &DeployConfig::default(), &mut trace, &mut NoIo)
        .unwrap();
    assert!(!out.success);
    // The drawer never opened, so the next step cannot see the cup.
    assert_eq!(reverted_steps(&trace), [0]);
    assert!(out.error.unwrap().contains("cup"));
}

#[test]
fn resumed_step_sees_current_positions() {
    // Step 1 reads the cup's position, so a stale env would place from the
    // wrong spot after the drawer is reopened.
    let (out, _) = (0..200).map(|seed| run_cup(0.3, seed, 5)).find(|(_, t)| reverted_steps(t).starts_with(&[0])).unwrap();
    assert!(out.success);
}

struct Collect(Vec<TimedEvent>);

impl EpisodeIo for Collect {
    fn emit(&mut self, e: &TimedEvent) {
        self.0.push(e.clone());
    }
}

#[test]
fn stacking_episode_finishes() {
    let mut scene = load_named("blocks_world").unwrap();
    let mut io = Collect(Vec::new());
    let trace =
        run_deployment("put the red block on the blue block", &mut scene, rule::templates(), &rule_oracle(), &DeployConfig::default(), &mut io);
    assert_eq!(trace.finished().map(|f| f.0), Some(true), "{trace:?}");
    assert!(describe(&scene).holds(&Relation::new("red block", RelationKind::On, Some("blue block"))));
    assert_eq!(io.0, trace.events);
    assert!(trace.events.iter().enumerate().all(|(i, e)| e.seq == i as u64));
    let kinds: Vec<&str> = trace
        .kinds()
        .map(|e| match e {
            TraceEvent::ControllerTurn { .. } => "turn",
            TraceEvent::PlanReady { .. } => "plan",
            TraceEvent::PreconditionChecked { .. } => "check",
            TraceEvent::StepExecuted { .. } => "step",
            TraceEvent::Backtracked { .. } => "back",
            TraceEvent::TaskFinished { .. } => "task",
            TraceEvent::Finished { .. } => "end",
        })
        .collect();
    assert!(kinds.contains(&"plan") && kinds.contains(&"step") && kinds.contains(&"task"));
}

#[test]
fn slipping_episode_backtracks() {
    let found = (0..100).find_map(|seed| {
        let mut scene = load_named("blocks_world")
            .unwrap()
            .with_seed(seed)
            .with_noise(NoiseConfig { grasp_slip_prob: 0.5, ..Default::default() });
        let t = run_deployment("put the red block on the blue block", &mut scene, rule::templates(), &rule_oracle(), &DeployConfig::default(), &mut NoIo);
        (!t.backtracks().is_empty()).then_some(t)
    });
    let t = found.expect("a slip somewhere in 100 seeds");
    assert!(t.finished().is_some());
}

#[test]
fn missing_cup_is_found() {
    let mut scene = load_named("cup_drawer").unwrap();
    let trace = run_deployment("I can't find my cup.", &mut scene, rule::templates(), &rule_oracle(), &DeployConfig::default(), &mut NoIo);
    assert_eq!(trace.finished().map(|f| f.0), Some(true), "{trace:?}");
    let first_action = trace.kinds().find_map(|e| match e {
        TraceEvent::ControllerTurn { speaker: Speaker::Controller, data, .. } => data["Action"].as_str().map(String::from),
        _ => None,
    });
    assert_eq!(first_action.as_deref(), Some("observe()"));
}

struct Chatty;

impl Backend for Chatty {
    fn name(&self) -> &'static str {
        "chatty"
    }
    fn complete(&self, req: &OracleRequest, _: &str) -> Result<String, OracleError> {
        if req.role == OracleRole::VisionVerifier {
            return Ok("```json\n{\"answer\": \"Blocks.\", \"observed_objs\": []}\n```".into());
        }
        Ok("```json\n{\"Thought\": \"look\", \"Action\": \"observe()\", \"Action input\": {\"query\": \"What is on the table?\"}}\n```".into())
    }
}

#[test]
fn turn_cap_ends_the_episode() {
    let mut scene = load_named("blocks_world").unwrap();
    let cfg = DeployConfig { turn_cap: 3, ..Default::default() };
    let trace = run_deployment("hello", &mut scene, rule::templates(), &Oracle::new(Chatty), &cfg, &mut NoIo);
    let (ok, msg) = trace.finished().unwrap();
    assert!(!ok);
    assert!(msg.contains("3 controller turns"));
}

#[test]
fn decision_round_trips_through_reply() {
    let d = ControllerDecision { thought: "t".into(), action: ControllerAction::ExecuteTask { task: cup_task() } };
    assert_eq!(decode_decision(&d.to_reply()).unwrap(), d);
    assert!(decode_decision(&json!({"Action": "dance()"})).is_err());
}

#[test]
fn events_serialize_with_tag() {
    let e = TimedEvent { seq: 3, t_ms: 1.5, event: TraceEvent::Backtracked { from: 2, to: 1 } };
    let v = serde_json::to_value(&e).unwrap();
    assert_eq!(v, json!({"seq": 3, "t_ms": 1.5, "event": "backtracked", "from": 2, "to": 1}));
    assert_eq!(serde_json::from_value::<TimedEvent>(v).unwrap(), e);
}

#[test]
fn replay_reaches_the_same_state() {
    let seed = (0..200).find(|&s| reverted_steps(&run_cup(0.3, s, 5).1).len() >= 2).unwrap();
    let mut live = cup_scene(0.3, seed);
    let (plan, pre) = cup_plan(&live);
    let mut trace = EpisodeTrace::default();
    let cfg = DeployConfig::default();
    run_with_backtracking(&cup_task(), &plan, &pre, &mut live, rule::templates(), &rule_oracle(), &cfg, &mut trace, &mut NoIo).unwrap();
    let mut replayed = cup_scene(0.3, seed);
    replay_episode(&trace, &mut replayed).unwrap();
    assert_eq!(replayed.state(), live.state());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backtracks_never_exceed_budget(seed in 0u64..10_000, budget in 0u32..6, q in 0.0f64..0.9) {
        let (out, trace) = run_cup(q, seed, budget);
        prop_assert!(out.backtracks <= budget);
        prop_assert_eq!(trace.backtracks().len() as u32, out.backtracks);
    }

    #[test]
    fn backtrack_index_is_the_brute_force_max(v in prop::collection::vec(any::<bool>(), 1..12), k in 0usize..12) {
        let failed = k % v.len();
        let expect = (1..=failed).filter(|&j| v[j]).max().unwrap_or(0);
        prop_assert_eq!(backtrack_index(|j| v[j], failed), expect);
    }
}
