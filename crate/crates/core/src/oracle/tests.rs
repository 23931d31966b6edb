use std::sync::atomic::{AtomicUsize, Ordering};

use serde_json::json;

use super::*;
use crate::task::PlanStep;
use crate::sim::scenario::{builtin_names, load_named};
use crate::sim::{describe, Scene};
use crate::skilldsl::{interpret, parse, validate, Env, InterpErrorKind, Mode};

fn scene(name: &str) -> Scene {
    load_named(name).unwrap()
}

fn ctx_for(scene: &Scene) -> Context {
    Context { observation: Some(describe(scene)), ..Default::default() }
}

fn rule() -> Oracle {
    Oracle::new(RuleBased::default())
}

fn blocks_lib() -> SkillLibrary {
    SkillLibrary::from_json_str(include_str!("../../fixtures/libraries/blocks_world.json")).unwrap()
}

#[test]
fn six_blocks_in_order() {
    let raw: String = (0..6).map(|i| format!("step {i}\n```json\n{{\"n\": {i}}}\n```\n")).collect();
    let b = extract_json_blocks(&raw).unwrap();
    assert_eq!(b, (0..6).map(|i| json!({"n": i})).collect::<Vec<_>>());
}

#[test]
fn prose_after_block_is_ignored() {
    let b = extract_json_blocks("Sure.\n```json\n[1, 2]\n```\nHope this helps { not json").unwrap();
    assert_eq!(b, vec![json!([1, 2])]);
}

#[test]
fn malformed_block_names_its_index() {
    let raw = "```json\n{\"a\": 1}\n```\n```json\n{\"b\": 2\n```";
    match extract_json_blocks(raw) {
        Err(OracleError::Format { block: Some(1), .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(extract_json_blocks("no blocks here"), Err(OracleError::Format { block: None, .. })));
    assert!(matches!(extract_json_blocks("```json\n{}"), Err(OracleError::Format { block: Some(0), .. })));
}

#[test]
fn planner_prompt_lists_learned_skills() {
    let s = scene("blocks_world");
    let mut ctx = ctx_for(&s);
    ctx.task = Some(TaskSpec::new("Create a Two-Block Stack", &["purple block", "blue block"], "stack"));
    let p = render_prompt(OracleRole::Planner, &ctx, &blocks_lib()).unwrap();
    assert!(p.contains("stack_blocks(block1, block2): Stack one block on top of another block."));
    assert!(p.contains("movep(position)"));
    assert_eq!(p, render_prompt(OracleRole::Planner, &ctx, &blocks_lib()).unwrap());
}

#[test]
fn task_generator_prompt_names_the_keys() {
    let p = render_prompt(OracleRole::TaskGenerator, &ctx_for(&scene("blocks_world")), &SkillLibrary::new()).unwrap();
    for key in ["\"Task Name\"", "\"Objects\"", "\"Task Description\""] {
        assert!(p.contains(key), "{key}");
    }
}

#[test]
fn missing_context_is_reported() {
    let err = render_prompt(OracleRole::Planner, &Context::default(), &SkillLibrary::new()).unwrap_err();
    assert_eq!(err, OracleError::MissingContextField { role: OracleRole::Planner, field: "task" });
    assert!(render_prompt(OracleRole::Controller, &Context::default(), &SkillLibrary::new()).is_err());
}

fn mentions(text: &str, word: &str) -> bool {
    let boundary = |c: Option<char>| c.map_or(true, |c| !c.is_alphanumeric() && c != '_');
    text.match_indices(word).any(|(i, _)| boundary(text[..i].chars().last()) && boundary(text[i + word.len()..].chars().next()))
}

#[test]
fn fresh_prompts_carry_nothing_from_other_scenes() {
    let all: Vec<(String, Vec<String>)> =
        builtin_names().map(|n| (n.to_string(), scene(n).objects.keys().cloned().collect())).collect();
    for (name, own) in &all {
        let s = scene(name);
        let mut ctx = ctx_for(&s);
        ctx.initial_observation = ctx.observation.clone();
        ctx.task = Some(TaskSpec::new("Task", &[], "Do something."));
        ctx.plan = Some(Plan::new(vec![PlanStep::new("step", "", "go_home()")]));
        ctx.query = Some("What do you see?".into());
        ctx.history = vec![Turn::new(Speaker::User, "Help me.", Json::Null)];
        for role in OracleRole::ALL {
            let p = render_prompt(role, &ctx, &SkillLibrary::new()).unwrap().to_lowercase();
            for (other, names) in &all {
                for n in names.iter().filter(|n| !own.contains(n)) {
                    assert!(!mentions(&p, &n.to_lowercase()), "{role} prompt for {name} mentions '{n}' from {other}");
                }
            }
        }
    }
}

#[test]
fn rule_tasks_for_blocks_world() {
    let s = scene("blocks_world");
    let req = OracleRequest::new(OracleRole::TaskGenerator, ctx_for(&s), &SkillLibrary::new());
    let resp = rule().call(&req).unwrap();
    let tasks: Vec<TaskSpec> = decode_blocks(&resp).unwrap();
    let names: Vec<&str> = tasks.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "Pick and Place the Purple Block",
            "Create a Two-Block Stack",
            "Create a Three-Block Stack",
            "Color Match and Stack",
            "Block Pyramid Stacking",
            "Complex Pyramid Construction"
        ]
    );
    assert_eq!(tasks[0].objects.len(), 1);
    assert_eq!(tasks[5].objects.len(), 6);
}

#[test]
fn unsupported_scene_has_no_tasks() {
    let req = OracleRequest::new(OracleRole::TaskGenerator, ctx_for(&scene("empty_table")), &SkillLibrary::new());
    assert!(matches!(rule().call(&req), Err(OracleError::UnsupportedScenario(_))));
}

fn plan_for(oracle: &Oracle, task: TaskSpec, lib: &SkillLibrary, s: &Scene) -> Plan {
    let mut ctx = ctx_for(s);
    ctx.task = Some(task);
    ctx.attempt = Some(0);
    let resp = oracle.call(&OracleRequest::new(OracleRole::Planner, ctx, lib)).unwrap();
    Plan::new(decode_blocks(&resp).unwrap())
}

fn two_stack() -> TaskSpec {
    TaskSpec::new("Create a Two-Block Stack", &["purple block", "blue block"], "Stack the purple block on the blue block.")
}

#[test]
fn injected_symbol_fault_fails_validation() {
    let s = scene("blocks_world");
    let faults = FaultConfig { symbol_faults: vec!["Create a Two-Block Stack".into()], ..Default::default() };
    let plan = plan_for(&Oracle::new(RuleBased::new(faults)), two_stack(), &SkillLibrary::new(), &s);
    let mut bound = Default::default();
    let mut failures = Vec::new();
    for (i, step) in plan.steps.iter().enumerate() {
        if let Err(e) = crate::skilldsl::validate_with(&parse(&step.code).unwrap(), &SkillLibrary::new(), &mut bound, Mode::Action) {
            failures.push((i, e.kind));
        }
    }
    assert_eq!(failures, vec![(1, InterpErrorKind::UndefinedSymbol)]);
}

#[test]
fn primitive_plan_for_two_stack_is_long() {
    let s = scene("blocks_world");
    let plan = plan_for(&rule(), two_stack(), &SkillLibrary::new(), &s);
    assert!(plan.len() >= 8, "{}", plan.len());
    let with_skills = plan_for(&rule(), two_stack(), &blocks_lib(), &s);
    assert_eq!(with_skills.len(), 1);
    assert_eq!(with_skills.steps[0].code, "stack_blocks('purple block', 'blue block')");
}

#[test]
fn vision_verifier_confirms_a_stack() {
    let mut s = scene("blocks_world");
    let lib = blocks_lib();
    let before = describe(&s);
    let p = parse("stack_blocks('purple block', 'blue block')").unwrap();
    interpret(&p, Env::new(), &lib, &mut s).unwrap();
    let mut ctx = ctx_for(&s);
    ctx.initial_observation = Some(before);
    ctx.task = Some(two_stack());
    let resp = rule().call(&OracleRequest::new(OracleRole::VisionVerifier, ctx, &lib)).unwrap();
    assert_eq!(resp.blocks[0]["Satisfied"], json!(true));
    assert!(describe(&s).holds(&crate::sim::Relation::new("purple block", crate::sim::RelationKind::On, Some("blue block"))));
}

#[test]
fn code_verifier_is_read_only_and_agrees() {
    let mut s = scene("blocks_world");
    let lib = blocks_lib();
    let mut ctx = ctx_for(&s);
    ctx.task = Some(two_stack());
    let resp = rule().call(&OracleRequest::new(OracleRole::CodeVerifierGen, ctx, &lib)).unwrap();
    let code = parse(resp.blocks[0]["Code"].as_str().unwrap()).unwrap();
    let mut bound = Default::default();
    crate::skilldsl::validate_with(&code, &SkillLibrary::new(), &mut bound, Mode::ReadOnly).unwrap();
    let run = |s: &mut Scene| interpret(&code, Env::new(), &SkillLibrary::new(), s).map(|t| t.all_checks_pass()).unwrap_or(false);
    assert!(!run(&mut s.clone()));
    interpret(&parse("stack_blocks('purple block', 'blue block')").unwrap(), Env::new(), &lib, &mut s).unwrap();
    assert!(run(&mut s));
}

#[test]
fn every_rule_reply_parses() {
    let s = scene("cup_drawer");
    let lib = SkillLibrary::new();
    let task = TaskSpec::new("Open the Drawer", &["drawer"], "Open it.");
    let plan = plan_for(&rule(), task.clone(), &lib, &s);
    let mut ctx = ctx_for(&s);
    ctx.initial_observation = ctx.observation.clone();
    ctx.task = Some(task);
    ctx.plan = Some(plan);
    ctx.history = vec![Turn::new(Speaker::User, "I can't find my cup.", Json::Null)];
    for role in OracleRole::ALL {
        let resp = rule().call(&OracleRequest::new(role, ctx.clone(), &lib)).unwrap();
        assert!(!resp.blocks.is_empty(), "{role}");
    }
}

#[test]
fn reflector_generalises_and_declines() {
    let s = scene("blocks_world");
    let mut ctx = ctx_for(&s);
    ctx.task = Some(two_stack());
    ctx.plan = Some(plan_for(&rule(), two_stack(), &blocks_lib(), &s));
    let lib = blocks_lib().prune(&["build_pyramid".into(), "create_three_block_stack".into(), "stack_blocks".into()]).unwrap();
    let resp = rule().call(&OracleRequest::new(OracleRole::Reflector, ctx.clone(), &lib)).unwrap();
    assert_eq!(resp.blocks[0]["Function name"], json!("stack_blocks(block1, block2)"));
    assert_eq!(resp.blocks[0]["Example"], json!("stack_blocks('purple block', 'blue block')"));
    let resp = rule().call(&OracleRequest::new(OracleRole::Reflector, ctx, &blocks_lib())).unwrap();
    assert!(resp.blocks[0].get("Decline").is_some());
}

#[test]
fn bundled_templates_validate() {
    let t = rule::templates();
    assert_eq!(t.len(), 9);
    for s in t.iter() {
        let related: Vec<String> = s.body.callees_in_order();
        assert_eq!(s.related, related, "{}", s.name);
        validate(&s.body, t, &s.params).unwrap();
    }
}

#[test]
fn preconditions_follow_postconditions() {
    let lib = rule::templates();
    let task = TaskSpec::new("Retrieve the Cup from the Drawer", &["cup", "drawer"], "Get the cup.");
    let plan = plan_for(&rule(), task.clone(), lib, &scene("cup_drawer"));
    assert_eq!(plan.len(), 3);
    assert_eq!(rule::preconditions(&task, &plan), ["none", "the drawer is open", "the cup is on the table"]);
}

#[test]
fn observer_answers() {
    let mut s = scene("cup_drawer");
    let closed = rule::observe("What is inside the drawer?", &describe(&s));
    assert!(closed["answer"].as_str().unwrap().contains("impossible to determine"));
    interpret(&parse("open_drawer('drawer')").unwrap(), Env::new(), rule::templates(), &mut s).unwrap();
    let open = rule::observe("What is inside the drawer?", &describe(&s));
    assert_eq!(open["answer"], json!("The cup is in the drawer."));
    let absent = rule::observe("Where is the teapot?", &describe(&s));
    assert!(absent["answer"].as_str().unwrap().contains("not visible"));
    assert!(!absent["observed_objs"].as_array().unwrap().contains(&json!("teapot")));
}

#[test]
fn controller_asks_before_acting() {
    let h = vec![Turn::new(Speaker::User, "I can't find my cup.", Json::Null)];
    let a = rule::control(&h);
    assert_eq!(a["Action"], json!("observe()"));
    assert_eq!(a["Action input"]["query"], json!("Where is the cup?"));
}

#[test]
fn replay_hits_and_misses() {
    let s = scene("blocks_world");
    let recorder = rule().recording();
    let req = OracleRequest::new(OracleRole::SceneDescriber, ctx_for(&s), &SkillLibrary::new());
    let live = recorder.call(&req).unwrap();
    let t = recorder.transcript().unwrap();
    assert_eq!(t.len(), 1);
    let back = Transcript::from_jsonl(&t.to_jsonl()).unwrap();
    assert_eq!(back, t);
    let replay = Oracle::new(ReplayBackend::new(&back));
    assert_eq!(replay.call(&req).unwrap().raw, live.raw);
    let other = OracleRequest::new(OracleRole::TaskGenerator, ctx_for(&s), &SkillLibrary::new());
    assert_eq!(replay.call(&other).unwrap_err(), OracleError::ReplayMiss(other.digest()));
}

#[test]
fn transcript_keeps_one_entry_per_digest() {
    let mut t = Transcript::default();
    assert!(t.push("d".into(), OracleRole::Planner, "a".into()));
    assert!(!t.push("d".into(), OracleRole::Planner, "b".into()));
    assert_eq!(t.len(), 1);
    assert!(Transcript::from_jsonl(&format!("{}{}", t.to_jsonl(), t.to_jsonl())).is_err());
}

struct Flaky {
    calls: AtomicUsize,
    bad: usize,
}

impl Backend for Flaky {
    fn name(&self) -> &'static str {
        "flaky"
    }
    fn complete(&self, req: &OracleRequest, _prompt: &str) -> Result<String, OracleError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.bad {
            assert_eq!(req.context.note.is_some(), n > 0);
            Ok("I think the answer is {".into())
        } else {
            assert!(req.context.note.is_some());
            Ok("```json\n{\"ok\": true}\n```".into())
        }
    }
}

#[test]
fn one_reask_on_format_error() {
    let req = OracleRequest::new(OracleRole::Planner, Context { task: Some(two_stack()), ..Default::default() }, &SkillLibrary::new());
    let once = Oracle::new(Flaky { calls: AtomicUsize::new(0), bad: 1 });
    assert_eq!(once.call(&req).unwrap().blocks, vec![json!({"ok": true})]);
    let twice = Oracle::new(Flaky { calls: AtomicUsize::new(0), bad: 2 });
    assert!(matches!(twice.call(&req), Err(OracleError::Format { .. })));
}

#[test]
fn digest_is_stable_and_sensitive() {
    let s = scene("blocks_world");
    let a = OracleRequest::new(OracleRole::Planner, ctx_for(&s), &SkillLibrary::new());
    assert_eq!(a.digest(), a.clone().digest());
    assert_ne!(a.digest(), OracleRequest::new(OracleRole::Reflector, ctx_for(&s), &SkillLibrary::new()).digest());
    assert_ne!(a.digest(), OracleRequest::new(OracleRole::Planner, ctx_for(&s), &blocks_lib()).digest());
}

#[test]
fn condition_sentences_compile() {
    use crate::sim::{Relation, RelationKind};
    use crate::task::parse_condition;
    assert_eq!(parse_condition("the cup is on the table"), Some(Some(Relation::new("cup", RelationKind::On, Some("table")))));
    assert_eq!(parse_condition("The drawer is open."), Some(Some(Relation::new("drawer", RelationKind::Open, None))));
    assert_eq!(
        parse_condition("the paper rubbish is inside the rubbish bin"),
        Some(Some(Relation::new("paper rubbish", RelationKind::Inside, Some("rubbish bin"))))
    );
    assert_eq!(parse_condition("none"), Some(None));
    assert_eq!(parse_condition("top of drawer reachable"), None);
}
