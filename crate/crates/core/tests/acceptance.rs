//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line; the process exits
//! non-zero when any criterion fails.

use std::time::{Duration, Instant};

use autoskill::deployer::{backtrack_index, run_deployment, DeployConfig, NoIo, TraceEvent};
use autoskill::explorer::{
    classify_error, execute_plan, failure_report, plan_task, repair_interpretation, run_exploration, verify_with_code,
    ExplorationConfig,
};
use autoskill::harness::{
    ablation_configs, backtracking_configs, default_deploy_library, record_exploration, replay_exploration, run_ablation,
    run_backtracking_bench, task_achieved, Variant, AVERAGE,
};
use autoskill::oracle::{rule, ErrorClass, FaultConfig, Oracle, RuleBased};
use autoskill::sim::scenario::load_named;
use autoskill::sim::{describe, NoiseConfig, Scene};
use autoskill::skilldsl::{parse, BinOp, Call, Expr, Program, SkillLibrary, Stmt};
use autoskill::task::{Plan, PlanStep, TaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rule_oracle() -> Oracle {
    Oracle::new(RuleBased::default())
}

fn blocks_lib() -> SkillLibrary {
    SkillLibrary::from_json_str(include_str!("../fixtures/libraries/blocks_world.json")).unwrap()
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

/// Noise-free exploration of blocks_world on ten seeds.
fn exploration_on_ten_seeds() -> Outcome {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut min_skills = usize::MAX;
    for seed in 0..10 {
        let cfg = ExplorationConfig { num_retries: 3, seed, ..Default::default() };
        let run = run_exploration(&cfg, "blocks_world", &rule_oracle()).map_err(|e| e.to_string())?;
        let r = &run.report;
        let solved = r.outcomes.iter().filter(|o| o.success).count();
        if r.outcomes.len() != 6 || solved != 6 {
            problems.push(format!("seed {seed}: {solved}/{} solved", r.outcomes.len()));
        }
        min_skills = min_skills.min(r.library.len());
        let last = r.outcomes.last().and_then(|o| o.plan.as_ref());
        let uses_skill = last.is_some_and(|p| {
            p.steps.iter().any(|s| parse(&s.code).is_ok_and(|prog| prog.callees().iter().any(|c| r.library.contains(c))))
        });
        if !uses_skill {
            problems.push(format!("seed {seed}: final pyramid plan calls no learned skill"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    problems.extend((min_skills < 4).then(|| format!("only {min_skills} skills")));
    problems.extend((secs >= 10.0).then(|| format!("took {secs:.1}s")));
    check(problems.is_empty(), format!("6/6 tasks on 10 seeds, >= {min_skills} skills, {secs:.2}s {}", problems.join("; ")))
}

fn ablation_margins() -> Outcome {
    let start = Instant::now();
    let t = run_ablation(&ablation_configs(0..50, 0.25), true).map_err(|e| e.to_string())?;
    let avg = |v| t.rate(AVERAGE, v).unwrap();
    let (full, ns, nv) = (avg(Variant::Full), avg(Variant::NoSkills), avg(Variant::NoVerification));
    check(
        full >= ns + 0.15 && full >= nv + 0.15 && within(start, Duration::from_secs(120)),
        format!("full {full:.3}, no_skills {ns:.3}, no_verification {nv:.3} in {:.1}s", start.elapsed().as_secs_f64()),
    )
}

/// Independent success model for the 3-step task: every executed step is
/// undone with probability q. Open loop needs three clean steps; with
/// backtracking each undone step costs one unit of budget.
fn analytic_rates(q: f64, budget: u32) -> (f64, f64) {
    let open = (1.0 - q).powi(3);
    let binom = |n: u64, k: u64| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let backtracking = (0..=budget as u64).map(|f| binom(f + 2, 2) * (1.0 - q).powi(3) * q.powi(f as i32)).sum();
    (open, backtracking)
}

fn open_loop_versus_backtracking() -> Outcome {
    let start = Instant::now();
    let cfgs = backtracking_configs("cup_drawer", 0..500, 0.2, 5);
    let t = run_backtracking_bench(&cfgs, &default_deploy_library(), true).map_err(|e| e.to_string())?;
    let task = "Retrieve the Cup from the Drawer";
    let (open, back) = (t.rate(task, Variant::OpenLoop).unwrap(), t.rate(task, Variant::Backtracking).unwrap());
    let (model_open, model_back) = analytic_rates(0.2, 5);
    check(
        (open - 0.512).abs() <= 0.05 && back - open >= 0.15 && within(start, Duration::from_secs(120)),
        format!(
            "open-loop {open:.3} (model {model_open:.3}), backtracking {back:.3} (model {model_back:.4}) in {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn backtrack_target_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..16);
        let verdicts: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let failed = rng.gen_range(0..n);
        let mut best = 0;
        for j in 0..=failed {
            if j == 0 || verdicts[j] {
                best = j;
            }
        }
        mismatches += (backtrack_index(|j| verdicts[j], failed) != best) as usize;
    }
    check(mismatches == 0, format!("{mismatches} mismatches on 10000 verdict vectors"))
}

fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    const NAMES: [&str; 6] = ["pos", "dims", "target", "object_name", "h", "BOUNDS"];
    const CALLEES: [&str; 6] = ["get_obj_position", "get_obj_dimensions", "movep", "go_home", "stack_blocks", "abs"];
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        return match rng.gen_range(0..3) {
            0 => Expr::Num(rng.gen_range(-2_000_000i64..2_000_000) as f64 / 1e6),
            1 => {
                let len = rng.gen_range(0..8);
                Expr::Str((0..len).map(|_| b"abcxyz '\\"[rng.gen_range(0..9)] as char).collect())
            }
            _ => Expr::Var(NAMES[rng.gen_range(0..NAMES.len())].into()),
        };
    }
    let ops = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];
    match rng.gen_range(0..4) {
        0 => Expr::vec3(random_expr(rng, depth - 1), random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        1 => random_expr(rng, depth - 1).index(rng.gen_range(0..3)),
        2 => Expr::bin(ops[rng.gen_range(0..4)], random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        _ => {
            let args = (0..rng.gen_range(0..3)).map(|_| random_expr(rng, depth - 1)).collect();
            Expr::call(CALLEES[rng.gen_range(0..CALLEES.len())], args)
        }
    }
}

fn random_program(rng: &mut ChaCha8Rng) -> Program {
    let stmts = (0..rng.gen_range(0..12))
        .map(|_| match rng.gen_range(0..9) {
            0..=3 => Stmt::Let(["pos", "dims", "target", "h"][rng.gen_range(0..4)].into(), random_expr(rng, 4)),
            4..=7 => {
                let Expr::Call(c) = random_expr(rng, 4) else {
                    let args = vec![random_expr(rng, 2)];
                    return Stmt::Call(Call { callee: "movep".into(), args });
                };
                Stmt::Call(c)
            }
            _ => Stmt::Comment("move above the object".into()),
        })
        .collect();
    Program::new(stmts)
}

fn round_trip_fixpoint() -> Outcome {
    let fixture = include_str!("../fixtures/programs/pick_and_place_object.skill");
    let first = parse(fixture).map_err(|e| e.to_string())?;
    let canon = first.to_canonical();
    let again = parse(&canon).map_err(|e| e.to_string())?;
    if again != first || again.to_canonical() != canon {
        return Err("fixture is not a fixpoint".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    for _ in 0..1000 {
        let p = random_program(&mut rng);
        let text = p.to_canonical();
        match parse(&text) {
            Ok(q) if q == p && q.to_canonical() == text => {}
            _ => bad += 1,
        }
    }
    check(bad == 0, format!("fixture and {} of 1000 random programs are fixpoints", 1000 - bad))
}

/// Break one step of a working plan in a way that only the code is at fault.
fn corrupt(plan: &Plan, kind: usize) -> Option<(Plan, usize)> {
    let mut p = plan.clone();
    let (i, code) = match kind {
        0 => {
            let i = p.steps.iter().position(|s| s.code.contains(')'))?;
            let mut c = p.steps[i].code.clone();
            c.remove(c.rfind(')')?);
            (i, c)
        }
        1 => {
            let i = p.len().min(2) - 1;
            (i, format!("{} +", p.steps[i].code))
        }
        2 => {
            let i = p.len() - 1;
            let c = &p.steps[i].code;
            let open = c.find('(')?;
            (i, format!("{}_x{}", &c[..open], &c[open..]))
        }
        _ => {
            let i = p.steps.iter().position(|s| s.code.contains('\''))?;
            let c = &p.steps[i].code;
            let a = c.find('\'')?;
            let b = a + 1 + c[a + 1..].find('\'')?;
            (i, format!("{}{}{}", &c[..a], c[a + 1..b].replace(' ', "_"), &c[b + 1..]))
        }
    };
    p.steps[i].code = code;
    Some((p, i))
}

struct RepairStats {
    classified: usize,
    repaired: usize,
    one_step: usize,
    total: usize,
}

fn repair_corpus() -> Result<RepairStats, String> {
    let oracle = rule_oracle();
    let lib = SkillLibrary::new();
    let scene = load_named("blocks_world").unwrap();
    let desc = describe(&scene);
    let tasks = rule::curriculum(&desc.objects.iter().map(|o| o.name.clone()).collect::<Vec<_>>());
    let mut s = RepairStats { classified: 0, repaired: 0, one_step: 0, total: 0 };
    for task in tasks.iter().take(5) {
        let plan = plan_task(task, &lib, &oracle, &desc, 0).map_err(|e| e.to_string())?;
        for kind in 0..4 {
            let (broken, i) = corrupt(&plan, kind).ok_or("corruption did not apply")?;
            s.total += 1;
            let mut sc = scene.clone();
            let Err(f) = execute_plan(&broken, &lib, &mut sc) else { continue };
            if classify_error(&f.error) == ErrorClass::Interpretation && f.step_index == i && sc.state() == scene.state() {
                s.classified += 1;
            }
            let fixed = repair_interpretation(task, &broken, &failure_report(&f), &lib, &oracle, &desc, 1).map_err(|e| e.to_string())?;
            let same_shape = fixed.steps.iter().zip(&broken.steps).all(|(a, b)| a.name == b.name && a.explanation == b.explanation);
            if Plan::code_diff(&broken, &fixed) == Some(vec![i]) && same_shape && fixed.len() == broken.len() {
                s.one_step += 1;
            }
            let mut sc = scene.clone();
            if execute_plan(&fixed, &lib, &mut sc).is_ok() && task_achieved(task, &sc) {
                s.repaired += 1;
            }
        }
    }
    Ok(s)
}

fn runtime_faults() -> Result<(usize, usize), String> {
    let step = |code: &str| PlanStep::new("step", "", code);
    let cases: Vec<(&str, Vec<&str>, usize)> = vec![
        ("blocks_world", vec!["go_home()", "movep((0.95, 0.0, 0.1))"], 1),
        ("blocks_world", vec!["movep((0.5, -0.8, 0.1))"], 0),
        ("blocks_world", vec!["go_home()", "go_home()", "movep((0.5, 0.0, 0.6))"], 2),
        ("blocks_world", vec!["p = get_obj_position('red block')", "movep(p - (0.4, 0, 0))"], 1),
        ("blocks_world", vec!["p = get_obj_position('violet block')"], 0),
        ("blocks_world", vec!["go_home()", "d = get_obj_dimensions('teapot')"], 1),
        ("cup_drawer", vec!["p = get_obj_position('cup')"], 0),
        ("desktop_organization", vec!["go_home()", "movep(get_obj_position('stapler'))"], 1),
        ("blocks_world", vec!["close_gripper()", "close_gripper()"], 1),
        ("cup_drawer", vec!["go_home()", "close_gripper()", "go_home()", "close_gripper()"], 3),
    ];
    let mut grounded = 0;
    for (scenario, codes, at) in &cases {
        let plan = Plan::new(codes.iter().map(|c| step(c)).collect());
        let mut scene: Scene = load_named(scenario).unwrap();
        match execute_plan(&plan, &SkillLibrary::new(), &mut scene) {
            Err(f) if classify_error(&f.error) == ErrorClass::Grounding && f.step_index == *at => grounded += 1,
            other => eprintln!("    runtime case {codes:?}: {:?}", other.err().map(|f| (f.step_index, f.error))),
        }
    }
    Ok((grounded, cases.len()))
}

fn error_classification() -> Outcome {
    let s = repair_corpus()?;
    let (grounded, total) = runtime_faults()?;
    check(
        s.classified == s.total && s.repaired == s.total && total == 10 && grounded == total,
        format!(
            "{}/{} code faults classified Interpretation, {}/{} fixed by one regeneration; {grounded}/{total} runtime faults Grounding",
            s.classified, s.total, s.repaired, s.total
        ),
    )
}

fn single_step_repair() -> Outcome {
    let s = repair_corpus()?;
    check(s.one_step == s.total, format!("{}/{} repairs changed exactly one code field", s.one_step, s.total))
}

fn terminal_scenes() -> Vec<(TaskSpec, Scene)> {
    let oracle = rule_oracle();
    let lib = blocks_lib();
    let base = load_named("blocks_world").unwrap();
    let tasks = rule::curriculum(&describe(&base).objects.iter().map(|o| o.name.clone()).collect::<Vec<_>>());
    let mut out = Vec::new();
    for task in &tasks {
        out.push((task.clone(), base.clone()));
        let plan = plan_task(task, &lib, &oracle, &describe(&base), 0).unwrap();
        for seed in 0..4 {
            let slip = if seed == 0 { 0.0 } else { 0.5 };
            let mut s = base.clone().with_seed(seed).with_noise(NoiseConfig { grasp_slip_prob: slip, step_fail_prob: 0.0 });
            let _ = execute_plan(&plan, &lib, &mut s);
            out.push((task.clone(), s));
        }
    }
    out
}

fn code_and_description_agree() -> Outcome {
    let oracle = rule_oracle();
    let scenes = terminal_scenes();
    let mut agree = 0;
    let mut achieved = 0;
    for (task, scene) in &scenes {
        let by_code = verify_with_code(task, scene, &oracle).map_err(|e| e.to_string())?.0;
        let by_description = task_achieved(task, scene);
        agree += (by_code == by_description) as usize;
        achieved += by_description as usize;
    }
    check(
        scenes.len() == 30 && agree == 30,
        format!("{agree}/{} verdicts agree ({achieved} achieved, {} not)", scenes.len(), scenes.len() - achieved),
    )
}

fn record_and_replay() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExplorationConfig {
        seed: 11,
        noise: NoiseConfig { grasp_slip_prob: 0.25, step_fail_prob: 0.0 },
        ..Default::default()
    };
    let faults = FaultConfig {
        symbol_faults: vec!["Create a Two-Block Stack".into()],
        lift_faults: vec!["Block Pyramid Stacking".into()],
        inline_motion_error: 0.2,
        seed: 11,
        ..Default::default()
    };
    let live = record_exploration(&cfg, "blocks_world", Oracle::new(RuleBased::new(faults.clone())), Some(faults), dir.path())
        .map_err(|e| e.to_string())?;
    let replayed = replay_exploration(dir.path(), Some(&cfg)).map_err(|e| e.to_string())?;
    let (a, b) = (live.report.to_json_string(), replayed.report.to_json_string());
    check(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn console_episode() -> Outcome {
    let lib = default_deploy_library();
    let mut scene = load_named("blocks_world").unwrap();
    let t = run_deployment("put the red block on the blue block", &mut scene, &lib, &rule_oracle(), &DeployConfig::default(), &mut NoIo);
    let done = t.finished().is_some_and(|f| f.0);
    let on = describe(&scene).relations.iter().any(|r| r.sentence() == "the red block is on the blue block");
    let slipped = (0..50).find(|&seed| {
        let mut s = load_named("blocks_world").unwrap().with_seed(seed).with_noise(NoiseConfig { grasp_slip_prob: 0.5, step_fail_prob: 0.0 });
        let t = run_deployment("put the red block on the blue block", &mut s, &lib, &rule_oracle(), &DeployConfig::default(), &mut NoIo);
        let backtracked = t.kinds().any(|e| matches!(e, TraceEvent::Backtracked { .. }));
        backtracked
    });
    check(done && on && slipped.is_some(), format!("finished(success)={done}, red on blue={on}, backtrack under slip at seed {slipped:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 exploration", exploration_on_ten_seeds),
        ("2 ablation", ablation_margins),
        ("3 backtracking", open_loop_versus_backtracking),
        ("4 backtrack target", backtrack_target_brute_force),
        ("5 round trip", round_trip_fixpoint),
        ("6 error classes", error_classification),
        ("7 one-step repair", single_step_repair),
        ("8 verifier agreement", code_and_description_agree),
        ("9 replay", record_and_replay),
        ("10 console (secondary)", console_episode),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
