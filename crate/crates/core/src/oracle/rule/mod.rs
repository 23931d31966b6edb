//! Deterministic stand-in for the foundation model. It answers every role
//! from scene descriptions and a small catalog of task families, emits the
//! same JSON shapes a model would, and can inject planning faults.

mod codegen;
mod dialog;
pub mod intent;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};

use super::{Backend, Context, OracleError, OracleRequest, OracleRole};
use crate::skilldsl::{parse, Expr, SkillLibrary, Stmt};
use crate::task::{parse_condition, Plan, PlanStep, TaskSpec};

pub use codegen::{edit_distance, goal_predicate};
pub use dialog::{control, observe};
pub use intent::{curriculum, family, interpret, Action, Dest, Family, Goal, Intent};

fn default_fault_step() -> usize {
    1
}

/// Planning mistakes the rule engine makes on purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    /// Tasks whose first plan misspells a callee.
    #[serde(default)]
    pub symbol_faults: Vec<String>,
    /// Tasks whose first plan has a syntax error.
    #[serde(default)]
    pub parse_faults: Vec<String>,
    /// Tasks whose first plan forgets to lift before carrying.
    #[serde(default)]
    pub lift_faults: Vec<String>,
    /// Tasks whose first plan sends an object outside the working volume.
    #[serde(default)]
    pub oob_faults: Vec<String>,
    /// Step that symbol and syntax faults land in (clamped to the plan).
    #[serde(default = "default_fault_step")]
    pub fault_step: usize,
    /// Chance that any freshly written primitive pick-and-place forgets the lift.
    #[serde(default)]
    pub inline_motion_error: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        FaultConfig {
            symbol_faults: Vec::new(),
            parse_faults: Vec::new(),
            lift_faults: Vec::new(),
            oob_faults: Vec::new(),
            fault_step: default_fault_step(),
            inline_motion_error: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleBased {
    pub faults: FaultConfig,
}

/// Skill templates the reflector generalises plans into.
pub fn templates() -> &'static SkillLibrary {
    static LIB: OnceLock<SkillLibrary> = OnceLock::new();
    LIB.get_or_init(|| SkillLibrary::from_json_str(include_str!("skills.json")).expect("bundled skill templates are valid"))
}

fn blocks(values: &[Json]) -> String {
    values.iter().map(|v| format!("```json\n{}\n```", serde_json::to_string_pretty(v).expect("json"))).collect::<Vec<_>>().join("\n\n")
}

fn unsupported(what: &str) -> String {
    blocks(&[json!({"Error": what})])
}

impl RuleBased {
    pub fn new(faults: FaultConfig) -> Self {
        RuleBased { faults }
    }

    fn rng(&self, req: &OracleRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.faults.seed.to_le_bytes());
        h.update(req.digest().as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// The full reply text for a request.
    pub fn respond(&self, req: &OracleRequest) -> Result<String, OracleError> {
        let ctx = &req.context;
        match req.role {
            OracleRole::SceneDescriber => {
                let obs = ctx.observation.as_ref().ok_or(OracleError::MissingContextField { role: req.role, field: "observation" })?;
                let objects: Vec<Json> = obs.objects.iter().map(|o| json!({"Name": o.name, "Color": o.color})).collect();
                Ok(format!(
                    "I can see the following.\n\n{}",
                    blocks(&[json!({"Description": obs.text, "Objects on table": objects})])
                ))
            }
            OracleRole::TaskGenerator => {
                let obs = ctx.observation.as_ref().ok_or(OracleError::MissingContextField { role: req.role, field: "observation" })?;
                let names: Vec<String> = obs.objects.iter().map(|o| o.name.clone()).collect();
                if family(&names).is_none() {
                    return Err(OracleError::UnsupportedScenario(format!("no task family for objects {names:?}")));
                }
                let mut tasks = curriculum(&names);
                tasks.truncate(ctx.max_tasks.unwrap_or(10));
                let values: Vec<Json> = tasks.iter().map(|t| serde_json::to_value(t).expect("task")).collect();
                Ok(format!("Starting with simple tasks and moving to harder ones:\n\n{}", blocks(&values)))
            }
            OracleRole::Planner => Ok(self.plan(req)),
            OracleRole::CodeVerifierGen => {
                let Some(intent) = ctx.task.as_ref().and_then(interpret) else {
                    return Ok(unsupported("unknown task"));
                };
                let others: Vec<String> =
                    ctx.observation.as_ref().map(|d| d.objects.iter().map(|o| o.name.clone()).collect()).unwrap_or_default();
                Ok(blocks(&[json!({"Code": goal_predicate(&intent.goals, &others)})]))
            }
            OracleRole::VisionVerifier => Ok(blocks(&[self.vision(ctx)])),
            OracleRole::Reflector => Ok(blocks(&[self.reflect(ctx, &req.library)])),
            OracleRole::PreconditionGen => {
                let (Some(task), Some(plan)) = (&ctx.task, &ctx.plan) else {
                    return Ok(unsupported("missing plan"));
                };
                Ok(blocks(&[json!({"Preconditions": preconditions(task, plan)})]))
            }
            OracleRole::Controller => Ok(format!("Let me think.\n\n{}", blocks(&[control(&ctx.history)]))),
        }
    }

    fn first_attempt(ctx: &Context) -> bool {
        ctx.failure.is_none() && ctx.note.is_none() && ctx.attempt.unwrap_or(0) == 0
    }

    fn render(&self, actions: &[Action], lib: &SkillLibrary, rng: &mut ChaCha8Rng, lift_fault: bool, oob: bool, p: f64) -> Vec<PlanStep> {
        let mut forced = lift_fault;
        let mut drop_lift = || {
            if std::mem::take(&mut forced) {
                true
            } else {
                p > 0.0 && rng.gen_bool(p)
            }
        };
        let mut r = codegen::Renderer::new(lib, &mut drop_lift);
        r.out_of_bounds = oob;
        for a in actions {
            r.render(a);
        }
        r.steps
    }

    fn plan(&self, req: &OracleRequest) -> String {
        let ctx = &req.context;
        let Some(task) = &ctx.task else { return unsupported("missing task") };
        let Some(intent) = interpret(task) else {
            return unsupported(&format!("I do not know how to do '{}'", task.name));
        };
        let mut rng = self.rng(req);
        let f = &self.faults;

        if let (Some(i), Some(plan)) = (ctx.failed_step, &ctx.plan) {
            // Rewrite one step: regenerate cleanly and take the matching step,
            // or fix the misspelt callee when the structure differs.
            let fresh = self.render(&intent.actions, &req.library, &mut rng, false, false, 0.0);
            let old = plan.steps.get(i);
            let step = match (fresh.get(i), old) {
                (Some(n), Some(o)) if fresh.len() == plan.steps.len() && n.name == o.name => n.clone(),
                (_, Some(o)) => PlanStep { code: respell(&o.code, &req.library), ..o.clone() },
                _ => return unsupported("no such step"),
            };
            return format!("Here is the corrected step.\n\n{}", blocks(&[serde_json::to_value(step).expect("step")]));
        }

        let first = Self::first_attempt(ctx);
        let named = |list: &[String]| first && list.iter().any(|n| n.eq_ignore_ascii_case(&task.name));
        let mut steps = self.render(
            &intent.actions,
            &req.library,
            &mut rng,
            named(&f.lift_faults),
            named(&f.oob_faults),
            f.inline_motion_error,
        );
        let k = f.fault_step.min(steps.len().saturating_sub(1));
        if named(&f.symbol_faults) {
            if let Some(s) = steps.get_mut(k) {
                s.code = misspell(&s.code);
            }
        }
        if named(&f.parse_faults) {
            if let Some(s) = steps.get_mut(k) {
                if let Some(pos) = s.code.rfind(')') {
                    s.code.remove(pos);
                }
            }
        }
        let values: Vec<Json> = steps.iter().map(|s| serde_json::to_value(s).expect("step")).collect();
        let lead = if ctx.failure.is_some() { "Revised plan that avoids the failure:" } else { "Plan:" };
        format!("{lead}\n\n{}", blocks(&values))
    }

    fn vision(&self, ctx: &Context) -> Json {
        let Some(obs) = &ctx.observation else {
            return json!({"Satisfied": false, "Reason": "no observation"});
        };
        if let Some(q) = &ctx.query {
            return observe(q, obs);
        }
        if let Some(c) = &ctx.condition {
            return match parse_condition(c) {
                Some(Some(rel)) => {
                    let ok = obs.holds(&rel);
                    json!({"Satisfied": ok, "Reason": format!("{} {}", rel.sentence(), if ok { "holds" } else { "does not hold" })})
                }
                Some(None) => json!({"Satisfied": true, "Reason": "nothing needs to hold"}),
                None => json!({"Satisfied": false, "Reason": format!("cannot judge '{c}'")}),
            };
        }
        let Some(intent) = ctx.task.as_ref().and_then(interpret) else {
            return json!({"Satisfied": false, "Reason": "unknown task"});
        };
        let failing: Vec<String> = intent.goals.iter().filter(|g| !g.holds(obs)).map(|g| format!("{g:?}")).collect();
        if failing.is_empty() {
            json!({"Satisfied": true, "Reason": "every goal relation is visible in the scene"})
        } else {
            json!({"Satisfied": false, "Reason": format!("not satisfied: {}", failing.join("; "))})
        }
    }

    fn reflect(&self, ctx: &Context, lib: &SkillLibrary) -> Json {
        let decline = |why: &str| json!({"Decline": why});
        let Some(task) = &ctx.task else { return decline("no task") };
        let Some(intent) = interpret(task) else { return decline("this task does not generalise") };
        if let [only] = intent.actions.as_slice() {
            if only.skill().is_some_and(|s| lib.contains(s)) {
                return decline("the plan is a single call to an existing skill");
            }
        }
        let mut order = Vec::new();
        for a in &intent.actions {
            preorder(a, &mut order);
        }
        let callable = |name: &str| crate::skilldsl::primitive(name).is_some() || lib.contains(name);
        for a in order {
            let Some(def) = a.skill().filter(|s| !lib.contains(s)).and_then(|s| templates().get(s)) else { continue };
            if !def.callees().iter().all(|c| callable(c)) {
                continue;
            }
            let related: Vec<String> = def.body.callees_in_order().iter().map(|c| format!("{c}()")).collect();
            return json!({
                "Function name": def.signature(),
                "Description": def.description,
                "Input": def.input_doc,
                "Output": def.output_doc,
                "Related functions": related.join(", "),
                "Example": a.call_text().expect("skill action"),
                "Code": def.body.to_canonical(),
            });
        }
        decline("every part of this plan is already a skill")
    }
}

fn preorder(a: &Action, out: &mut Vec<Action>) {
    out.push(a.clone());
    for c in a.expand() {
        preorder(&c, out);
    }
}

/// Drop the last letter of the first callee.
fn misspell(code: &str) -> String {
    let Ok(p) = parse(code) else { return code.to_string() };
    let Some(name) = p.callees_in_order().into_iter().next() else { return code.to_string() };
    let bad = &name[..name.len() - 1];
    code.replacen(&format!("{name}("), &format!("{bad}("), 1)
}

/// Replace unknown callees with the closest known name.
fn respell(code: &str, lib: &SkillLibrary) -> String {
    let known = codegen::known_callees(lib);
    let Ok(p) = parse(code) else { return code.to_string() };
    let mut out = code.to_string();
    for c in p.callees_in_order() {
        if known.contains(&c) {
            continue;
        }
        if let Some(best) = known.iter().min_by_key(|k| edit_distance(&c, k)) {
            out = out.replacen(&format!("{c}("), &format!("{best}("), 1);
        }
    }
    out
}

fn first_string_arg(code: &str) -> Option<(String, String)> {
    let p = parse(code).ok()?;
    p.statements.iter().rev().find_map(|s| match s {
        Stmt::Call(c) => match c.args.first() {
            Some(Expr::Str(s)) => Some((c.callee.clone(), s.clone())),
            _ => None,
        },
        _ => None,
    })
}

/// Precondition sentence for each step: step 0 needs nothing, and step i+1
/// expects what step i achieved.
pub fn preconditions(task: &TaskSpec, plan: &Plan) -> Vec<String> {
    let goals = interpret(task).map(|i| i.goals).unwrap_or_default();
    let mut out = vec!["none".to_string()];
    for step in plan.steps.iter().take(plan.steps.len().saturating_sub(1)) {
        let post = match first_string_arg(&step.code) {
            Some((callee, d)) if callee == "open_drawer" => format!("the {d} is open"),
            Some((callee, d)) if callee == "close_drawer" => format!("the {d} is closed"),
            Some((callee, subject)) if templates().contains(&callee) => goals
                .iter()
                .find(|g| g.subject() == subject)
                .and_then(Goal::sentence)
                .unwrap_or_else(|| "none".into()),
            _ => "none".into(),
        };
        out.push(post);
    }
    out
}

impl Backend for RuleBased {
    fn name(&self) -> &'static str {
        "rule"
    }

    fn complete(&self, req: &OracleRequest, _prompt: &str) -> Result<String, OracleError> {
        self.respond(req)
    }
}
