use std::fmt::Write as _;

use super::{Context, OracleError, OracleRole, Speaker};
use crate::sim::{Bounds, SceneDescription};
use crate::skilldsl::SkillLibrary;

fn template(role: OracleRole) -> &'static str {
    match role {
        OracleRole::SceneDescriber => include_str!("../../prompts/scene_describer.txt"),
        OracleRole::TaskGenerator => include_str!("../../prompts/task_generator.txt"),
        OracleRole::Planner => include_str!("../../prompts/planner.txt"),
        OracleRole::CodeVerifierGen => include_str!("../../prompts/code_verifier_gen.txt"),
        OracleRole::VisionVerifier => include_str!("../../prompts/vision_verifier.txt"),
        OracleRole::Reflector => include_str!("../../prompts/reflector.txt"),
        OracleRole::PreconditionGen => include_str!("../../prompts/precondition_gen.txt"),
        OracleRole::Controller => include_str!("../../prompts/controller.txt"),
    }
}

fn scene_text(d: &SceneDescription) -> String {
    let mut s = d.text.clone();
    if !d.objects.is_empty() {
        s.push_str("\nObjects:");
        for o in &d.objects {
            let _ = write!(s, "\n- {} ({})", o.name, o.color);
        }
    }
    s
}

fn bounds_text(b: &Bounds) -> String {
    let axes: Vec<String> = (0..3)
        .filter_map(|i| b.axis(i))
        .map(|r| format!("[{}, {}]", crate::skilldsl::ast::format_number(r.min), crate::skilldsl::ast::format_number(r.max)))
        .collect();
    format!("[{}]", axes.join(", "))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("prompt value serializes")
}

fn require<T>(role: OracleRole, field: &'static str, v: &Option<T>) -> Result<(), OracleError> {
    match v {
        Some(_) => Ok(()),
        None => Err(OracleError::MissingContextField { role, field }),
    }
}

/// Instantiate the role's template. Pure: the same inputs give the same text.
pub fn render_prompt(role: OracleRole, ctx: &Context, lib: &SkillLibrary) -> Result<String, OracleError> {
    match role {
        OracleRole::SceneDescriber | OracleRole::TaskGenerator => require(role, "observation", &ctx.observation)?,
        OracleRole::Planner | OracleRole::CodeVerifierGen => require(role, "task", &ctx.task)?,
        OracleRole::Reflector | OracleRole::PreconditionGen => {
            require(role, "task", &ctx.task)?;
            require(role, "plan", &ctx.plan)?;
        }
        OracleRole::VisionVerifier => {
            require(role, "observation", &ctx.observation)?;
            if ctx.task.is_none() && ctx.condition.is_none() && ctx.query.is_none() {
                return Err(OracleError::MissingContextField { role, field: "task, condition or query" });
            }
        }
        OracleRole::Controller => {
            if ctx.history.is_empty() {
                return Err(OracleError::MissingContextField { role, field: "history" });
            }
        }
    }

    let library = lib.signatures(true).join("\n");
    let revision = match (&ctx.plan, &ctx.failure, ctx.failed_step) {
        (Some(plan), Some(f), Some(step)) => format!(
            "\nThe plan below failed at step {step} with a {:?} error ({}): {}\nRewrite only the code of step {step}; keep its name and explanation. Output a single ```json block for that step.\n{}\n",
            f.class,
            f.kind,
            f.message,
            pretty(plan)
        ),
        (Some(plan), Some(f), None) => format!(
            "\nA previous plan failed at step {} ({}): {}\nRevise it so the task succeeds.\n{}\n",
            f.step_index,
            f.kind,
            f.message,
            pretty(plan)
        ),
        _ => String::new(),
    };
    let question = if let Some(q) = &ctx.query {
        format!("Question: {q}\nOutput one ```json block with the keys \"answer\" and \"observed_objs\" (the objects your answer is about).")
    } else if let Some(c) = &ctx.condition {
        format!("Does the current scene satisfy: {c}?\nOutput one ```json block with the keys \"Satisfied\" (true or false) and \"Reason\".")
    } else {
        let task = ctx.task.as_ref().map(pretty).unwrap_or_default();
        format!("Has the following task been completed?\n{task}\nOutput one ```json block with the keys \"Satisfied\" (true or false) and \"Reason\".")
    };
    let history = ctx
        .history
        .iter()
        .map(|t| {
            let who = match t.speaker {
                Speaker::User => "User",
                Speaker::Controller => "Controller",
                Speaker::Observer => "Observer",
                Speaker::Executor => "Executor",
            };
            format!("{who}: {}", t.text)
        })
        .collect::<Vec<_>>()
        .join("\n");

    let fields: [(&str, String); 13] = [
        ("library", library),
        ("scene", ctx.observation.as_ref().map(scene_text).unwrap_or_default()),
        ("initial_scene", ctx.initial_observation.as_ref().map(scene_text).unwrap_or_else(|| "not provided".into())),
        ("image", ctx.image_ref.as_ref().map(|r| format!("Image: {r}\n")).unwrap_or_default()),
        ("task", ctx.task.as_ref().map(pretty).unwrap_or_default()),
        ("plan", ctx.plan.as_ref().map(pretty).unwrap_or_default()),
        ("revision", revision),
        ("question", question),
        ("history", history),
        ("max_tasks", ctx.max_tasks.unwrap_or(10).to_string()),
        ("bounds", bounds_text(&ctx.bounds.unwrap_or(Bounds::UR5))),
        ("note", ctx.note.clone().unwrap_or_default()),
        ("condition", ctx.condition.clone().unwrap_or_default()),
    ];
    let mut out = template(role).to_string();
    for (key, value) in fields {
        out = out.replace(&format!("{{{{{key}}}}}"), &value);
    }
    Ok(out)
}
