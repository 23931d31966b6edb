//! What a task means to the rule engine: goal relations to check and the
//! abstract actions that achieve them.

use serde::{Deserialize, Serialize};

use crate::sim::{RelationKind, SceneDescription, TABLE};
use crate::task::TaskSpec;

/// Table center at table height, as skill-language text.
pub const CENTER_SITE: &str = "((BOUNDS[0][0] + BOUNDS[0][1]) / 2, (BOUNDS[1][0] + BOUNDS[1][1]) / 2, BOUNDS[2][0])";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "goal", content = "args", rename_all = "snake_case")]
pub enum Goal {
    On(String, String),
    Inside(String, String),
    OnTable(String),
    /// Top object bridges two supports.
    RestsAcross(String, String, String),
    /// Right of every other visible object.
    RightOfAll(String),
    Open(String),
    Closed(String),
    Pressed(String),
}

impl Goal {
    pub fn subject(&self) -> &str {
        match self {
            Goal::On(a, _)
            | Goal::Inside(a, _)
            | Goal::OnTable(a)
            | Goal::RestsAcross(a, _, _)
            | Goal::RightOfAll(a)
            | Goal::Open(a)
            | Goal::Closed(a)
            | Goal::Pressed(a) => a,
        }
    }

    /// Verdict from a scene description alone.
    pub fn holds(&self, d: &SceneDescription) -> bool {
        let rel = |s: &str, k: RelationKind, o: Option<&str>| d.relations.iter().any(|r| r.subject == s && r.relation == k && r.object.as_deref() == o);
        let apart = |a: &str, b: &str| {
            d.relations.iter().any(|r| {
                r.subject == a
                    && r.object.as_deref() == Some(b)
                    && matches!(r.relation, RelationKind::LeftOf | RelationKind::RightOf | RelationKind::Behind | RelationKind::InFrontOf)
            })
        };
        match self {
            Goal::On(a, b) => rel(a, RelationKind::On, Some(b)),
            Goal::Inside(a, b) => rel(a, RelationKind::Inside, Some(b)),
            Goal::OnTable(a) => rel(a, RelationKind::On, Some(TABLE)),
            Goal::RestsAcross(a, b, c) => {
                (rel(a, RelationKind::On, Some(b)) || rel(a, RelationKind::On, Some(c))) && !apart(a, b) && !apart(a, c)
            }
            Goal::RightOfAll(a) => {
                d.has_object(a)
                    && d.objects.iter().filter(|o| o.name != *a).all(|o| rel(a, RelationKind::RightOf, Some(&o.name)))
            }
            Goal::Open(a) => rel(a, RelationKind::Open, None),
            Goal::Closed(a) => rel(a, RelationKind::Closed, None),
            Goal::Pressed(a) => rel(a, RelationKind::Pressed, None),
        }
    }

    /// Sentence in the precondition vocabulary, when one exists.
    pub fn sentence(&self) -> Option<String> {
        Some(match self {
            Goal::On(a, b) => format!("the {a} is on the {b}"),
            Goal::Inside(a, b) => format!("the {a} is inside the {b}"),
            Goal::OnTable(a) => format!("the {a} is on the table"),
            Goal::Open(a) => format!("the {a} is open"),
            Goal::Closed(a) => format!("the {a} is closed"),
            Goal::Pressed(a) => format!("the {a} is pressed"),
            Goal::RestsAcross(..) | Goal::RightOfAll(_) => return None,
        })
    }
}

/// Where a pick-and-place should put its object.
#[derive(Debug, Clone, PartialEq)]
pub enum Dest {
    OnTop(String),
    RightEdge,
    TableCenter,
    /// Beyond the right limit of the working volume; only produced by fault injection.
    OutOfBounds,
    /// Literal skill-language vector expression.
    Expr(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    PickPlace { object: String, dest: Dest },
    Stack { top: String, base: String },
    ThreeStack { first: String, second: String, third: String },
    Pyramid { left: String, right: String, top: String, site: String },
    ThreeLevel { base: [String; 3], middle: [String; 2], top: String, site: String },
    OpenDrawer(String),
    CloseDrawer(String),
    PutInto { object: String, container: String },
    PlaceOn { object: String, surface: String, side: f64 },
    Press(String),
}

pub(crate) fn q(name: &str) -> String {
    format!("'{name}'")
}

fn height(o: &str) -> String {
    format!("get_obj_dimensions({})[2]", q(o))
}

impl Dest {
    pub fn render(&self, object: &str) -> String {
        match self {
            Dest::OnTop(t) => format!("get_obj_position({}) + (0, 0, {} / 2 + {} / 2)", q(t), height(t), height(object)),
            Dest::RightEdge => format!("((BOUNDS[0][0] + BOUNDS[0][1]) / 2, BOUNDS[1][0] + 0.05, {} / 2)", height(object)),
            Dest::TableCenter => {
                format!("((BOUNDS[0][0] + BOUNDS[0][1]) / 2, (BOUNDS[1][0] + BOUNDS[1][1]) / 2, {} / 2)", height(object))
            }
            Dest::OutOfBounds => format!("((BOUNDS[0][0] + BOUNDS[0][1]) / 2, BOUNDS[1][0] - 0.05, {} / 2)", height(object)),
            Dest::Expr(e) => e.clone(),
        }
    }
}

impl Action {
    /// Library skill that performs this action in one call.
    pub fn skill(&self) -> Option<&'static str> {
        Some(match self {
            Action::PickPlace { .. } => "pick_and_place_object",
            Action::Stack { .. } => "stack_blocks",
            Action::ThreeStack { .. } => "create_three_block_stack",
            Action::Pyramid { .. } => "build_pyramid",
            Action::ThreeLevel { .. } => "build_three_level_pyramid",
            Action::OpenDrawer(_) => "open_drawer",
            Action::CloseDrawer(_) => "close_drawer",
            Action::PutInto { .. } => "put_object_into_container",
            Action::PlaceOn { .. } => "place_object_on_surface",
            Action::Press(_) => return None,
        })
    }

    /// Arguments of the skill call, as skill-language text.
    pub fn call_args(&self) -> Vec<String> {
        match self {
            Action::PickPlace { object, dest } => vec![q(object), dest.render(object)],
            Action::Stack { top, base } => vec![q(top), q(base)],
            Action::ThreeStack { first, second, third } => vec![q(first), q(second), q(third)],
            Action::Pyramid { left, right, top, site } => vec![q(left), q(right), q(top), site.clone()],
            Action::ThreeLevel { base, middle, top, site } => {
                base.iter().chain(middle.iter()).chain(std::iter::once(top)).map(|s| q(s)).chain([site.clone()]).collect()
            }
            Action::OpenDrawer(d) | Action::CloseDrawer(d) | Action::Press(d) => vec![q(d)],
            Action::PutInto { object, container } => vec![q(object), q(container)],
            Action::PlaceOn { object, surface, side } => {
                vec![q(object), q(surface), crate::skilldsl::ast::format_number(*side)]
            }
        }
    }

    pub fn call_text(&self) -> Option<String> {
        self.skill().map(|s| format!("{s}({})", self.call_args().join(", ")))
    }

    /// The same behavior in terms of simpler actions. Empty for actions
    /// that bottom out in primitives.
    pub fn expand(&self) -> Vec<Action> {
        match self {
            Action::PickPlace { .. } | Action::OpenDrawer(_) | Action::CloseDrawer(_) | Action::Press(_) => Vec::new(),
            Action::Stack { top, base } => vec![Action::PickPlace { object: top.clone(), dest: Dest::OnTop(base.clone()) }],
            Action::PutInto { object, container } => {
                vec![Action::PickPlace { object: object.clone(), dest: Dest::OnTop(container.clone()) }]
            }
            Action::PlaceOn { object, surface, side } => vec![Action::PickPlace {
                object: object.clone(),
                dest: Dest::Expr(format!(
                    "get_obj_position({s}) + (0, get_obj_dimensions({s})[1] * {}, {} / 2 + {} / 2)",
                    crate::skilldsl::ast::format_number(*side),
                    height(surface),
                    height(object),
                    s = q(surface)
                )),
            }],
            Action::ThreeStack { first, second, third } => vec![
                Action::Stack { top: first.clone(), base: second.clone() },
                Action::Stack { top: third.clone(), base: first.clone() },
            ],
            Action::Pyramid { left, right, top, site } => {
                let half_gap = format!("(get_obj_dimensions({})[0] + 0.01) / 2", q(left));
                vec![
                    Action::PickPlace {
                        object: left.clone(),
                        dest: Dest::Expr(format!("{site} + (0 - {half_gap}, 0, {} / 2)", height(left))),
                    },
                    Action::PickPlace {
                        object: right.clone(),
                        dest: Dest::Expr(format!("{site} + ({half_gap}, 0, {} / 2)", height(right))),
                    },
                    Action::PickPlace {
                        object: top.clone(),
                        dest: Dest::Expr(format!("{site} + (0, 0, {} + {} / 2)", height(left), height(top))),
                    },
                ]
            }
            Action::ThreeLevel { base, middle, top, site } => {
                let spacing = format!("(get_obj_dimensions({})[0] + 0.01)", q(&base[0]));
                vec![
                    Action::PickPlace {
                        object: base[0].clone(),
                        dest: Dest::Expr(format!("{site} + (0 - {spacing}, 0, {} / 2)", height(&base[0]))),
                    },
                    Action::PickPlace {
                        object: base[1].clone(),
                        dest: Dest::Expr(format!("{site} + (0, 0, {} / 2)", height(&base[1]))),
                    },
                    Action::PickPlace {
                        object: base[2].clone(),
                        dest: Dest::Expr(format!("{site} + ({spacing}, 0, {} / 2)", height(&base[2]))),
                    },
                    Action::Pyramid {
                        left: middle[0].clone(),
                        right: middle[1].clone(),
                        top: top.clone(),
                        site: format!("{site} + (0, 0, {})", height(&base[0])),
                    },
                ]
            }
        }
    }
}

/// Goals plus the actions that reach them.
#[derive(Debug, Clone, PartialEq)]
pub struct Intent {
    pub goals: Vec<Goal>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    BlocksWorld,
    CupDrawer,
    DesktopOrganization,
}

const RUBBISH_WORDS: [&str; 6] = ["rubbish", "trash", "paper", "wrapper", "bottle", "can"];
const FURNITURE_WORDS: [&str; 8] = ["bin", "shelf", "drawer", "cabinet", "cupboard", "microwave", "lamp", "button"];

pub fn is_rubbish(name: &str) -> bool {
    !is_furniture(name) && name.split_whitespace().any(|w| RUBBISH_WORDS.contains(&w))
}

pub fn is_furniture(name: &str) -> bool {
    name.split_whitespace().any(|w| FURNITURE_WORDS.contains(&w))
}

fn block(color: &str) -> String {
    format!("{color} block")
}

const BLOCK_COLORS: [&str; 6] = ["red", "orange", "purple", "blue", "green", "yellow"];

pub fn family(names: &[String]) -> Option<Family> {
    if BLOCK_COLORS.iter().all(|c| names.contains(&block(c))) {
        Some(Family::BlocksWorld)
    } else if names.iter().any(|n| n.contains("bin")) && names.iter().any(|n| n.contains("shelf")) {
        Some(Family::DesktopOrganization)
    } else if names.iter().any(|n| n.contains("drawer")) {
        Some(Family::CupDrawer)
    } else {
        None
    }
}

struct CatalogEntry {
    spec: TaskSpec,
    intent: Intent,
}

fn entry(name: &str, objects: Vec<String>, description: &str, goals: Vec<Goal>, actions: Vec<Action>) -> CatalogEntry {
    CatalogEntry {
        spec: TaskSpec { name: name.into(), objects, description: description.into() },
        intent: Intent { goals, actions },
    }
}

fn blocks_catalog() -> Vec<CatalogEntry> {
    let b = |c: &str| block(c);
    let stack = |t: &str, s: &str| Action::Stack { top: b(t), base: b(s) };
    vec![
        entry(
            "Pick and Place the Purple Block",
            vec![b("purple")],
            "Pick up the purple block and place it at the right edge of the table, to the right of every other block.",
            vec![Goal::RightOfAll(b("purple"))],
            vec![Action::PickPlace { object: b("purple"), dest: Dest::RightEdge }],
        ),
        entry(
            "Create a Two-Block Stack",
            vec![b("purple"), b("blue")],
            "Stack the purple block on top of the blue block.",
            vec![Goal::On(b("purple"), b("blue"))],
            vec![stack("purple", "blue")],
        ),
        entry(
            "Create a Three-Block Stack",
            vec![b("purple"), b("blue"), b("green")],
            "Stack the purple block on the blue block, then put the green block on top of the purple block.",
            vec![Goal::On(b("purple"), b("blue")), Goal::On(b("green"), b("purple"))],
            vec![Action::ThreeStack { first: b("purple"), second: b("blue"), third: b("green") }],
        ),
        entry(
            "Color Match and Stack",
            BLOCK_COLORS.iter().map(|c| b(c)).collect(),
            "Make three two-block stacks: purple on yellow, blue on orange and green on red.",
            vec![
                Goal::On(b("purple"), b("yellow")),
                Goal::On(b("blue"), b("orange")),
                Goal::On(b("green"), b("red")),
            ],
            vec![stack("purple", "yellow"), stack("blue", "orange"), stack("green", "red")],
        ),
        entry(
            "Block Pyramid Stacking",
            vec![b("yellow"), b("orange"), b("red")],
            "Build a pyramid at the center of the table with the yellow and orange blocks as the base and the red block on top.",
            vec![
                Goal::OnTable(b("yellow")),
                Goal::OnTable(b("orange")),
                Goal::RestsAcross(b("red"), b("yellow"), b("orange")),
            ],
            vec![Action::Pyramid { left: b("yellow"), right: b("orange"), top: b("red"), site: CENTER_SITE.into() }],
        ),
        entry(
            "Complex Pyramid Construction",
            vec![b("purple"), b("blue"), b("green"), b("yellow"), b("orange"), b("red")],
            "Build a three-level pyramid at the center of the table: purple, blue and green form the base, yellow and orange the middle level, and red goes on top.",
            vec![
                Goal::OnTable(b("purple")),
                Goal::OnTable(b("blue")),
                Goal::OnTable(b("green")),
                Goal::RestsAcross(b("yellow"), b("purple"), b("blue")),
                Goal::RestsAcross(b("orange"), b("blue"), b("green")),
                Goal::RestsAcross(b("red"), b("yellow"), b("orange")),
            ],
            vec![Action::ThreeLevel {
                base: [b("purple"), b("blue"), b("green")],
                middle: [b("yellow"), b("orange")],
                top: b("red"),
                site: CENTER_SITE.into(),
            }],
        ),
    ]
}

fn drawer_catalog(names: &[String]) -> Vec<CatalogEntry> {
    let Some(d) = names.iter().find(|n| n.contains("drawer")).cloned() else { return Vec::new() };
    vec![
        entry(
            &format!("Open the {}", title(&d)),
            vec![d.clone()],
            &format!("Pull the {d} open by its handle."),
            vec![Goal::Open(d.clone())],
            vec![Action::OpenDrawer(d.clone())],
        ),
        entry(
            &format!("Close the {}", title(&d)),
            vec![d.clone()],
            &format!("Push the {d} closed by its handle."),
            vec![Goal::Closed(d.clone())],
            vec![Action::CloseDrawer(d)],
        ),
    ]
}

fn desktop_catalog(names: &[String]) -> Vec<CatalogEntry> {
    let bin = names.iter().find(|n| n.contains("bin")).cloned();
    let shelf = names.iter().find(|n| n.contains("shelf")).cloned();
    let rubbish: Vec<String> = names.iter().filter(|n| is_rubbish(n)).cloned().collect();
    let items: Vec<String> = names.iter().filter(|n| !is_rubbish(n) && !is_furniture(n)).cloned().collect();
    let mut out = Vec::new();
    if let (Some(r), Some(bin)) = (rubbish.first(), &bin) {
        out.push(entry(
            &format!("Throw Away the {}", title(r)),
            vec![r.clone(), bin.clone()],
            &format!("Put the {r} into the {bin}."),
            vec![Goal::Inside(r.clone(), bin.clone())],
            vec![Action::PutInto { object: r.clone(), container: bin.clone() }],
        ));
    }
    if let (Some(i), Some(shelf)) = (items.first(), &shelf) {
        out.push(entry(
            &format!("Place the {} on the {}", title(i), title(shelf)),
            vec![i.clone(), shelf.clone()],
            &format!("Put the {i} on top of the {shelf}."),
            vec![Goal::On(i.clone(), shelf.clone())],
            vec![Action::PlaceOn { object: i.clone(), surface: shelf.clone(), side: 0.0 }],
        ));
    }
    if let (false, false, Some(bin), Some(shelf)) = (rubbish.is_empty(), items.is_empty(), bin, shelf) {
        let mut objects = rubbish.clone();
        objects.push(bin.clone());
        objects.extend(items.iter().cloned());
        objects.push(shelf.clone());
        let (mut goals, mut actions) = (Vec::new(), Vec::new());
        push_clear(&rubbish, &bin, &mut goals, &mut actions);
        push_shelve(&items, &shelf, &mut goals, &mut actions);
        out.push(entry(
            "Organize the Desk",
            objects,
            &format!("Throw all rubbish into the {bin} and line up the other items on the {shelf}."),
            goals,
            actions,
        ));
    }
    out
}

fn push_clear(rubbish: &[String], bin: &str, goals: &mut Vec<Goal>, actions: &mut Vec<Action>) {
    for r in rubbish {
        goals.push(Goal::Inside(r.clone(), bin.to_string()));
        actions.push(Action::PutInto { object: r.clone(), container: bin.to_string() });
    }
}

/// Items spread evenly along the surface's depth.
fn push_shelve(items: &[String], shelf: &str, goals: &mut Vec<Goal>, actions: &mut Vec<Action>) {
    let n = items.len() as f64;
    for (i, it) in items.iter().enumerate() {
        let side = crate::skilldsl::ast::round_literal((i as f64 + 0.5) / n - 0.5);
        goals.push(Goal::On(it.clone(), shelf.to_string()));
        actions.push(Action::PlaceOn { object: it.clone(), surface: shelf.to_string(), side });
    }
}

fn title(name: &str) -> String {
    name.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn catalog(names: &[String]) -> Vec<CatalogEntry> {
    match family(names) {
        Some(Family::BlocksWorld) => blocks_catalog(),
        Some(Family::CupDrawer) => drawer_catalog(names),
        Some(Family::DesktopOrganization) => desktop_catalog(names),
        None => Vec::new(),
    }
}

/// Exploration curriculum for a scene, easy to hard.
pub fn curriculum(names: &[String]) -> Vec<TaskSpec> {
    catalog(names).into_iter().map(|e| e.spec).collect()
}

fn strip_the(s: &str) -> &str {
    let s = s.trim().trim_end_matches('.');
    s.strip_prefix("the ").unwrap_or(s).trim()
}

/// Interpret a task by name: curriculum tasks first, then the phrasings the
/// controller uses when it hands work to the executor.
pub fn interpret(task: &TaskSpec) -> Option<Intent> {
    let lower = task.name.to_lowercase();
    let known = blocks_catalog().into_iter().chain(drawer_catalog(&task.objects)).chain(desktop_catalog(&task.objects));
    if let Some(e) = known.into_iter().find(|e| e.spec.name.to_lowercase() == lower) {
        return Some(e.intent);
    }
    let objs = &task.objects;
    if let Some(rest) = lower.strip_prefix("retrieve the ") {
        let (c, d) = rest.split_once(" from the ")?;
        let (c, d) = (strip_the(c).to_string(), strip_the(d).to_string());
        return Some(Intent {
            goals: vec![Goal::OnTable(c.clone()), Goal::Closed(d.clone())],
            actions: vec![
                Action::OpenDrawer(d.clone()),
                Action::PickPlace { object: c, dest: Dest::TableCenter },
                Action::CloseDrawer(d),
            ],
        });
    }
    if let Some(rest) = lower.strip_prefix("move the ") {
        if let Some(a) = rest.strip_suffix(" to the edge of the table") {
            let a = strip_the(a).to_string();
            return Some(Intent {
                goals: vec![Goal::RightOfAll(a.clone())],
                actions: vec![Action::PickPlace { object: a, dest: Dest::RightEdge }],
            });
        }
    }
    if lower.starts_with("put the rubbish into the ") {
        let bin = strip_the(&lower["put the rubbish into the ".len()..]).to_string();
        let rubbish: Vec<String> = objs.iter().filter(|o| **o != bin).cloned().collect();
        let (mut goals, mut actions) = (Vec::new(), Vec::new());
        push_clear(&rubbish, &bin, &mut goals, &mut actions);
        return (!rubbish.is_empty()).then_some(Intent { goals, actions });
    }
    if lower.starts_with("put the items on the ") {
        let shelf = strip_the(&lower["put the items on the ".len()..]).to_string();
        let items: Vec<String> = objs.iter().filter(|o| **o != shelf).cloned().collect();
        let (mut goals, mut actions) = (Vec::new(), Vec::new());
        push_shelve(&items, &shelf, &mut goals, &mut actions);
        return (!items.is_empty()).then_some(Intent { goals, actions });
    }
    for verb in ["put the ", "place the ", "stack the "] {
        if let Some(rest) = lower.strip_prefix(verb) {
            if let Some((a, b)) = rest.split_once(" on the ").or_else(|| rest.split_once(" on top of the ")) {
                let (a, b) = (strip_the(a).to_string(), strip_the(b).to_string());
                return Some(Intent {
                    goals: vec![Goal::On(a.clone(), b.clone())],
                    actions: vec![Action::Stack { top: a, base: b }],
                });
            }
            if let Some((a, b)) = rest.split_once(" into the ").or_else(|| rest.split_once(" in the ")) {
                let (a, b) = (strip_the(a).to_string(), strip_the(b).to_string());
                return Some(Intent {
                    goals: vec![Goal::Inside(a.clone(), b.clone())],
                    actions: vec![Action::PutInto { object: a, container: b }],
                });
            }
        }
    }
    if let Some(d) = lower.strip_prefix("open the ") {
        let d = strip_the(d).to_string();
        return Some(Intent { goals: vec![Goal::Open(d.clone())], actions: vec![Action::OpenDrawer(d)] });
    }
    if let Some(d) = lower.strip_prefix("close the ") {
        let d = strip_the(d).to_string();
        return Some(Intent { goals: vec![Goal::Closed(d.clone())], actions: vec![Action::CloseDrawer(d)] });
    }
    if let Some(b) = lower.strip_prefix("press the ") {
        let b = strip_the(b).to_string();
        return Some(Intent { goals: vec![Goal::Pressed(b.clone())], actions: vec![Action::Press(b)] });
    }
    None
}
