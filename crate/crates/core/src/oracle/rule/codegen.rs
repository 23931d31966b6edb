//! Turning actions into plan steps and goals into verification predicates.

use std::collections::BTreeSet;

use super::intent::{q, Action, Dest, Goal};
use crate::skilldsl::SkillLibrary;
use crate::task::PlanStep;

fn title(a: &Action) -> String {
    match a {
        Action::PickPlace { object, .. } => format!("Move the {object}"),
        Action::Stack { top, base } => format!("Stack the {top} on the {base}"),
        Action::ThreeStack { first, second, third } => format!("Stack the {first}, {second} and {third}"),
        Action::Pyramid { left, right, top, .. } => format!("Build a pyramid from the {left}, {right} and {top}"),
        Action::ThreeLevel { .. } => "Build a three-level pyramid".into(),
        Action::OpenDrawer(d) => format!("Open the {d}"),
        Action::CloseDrawer(d) => format!("Close the {d}"),
        Action::PutInto { object, container } => format!("Put the {object} into the {container}"),
        Action::PlaceOn { object, surface, .. } => format!("Place the {object} on the {surface}"),
        Action::Press(b) => format!("Press the {b}"),
    }
}

/// Builds plan steps, preferring library skills and falling back to
/// simpler actions and finally to primitive motions.
pub struct Renderer<'a> {
    lib: &'a SkillLibrary,
    /// Asked once per inline pick-and-place; `true` leaves out the lift.
    drop_lift: &'a mut dyn FnMut() -> bool,
    /// Send the next pick-and-place outside the working volume.
    pub out_of_bounds: bool,
    pub steps: Vec<PlanStep>,
}

impl<'a> Renderer<'a> {
    pub fn new(lib: &'a SkillLibrary, drop_lift: &'a mut dyn FnMut() -> bool) -> Self {
        Renderer { lib, drop_lift, out_of_bounds: false, steps: Vec::new() }
    }

    fn push(&mut self, name: String, explanation: String, code: String) {
        self.steps.push(PlanStep::new(name, explanation, code));
    }

    pub fn render(&mut self, action: &Action) {
        let mut action = action.clone();
        if let (true, Action::PickPlace { dest, .. }) = (self.out_of_bounds, &mut action) {
            *dest = Dest::OutOfBounds;
            self.out_of_bounds = false;
        }
        if let Some(skill) = action.skill().filter(|s| self.lib.contains(s)) {
            let call = action.call_text().expect("skill action has a call");
            self.push(title(&action), format!("Use the learned {skill} skill."), call);
            return;
        }
        let parts = action.expand();
        if !parts.is_empty() {
            for p in &parts {
                self.render(p);
            }
            return;
        }
        match &action {
            Action::PickPlace { object, dest } => self.inline_pick_place(object, dest),
            Action::OpenDrawer(d) => self.inline_drawer(d, true),
            Action::CloseDrawer(d) => self.inline_drawer(d, false),
            Action::Press(b) => self.inline_press(b),
            other => unreachable!("{other:?} always expands"),
        }
    }

    fn inline_pick_place(&mut self, object: &str, dest: &Dest) {
        let o = q(object);
        let lift = if (self.drop_lift)() {
            "movep((object_position[0], object_position[1], object_position[2]))"
        } else {
            "movep((object_position[0], object_position[1], BOUNDS[2][1]))"
        };
        let steps = [
            (
                format!("Locate the {object}"),
                format!("Read where the {object} is and how big it is, and work out where it should go."),
                format!(
                    "object_position = get_obj_position({o})\nobject_dimensions = get_obj_dimensions({o})\ndestination = {}",
                    dest.render(object)
                ),
            ),
            (
                format!("Move above the {object}"),
                "Approach from above so the gripper does not hit anything.".into(),
                "movep((object_position[0], object_position[1], object_position[2] + object_dimensions[2]))".into(),
            ),
            (
                format!("Descend to the {object}"),
                "Lower the gripper onto the object.".into(),
                "movep((object_position[0], object_position[1], object_position[2]))".into(),
            ),
            (format!("Grasp the {object}"), "Turn on the suction.".into(), "close_gripper()".into()),
            (
                format!("Lift the {object}"),
                "Raise the object to the top of the working volume before moving sideways.".into(),
                lift.into(),
            ),
            (
                format!("Carry the {object} over its destination"),
                "Move horizontally at a safe height.".into(),
                "movep((destination[0], destination[1], BOUNDS[2][1]))".into(),
            ),
            (
                format!("Lower the {object}"),
                "Bring the object down to its final height.".into(),
                "movep((destination[0], destination[1], BOUNDS[2][0] + destination[2]))".into(),
            ),
            (format!("Release the {object}"), "Turn off the suction.".into(), "open_gripper()".into()),
            ("Return home".into(), "Clear the workspace.".into(), "go_home()".into()),
        ];
        for (n, e, c) in steps {
            self.push(n, e, c);
        }
    }

    fn inline_drawer(&mut self, d: &str, open: bool) {
        let qd = q(d);
        let (verb, sign, how) = if open { ("Pull", "-", "toward the robot") } else { ("Push", "+", "away from the robot") };
        let steps = [
            (
                format!("Locate the {d} handle"),
                "The handle is in the middle of the face nearest the robot.".to_string(),
                format!("handle = get_obj_position({qd}) - (get_obj_dimensions({qd})[0] / 2, 0, 0)"),
            ),
            ("Move above the handle".into(), "Approach from above.".into(), "movep(handle + (0, 0, 0.05))".into()),
            ("Descend to the handle".into(), "Reach the handle.".into(), "movep(handle)".into()),
            ("Grasp the handle".into(), "Turn on the suction.".into(), "close_gripper()".into()),
            (
                format!("{verb} the {d}"),
                format!("Slide the {d} {how} by its depth."),
                format!("movep(handle {sign} (get_obj_dimensions({qd})[0], 0, 0))"),
            ),
            ("Release the handle".into(), "Turn off the suction.".into(), "open_gripper()".into()),
            ("Return home".into(), "Clear the workspace.".into(), "go_home()".into()),
        ];
        for (n, e, c) in steps {
            self.push(n, e, c);
        }
    }

    fn inline_press(&mut self, b: &str) {
        let qb = q(b);
        self.push(
            format!("Move above the {b}"),
            "Approach from above.".into(),
            format!("movep(get_obj_position({qb}) + (0, 0, get_obj_dimensions({qb})[2]))"),
        );
        self.push(
            format!("Press the {b}"),
            "Push down onto its top face.".into(),
            format!("movep(get_obj_position({qb}) + (0, 0, get_obj_dimensions({qb})[2] / 2))"),
        );
        self.push("Return home".into(), "Clear the workspace.".into(), "go_home()".into());
    }
}

fn ident(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// Read-only program whose checks all pass exactly when every goal holds.
/// `others` lists the visible objects used by the right-of-all goal.
pub fn goal_predicate(goals: &[Goal], others: &[String]) -> String {
    let mut needed: Vec<String> = Vec::new();
    let mut need = |n: &str| {
        if !needed.iter().any(|x| x == n) {
            needed.push(n.to_string());
        }
    };
    for g in goals {
        match g {
            Goal::On(a, b) | Goal::Inside(a, b) => {
                need(a);
                need(b);
            }
            Goal::RestsAcross(a, b, c) => {
                need(a);
                need(b);
                need(c);
            }
            Goal::OnTable(a) => need(a),
            Goal::RightOfAll(a) => {
                need(a);
                for o in others.iter().filter(|o| *o != a) {
                    need(o);
                }
            }
            Goal::Open(_) | Goal::Closed(_) | Goal::Pressed(_) => {}
        }
    }
    let mut lines = Vec::new();
    for n in &needed {
        let id = ident(n);
        lines.push(format!("pos_{id} = get_obj_position({})", q(n)));
        lines.push(format!("dim_{id} = get_obj_dimensions({})", q(n)));
    }
    let p = |n: &str| format!("pos_{}", ident(n));
    let d = |n: &str| format!("dim_{}", ident(n));
    let bottom = |n: &str| format!("{}[2] - {}[2] / 2", p(n), d(n));
    let top = |n: &str| format!("{}[2] + {}[2] / 2", p(n), d(n));
    let strict_overlap = |a: &str, b: &str, lines: &mut Vec<String>| {
        for axis in 0..2 {
            lines.push(format!(
                "expect_less(abs({pa}[{axis}] - {pb}[{axis}]), ({da}[{axis}] + {db}[{axis}]) / 2)",
                pa = p(a),
                pb = p(b),
                da = d(a),
                db = d(b)
            ));
        }
    };
    for g in goals {
        lines.push(format!("# {}", goal_comment(g)));
        match g {
            Goal::On(a, b) => {
                strict_overlap(a, b, &mut lines);
                lines.push(format!("expect_near({}, {}, 0.001)", bottom(a), top(b)));
            }
            Goal::Inside(a, b) => {
                strict_overlap(a, b, &mut lines);
                lines.push(format!("expect_less({}, {})", bottom(a), top(b)));
            }
            Goal::OnTable(a) => lines.push(format!("expect_near({}, BOUNDS[2][0], 0.001)", bottom(a))),
            Goal::RestsAcross(a, b, c) => {
                for s in [b, c] {
                    for axis in 0..2 {
                        lines.push(format!(
                            "expect_near({pa}[{axis}], {ps}[{axis}], ({da}[{axis}] + {ds}[{axis}]) / 2)",
                            pa = p(a),
                            ps = p(s),
                            da = d(a),
                            ds = d(s)
                        ));
                    }
                }
                lines.push(format!(
                    "expect_less(abs({ba} - ({tb})) * abs({ba} - ({tc})), 0.000001)",
                    ba = bottom(a),
                    tb = top(b),
                    tc = top(c)
                ));
            }
            Goal::RightOfAll(a) => {
                for o in others.iter().filter(|o| *o != a) {
                    lines.push(format!("expect_less({}[1] + {}[1] / 2, {}[1] - {}[1] / 2)", p(a), d(a), p(o), d(o)));
                }
            }
            Goal::Open(x) => lines.push(format!("expect_near(get_obj_state({}), 1, 0.2)", q(x))),
            Goal::Closed(x) => lines.push(format!("expect_less(get_obj_state({}), 0.8)", q(x))),
            Goal::Pressed(x) => lines.push(format!("expect_near(get_obj_state({}), 1, 0.5)", q(x))),
        }
    }
    lines.join("\n")
}

fn goal_comment(g: &Goal) -> String {
    match g {
        Goal::RestsAcross(a, b, c) => format!("the {a} rests across the {b} and the {c}"),
        Goal::RightOfAll(a) => format!("the {a} is right of everything else"),
        other => other.sentence().unwrap_or_default(),
    }
}

/// Levenshtein distance, for repairing misspelled callees.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != *cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Names a plan step may call.
pub fn known_callees(lib: &SkillLibrary) -> BTreeSet<String> {
    crate::skilldsl::action_primitives().map(|p| p.name.to_string()).chain(lib.names()).collect()
}
