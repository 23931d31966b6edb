//! Task and plan records exchanged with the oracle, in the JSON shapes the
//! prompts ask for.

use serde::{Deserialize, Serialize};

use crate::sim::{Relation, RelationKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(rename = "Task Name", alias = "Task name")]
    pub name: String,
    #[serde(rename = "Objects", default)]
    pub objects: Vec<String>,
    #[serde(rename = "Task Description", alias = "Task description", default)]
    pub description: String,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, objects: &[&str], description: impl Into<String>) -> Self {
        TaskSpec {
            name: name.into(),
            objects: objects.iter().map(|s| s.to_string()).collect(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    #[serde(rename = "Name")]
    pub name: String,
    #[serde(rename = "Explanation", default)]
    pub explanation: String,
    #[serde(rename = "Code")]
    pub code: String,
}

impl PlanStep {
    pub fn new(name: impl Into<String>, explanation: impl Into<String>, code: impl Into<String>) -> Self {
        PlanStep { name: name.into(), explanation: explanation.into(), code: code.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn new(steps: Vec<PlanStep>) -> Self {
        Plan { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Indices whose code differs between two plans of equal length, or
    /// `None` when anything other than code fields changed.
    pub fn code_diff(&self, other: &Plan) -> Option<Vec<usize>> {
        if self.steps.len() != other.steps.len() {
            return None;
        }
        let mut changed = Vec::new();
        for (i, (a, b)) in self.steps.iter().zip(&other.steps).enumerate() {
            if a.name != b.name || a.explanation != b.explanation {
                return None;
            }
            if a.code != b.code {
                changed.push(i);
            }
        }
        Some(changed)
    }
}

/// Compile a relation sentence such as "the cup is on the table".
/// `Some(None)` means the sentence demands nothing ("none"); `None` means
/// it is outside the relation vocabulary.
pub fn parse_condition(text: &str) -> Option<Option<Relation>> {
    let t = text.trim().trim_end_matches('.').trim().to_lowercase();
    if t.is_empty() || t == "none" || t == "nothing" {
        return Some(None);
    }
    let noun = |s: &str| {
        let s = s.trim();
        s.strip_prefix("the ").unwrap_or(s).trim().to_string()
    };
    let (subject, rest) = t.split_once(" is ")?;
    let subject = noun(subject);
    if subject.is_empty() {
        return None;
    }
    let unary = |k: RelationKind| Some(Some(Relation::new(subject.clone(), k, None)));
    match rest.trim() {
        "open" => return unary(RelationKind::Open),
        "closed" => return unary(RelationKind::Closed),
        "pressed" => return unary(RelationKind::Pressed),
        "switched on" | "on" => return unary(RelationKind::OnState),
        _ => {}
    }
    let binary = [
        ("inside ", RelationKind::Inside),
        ("in ", RelationKind::Inside),
        ("on top of ", RelationKind::On),
        ("on ", RelationKind::On),
        ("left of ", RelationKind::LeftOf),
        ("right of ", RelationKind::RightOf),
        ("behind ", RelationKind::Behind),
        ("in front of ", RelationKind::InFrontOf),
    ];
    let rest = rest.trim();
    let rest = rest.strip_prefix("to the ").unwrap_or(rest);
    for (prefix, kind) in binary {
        if let Some(obj) = rest.strip_prefix(prefix) {
            let obj = noun(obj);
            if obj.is_empty() || obj.contains(' ') && obj.split(' ').count() > 3 {
                return None;
            }
            return Some(Some(Relation::new(subject, kind, Some(&obj))));
        }
    }
    None
}
