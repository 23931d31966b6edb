use serde::{Deserialize, Serialize};

use super::{ObjectKind, ObjectState, Scene};

pub const TABLE: &str = "table";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    On,
    Inside,
    LeftOf,
    RightOf,
    Behind,
    InFrontOf,
    Open,
    Closed,
    Pressed,
    OnState,
}

impl RelationKind {
    pub fn is_unary(self) -> bool {
        matches!(self, RelationKind::Open | RelationKind::Closed | RelationKind::Pressed | RelationKind::OnState)
    }

    pub fn phrase(self) -> &'static str {
        match self {
            RelationKind::On => "is on",
            RelationKind::Inside => "is inside",
            RelationKind::LeftOf => "is left of",
            RelationKind::RightOf => "is right of",
            RelationKind::Behind => "is behind",
            RelationKind::InFrontOf => "is in front of",
            RelationKind::Open => "is open",
            RelationKind::Closed => "is closed",
            RelationKind::Pressed => "is pressed",
            RelationKind::OnState => "is switched on",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub relation: RelationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

impl Relation {
    pub fn new(subject: impl Into<String>, relation: RelationKind, object: Option<&str>) -> Self {
        Relation { subject: subject.into(), relation, object: object.map(str::to_string) }
    }

    pub fn sentence(&self) -> String {
        match &self.object {
            Some(o) => format!("the {} {} the {}", self.subject, self.relation.phrase(), o),
            None => format!("the {} {}", self.subject, self.relation.phrase()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescribedObject {
    pub name: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneDescription {
    pub text: String,
    pub objects: Vec<DescribedObject>,
    pub relations: Vec<Relation>,
}

impl SceneDescription {
    pub fn has_object(&self, name: &str) -> bool {
        self.objects.iter().any(|o| o.name == name)
    }

    pub fn holds(&self, rel: &Relation) -> bool {
        self.relations.contains(rel)
    }

    pub fn relations_of<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = &'a Relation> + 'a {
        self.relations.iter().filter(move |r| r.subject == subject)
    }
}

fn separated(a: &ObjectState, b: &ObjectState) -> [(bool, RelationKind); 4] {
    let fa = a.footprint();
    let fb = b.footprint();
    [
        (fa.y.min > fb.y.max, RelationKind::LeftOf),
        (fa.y.max < fb.y.min, RelationKind::RightOf),
        (fa.x.min > fb.x.max, RelationKind::Behind),
        (fa.x.max < fb.x.min, RelationKind::InFrontOf),
    ]
}

/// Ground-truth description computed from geometry and articulation state.
/// Objects enclosed in a closed drawer are omitted.
pub fn describe(scene: &Scene) -> SceneDescription {
    let visible: Vec<&ObjectState> =
        scene.objects.values().filter(|o| scene.is_visible(&o.name)).collect();
    let held = scene.gripper.held.as_deref();
    let mut relations = Vec::new();

    for o in &visible {
        let carried = o.articulation.is_none()
            && held.map(|h| h == o.name || scene.descendants(h).contains(&o.name)).unwrap_or(false);
        if !(carried && Some(o.name.as_str()) == held) {
            match &o.support {
                Some(s) => {
                    let kind = if scene.is_inside(&o.name).is_some() { RelationKind::Inside } else { RelationKind::On };
                    relations.push(Relation::new(o.name.clone(), kind, Some(s)));
                }
                None if !carried => relations.push(Relation::new(o.name.clone(), RelationKind::On, Some(TABLE))),
                None => {}
            }
        }
        if let Some(a) = &o.articulation {
            let kind = if a.is_open() { RelationKind::Open } else { RelationKind::Closed };
            relations.push(Relation::new(o.name.clone(), kind, None));
        }
        if let Some(b) = &o.binary_state {
            if b.on {
                let kind = if o.kind == ObjectKind::Button { RelationKind::Pressed } else { RelationKind::OnState };
                relations.push(Relation::new(o.name.clone(), kind, None));
            }
        }
    }

    for a in &visible {
        for b in &visible {
            if a.name == b.name {
                continue;
            }
            for (holds, kind) in separated(a, b) {
                if holds {
                    relations.push(Relation::new(a.name.clone(), kind, Some(&b.name)));
                }
            }
        }
    }

    let objects: Vec<DescribedObject> = visible
        .iter()
        .map(|o| DescribedObject { name: o.name.clone(), color: o.color.clone() })
        .collect();

    let mut text = if objects.is_empty() {
        "The table is empty.".to_string()
    } else {
        let names: Vec<String> = objects
            .iter()
            .map(|o| {
                let phrase = if o.name.split_whitespace().any(|w| w == o.color) || o.color.is_empty() {
                    o.name.clone()
                } else {
                    format!("{} {}", o.color, o.name)
                };
                let article = if phrase.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
                format!("{article} {phrase}")
            })
            .collect();
        format!("On the table there {} {}.", if names.len() == 1 { "is" } else { "are" }, names.join(", "))
    };
    for r in relations.iter().filter(|r| {
        !matches!(r.relation, RelationKind::LeftOf | RelationKind::RightOf | RelationKind::Behind | RelationKind::InFrontOf)
            && r.object.as_deref() != Some(TABLE)
    }) {
        let s = r.sentence();
        let mut chars = s.chars();
        let first = chars.next().map(|c| c.to_ascii_uppercase()).unwrap_or(' ');
        text.push(' ');
        text.push(first);
        text.push_str(chars.as_str());
        text.push('.');
    }
    if let Some(h) = held {
        if scene.is_visible(h) {
            text.push_str(&format!(" The robot is holding the {h}."));
        }
    }

    SceneDescription { text, objects, relations }
}
