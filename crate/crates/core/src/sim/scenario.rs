//! Scenario documents (JSON) and the fixtures shipped with the crate.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{
    Articulation, BinaryState, Bounds, NoiseConfig, ObjectKind, ObjectState, Scene, SimError, Vec3,
    DEFAULT_GRASP_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub name: String,
    pub bounds: Bounds,
    pub home: Vec3,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub grasp_tolerance: Option<f64>,
    /// Objects restored to their starting pose before each exploration task.
    #[serde(default)]
    pub reset: Vec<String>,
    pub objects: Vec<ObjectDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub name: String,
    pub color: String,
    pub kind: ObjectKind,
    pub position: Vec3,
    pub dimensions: Vec3,
    #[serde(default)]
    pub articulation: Option<Articulation>,
    #[serde(default)]
    pub binary_state: Option<BinaryState>,
    /// Names of objects resting inside this one.
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub link: Option<String>,
}

const FIXTURES: &[(&str, &str)] = &[
    ("blocks_world", include_str!("../../fixtures/scenarios/blocks_world.json")),
    ("cup_drawer", include_str!("../../fixtures/scenarios/cup_drawer.json")),
    ("desktop_organization", include_str!("../../fixtures/scenarios/desktop_organization.json")),
    ("lamp_button", include_str!("../../fixtures/scenarios/lamp_button.json")),
    ("containers", include_str!("../../fixtures/scenarios/containers.json")),
    ("rubbish", include_str!("../../fixtures/scenarios/rubbish.json")),
    ("bookshelf", include_str!("../../fixtures/scenarios/bookshelf.json")),
    ("cupboard", include_str!("../../fixtures/scenarios/cupboard.json")),
    ("microwave", include_str!("../../fixtures/scenarios/microwave.json")),
    ("empty_table", include_str!("../../fixtures/scenarios/empty_table.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Load a built-in fixture by id, or a scenario file by path.
pub fn load_named(id_or_path: &str) -> Result<Scene, SimError> {
    if let Some(src) = builtin_source(id_or_path) {
        return load_scenario(src);
    }
    let path = Path::new(id_or_path);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Schema(e.to_string()))?;
        return load_scenario(&text);
    }
    Err(SimError::Schema(format!("unknown scenario '{id_or_path}'")))
}

pub fn load_scenario(source: &str) -> Result<Scene, SimError> {
    let doc: ScenarioDoc = serde_json::from_str(source).map_err(|e| SimError::Schema(e.to_string()))?;
    build_scene(doc)
}

pub fn build_scene(doc: ScenarioDoc) -> Result<Scene, SimError> {
    if !doc.bounds.is_well_formed() {
        return Err(SimError::Schema("bounds must satisfy min < max on every axis".into()));
    }
    doc.noise.validate()?;
    if !doc.bounds.contains(doc.home) {
        return Err(SimError::Invariant(format!("home {} is outside the bounds", doc.home)));
    }
    let tol = doc.grasp_tolerance.unwrap_or(DEFAULT_GRASP_TOLERANCE);
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SimError::Schema("grasp_tolerance must be positive".into()));
    }

    let mut seen = HashSet::new();
    for o in &doc.objects {
        if o.name.trim().is_empty() {
            return Err(SimError::Schema("object name must not be empty".into()));
        }
        if !seen.insert(o.name.clone()) {
            return Err(SimError::Schema(format!("duplicate object name '{}'", o.name)));
        }
        if o.name == super::describe::TABLE {
            return Err(SimError::Schema("'table' is reserved".into()));
        }
        if !o.position.is_finite() || !o.dimensions.is_finite() {
            return Err(SimError::Schema(format!("{} has non-finite geometry", o.name)));
        }
        if o.dimensions.x <= 0.0 || o.dimensions.y <= 0.0 || o.dimensions.z <= 0.0 {
            return Err(SimError::Schema(format!("{} must have positive dimensions", o.name)));
        }
        if !(doc.bounds.x.contains(o.position.x) && doc.bounds.y.contains(o.position.y)) {
            return Err(SimError::Invariant(format!("{} is placed outside the bounds", o.name)));
        }
        if let Some(a) = &o.articulation {
            if (a.axis.norm() - 1.0).abs() > 1e-6 {
                return Err(SimError::Schema(format!("{} articulation axis must be a unit vector", o.name)));
            }
            if a.max <= 0.0 || a.extension < 0.0 || a.extension > a.max {
                return Err(SimError::Invariant(format!("{} extension must lie in [0, max]", o.name)));
            }
        }
    }
    let mut contained: IndexMap<String, String> = IndexMap::new();
    for o in &doc.objects {
        for c in &o.contains {
            if !seen.contains(c) {
                return Err(SimError::Schema(format!("{} contains unknown object '{}'", o.name, c)));
            }
            if c == &o.name || contained.insert(c.clone(), o.name.clone()).is_some() {
                return Err(SimError::Schema(format!("'{c}' is contained more than once")));
            }
        }
        if let Some(l) = &o.link {
            if !seen.contains(l) {
                return Err(SimError::Schema(format!("{} links unknown object '{}'", o.name, l)));
            }
        }
    }
    for r in &doc.reset {
        if !seen.contains(r) {
            return Err(SimError::Schema(format!("reset lists unknown object '{r}'")));
        }
    }

    let mut objects = IndexMap::new();
    for (i, o) in doc.objects.iter().enumerate() {
        objects.insert(
            o.name.clone(),
            ObjectState {
                id: i as u32,
                name: o.name.clone(),
                color: o.color.clone(),
                kind: o.kind,
                position: o.position,
                dimensions: o.dimensions,
                support: None,
                articulation: o.articulation,
                binary_state: o.binary_state.or_else(|| {
                    matches!(o.kind, ObjectKind::Button | ObjectKind::Lamp).then_some(BinaryState { on: false })
                }),
                link: o.link.clone(),
            },
        );
    }

    let mut scene = Scene::from_parts(
        doc.name.clone(),
        doc.bounds,
        doc.home,
        tol,
        doc.noise,
        objects,
        doc.reset.clone(),
    );

    // Contained objects sit on their container's floor; everything else
    // settles bottom-up onto whatever is beneath it.
    for (name, container) in &contained {
        let floor = scene.objects[container].bottom() + 0.005;
        let o = scene.objects.get_mut(name).unwrap();
        o.position.z = floor + o.dimensions.z / 2.0;
        o.support = Some(container.clone());
    }
    let mut order: Vec<String> =
        scene.objects.keys().filter(|n| !contained.contains_key(*n)).cloned().collect();
    order.sort_by(|a, b| scene.objects[a].bottom().total_cmp(&scene.objects[b].bottom()));
    for name in &order {
        scene.settle(name);
    }
    scene.start = scene.objects.clone();
    scene.check_invariants()?;
    Ok(scene)
}
