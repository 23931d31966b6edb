//! Deterministic kinematic tabletop simulator.
//!
//! The simulator exposes the robot's primitive action surface (`movep`,
//! `close_gripper`, `open_gripper`, `get_obj_position`, `get_obj_dimensions`,
//! `go_home`) over a quasi-static world: objects only move when carried,
//! settle straight down when released, and drawers slide along a single
//! prismatic joint. All randomness comes from a seeded generator owned by the
//! [`Scene`].

mod describe;
mod geometry;
pub mod scenario;

pub use describe::{describe, DescribedObject, Relation, RelationKind, SceneDescription, TABLE};
pub use geometry::{Bounds, Footprint, Interval, Vec3};
pub use scenario::{load_scenario, ScenarioDoc};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of the maximum extension at which a drawer counts as open.
pub const OPEN_FRACTION: f64 = 0.8;
/// Default horizontal and vertical grasp tolerance in meters.
pub const DEFAULT_GRASP_TOLERANCE: f64 = 0.01;
/// A held object must rise this far above the surface it was grasped from
/// before it can be carried sideways.
pub const LIFT_CLEARANCE: f64 = 0.005;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("target {0} is outside the working bounds")]
    OutOfBounds(Vec3),
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("gripper is already closed")]
    AlreadyClosed,
    #[error("scenario schema error: {0}")]
    Schema(String),
    #[error("scenario invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Block,
    Container,
    Rubbish,
    Cup,
    Button,
    Lamp,
    DrawerUnit,
    Shelf,
    FixedSurface,
}

impl ObjectKind {
    /// Kinds a suction gripper can pick up.
    pub fn is_graspable(self) -> bool {
        matches!(self, ObjectKind::Block | ObjectKind::Rubbish | ObjectKind::Cup | ObjectKind::DrawerUnit)
    }

    /// Kinds whose interior receives released objects.
    pub fn is_receptacle(self) -> bool {
        matches!(self, ObjectKind::Container | ObjectKind::DrawerUnit)
    }
}

/// Single prismatic joint, e.g. a sliding drawer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Articulation {
    /// Unit opening direction.
    pub axis: Vec3,
    pub extension: f64,
    pub max: f64,
    /// Handle location relative to the object's center.
    pub handle_offset: Vec3,
}

impl Articulation {
    pub fn fraction(&self) -> f64 {
        if self.max <= 0.0 {
            0.0
        } else {
            self.extension / self.max
        }
    }

    pub fn is_open(&self) -> bool {
        self.fraction() >= OPEN_FRACTION
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryState {
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: u32,
    pub name: String,
    pub color: String,
    pub kind: ObjectKind,
    /// Geometric center.
    pub position: Vec3,
    /// (width along x, depth along y, height along z).
    pub dimensions: Vec3,
    /// Object directly beneath; `None` means the table (or held).
    pub support: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<Articulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_state: Option<BinaryState>,
    /// A button toggles the lamp named here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
}

impl ObjectState {
    pub fn top(&self) -> f64 {
        self.position.z + self.dimensions.z / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.position.z - self.dimensions.z / 2.0
    }

    pub fn footprint(&self) -> Footprint {
        Footprint::centered(self.position, self.dimensions)
    }

    /// Point a suction cup attaches to: the handle for articulated objects,
    /// the top face center otherwise.
    pub fn grasp_point(&self) -> Vec3 {
        match &self.articulation {
            Some(a) => self.position + a.handle_offset,
            None => Vec3::new(self.position.x, self.position.y, self.top()),
        }
    }

    pub fn is_open(&self) -> bool {
        self.articulation.map(|a| a.is_open()).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GripperState {
    pub position: Vec3,
    pub closed: bool,
    pub held: Option<String>,
    /// Gripper position minus held object center at grasp time.
    #[serde(default)]
    pub grasp_offset: Vec3,
    /// Bottom height of the held object when it was picked up.
    #[serde(default)]
    pub grasp_surface: f64,
    /// The current hold will let go during the next sideways motion.
    #[serde(default)]
    pub slipping: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default)]
    pub grasp_slip_prob: f64,
    #[serde(default)]
    pub step_fail_prob: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for (label, p) in [("grasp_slip_prob", self.grasp_slip_prob), ("step_fail_prob", self.step_fail_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Schema(format!("{label} = {p} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Objects and gripper, without the random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub objects: IndexMap<String, ObjectState>,
    pub gripper: GripperState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub scenario: String,
    pub bounds: Bounds,
    pub home: Vec3,
    pub grasp_tolerance: f64,
    pub noise: NoiseConfig,
    pub objects: IndexMap<String, ObjectState>,
    pub gripper: GripperState,
    pub step_count: u64,
    pub seed: u64,
    pub rng_draws: u64,
    /// Objects returned to their starting pose before each exploration task.
    #[serde(default)]
    pub reset: Vec<String>,
    #[serde(default)]
    pub start: IndexMap<String, ObjectState>,
    #[serde(skip, default = "default_rng")]
    rng: ChaCha8Rng,
}

fn default_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.to_json() == other.to_json()
    }
}

impl Scene {
    pub(crate) fn from_parts(
        scenario: String,
        bounds: Bounds,
        home: Vec3,
        grasp_tolerance: f64,
        noise: NoiseConfig,
        objects: IndexMap<String, ObjectState>,
        reset: Vec<String>,
    ) -> Self {
        let start = objects.clone();
        Scene {
            scenario,
            bounds,
            home,
            grasp_tolerance,
            noise,
            objects,
            gripper: GripperState { position: home, ..Default::default() },
            step_count: 0,
            seed: 0,
            rng_draws: 0,
            reset,
            start,
            rng: default_rng(),
        }
    }

    /// Reseed the scene's random stream.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng_draws = 0;
        self
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = noise;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }

    pub fn state(&self) -> SceneState {
        SceneState { objects: self.objects.clone(), gripper: self.gripper.clone() }
    }

    /// Restore objects and gripper; the random stream keeps advancing.
    pub fn restore(&mut self, state: &SceneState) {
        self.objects = state.objects.clone();
        self.gripper = state.gripper.clone();
    }

    /// Return the scenario's reset objects to their starting poses and park
    /// the gripper at home, empty and open.
    pub fn reset_for_task(&mut self) {
        for name in &self.reset {
            if let Some(start) = self.start.get(name) {
                self.objects.insert(name.clone(), start.clone());
            }
        }
        self.gripper = GripperState { position: self.home, ..Default::default() };
    }

    fn draw(&mut self) -> f64 {
        self.rng_draws += 1;
        self.rng.gen::<f64>()
    }

    /// Bernoulli draw for a per-step exogenous fault.
    pub fn draw_step_fault(&mut self) -> bool {
        let p = self.noise.step_fail_prob;
        let u = self.draw();
        u < p
    }

    pub fn object(&self, name: &str) -> Option<&ObjectState> {
        self.objects.get(name)
    }

    /// Objects directly resting on or in `name`.
    pub fn children(&self, name: &str) -> Vec<String> {
        self.objects
            .values()
            .filter(|o| o.support.as_deref() == Some(name))
            .map(|o| o.name.clone())
            .collect()
    }

    /// Every object whose support chain passes through `name`.
    pub fn descendants(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut frontier = vec![name.to_string()];
        while let Some(cur) = frontier.pop() {
            for child in self.children(&cur) {
                if !out.contains(&child) && child != name {
                    out.push(child.clone());
                    frontier.push(child);
                }
            }
        }
        out
    }

    /// Whether `name` rests on the floor of a receptacle (rather than on top of it).
    pub fn is_inside(&self, name: &str) -> Option<&str> {
        let obj = self.objects.get(name)?;
        let support = self.objects.get(obj.support.as_deref()?)?;
        if support.kind.is_receptacle() && obj.bottom() < support.top() - EPS {
            Some(support.name.as_str())
        } else {
            None
        }
    }

    /// Hidden objects sit (transitively) inside a drawer that is not open.
    pub fn is_visible(&self, name: &str) -> bool {
        let mut cur = name.to_string();
        let mut guard = 0;
        while let Some(container) = self.is_inside(&cur) {
            let c = &self.objects[container];
            if c.kind == ObjectKind::DrawerUnit && !c.is_open() {
                return false;
            }
            cur = container.to_string();
            guard += 1;
            if guard > self.objects.len() {
                break;
            }
        }
        true
    }

    fn visible_object(&self, name: &str) -> Result<&ObjectState, SimError> {
        match self.objects.get(name) {
            Some(o) if self.is_visible(name) => Ok(o),
            _ => Err(SimError::UnknownObject(name.to_string())),
        }
    }

    // ---- primitive actions ----

    pub fn movep(&mut self, target: Vec3) -> Result<(), SimError> {
        if !target.is_finite() || !self.bounds.contains(target) {
            return Err(SimError::OutOfBounds(target));
        }
        self.step_count += 1;
        self.move_to(target);
        Ok(())
    }

    fn move_to(&mut self, target: Vec3) {
        let start = self.gripper.position;
        let delta = target - start;
        let Some(held) = self.gripper.held.clone() else {
            self.gripper.position = target;
            if delta.z < 0.0 {
                self.press_contact();
            }
            return;
        };

        if let Some(art) = self.objects[&held].articulation {
            let along = delta.dot(art.axis);
            let new_ext = (art.extension + along).clamp(0.0, art.max);
            let shift = art.axis * (new_ext - art.extension);
            self.translate_with_descendants(&held, shift);
            if let Some(a) = self.objects.get_mut(&held).and_then(|o| o.articulation.as_mut()) {
                a.extension = new_ext;
            }
            self.gripper.position = self.objects[&held].grasp_point();
            return;
        }

        let sideways = (delta.x.abs() + delta.y.abs()) > EPS;
        if sideways {
            let lifted = self.objects[&held].bottom() > self.gripper.grasp_surface + LIFT_CLEARANCE;
            if !lifted {
                // Dragged along its support: the suction seal breaks.
                self.gripper.held = None;
                self.gripper.slipping = false;
                self.gripper.position = target;
                return;
            }
            if self.gripper.slipping {
                let mid = start + delta * 0.5;
                self.carry_held_to(&held, mid);
                self.gripper.held = None;
                self.gripper.slipping = false;
                self.settle(&held);
                self.gripper.position = target;
                return;
            }
        }
        self.carry_held_to(&held, target);
    }

    fn carry_held_to(&mut self, held: &str, gripper_target: Vec3) {
        let desired = gripper_target - self.gripper.grasp_offset;
        let shift = desired - self.objects[held].position;
        self.translate_with_descendants(held, shift);
        self.gripper.position = gripper_target;
    }

    fn translate_with_descendants(&mut self, name: &str, shift: Vec3) {
        let mut moved = self.descendants(name);
        moved.push(name.to_string());
        for n in moved {
            if let Some(o) = self.objects.get_mut(&n) {
                o.position = o.position + shift;
            }
        }
    }

    pub fn close_gripper(&mut self) -> Result<(), SimError> {
        if self.gripper.closed {
            return Err(SimError::AlreadyClosed);
        }
        self.step_count += 1;
        self.gripper.closed = true;
        let g = self.gripper.position;
        let tol = self.grasp_tolerance;
        let candidate = self
            .objects
            .values()
            .filter(|o| o.kind.is_graspable() && self.is_visible(&o.name))
            .filter(|o| {
                let gp = o.grasp_point();
                if g.horizontal_distance(gp) > tol {
                    return false;
                }
                if o.articulation.is_some() {
                    (g.z - gp.z).abs() <= tol
                } else {
                    g.z >= o.position.z - tol && g.z <= o.top() + tol
                }
            })
            .min_by(|a, b| {
                let da = (a.grasp_point() - g).norm();
                let db = (b.grasp_point() - g).norm();
                da.total_cmp(&db).then_with(|| a.name.cmp(&b.name))
            })
            .map(|o| o.name.clone());

        if let Some(name) = candidate {
            let obj = &self.objects[&name];
            self.gripper.grasp_offset = g - obj.position;
            self.gripper.grasp_surface = obj.bottom();
            self.gripper.held = Some(name.clone());
            let slip_p = self.noise.grasp_slip_prob;
            let u = self.draw();
            let articulated = self.objects[&name].articulation.is_some();
            self.gripper.slipping = !articulated && u < slip_p;
            if !articulated {
                self.objects.get_mut(&name).unwrap().support = None;
            }
        }
        Ok(())
    }

    pub fn open_gripper(&mut self) {
        self.step_count += 1;
        self.gripper.closed = false;
        self.gripper.slipping = false;
        if let Some(held) = self.gripper.held.take() {
            if self.objects[&held].articulation.is_none() {
                self.settle(&held);
            }
        }
    }

    pub fn get_obj_position(&self, name: &str) -> Result<Vec3, SimError> {
        self.visible_object(name).map(|o| o.position)
    }

    pub fn get_obj_dimensions(&self, name: &str) -> Result<Vec3, SimError> {
        self.visible_object(name).map(|o| o.dimensions)
    }

    /// Extension fraction for articulated objects, 1/0 for binary state, 0 otherwise.
    pub fn get_obj_state(&self, name: &str) -> Result<f64, SimError> {
        let o = self.visible_object(name)?;
        Ok(match (&o.articulation, &o.binary_state) {
            (Some(a), _) => a.fraction(),
            (None, Some(b)) => f64::from(u8::from(b.on)),
            _ => 0.0,
        })
    }

    pub fn go_home(&mut self) {
        self.step_count += 1;
        let home = self.home;
        self.move_to(home);
    }

    /// Toggle a button whose top face is within tolerance of the gripper.
    pub fn press_contact(&mut self) {
        if self.gripper.held.is_some() {
            return;
        }
        let g = self.gripper.position;
        let tol = self.grasp_tolerance;
        let button = self
            .objects
            .values()
            .filter(|o| o.kind == ObjectKind::Button)
            .find(|o| {
                let top = Vec3::new(o.position.x, o.position.y, o.top());
                g.horizontal_distance(top) <= o.dimensions.x.max(o.dimensions.y) / 2.0 + tol
                    && (g.z - top.z).abs() <= tol
            })
            .map(|o| (o.name.clone(), o.link.clone()));
        let Some((name, link)) = button else { return };
        let pressed = {
            let b = self.objects.get_mut(&name).unwrap();
            let state = b.binary_state.get_or_insert_with(BinaryState::default);
            state.on = !state.on;
            state.on
        };
        if let Some(lamp) = link.and_then(|l| self.objects.get_mut(&l)) {
            lamp.binary_state = Some(BinaryState { on: pressed });
        }
    }

    /// Drop `name` (with everything on it) straight down onto the highest
    /// surface under its footprint, or the table.
    pub(crate) fn settle(&mut self, name: &str) {
        let obj = self.objects[name].clone();
        let fp = obj.footprint();
        let mut excluded = self.descendants(name);
        excluded.push(name.to_string());

        let mut best: Option<(f64, String)> = None;
        for other in self.objects.values() {
            if excluded.contains(&other.name) || Some(&other.name) == self.gripper.held.as_ref() {
                continue;
            }
            let ofp = other.footprint();
            // Only things level with or beneath the released object can catch it.
            if !fp.overlaps(&ofp) || other.bottom() >= obj.position.z {
                continue;
            }
            let receives_inside = match other.kind {
                ObjectKind::Container => true,
                ObjectKind::DrawerUnit => other.is_open(),
                _ => false,
            } && ofp.contains_point(obj.position.x, obj.position.y);
            let surface = if receives_inside { other.bottom() + 0.005 } else { other.top() };
            // Receptacle contents are accounted for by their own tops.
            let better = match &best {
                None => true,
                Some((z, n)) => surface > *z + EPS || ((surface - *z).abs() <= EPS && other.name < *n),
            };
            if better {
                best = Some((surface, other.name.clone()));
            }
        }

        let (surface, support) = match best {
            Some((z, n)) if z > 0.0 => (z, Some(n)),
            _ => (0.0, None),
        };
        let mut target = obj.position;
        target.z = surface + obj.dimensions.z / 2.0;
        target.x = target.x.clamp(self.bounds.x.min, self.bounds.x.max);
        target.y = target.y.clamp(self.bounds.y.min, self.bounds.y.max);
        let shift = target - obj.position;
        self.translate_with_descendants(name, shift);
        self.objects.get_mut(name).unwrap().support = support;
    }

    /// Check structural invariants; used by scenario loading and tests.
    pub fn check_invariants(&self) -> Result<(), SimError> {
        for o in self.objects.values() {
            if !o.position.is_finite() || !o.dimensions.is_finite() {
                return Err(SimError::Invariant(format!("{} has a non-finite pose", o.name)));
            }
            if let Some(a) = &o.articulation {
                if a.extension < -EPS || a.extension > a.max + EPS {
                    return Err(SimError::Invariant(format!("{} extension out of range", o.name)));
                }
            }
            let held = self.gripper.held.as_deref() == Some(o.name.as_str());
            let carried = self
                .gripper
                .held
                .as_ref()
                .map(|h| self.descendants(h).contains(&o.name))
                .unwrap_or(false);
            if !held && !carried {
                let p = o.position;
                let b = &self.bounds;
                if !(b.x.contains(p.x) && b.y.contains(p.y)) {
                    return Err(SimError::Invariant(format!("{} rests outside the bounds", o.name)));
                }
            }
            // support chain must terminate at the table
            let mut cur = o.support.clone();
            let mut hops = 0;
            while let Some(s) = cur {
                hops += 1;
                if hops > self.objects.len() {
                    return Err(SimError::Invariant(format!("support cycle through {}", o.name)));
                }
                let Some(next) = self.objects.get(&s) else {
                    return Err(SimError::Invariant(format!("{} rests on unknown {}", o.name, s)));
                };
                cur = next.support.clone();
            }
        }
        if self.gripper.held.is_some() && !self.gripper.closed {
            return Err(SimError::Invariant("holding with an open gripper".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
