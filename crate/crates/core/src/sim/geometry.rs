use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or displacement in the table frame, in meters.
///
/// `x` grows away from the robot base, `y` grows to the robot's left and `z`
/// grows upward from the table surface.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(*self).sqrt()
    }

    pub fn horizontal_distance(&self, other: Vec3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        match index {
            0 => Some(self.x),
            1 => Some(self.y),
            2 => Some(self.z),
            _ => None,
        }
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn zip(self, other: Vec3, f: impl Fn(f64, f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x, other.x), f(self.y, other.y), f(self.z, other.z))
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        self.map(|a| a * rhs)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, rhs: f64) -> Vec3 {
        self.map(|a| a / rhs)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self.map(|a| -a)
    }
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.min, i.max]
    }
}

/// The robot's reachable working volume, `[[xmin, xmax], [ymin, ymax], [zmin, zmax]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[Interval; 3]", into = "[Interval; 3]")]
pub struct Bounds {
    pub x: Interval,
    pub y: Interval,
    pub z: Interval,
}

impl Bounds {
    /// Working volume of the UR5 tabletop rig.
    pub const UR5: Bounds = Bounds {
        x: Interval::new(0.25, 0.75),
        y: Interval::new(-0.5, 0.5),
        z: Interval::new(0.0, 0.28),
    };

    pub fn axis(&self, index: usize) -> Option<Interval> {
        match index {
            0 => Some(self.x),
            1 => Some(self.y),
            2 => Some(self.z),
            _ => None,
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.x.contains(p.x) && self.y.contains(p.y) && self.z.contains(p.z)
    }

    pub fn is_well_formed(&self) -> bool {
        [self.x, self.y, self.z]
            .iter()
            .all(|i| i.min.is_finite() && i.max.is_finite() && i.min < i.max)
    }
}

impl From<[Interval; 3]> for Bounds {
    fn from(v: [Interval; 3]) -> Self {
        Bounds { x: v[0], y: v[1], z: v[2] }
    }
}

impl From<Bounds> for [Interval; 3] {
    fn from(b: Bounds) -> Self {
        [b.x, b.y, b.z]
    }
}

/// Axis-aligned rectangle on the table plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub x: Interval,
    pub y: Interval,
}

impl Footprint {
    pub fn centered(center: Vec3, dimensions: Vec3) -> Self {
        Footprint {
            x: Interval::new(center.x - dimensions.x / 2.0, center.x + dimensions.x / 2.0),
            y: Interval::new(center.y - dimensions.y / 2.0, center.y + dimensions.y / 2.0),
        }
    }

    /// Strictly positive-area intersection.
    pub fn overlaps(&self, other: &Footprint) -> bool {
        self.x.min < other.x.max
            && other.x.min < self.x.max
            && self.y.min < other.y.max
            && other.y.min < self.y.max
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        self.x.contains(x) && self.y.contains(y)
    }
}
