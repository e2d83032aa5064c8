//! Rays, axis-aligned boxes, slab intersection and the s-space contraction
//! used for unbounded scenes.

use std::ops::{Add, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("ray direction must be finite and non-zero, got {0:?}")]
    BadDirection([f64; 3]),
    #[error("ray origin must be finite, got {0:?}")]
    BadOrigin([f64; 3]),
    #[error("invalid ray range [{t_near}, {t_far}]")]
    BadRange { t_near: f64, t_far: f64 },
    #[error("box min {min:?} must be strictly below max {max:?}")]
    BadBox { min: [f64; 3], max: [f64; 3] },
    #[error("{what} = {value} is outside the mapping domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("reciprocal-depth mapping needs 0 < t_near < t_far (got {t_near}, {t_far})")]
    BadMapping { t_near: f64, t_far: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec3 {
        self / self.length()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// A ray restricted to the parameter range `[t_near, t_far]`.
///
/// The direction is normalized on construction, so `t` is measured in world
/// units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Vec3,
    direction: Vec3,
    t_near: f64,
    t_far: f64,
}

impl Ray {
    pub fn new(
        origin: Vec3,
        direction: Vec3,
        t_near: f64,
        t_far: f64,
    ) -> Result<Self, GeometryError> {
        if !origin.is_finite() {
            return Err(GeometryError::BadOrigin(origin.to_array()));
        }
        let len = direction.length();
        if !direction.is_finite() || !(len > 0.0) || !len.is_finite() {
            return Err(GeometryError::BadDirection(direction.to_array()));
        }
        if !(t_near >= 0.0) || !t_far.is_finite() || !(t_far > t_near) {
            return Err(GeometryError::BadRange { t_near, t_far });
        }
        Ok(Self {
            origin,
            direction: direction / len,
            t_near,
            t_far,
        })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn t_near(&self) -> f64 {
        self.t_near
    }

    pub fn t_far(&self) -> f64 {
        self.t_far
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AabbRepr", into = "AabbRepr")]
pub struct Aabb {
    min: Vec3,
    max: Vec3,
}

#[derive(Serialize, Deserialize)]
struct AabbRepr {
    min: Vec3,
    max: Vec3,
}

impl TryFrom<AabbRepr> for Aabb {
    type Error = GeometryError;
    fn try_from(r: AabbRepr) -> Result<Self, Self::Error> {
        Aabb::new(r.min, r.max)
    }
}

impl From<Aabb> for AabbRepr {
    fn from(b: Aabb) -> Self {
        AabbRepr {
            min: b.min,
            max: b.max,
        }
    }
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        let ok =
            min.is_finite() && max.is_finite() && min.x < max.x && min.y < max.y && min.z < max.z;
        if !ok {
            return Err(GeometryError::BadBox {
                min: min.to_array(),
                max: max.to_array(),
            });
        }
        Ok(Self { min, max })
    }

    /// The cube `[-half, half]^3`.
    pub fn cube(half: f64) -> Result<Self, GeometryError> {
        Self::new(Vec3::splat(-half), Vec3::splat(half))
    }

    pub fn min(&self) -> Vec3 {
        self.min
    }

    pub fn max(&self) -> Vec3 {
        self.max
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Slab test clipped to the ray's own range. `None` when the overlap is empty
/// or degenerate.
pub fn ray_aabb_intersect(ray: &Ray, aabb: &Aabb) -> Option<(f64, f64)> {
    let mut t_enter = ray.t_near;
    let mut t_exit = ray.t_far;
    let o = ray.origin;
    let d = ray.direction;
    for axis in 0..3 {
        let (lo, hi) = (aabb.min[axis], aabb.max[axis]);
        if d[axis] == 0.0 {
            // Parallel to this slab pair: either always inside or never.
            if o[axis] < lo || o[axis] > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let t0 = (lo - o[axis]) * inv;
        let t1 = (hi - o[axis]) * inv;
        t_enter = t_enter.max(t0.min(t1));
        t_exit = t_exit.min(t0.max(t1));
    }
    (t_exit > t_enter).then_some((t_enter, t_exit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    #[default]
    Identity,
    /// Linear in inverse depth (disparity).
    ReciprocalDepth,
}

/// Strictly increasing bijection from normalized `s ∈ [0, 1]` onto
/// `[t_near, t_far]`, where `t_far` may be `+∞` for `ReciprocalDepth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionMapping {
    kind: MappingKind,
    t_near: f64,
    t_far: f64,
}

impl ContractionMapping {
    pub fn new(kind: MappingKind, t_near: f64, t_far_or_inf: f64) -> Result<Self, GeometryError> {
        let bad = || GeometryError::BadMapping {
            t_near,
            t_far: t_far_or_inf,
        };
        match kind {
            MappingKind::Identity => {
                if !(t_near.is_finite() && t_far_or_inf.is_finite() && t_far_or_inf > t_near) {
                    return Err(GeometryError::BadRange {
                        t_near,
                        t_far: t_far_or_inf,
                    });
                }
            }
            MappingKind::ReciprocalDepth => {
                if !(t_near > 0.0 && t_near.is_finite() && t_far_or_inf > t_near) {
                    return Err(bad());
                }
            }
        }
        Ok(Self {
            kind,
            t_near,
            t_far: t_far_or_inf,
        })
    }

    pub fn identity(t_near: f64, t_far: f64) -> Result<Self, GeometryError> {
        Self::new(MappingKind::Identity, t_near, t_far)
    }

    pub fn reciprocal(t_near: f64, t_far_or_inf: f64) -> Result<Self, GeometryError> {
        Self::new(MappingKind::ReciprocalDepth, t_near, t_far_or_inf)
    }

    pub fn kind(&self) -> MappingKind {
        self.kind
    }

    pub fn t_near(&self) -> f64 {
        self.t_near
    }

    pub fn t_far(&self) -> f64 {
        self.t_far
    }

    fn inv_far(&self) -> f64 {
        if self.t_far.is_infinite() {
            0.0
        } else {
            1.0 / self.t_far
        }
    }

    /// Maps `s ∈ [0, 1]` to `t`.
    pub fn contract(&self, s: f64) -> Result<f64, GeometryError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(GeometryError::Domain {
                what: "s",
                value: s,
                lo: 0.0,
                hi: 1.0,
            });
        }
        // Endpoints are returned exactly.
        if s == 0.0 {
            return Ok(self.t_near);
        }
        if s == 1.0 {
            return Ok(self.t_far);
        }
        Ok(match self.kind {
            MappingKind::Identity => self.t_near + s * (self.t_far - self.t_near),
            MappingKind::ReciprocalDepth => 1.0 / ((1.0 - s) / self.t_near + s * self.inv_far()),
        })
    }

    /// Maps `t ∈ [t_near, t_far]` back to `s`.
    pub fn uncontract(&self, t: f64) -> Result<f64, GeometryError> {
        if !(t >= self.t_near && t <= self.t_far) {
            return Err(GeometryError::Domain {
                what: "t",
                value: t,
                lo: self.t_near,
                hi: self.t_far,
            });
        }
        let s = match self.kind {
            MappingKind::Identity => (t - self.t_near) / (self.t_far - self.t_near),
            MappingKind::ReciprocalDepth => {
                let inv_near = 1.0 / self.t_near;
                let inv_t = if t.is_infinite() { 0.0 } else { 1.0 / t };
                (inv_near - inv_t) / (inv_near - self.inv_far())
            }
        };
        Ok(s.clamp(0.0, 1.0))
    }
}
