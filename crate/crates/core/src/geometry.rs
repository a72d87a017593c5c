//! Directions on the unit sphere, spherical caps around an analyzer axis and
//! the smearing laws that pick a microscopic direction inside a cap.
//!
//! A cap with parameter `epsilon` around `axis` is the set of unit vectors `d`
//! with `1 - d·axis <= epsilon`. `epsilon = 0` is the single point `{axis}`,
//! `epsilon = 2` is the whole sphere.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Construction rejects vectors shorter than this.
pub const MIN_NORM: f64 = 1e-9;
/// Maximum deviation of `|d|` from one accepted by the angle functions.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A unit vector in three dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    pub const X: Direction = Direction { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Direction = Direction { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Direction = Direction { x: 0.0, y: 0.0, z: 1.0 };

    /// Normalizes `(x, y, z)`; vectors with norm below [`MIN_NORM`] (or
    /// non-finite components) are rejected instead of being silently fixed.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < MIN_NORM {
            return Err(Error::InvalidDirection { norm });
        }
        if norm == 1.0 {
            return Ok(Direction { x, y, z });
        }
        Ok(Direction {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Takes the components as given. The angle functions still check the
    /// norm, so a bad value here surfaces as [`Error::InvalidDirection`].
    pub const fn from_components_unchecked(x: f64, y: f64, z: f64) -> Self {
        Direction { x, y, z }
    }

    /// Polar angle `theta` from +z, azimuth `phi` from +x.
    pub fn from_spherical(theta: f64, phi: f64) -> Result<Self> {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Direction::new(st * cp, st * sp, ct)
    }

    /// Direction at `angle` from +z, rotated towards +x (the x–z plane).
    pub fn planar(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Direction { x: s, y: 0.0, z: c }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn neg(&self) -> Direction {
        Direction {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    fn cross(&self, o: &Direction) -> [f64; 3] {
        [
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        ]
    }

    /// Two unit vectors `(e1, e2)` such that `(e1, e2, self)` is orthonormal.
    pub fn tangent_basis(&self) -> (Direction, Direction) {
        let helper = if self.x.abs() < 0.9 {
            Direction::X
        } else {
            Direction::Y
        };
        let [a, b, c] = self.cross(&helper);
        let e1 = Direction::new(a, b, c).expect("helper is not parallel to self");
        let [a, b, c] = self.cross(&e1);
        (e1, Direction::from_components_unchecked(a, b, c))
    }

    /// Rotation by `angle` about `axis` (right-handed, Rodrigues formula).
    pub fn rotated(&self, axis: &Direction, angle: f64) -> Direction {
        let (s, c) = angle.sin_cos();
        let k = axis;
        let kxv = k.cross(self);
        let kdv = k.dot(self);
        let x = self.x * c + kxv[0] * s + k.x * kdv * (1.0 - c);
        let y = self.y * c + kxv[1] * s + k.y * kdv * (1.0 - c);
        let z = self.z * c + kxv[2] * s + k.z * kdv * (1.0 - c);
        Direction::new(x, y, z).expect("rotation preserves norm")
    }

    fn check_unit(&self) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
            return Err(Error::InvalidDirection { norm });
        }
        Ok(())
    }
}

/// Dot product of two validated unit vectors, clamped to `[-1, 1]`.
pub fn clamped_cosine(a: &Direction, b: &Direction) -> Result<f64> {
    a.check_unit()?;
    b.check_unit()?;
    Ok(a.dot(b).clamp(-1.0, 1.0))
}

/// Angle between two unit vectors, in `[0, π]`.
pub fn angle_between(a: &Direction, b: &Direction) -> Result<f64> {
    Ok(clamped_cosine(a, b)?.acos())
}

/// Uniform direction on the whole sphere.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(rng: &mut R) -> Direction {
    sample_in_cap(&Direction::Z, 2.0, rng)
}

fn sample_in_cap<R: Rng + ?Sized>(axis: &Direction, epsilon: f64, rng: &mut R) -> Direction {
    // cos(polar) uniform on (1 - eps, 1]: area-uniform on the cap (Archimedes).
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    if epsilon == 0.0 {
        return *axis;
    }
    let cos_t = 1.0 - epsilon * u;
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let (sp, cp) = (TAU * v).sin_cos();
    let (e1, e2) = axis.tangent_basis();
    let x = cos_t * axis.x + sin_t * (cp * e1.x + sp * e2.x);
    let y = cos_t * axis.y + sin_t * (cp * e1.y + sp * e2.y);
    let z = cos_t * axis.z + sin_t * (cp * e1.z + sp * e2.z);
    Direction::new(x, y, z).expect("cap sample has unit norm")
}

/// The set `{d : 1 - d·axis <= epsilon}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapRegion {
    axis: Direction,
    epsilon: f64,
}

impl CapRegion {
    pub fn new(axis: Direction, epsilon: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&epsilon) {
            return Err(Error::domain("epsilon", epsilon, "0 <= epsilon <= 2"));
        }
        Ok(CapRegion { axis, epsilon })
    }

    pub fn axis(&self) -> Direction {
        self.axis
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn contains(&self, d: &Direction) -> bool {
        1.0 - d.dot(&self.axis) <= self.epsilon
    }

    /// Polar half-angle of the cap, `acos(1 - epsilon)`.
    pub fn half_angle(&self) -> f64 {
        (1.0 - self.epsilon).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SmearingKind {
    /// Always the cap axis.
    Delta,
    /// Uniform by surface area over the cap.
    #[default]
    UniformCap,
}

impl fmt::Display for SmearingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmearingKind::Delta => f.write_str("delta"),
            SmearingKind::UniformCap => f.write_str("uniform-cap"),
        }
    }
}

/// Law of the microscopic analyzer direction inside its cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmearingDistribution {
    kind: SmearingKind,
    cap: CapRegion,
}

impl SmearingDistribution {
    pub fn new(kind: SmearingKind, cap: CapRegion) -> Self {
        SmearingDistribution { kind, cap }
    }

    pub fn delta(axis: Direction) -> Self {
        SmearingDistribution {
            kind: SmearingKind::Delta,
            cap: CapRegion { axis, epsilon: 0.0 },
        }
    }

    pub fn uniform_cap(axis: Direction, epsilon: f64) -> Result<Self> {
        Ok(SmearingDistribution {
            kind: SmearingKind::UniformCap,
            cap: CapRegion::new(axis, epsilon)?,
        })
    }

    pub fn kind(&self) -> SmearingKind {
        self.kind
    }

    pub fn cap(&self) -> &CapRegion {
        &self.cap
    }

    /// True when every sample is the axis itself.
    pub fn is_sharp(&self) -> bool {
        self.kind == SmearingKind::Delta || self.cap.epsilon == 0.0
    }

    /// Mean of `d·axis` under this law.
    pub fn mean_projection(&self) -> f64 {
        match self.kind {
            SmearingKind::Delta => 1.0,
            SmearingKind::UniformCap => 1.0 - self.cap.epsilon / 2.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Direction {
        sample_direction(self, rng)
    }
}

/// Draws one microscopic direction from `dist`.
///
/// Delta laws return the axis without touching the stream.
pub fn sample_direction<R: Rng + ?Sized>(dist: &SmearingDistribution, rng: &mut R) -> Direction {
    match dist.kind {
        SmearingKind::Delta => dist.cap.axis,
        SmearingKind::UniformCap => sample_in_cap(&dist.cap.axis, dist.cap.epsilon, rng),
    }
}

/// Mean projection `κ(ε) = 1 - ε/2` of a uniform-cap sample on its axis.
///
/// Both the singlet correlation and the joint detection density are affine in
/// `cos θ_ab`, so averaging them over two independent uniform caps only
/// replaces `cos Θ_AB` by `κ_A κ_B cos Θ_AB`.
pub fn cap_mean_projection(epsilon: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&epsilon) {
        return Err(Error::domain("epsilon", epsilon, "0 <= epsilon <= 2"));
    }
    Ok(1.0 - epsilon / 2.0)
}

/// An angle read from a config file: a bare number is radians, a string may
/// carry a `deg` or `rad` suffix (`"45deg"`, `"0.5 rad"`) or name `pi`
/// multiples (`"pi/4"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Angle(pub f64);

impl Angle {
    pub fn radians(&self) -> f64 {
        self.0
    }
}

impl FromStr for Angle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::Config(format!("cannot parse angle `{s}`"));
        if let Some(v) = t.strip_suffix("deg") {
            let deg: f64 = v.trim().parse().map_err(|_| bad())?;
            return Ok(Angle(deg.to_radians()));
        }
        let t = t.strip_suffix("rad").map(str::trim).unwrap_or(t);
        if let Ok(v) = t.parse::<f64>() {
            return Ok(Angle(v));
        }
        // k*pi/m forms
        let (num, den) = match t.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim().parse::<f64>().map_err(|_| bad())?),
            None => (t, 1.0),
        };
        let factor = match num {
            "pi" => 1.0,
            _ => {
                let k = num
                    .strip_suffix("pi")
                    .map(|k| k.trim().trim_end_matches('*').trim())
                    .ok_or_else(bad)?;
                k.parse::<f64>().map_err(|_| bad())?
            }
        };
        Ok(Angle(factor * PI / den))
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Angle(v)),
            Raw::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

impl Serialize for Direction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(3)?;
        t.serialize_element(&self.x)?;
        t.serialize_element(&self.y)?;
        t.serialize_element(&self.z)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Triple([f64; 3]),
            Spherical(Spherical),
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Spherical {
            theta: Angle,
            #[serde(default = "zero_angle")]
            phi: Angle,
        }
        fn zero_angle() -> Angle {
            Angle(0.0)
        }
        let raw = Raw::deserialize(deserializer).map_err(|_| {
            de::Error::custom("direction must be [x, y, z] or {\"theta\": .., \"phi\": ..}")
        })?;
        match raw {
            Raw::Triple([x, y, z]) => Direction::new(x, y, z),
            Raw::Spherical(s) => Direction::from_spherical(s.theta.0, s.phi.0),
        }
        .map_err(de::Error::custom)
    }
}
