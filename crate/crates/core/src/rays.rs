//! Ray parametrizations and the hit-point / signed-displacement algebra.
//!
//! A ray `(p, d)` and any of its aliases `(p + λd, d)` describe the same
//! oriented line. The perpendicular foot `f = d × (p × d)` is the line's
//! closest point to the world origin and is identical for every alias, so a
//! network fed `(f, d)` cannot see the alias. A hit point then needs one
//! scalar: `h = s·d + f`.

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Tolerance on `‖d‖ - 1` before a direction is rejected rather than renormalized.
pub const UNIT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `dir`. Panics on a zero direction.
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        let n = dir.norm();
        assert!(n > 0.0, "ray direction must be non-zero");
        Self {
            origin,
            dir: dir / n,
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EncodingMode {
    #[default]
    PerpFoot,
    Plucker,
    Raw,
}

impl EncodingMode {
    pub const ALL: [EncodingMode; 3] = [
        EncodingMode::PerpFoot,
        EncodingMode::Plucker,
        EncodingMode::Raw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncodingMode::PerpFoot => "perp_foot",
            EncodingMode::Plucker => "plucker",
            EncodingMode::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub(crate) fn check(self, got: EncodingMode) -> Result<()> {
        if self == got {
            Ok(())
        } else {
            Err(Error::ModeMismatch {
                expected: self.as_str(),
                got: got.as_str(),
            })
        }
    }
}

impl core::fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Network-facing form of a ray: `anchor ⊕ direction`, six scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayEncoding {
    pub mode: EncodingMode,
    /// Foot, moment or origin depending on `mode`.
    pub anchor: Vec3,
    pub direction: Vec3,
}

impl RayEncoding {
    pub fn to_f32(&self) -> [f32; 6] {
        let a = self.anchor.to_f32();
        let d = self.direction.to_f32();
        [a[0], a[1], a[2], d[0], d[1], d[2]]
    }
}

/// Returns the unit version of `d`, or an error if it is too far from unit length.
pub fn unit_direction(d: Vec3) -> Result<Vec3> {
    let norm = d.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitDirection { norm });
    }
    Ok(d / norm)
}

/// Closest point to the origin on the line through `p` along `d`.
pub fn perpendicular_foot(p: Vec3, d: Vec3) -> Result<Vec3> {
    let d = unit_direction(d)?;
    Ok(d.cross(p.cross(d)))
}

pub fn encode_ray(ray: &Ray, mode: EncodingMode) -> Result<RayEncoding> {
    let d = unit_direction(ray.dir)?;
    let p = ray.origin;
    let anchor = match mode {
        EncodingMode::PerpFoot => d.cross(p.cross(d)),
        EncodingMode::Plucker => p.cross(d),
        EncodingMode::Raw => p,
    };
    Ok(RayEncoding {
        mode,
        anchor,
        direction: d,
    })
}

/// `h = s·d + f`.
#[inline]
pub fn hit_point(foot: Vec3, d: Vec3, s: f64) -> Vec3 {
    d * s + foot
}

/// Inverse of [`hit_point`]: `(h - f)·d`, after checking `h` is on the line.
pub fn signed_displacement(foot: Vec3, d: Vec3, h: Vec3) -> Result<f64> {
    let d = unit_direction(d)?;
    let r = h - foot;
    let s = r.dot(d);
    let distance = (r - d * s).norm();
    if distance >= UNIT_TOLERANCE {
        return Err(Error::OffLine { distance });
    }
    Ok(s)
}

/// Jacobians of the anchor with respect to the ray origin and direction.
///
/// Returned as `(∂anchor/∂p, ∂anchor/∂d)`, treating `d` as unconstrained.
pub fn anchor_jacobians(mode: EncodingMode, p: Vec3, d: Vec3) -> (Mat3, Mat3) {
    match mode {
        EncodingMode::PerpFoot => {
            // f = p - (p·d) d
            let dp = Mat3::IDENTITY.add(&d.outer(d).scale(-1.0));
            let dd = d.outer(p).add(&Mat3::IDENTITY.scale(p.dot(d))).scale(-1.0);
            (dp, dd)
        }
        EncodingMode::Plucker => {
            // m = p × d
            (d.skew().scale(-1.0), p.skew())
        }
        EncodingMode::Raw => (Mat3::IDENTITY, Mat3::ZERO),
    }
}
