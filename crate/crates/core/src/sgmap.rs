//! Area-preserving mapping between the unit square and the unit hemisphere.
//!
//! The square is first mapped to the unit disk with the concentric
//! (Shirley–Chiu) map, then lifted to the hemisphere with the Lambert
//! azimuthal equal-area projection. Both steps have constant Jacobian, so a
//! density `p` on the square corresponds to `p / 2π` per steradian.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use crate::error::{Error, Result};
use crate::math::Vec3;

/// A point of the closed unit square.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SquarePoint {
    pub u: f64,
    pub v: f64,
}

impl SquarePoint {
    pub const CENTER: SquarePoint = SquarePoint { u: 0.5, v: 0.5 };

    pub const fn new(u: f64, v: f64) -> Self {
        SquarePoint { u, v }
    }

    pub fn contains(u: f64, v: f64) -> bool {
        (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)
    }
}

/// Solid angle of the hemisphere; the Jacobian of the square→hemisphere map.
pub const HEMISPHERE_AREA: f64 = TAU;

fn square_to_disk(p: SquarePoint) -> (f64, f64) {
    let a = 2.0 * p.u - 1.0;
    let b = 2.0 * p.v - 1.0;
    if a == 0.0 && b == 0.0 {
        return (0.0, 0.0);
    }
    let (r, phi) = if a.abs() > b.abs() {
        (a, FRAC_PI_4 * (b / a))
    } else {
        (b, FRAC_PI_2 - FRAC_PI_4 * (a / b))
    };
    (r * phi.cos(), r * phi.sin())
}

fn disk_to_square(x: f64, y: f64) -> SquarePoint {
    let r = (x * x + y * y).sqrt();
    if r == 0.0 {
        return SquarePoint::CENTER;
    }
    let mut phi = y.atan2(x);
    if phi < -FRAC_PI_4 {
        phi += TAU;
    }
    let (a, b) = if phi < FRAC_PI_4 {
        (r, phi * r / FRAC_PI_4)
    } else if phi < 3.0 * FRAC_PI_4 {
        (-(phi - FRAC_PI_2) * r / FRAC_PI_4, r)
    } else if phi < 5.0 * FRAC_PI_4 {
        (-r, -(phi - PI) * r / FRAC_PI_4)
    } else {
        ((phi - 3.0 * FRAC_PI_2) * r / FRAC_PI_4, -r)
    };
    SquarePoint {
        u: ((a + 1.0) * 0.5).clamp(0.0, 1.0),
        v: ((b + 1.0) * 0.5).clamp(0.0, 1.0),
    }
}

/// Maps a point of the unit square to a local direction with `z >= 0`.
pub fn square_to_hemisphere(p: SquarePoint) -> Vec3 {
    let (xd, yd) = square_to_disk(p);
    let r2 = (xd * xd + yd * yd).min(1.0);
    let s = (2.0 - r2).sqrt();
    Vec3::new(xd * s, yd * s, 1.0 - r2)
}

/// Inverse of [`square_to_hemisphere`].
pub fn hemisphere_to_square(d: Vec3) -> Result<SquarePoint> {
    if d.z < -1e-9 || d.z.is_nan() {
        return Err(Error::BelowHemisphere(d.z));
    }
    let z = d.z.clamp(0.0, 1.0);
    // r^2 = 1 - z, and the lift scales the disk point by sqrt(2 - r^2) = sqrt(1 + z).
    let s = 1.0 / (1.0 + z).sqrt();
    Ok(disk_to_square(d.x * s, d.y * s))
}

/// Converts a density over the square to a density per steradian.
#[inline]
pub fn square_density_to_solid_angle(pdf_sq: f64) -> f64 {
    pdf_sq / HEMISPHERE_AREA
}

/// Orthonormal right-handed frame with `n` as the local +z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub t: Vec3,
    pub b: Vec3,
    pub n: Vec3,
}

impl TangentFrame {
    /// Branchless construction (Duff et al. 2017), keyed on the sign of `n.z`.
    pub fn from_normal(n: Vec3) -> Self {
        let sign = 1.0f64.copysign(n.z);
        let a = -1.0 / (sign + n.z);
        let b = n.x * n.y * a;
        TangentFrame {
            t: Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
            b: Vec3::new(b, sign + n.y * n.y * a, -n.y),
            n,
        }
    }

    #[inline]
    pub fn to_local(&self, w: Vec3) -> Vec3 {
        Vec3::new(w.dot(self.t), w.dot(self.b), w.dot(self.n))
    }

    #[inline]
    pub fn to_world(&self, l: Vec3) -> Vec3 {
        self.t * l.x + self.b * l.y + self.n * l.z
    }
}

pub fn build_tangent_frame(normal: Vec3) -> TangentFrame {
    TangentFrame::from_normal(normal)
}
