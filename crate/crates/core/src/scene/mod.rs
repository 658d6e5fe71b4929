//! Analytic scenes: spheres and parallelogram quads, one-sided area lights,
//! and a keyframed pinhole camera.

mod builtin;
pub mod camera;
mod doc;
pub mod material;

use rand::Rng;

pub use builtin::{builtin, BUILTIN_NAMES};
pub use camera::{Camera, CameraKeyframe};
pub use doc::{load_scene, load_scene_str};
pub use material::{brdf_eval, brdf_pdf, brdf_sample, Material, MaterialKind};

use crate::math::{Rgb, Vec3};

/// Offset applied at both ends of shadow rays and to spawned ray origins.
pub const RAY_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Parallelogram `corner + a·edge_u + b·edge_v`, `a, b ∈ [0,1]`. Its
    /// front side faces `edge_u × edge_v`.
    Quad { corner: Vec3, edge_u: Vec3, edge_v: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub material: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Ray {
            origin,
            dir,
            t_min: RAY_EPSILON,
            t_max: f64::INFINITY,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub pos: Vec3,
    /// Unit normal facing against the incoming ray.
    pub normal: Vec3,
    pub material_id: usize,
    pub primitive: usize,
    /// Whether the ray struck the emitting (front) side.
    pub front_face: bool,
    pub is_emitter: bool,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub materials: Vec<Material>,
    /// Indices into `primitives` of emissive primitives.
    pub emitters: Vec<usize>,
    /// Sorted by frame.
    pub camera: Vec<CameraKeyframe>,
    pub background: Rgb,
}

impl Shape {
    fn intersect(&self, ray: &Ray) -> Option<(f64, Vec3)> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(ray.dir);
                let c = oc.length_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [-b - sq, -b + sq]
                    .into_iter()
                    .find(|&t| t > ray.t_min && t < ray.t_max)?;
                let n = (ray.at(t) - center) / radius;
                Some((t, n))
            }
            Shape::Quad { corner, edge_u, edge_v } => {
                let n = edge_u.cross(edge_v);
                let denom = n.dot(ray.dir);
                if denom.abs() < 1e-12 * n.length() {
                    return None;
                }
                let t = n.dot(corner - ray.origin) / denom;
                if !(t > ray.t_min && t < ray.t_max) {
                    return None;
                }
                let w = n / n.length_squared();
                let rel = ray.at(t) - corner;
                let a = w.dot(rel.cross(edge_v));
                let b = w.dot(edge_u.cross(rel));
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                    return None;
                }
                Some((t, n.normalized()))
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } => 2.0 * std::f64::consts::TAU * radius * radius,
            Shape::Quad { edge_u, edge_v, .. } => edge_u.cross(edge_v).length(),
        }
    }

    /// Uniform area sample: point and outward (front-side) normal.
    pub fn sample_area(&self, u: f64, v: f64) -> (Vec3, Vec3) {
        match *self {
            Shape::Sphere { center, radius } => {
                let z = 1.0 - 2.0 * u;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let (s, c) = (std::f64::consts::TAU * v).sin_cos();
                let n = Vec3::new(r * c, r * s, z);
                (center + n * radius, n)
            }
            Shape::Quad { corner, edge_u, edge_v } => {
                (corner + edge_u * u + edge_v * v, edge_u.cross(edge_v).normalized())
            }
        }
    }
}

/// Light sample as seen from a receiving point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterSample {
    pub dir: Vec3,
    pub dist: f64,
    pub emitted: Rgb,
    /// Solid-angle density at the receiver; 0 for back-facing samples.
    pub pdf_sr: f64,
}

impl Scene {
    /// Nearest hit with `t ∈ (t_min, t_max)`.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<(f64, Vec3, usize)> = None;
        let mut clipped = *ray;
        for (i, prim) in self.primitives.iter().enumerate() {
            if let Some((t, n)) = prim.shape.intersect(&clipped) {
                clipped.t_max = t;
                best = Some((t, n, i));
            }
        }
        let (t, n, i) = best?;
        let front_face = n.dot(ray.dir) < 0.0;
        let material_id = self.primitives[i].material;
        Some(Hit {
            t,
            pos: ray.at(t),
            normal: if front_face { n } else { -n },
            material_id,
            primitive: i,
            front_face,
            is_emitter: self.materials[material_id].is_emissive(),
        })
    }

    /// True when something blocks the segment between `a` and `b`.
    pub fn occluded(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let dist = d.length();
        let ray = Ray {
            origin: a,
            dir: d / dist,
            t_min: RAY_EPSILON,
            t_max: dist - RAY_EPSILON,
        };
        self.primitives.iter().any(|p| p.shape.intersect(&ray).is_some())
    }

    pub fn material(&self, id: usize) -> &Material {
        &self.materials[id]
    }

    /// Radiance leaving a hit back along the ray that found it.
    pub fn emitted(&self, hit: &Hit) -> Rgb {
        if hit.is_emitter && hit.front_face {
            self.materials[hit.material_id].emission
        } else {
            Vec3::ZERO
        }
    }

    pub fn camera_at(&self, frame: u32) -> CameraKeyframe {
        camera::interpolate(&self.camera, frame)
    }

    /// True if every keyframe describes the same view.
    pub fn camera_is_static(&self) -> bool {
        let first = self.camera[0];
        self.camera.iter().all(|k| {
            k.origin == first.origin && k.look_at == first.look_at && k.up == first.up && k.fov_deg == first.fov_deg
        })
    }

    /// Light sample for fixed uniforms: `select` picks the emitter, `(u, v)`
    /// the point on it.
    pub fn sample_emitter_with(&self, x: Vec3, select: f64, u: f64, v: f64) -> Option<EmitterSample> {
        if self.emitters.is_empty() {
            return None;
        }
        let n_em = self.emitters.len();
        let idx = ((select * n_em as f64) as usize).min(n_em - 1);
        let prim = &self.primitives[self.emitters[idx]];
        let (p, n_light) = prim.shape.sample_area(u, v);
        let d = p - x;
        let dist2 = d.length_squared();
        let dist = dist2.sqrt();
        let dir = d / dist;
        let cos_light = -dir.dot(n_light);
        if cos_light <= 0.0 || dist == 0.0 {
            return Some(EmitterSample {
                dir,
                dist,
                emitted: Vec3::ZERO,
                pdf_sr: 0.0,
            });
        }
        Some(EmitterSample {
            dir,
            dist,
            emitted: self.materials[prim.material].emission,
            pdf_sr: dist2 / (cos_light * prim.shape.area() * n_em as f64),
        })
    }

    /// Uniformly chooses an emitter, then a uniform point on its area.
    pub fn sample_emitter<R: Rng + ?Sized>(&self, x: Vec3, rng: &mut R) -> Option<EmitterSample> {
        let (s, u, v) = (rng.random(), rng.random(), rng.random());
        self.sample_emitter_with(x, s, u, v)
    }

    /// Index of the emitter `sample_emitter_with` picks for `select`.
    pub fn emitter_for(&self, select: f64) -> usize {
        let n = self.emitters.len();
        self.emitters[((select * n as f64) as usize).min(n - 1)]
    }
}
