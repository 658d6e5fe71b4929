//! Lambertian and GGX materials.
//!
//! All BRDF routines work in a local shading frame where the normal is +z;
//! the world-space entry points convert through a [`TangentFrame`].

use std::f64::consts::{FRAC_1_PI, PI, TAU};

use rand::Rng;

use crate::math::{Rgb, Vec3};
use crate::mixture::BrdfLobe;
use crate::sgmap::TangentFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaterialKind {
    Diffuse,
    Glossy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub kind: MaterialKind,
    pub albedo: Rgb,
    pub roughness: f64,
    pub emission: Rgb,
}

impl Material {
    pub fn diffuse(name: &str, albedo: Rgb) -> Self {
        Material {
            name: name.to_string(),
            kind: MaterialKind::Diffuse,
            albedo,
            roughness: 1.0,
            emission: Vec3::ZERO,
        }
    }

    pub fn glossy(name: &str, albedo: Rgb, roughness: f64) -> Self {
        Material {
            name: name.to_string(),
            kind: MaterialKind::Glossy,
            albedo,
            roughness,
            emission: Vec3::ZERO,
        }
    }

    pub fn emitter(name: &str, emission: Rgb) -> Self {
        Material {
            name: name.to_string(),
            kind: MaterialKind::Diffuse,
            albedo: Vec3::ZERO,
            roughness: 1.0,
            emission,
        }
    }

    pub fn is_emissive(&self) -> bool {
        self.emission.max_elem() > 0.0
    }

    /// GGX width; roughness is perceptual, `α = roughness²`.
    fn alpha(&self) -> f64 {
        (self.roughness * self.roughness).max(1e-4)
    }

    pub fn eval_local(&self, wi: Vec3, wo: Vec3) -> Rgb {
        if wi.z <= 0.0 || wo.z <= 0.0 {
            return Vec3::ZERO;
        }
        match self.kind {
            MaterialKind::Diffuse => self.albedo * FRAC_1_PI,
            MaterialKind::Glossy => {
                let h = wi + wo;
                if h.length_squared() == 0.0 {
                    return Vec3::ZERO;
                }
                let h = h.normalized();
                let a = self.alpha();
                let d = ggx::d(h, a);
                let g = ggx::g1(wi, a) * ggx::g1(wo, a);
                let f = schlick(self.albedo, wi.dot(h).max(0.0));
                f * (d * g / (4.0 * wi.z * wo.z))
            }
        }
    }

    pub fn pdf_local(&self, wi: Vec3, wo: Vec3) -> f64 {
        if wi.z <= 0.0 || wo.z <= 0.0 {
            return 0.0;
        }
        match self.kind {
            MaterialKind::Diffuse => wi.z * FRAC_1_PI,
            MaterialKind::Glossy => {
                let h = wi + wo;
                if h.length_squared() == 0.0 {
                    return 0.0;
                }
                let h = h.normalized();
                if wo.dot(h) <= 0.0 {
                    return 0.0;
                }
                let a = self.alpha();
                ggx::g1(wo, a) * ggx::d(h, a) / (4.0 * wo.z)
            }
        }
    }

    pub fn sample_local<R: Rng + ?Sized>(&self, wo: Vec3, rng: &mut R) -> Option<Vec3> {
        if wo.z <= 0.0 {
            return None;
        }
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let wi = match self.kind {
            MaterialKind::Diffuse => cosine_hemisphere(u1, u2),
            MaterialKind::Glossy => {
                let h = ggx::sample_vndf(wo, self.alpha(), u1, u2);
                wo.reflect(h)
            }
        };
        (wi.z > 0.0).then_some(wi)
    }
}

fn schlick(f0: Rgb, cos: f64) -> Rgb {
    let m = (1.0 - cos).clamp(0.0, 1.0);
    let m5 = m * m * m * m * m;
    f0 + (Vec3::ONE - f0) * m5
}

/// Cosine-weighted hemisphere direction (Malley's method on a polar disk sample).
pub fn cosine_hemisphere(u1: f64, u2: f64) -> Vec3 {
    let r = u1.sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    Vec3::new(r * c, r * s, (1.0 - u1).max(0.0).sqrt())
}

mod ggx {
    use super::*;

    pub fn d(h: Vec3, a: f64) -> f64 {
        if h.z <= 0.0 {
            return 0.0;
        }
        let a2 = a * a;
        let c2 = h.z * h.z;
        let t = c2 * (a2 - 1.0) + 1.0;
        a2 / (PI * t * t)
    }

    pub fn g1(w: Vec3, a: f64) -> f64 {
        let c2 = w.z * w.z;
        if c2 <= 0.0 {
            return 0.0;
        }
        let tan2 = ((1.0 - c2) / c2).max(0.0);
        let lambda = 0.5 * (-1.0 + (1.0 + a * a * tan2).sqrt());
        1.0 / (1.0 + lambda)
    }

    /// Visible-normal sampling (Heitz 2018).
    pub fn sample_vndf(wo: Vec3, a: f64, u1: f64, u2: f64) -> Vec3 {
        let vh = Vec3::new(a * wo.x, a * wo.y, wo.z).normalized();
        let lensq = vh.x * vh.x + vh.y * vh.y;
        let t1 = if lensq > 0.0 {
            Vec3::new(-vh.y, vh.x, 0.0) / lensq.sqrt()
        } else {
            Vec3::new(1.0, 0.0, 0.0)
        };
        let t2 = vh.cross(t1);
        let r = u1.sqrt();
        let phi = TAU * u2;
        let p1 = r * phi.cos();
        let mut p2 = r * phi.sin();
        let s = 0.5 * (1.0 + vh.z);
        p2 = (1.0 - s) * (1.0 - p1 * p1).max(0.0).sqrt() + s * p2;
        let nh = t1 * p1 + t2 * p2 + vh * (1.0 - p1 * p1 - p2 * p2).max(0.0).sqrt();
        Vec3::new(a * nh.x, a * nh.y, nh.z.max(1e-9)).normalized()
    }
}

/// A material's BRDF frozen at one outgoing direction, in local coordinates.
#[derive(Debug, Clone, Copy)]
pub struct LocalBrdf<'a> {
    pub material: &'a Material,
    pub wo: Vec3,
}

impl BrdfLobe for LocalBrdf<'_> {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec3> {
        self.material.sample_local(self.wo, rng)
    }

    fn pdf(&self, dir: Vec3) -> f64 {
        self.material.pdf_local(dir, self.wo)
    }
}

/// BRDF value for world-space directions around normal `n`. Black if either
/// direction is below the surface.
pub fn brdf_eval(m: &Material, wi: Vec3, wo: Vec3, n: Vec3) -> Rgb {
    let f = TangentFrame::from_normal(n);
    m.eval_local(f.to_local(wi), f.to_local(wo))
}

/// Draws `wi` for the world-space outgoing direction `wo`; returns the
/// direction with its solid-angle density, or `None` if the draw fell below
/// the surface.
pub fn brdf_sample<R: Rng + ?Sized>(m: &Material, wo: Vec3, n: Vec3, rng: &mut R) -> Option<(Vec3, f64)> {
    let f = TangentFrame::from_normal(n);
    let wo_l = f.to_local(wo);
    let wi_l = m.sample_local(wo_l, rng)?;
    Some((f.to_world(wi_l), m.pdf_local(wi_l, wo_l)))
}

pub fn brdf_pdf(m: &Material, wi: Vec3, wo: Vec3, n: Vec3) -> f64 {
    let f = TangentFrame::from_normal(n);
    m.pdf_local(f.to_local(wi), f.to_local(wo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgmap::{square_to_hemisphere, SquarePoint};
    use rand::SeedableRng;
    use rand_pcg::Pcg64Mcg;

    const N: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    fn dir(theta_deg: f64, phi_deg: f64) -> Vec3 {
        let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
        Vec3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos())
    }

    #[test]
    fn diffuse_value_is_albedo_over_pi() {
        let m = Material::diffuse("grey", Vec3::splat(0.5));
        let f = brdf_eval(&m, dir(20.0, 10.0), dir(70.0, 200.0), N);
        for c in 0..3 {
            assert!((f[c] - 0.159_154_943).abs() < 1e-8);
        }
    }

    #[test]
    fn below_hemisphere_is_black() {
        for m in [Material::diffuse("d", Vec3::ONE), Material::glossy("g", Vec3::ONE, 0.3)] {
            assert!(brdf_eval(&m, -dir(30.0, 0.0), dir(30.0, 180.0), N).is_black());
            assert_eq!(brdf_pdf(&m, -dir(30.0, 0.0), dir(30.0, 180.0), N), 0.0);
        }
    }

    #[test]
    fn diffuse_pdf_closed_forms() {
        let m = Material::diffuse("d", Vec3::ONE);
        assert!((brdf_pdf(&m, dir(60.0, 0.0), N, N) - 0.159_155).abs() < 1e-6);
        assert!((brdf_pdf(&m, N, dir(40.0, 0.0), N) - FRAC_1_PI).abs() < 1e-12);
    }

    #[test]
    fn reciprocity() {
        let mut rng = Pcg64Mcg::seed_from_u64(2);
        for m in [
            Material::diffuse("d", Vec3::new(0.2, 0.5, 0.9)),
            Material::glossy("g", Vec3::new(0.9, 0.6, 0.3), 0.4),
        ] {
            for _ in 0..1000 {
                let a = square_to_hemisphere(SquarePoint::new(rng.random(), rng.random()));
                let b = square_to_hemisphere(SquarePoint::new(rng.random(), rng.random()));
                let fab = m.eval_local(a, b);
                let fba = m.eval_local(b, a);
                assert!((fab - fba).length() <= 1e-6 * fab.length().max(1.0));
            }
        }
    }

    #[test]
    fn samples_report_their_pdf() {
        let mut rng = Pcg64Mcg::seed_from_u64(4);
        let n = Vec3::new(0.2, 0.9, -0.1).normalized();
        let wo = (n + Vec3::new(0.3, 0.0, 0.2)).normalized();
        for m in [Material::diffuse("d", Vec3::ONE), Material::glossy("g", Vec3::ONE, 0.35)] {
            for _ in 0..1000 {
                if let Some((wi, pdf)) = brdf_sample(&m, wo, n, &mut rng) {
                    let p = brdf_pdf(&m, wi, wo, n);
                    assert!((p - pdf).abs() <= 1e-6 * p);
                    assert!(wi.dot(n) > 0.0);
                }
            }
        }
    }

    #[test]
    fn near_mirror_glossy_concentrates_around_reflection() {
        let m = Material::glossy("mirrorish", Vec3::ONE, 0.05);
        let wo = dir(35.0, 40.0);
        let mirror = wo.reflect(N);
        let mut rng = Pcg64Mcg::seed_from_u64(8);
        let (mut near, mut total) = (0, 0);
        for _ in 0..100_000 {
            if let Some(wi) = m.sample_local(wo, &mut rng) {
                total += 1;
                if wi.dot(mirror) >= 10f64.to_radians().cos() {
                    near += 1;
                }
            }
        }
        assert!(near as f64 >= 0.99 * total as f64, "{near}/{total}");
    }

    #[test]
    fn glossy_white_furnace_does_not_create_energy() {
        // MC estimate of ∫ f cosθ dω with uniform hemisphere sampling.
        let m = Material::glossy("white", Vec3::ONE, 0.5);
        let mut rng = Pcg64Mcg::seed_from_u64(12);
        for theta in [0.0, 30.0, 60.0, 80.0] {
            let wo = dir(theta, 0.0);
            let n = 400_000;
            let mut sum = 0.0;
            for _ in 0..n {
                let wi = square_to_hemisphere(SquarePoint::new(rng.random(), rng.random()));
                sum += m.eval_local(wi, wo).x * wi.z * TAU;
            }
            let albedo = sum / n as f64;
            assert!(albedo <= 1.03, "theta {theta}: {albedo}");
            assert!(albedo > 0.5);
        }
    }
}
