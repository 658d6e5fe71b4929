use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use screenguide::guide_buffers::{reproject, GuidingBuffer, ReprojectionPolicy};
use screenguide::math::Vec3;
use screenguide::metrics::{decode_pfm, encode_pfm, flicker_series, ImageRGB};
use screenguide::mixture::{
    init_stats, lobe_from_stats, m_step_update, mixture_pdf, truncation_mass, GuidingStats, RadianceSampleRec,
    Strategy as Sampler, TrainingSample, DEFAULT_KMAX, PI_MAX, PI_MIN,
};
use screenguide::par::Exec;
use screenguide::ptrace::gbuffer_pass;
use screenguide::scene::builtin;
use screenguide::scene::camera::CameraKeyframe;
use screenguide::scene::material::{cosine_hemisphere, Material};
use screenguide::sgmap::{build_tangent_frame, hemisphere_to_square, square_to_hemisphere, SquarePoint};

fn uniform_dir(rng: &mut Pcg64Mcg) -> Vec3 {
    let z: f64 = rng.random();
    let phi = TAU * rng.random::<f64>();
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn unit_vec() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, 0.0f64..TAU).prop_map(|(z, phi)| {
        let r = (1.0 - z * z).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    })
}

fn any_stats() -> impl Strategy<Value = GuidingStats> {
    (
        (0.0f32..=1.0, 0.0f32..=1.0, -2.0f32..2.0, -2.0f32..2.0, -2.0f32..2.0),
        (0.0f32..100.0, PI_MIN..=PI_MAX, 0.0f32..200.0),
    )
        .prop_map(|((mx, my, a, b, c), (w, pi, k))| GuidingStats {
            mean_x: mx,
            mean_y: my,
            m2_xx: a,
            m2_yy: b,
            m2_xy: c,
            w_sum: w,
            pi,
            k,
        })
}

fn batch_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    let weight = prop_oneof![
        4 => 0.0f64..1e3,
        1 => Just(0.0),
        1 => Just(f64::NAN),
        1 => Just(f64::INFINITY),
        1 => Just(-1.0),
        1 => 1e12f64..1e15,
    ];
    prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, weight, 0.0f64..=1.0), 0..40)
}

fn to_batch(raw: &[(f64, f64, f64, f64)], scale: f64) -> Vec<TrainingSample> {
    raw.iter()
        .map(|&(u, v, w, r)| {
            let sq = SquarePoint::new(u, v);
            TrainingSample {
                rec: RadianceSampleRec {
                    sq,
                    dir: square_to_hemisphere(sq),
                    weight: w * scale,
                    strategy: Sampler::Brdf,
                },
                resp: r,
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn square_round_trip(u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let d = square_to_hemisphere(SquarePoint::new(u, v));
        prop_assert!((d.length() - 1.0).abs() < 1e-12);
        prop_assert!(d.z >= 0.0);
        let q = hemisphere_to_square(d).unwrap();
        prop_assert!((q.u - u).abs() < 1e-9 && (q.v - v).abs() < 1e-9);
    }

    #[test]
    fn tangent_frame_is_orthonormal(n in unit_vec(), w in unit_vec()) {
        let f = build_tangent_frame(n);
        let l = f.to_local(n);
        prop_assert!((l.z - 1.0).abs() < 1e-9);
        let back = f.to_world(f.to_local(w));
        prop_assert!((back - w).length() < 1e-9);
        prop_assert!((f.to_local(w).length() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lobes_are_positive_definite(s in any_stats()) {
        let lobe = lobe_from_stats(&s);
        let [[a, b], [_, d]] = lobe.sigma;
        let tr = a + d;
        let det = a * d - b * b;
        let lmin = tr / 2.0 - (tr * tr / 4.0 - det).max(0.0).sqrt();
        prop_assert!(lmin >= 1e-6 * 0.999, "min eigenvalue {lmin}");
        let z = truncation_mass(&lobe);
        prop_assert!(z > 0.0 && z <= 1.0 + 1e-9);
    }

    #[test]
    fn mixture_pdf_is_finite_and_non_negative(s in any_stats(), d in unit_vec(), b in 0.0f64..10.0) {
        let d = Vec3::new(d.x, d.y, d.z.abs());
        let p = mixture_pdf(&s, &lobe_from_stats(&s), d, b);
        prop_assert!(p.is_finite() && p >= 0.0);
    }

    #[test]
    fn m_step_keeps_pi_clamped(raw in batch_strategy(), epochs in 1usize..6) {
        let mut s = init_stats();
        for _ in 0..epochs {
            s = m_step_update(&s, &to_batch(&raw, 1.0), DEFAULT_KMAX).stats;
            prop_assert!((PI_MIN..=PI_MAX).contains(&s.pi));
            prop_assert!(s.to_array().iter().all(|v| v.is_finite()));
            prop_assert!((0.0..=1.0).contains(&s.mean_x) && (0.0..=1.0).contains(&s.mean_y));
        }
    }

    #[test]
    fn m_step_ignores_weight_scale(
        raw in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.01f64..10.0, 0.05f64..=1.0), 1..30),
        scale in 1e-3f64..1e3,
    ) {
        let s = init_stats();
        let a = m_step_update(&s, &to_batch(&raw, 1.0), DEFAULT_KMAX).stats;
        let b = m_step_update(&s, &to_batch(&raw, scale), DEFAULT_KMAX).stats;
        for (x, y) in [(a.mean_x, b.mean_x), (a.mean_y, b.mean_y), (a.m2_xx, b.m2_xx), (a.m2_yy, b.m2_yy), (a.m2_xy, b.m2_xy), (a.pi, b.pi)] {
            prop_assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
        prop_assert_eq!(a.k, b.k);
    }

    #[test]
    fn pfm_round_trip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
        let mut rng = Pcg64Mcg::seed_from_u64(seed);
        let mut img = ImageRGB::new(w, h);
        for p in &mut img.data {
            *p = [rng.random::<f32>() * 10.0, rng.random(), -rng.random::<f32>()];
        }
        prop_assert_eq!(decode_pfm(&encode_pfm(&img)).unwrap(), img);
    }
}

#[test]
fn sub_squares_cover_proportional_solid_angle() {
    let mut rng = Pcg64Mcg::seed_from_u64(3);
    let boxes = [(0.0, 0.5, 0.0, 0.5), (0.2, 0.3, 0.7, 0.95), (0.45, 0.55, 0.45, 0.55), (0.9, 1.0, 0.0, 1.0)];
    let n = 400_000;
    let mut hits = [0usize; 4];
    for _ in 0..n {
        let q = hemisphere_to_square(uniform_dir(&mut rng)).unwrap();
        for (h, &(u0, u1, v0, v1)) in hits.iter_mut().zip(&boxes) {
            if (u0..u1).contains(&q.u) && (v0..v1).contains(&q.v) {
                *h += 1;
            }
        }
    }
    for (&h, &(u0, u1, v0, v1)) in hits.iter().zip(&boxes) {
        let area: f64 = (u1 - u0) * (v1 - v0);
        let frac = h as f64 / n as f64;
        let sd = (area * (1.0 - area) / n as f64).sqrt();
        assert!((frac - area).abs() < 4.0 * sd, "box area {area}, solid-angle fraction {frac}");
    }
}

fn brdf_check(m: &Material, wo: Vec3, seed: u64) {
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let n = 400_000;
    let bins = 64;
    let bin = |d: Vec3| {
        let band = ((d.z * 8.0) as usize).min(7);
        let sector = (((d.y.atan2(d.x) + PI) / TAU * 8.0) as usize).min(7);
        band * 8 + sector
    };
    let mut counts = vec![0.0; bins + 1];
    for _ in 0..n {
        match m.sample_local(wo, &mut rng) {
            Some(d) => counts[bin(d)] += 1.0,
            None => counts[bins] += 1.0,
        }
    }
    let q = 40;
    let mut expected = vec![0.0; bins + 1];
    for band in 0..8 {
        for sector in 0..8 {
            let mut acc = 0.0;
            for i in 0..q {
                let z = (band as f64 + (i as f64 + 0.5) / q as f64) / 8.0;
                let r = (1.0 - z * z).sqrt();
                for j in 0..q {
                    let phi = (sector as f64 + (j as f64 + 0.5) / q as f64) / 8.0 * TAU - PI;
                    acc += m.pdf_local(Vec3::new(r * phi.cos(), r * phi.sin(), z), wo);
                }
            }
            expected[band * 8 + sector] = acc / 8.0 * (TAU / 8.0) / (q * q) as f64 * n as f64;
        }
    }
    let total: f64 = expected[..bins].iter().sum();
    assert!(total <= n as f64 * 1.01, "pdf integrates to {}", total / n as f64);
    expected[bins] = (n as f64 - total).max(0.0);

    let (mut chi2, mut dof) = (0.0, 0usize);
    let (mut po, mut pe) = (0.0, 0.0);
    for (&o, &e) in counts.iter().zip(&expected) {
        if e < 5.0 {
            po += o;
            pe += e;
        } else {
            chi2 += (o - e) * (o - e) / e;
            dof += 1;
        }
    }
    if pe > 0.0 {
        chi2 += (po - pe) * (po - pe) / pe.max(1e-9);
        dof += 1;
    }
    let crit = ChiSquared::new((dof - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < crit, "{}: chi2 {chi2} >= {crit}", m.name);
}

#[test]
fn brdf_sampling_matches_pdf() {
    let wo = Vec3::new(0.5, 0.1, 0.8).normalized();
    brdf_check(&Material::diffuse("diffuse", Vec3::new(0.7, 0.7, 0.7)), wo, 1);
    brdf_check(&Material::glossy("rough", Vec3::new(0.7, 0.7, 0.7), 0.6), wo, 2);
    brdf_check(&Material::glossy("shiny", Vec3::new(0.7, 0.7, 0.7), 0.2), wo, 3);
}

#[test]
fn brdfs_do_not_create_energy() {
    let mut rng = Pcg64Mcg::seed_from_u64(9);
    for m in [
        Material::diffuse("d", Vec3::new(0.9, 0.9, 0.9)),
        Material::glossy("g", Vec3::new(0.9, 0.9, 0.9), 0.3),
    ] {
        for wo in [Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.8, 0.0, 0.6)] {
            let n = 200_000;
            let mut albedo = 0.0;
            for _ in 0..n {
                let d = cosine_hemisphere(rng.random(), rng.random());
                // Cosine-weighted proposal: f·cos / (cos/π) = π·f.
                albedo += PI * m.eval_local(d, wo).y;
            }
            albedo /= n as f64;
            assert!(albedo <= 1.02, "{}: directional albedo {albedo}", m.name);
        }
    }
}

fn rolled_scene(degrees: f64) -> screenguide::scene::Scene {
    let mut scene = builtin("cornell-occluder").unwrap();
    let k0 = scene.camera[0];
    let a = degrees.to_radians();
    let fwd = (k0.look_at - k0.origin).normalized();
    let side = fwd.cross(k0.up).normalized();
    let up = k0.up * a.cos() + side * a.sin();
    scene.camera = vec![
        CameraKeyframe { frame: 0, ..k0 },
        CameraKeyframe { frame: 1, up, ..k0 },
    ];
    scene
}

#[test]
fn camera_roll_keeps_most_history() {
    let scene = rolled_scene(10.0);
    let (w, h) = (48, 48);
    let g0 = gbuffer_pass(&scene, 0, w, h, Exec::Serial);
    let g1 = gbuffer_pass(&scene, 1, w, h, Exec::Serial);
    let mut trained = init_stats();
    trained.k = 8.0;
    trained.w_sum = 1.0;
    trained.pi = 0.5;
    let prev = GuidingBuffer::from_stats(w, h, vec![trained; w * h]);
    let (next, st) = reproject(&prev, &g0, &g1, &ReprojectionPolicy::default());
    let valid = g1.pixels.iter().filter(|p| p.valid).count();
    assert!(st.accepted as f64 >= 0.8 * valid as f64, "{st:?} of {valid}");
    assert!(next.entries().iter().all(|s| s.is_valid()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reprojection_output_is_always_valid(
        roll in -30.0f64..30.0,
        stats in prop::collection::vec(any_stats(), 16 * 16),
    ) {
        let scene = rolled_scene(roll);
        let g0 = gbuffer_pass(&scene, 0, 16, 16, Exec::Serial);
        let g1 = gbuffer_pass(&scene, 1, 16, 16, Exec::Serial);
        let prev = GuidingBuffer::from_stats(16, 16, stats);
        let (next, st) = reproject(&prev, &g0, &g1, &ReprojectionPolicy::default());
        prop_assert_eq!(st.accepted + st.rejected, 16 * 16);
        for (s, p) in next.entries().iter().zip(&g1.pixels) {
            prop_assert!((PI_MIN..=PI_MAX).contains(&s.pi));
            prop_assert!(s.to_array().iter().all(|v| v.is_finite()));
            prop_assert!((0.0..=1.0).contains(&s.mean_x) && (0.0..=1.0).contains(&s.mean_y));
            if !p.valid {
                prop_assert_eq!(*s, init_stats());
            }
        }
    }
}

#[test]
fn flicker_of_independent_noise_is_twice_the_variance() {
    let mut rng = Pcg64Mcg::seed_from_u64(5);
    let sigma = 0.3f64;
    let frames: Vec<ImageRGB> = (0..6)
        .map(|_| {
            let mut img = ImageRGB::new(64, 64);
            for p in &mut img.data {
                for c in p.iter_mut() {
                    // Uniform on [-a, a] has variance a²/3.
                    let a = sigma * 3f64.sqrt();
                    *c = (1.0 + rng.random_range(-a..a)) as f32;
                }
            }
            img
        })
        .collect();
    let rows = flicker_series(&frames).unwrap();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!((r.value - 2.0 * sigma * sigma).abs() < 0.02 * 2.0 * sigma * sigma * 3.0, "{}", r.value);
    }
}
