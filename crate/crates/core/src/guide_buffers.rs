//! Screen-space buffers: Γ holds per-pixel guiding stats, Π holds per-pixel
//! VPLs. Also temporal reprojection of Γ, the training pass, and checkpoints.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::mixture::{self, GuidingStats, RadianceSampleRec, Strategy, TrainingSample};
use crate::par::Exec;
use crate::ptrace::GBuffer;
use crate::rng::{pixel_rng, Pass};
use crate::scene::Scene;
use crate::sgmap::{self, TangentFrame};

/// Virtual point light left behind by a pixel's first bounce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vpl {
    pub valid: bool,
    /// First-bounce hit position.
    pub y: Vec3,
    /// Radiance arriving at the primary hit from `y`.
    pub radiance: Rgb,
    pub strategy: Strategy,
}

impl Vpl {
    pub const INVALID: Vpl = Vpl {
        valid: false,
        y: Vec3::ZERO,
        radiance: Vec3::ZERO,
        strategy: Strategy::Brdf,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct VplBuffer {
    pub width: usize,
    pub height: usize,
    vpls: Vec<Vpl>,
}

impl VplBuffer {
    pub fn invalid(width: usize, height: usize) -> Self {
        VplBuffer {
            width,
            height,
            vpls: vec![Vpl::INVALID; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, vpls: Vec<Vpl>) -> Self {
        assert_eq!(vpls.len(), width * height);
        VplBuffer { width, height, vpls }
    }

    pub fn len(&self) -> usize {
        self.vpls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vpls.is_empty()
    }

    pub fn as_slice(&self) -> &[Vpl] {
        &self.vpls
    }
}

impl std::ops::Index<usize> for VplBuffer {
    type Output = Vpl;
    fn index(&self, i: usize) -> &Vpl {
        &self.vpls[i]
    }
}

/// Per-pixel guiding stats. Reads and writes through [`GuidingBuffer::get`]
/// and [`GuidingBuffer::set`] are counted.
#[derive(Debug)]
pub struct GuidingBuffer {
    pub width: usize,
    pub height: usize,
    pub generation: u64,
    stats: Vec<GuidingStats>,
    accesses: AtomicU64,
}

impl Clone for GuidingBuffer {
    fn clone(&self) -> Self {
        GuidingBuffer {
            width: self.width,
            height: self.height,
            generation: self.generation,
            stats: self.stats.clone(),
            accesses: AtomicU64::new(self.accesses()),
        }
    }
}

impl PartialEq for GuidingBuffer {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.stats == other.stats
    }
}

impl GuidingBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self::from_stats(width, height, vec![mixture::init_stats(); width * height])
    }

    pub fn from_stats(width: usize, height: usize, stats: Vec<GuidingStats>) -> Self {
        assert_eq!(stats.len(), width * height);
        GuidingBuffer {
            width,
            height,
            generation: 0,
            stats,
            accesses: AtomicU64::new(0),
        }
    }

    pub fn get(&self, i: usize) -> GuidingStats {
        self.accesses.fetch_add(1, Ordering::Relaxed);
        self.stats[i]
    }

    pub fn set(&mut self, i: usize, s: GuidingStats) {
        *self.accesses.get_mut() += 1;
        self.stats[i] = s;
    }

    /// Uncounted view for serialisation and diagnostics.
    pub fn entries(&self) -> &[GuidingStats] {
        &self.stats
    }

    /// Number of counted reads and writes so far.
    pub fn accesses(&self) -> u64 {
        self.accesses.load(Ordering::Relaxed)
    }

    fn successor(&self, stats: Vec<GuidingStats>) -> Self {
        GuidingBuffer {
            generation: self.generation + 1,
            ..Self::from_stats(self.width, self.height, stats)
        }
    }
}

/// History-validity thresholds for temporal reprojection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionPolicy {
    pub depth_rel_tol: f64,
    pub normal_dot_min: f64,
    pub rotate_mean: bool,
}

impl Default for ReprojectionPolicy {
    fn default() -> Self {
        ReprojectionPolicy {
            depth_rel_tol: 0.1,
            normal_dot_min: 0.9,
            rotate_mean: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReprojectionStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Re-expresses the Gaussian mean of `s` from the tangent frame of
/// `n_prev` in the frame of `n_cur`, keeping the covariance. `None` if the
/// mean direction ends up below the current surface.
fn rotate_mean(s: &GuidingStats, n_prev: Vec3, n_cur: Vec3) -> Option<GuidingStats> {
    let (mx, my) = (s.mean_x as f64, s.mean_y as f64);
    let local_prev = sgmap::square_to_hemisphere(sgmap::SquarePoint::new(mx, my));
    let world = TangentFrame::from_normal(n_prev).to_world(local_prev);
    let local_cur = TangentFrame::from_normal(n_cur).to_local(world);
    if local_cur.z < 0.0 {
        return None;
    }
    let q = sgmap::hemisphere_to_square(local_cur.normalized()).ok()?;
    let mut out = *s;
    out.mean_x = q.u as f32;
    out.mean_y = q.v as f32;
    out.m2_xx = (s.m2_xx as f64 - mx * mx + q.u * q.u) as f32;
    out.m2_yy = (s.m2_yy as f64 - my * my + q.v * q.v) as f32;
    out.m2_xy = (s.m2_xy as f64 - mx * my + q.u * q.v) as f32;
    Some(out)
}

/// Carries Γ from the previous frame to the current one. Each valid pixel
/// follows its motion vector to the nearest previous pixel and keeps that
/// history if depth and normal agree; otherwise it starts from
/// [`mixture::init_stats`].
pub fn reproject(
    prev: &GuidingBuffer,
    gbuf_prev: &GBuffer,
    gbuf_cur: &GBuffer,
    policy: &ReprojectionPolicy,
) -> (GuidingBuffer, ReprojectionStats) {
    let (w, h) = (gbuf_cur.width, gbuf_cur.height);
    assert_eq!((prev.width, prev.height), (w, h));
    assert_eq!((gbuf_prev.width, gbuf_prev.height), (w, h));
    let mut stats = ReprojectionStats::default();
    let out = (0..w * h)
        .map(|i| {
            let cur = &gbuf_cur.pixels[i];
            let fetched = cur.valid.then_some(()).and_then(|_| {
                let (dx, dy) = cur.motion?;
                let x = ((i % w) as f64 + 0.5 + dx).floor();
                let y = ((i / w) as f64 + 0.5 + dy).floor();
                if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                    return None;
                }
                let j = y as usize * w + x as usize;
                let old = &gbuf_prev.pixels[j];
                if !old.valid {
                    return None;
                }
                let expected = gbuf_prev.camera.view_depth(cur.pos);
                if !(expected > 0.0) || ((old.depth - expected) / expected).abs() >= policy.depth_rel_tol {
                    return None;
                }
                if old.normal.dot(cur.normal) <= policy.normal_dot_min {
                    return None;
                }
                let s = prev.get(j);
                if policy.rotate_mean && old.normal != cur.normal {
                    rotate_mean(&s, old.normal, cur.normal)
                } else {
                    Some(s)
                }
            });
            match fetched {
                Some(s) => {
                    stats.accepted += 1;
                    s
                }
                None => {
                    stats.rejected += 1;
                    mixture::init_stats()
                }
            }
        })
        .collect();
    (prev.successor(out), stats)
}

/// Parameters of the training pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub kmax: f64,
    /// Radius in pixels of the disk neighbours are drawn from.
    pub radius: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            kmax: mixture::DEFAULT_KMAX,
            radius: 10.0,
        }
    }
}

/// Training records for `pixel` from its own VPL and those of nearby
/// pixels. Returns the records and the number of VPL lookups made.
pub fn gather_training_batch<R: Rng + ?Sized>(
    pixel: usize,
    vpls: &VplBuffer,
    gbuf: &GBuffer,
    scene: &Scene,
    stats: &GuidingStats,
    cfg: &TrainingConfig,
    rng: &mut R,
) -> (Vec<RadianceSampleRec>, usize) {
    let (w, h) = (gbuf.width, gbuf.height);
    let me = &gbuf.pixels[pixel];
    if !me.valid {
        return (Vec::new(), 0);
    }
    let n = mixture::neighbor_count(stats.k as f64, cfg.kmax);
    let m = scene.material(me.material_id);
    let frame = TangentFrame::from_normal(me.normal);
    let wo = frame.to_local(me.wo);
    let (px, py) = ((pixel % w) as f64, (pixel / w) as f64);
    let mut batch = Vec::with_capacity(n);
    for c in 0..n {
        let j = if c == 0 {
            pixel
        } else {
            let r = cfg.radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            let x = (px + r * phi.cos()).round().clamp(0.0, (w - 1) as f64) as usize;
            let y = (py + r * phi.sin()).round().clamp(0.0, (h - 1) as f64) as usize;
            y * w + x
        };
        let vpl = &vpls[j];
        if !vpl.valid || vpl.strategy != Strategy::Brdf {
            continue;
        }
        let d = vpl.y - me.pos;
        let len = d.length();
        if !(len > 0.0) {
            continue;
        }
        let local = frame.to_local(d / len);
        if local.z <= 0.0 {
            continue;
        }
        let Ok(sq) = sgmap::hemisphere_to_square(local) else { continue };
        let weight = vpl.radiance.mul_elem(m.eval_local(local, wo)).luminance() * local.z;
        batch.push(RadianceSampleRec {
            sq,
            dir: local,
            weight,
            strategy: Strategy::Brdf,
        });
    }
    (batch, n)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainingStats {
    pub lookups: usize,
    pub records: usize,
    pub skipped: usize,
}

/// One EM step for every valid pixel, reading Γ, Π and the G-buffer and
/// writing a new Γ.
#[allow(clippy::too_many_arguments)]
pub fn training_pass(
    gamma: &GuidingBuffer,
    vpls: &VplBuffer,
    gbuf: &GBuffer,
    scene: &Scene,
    cfg: &TrainingConfig,
    seed: u64,
    frame: u32,
    exec: Exec,
) -> (GuidingBuffer, TrainingStats) {
    let (w, h) = (gbuf.width, gbuf.height);
    assert_eq!((gamma.width, gamma.height), (w, h));
    assert_eq!((vpls.width, vpls.height), (w, h));
    let results = exec.map(w * h, |i| {
        let s = gamma.get(i);
        let gpx = &gbuf.pixels[i];
        if !gpx.valid {
            return (s, TrainingStats::default());
        }
        let mut rng = pixel_rng(seed, frame as u64, i as u64, Pass::Train);
        let (batch, lookups) = gather_training_batch(i, vpls, gbuf, scene, &s, cfg, &mut rng);
        let lobe = mixture::lobe_from_stats(&s);
        let m = scene.material(gpx.material_id);
        let wo = TangentFrame::from_normal(gpx.normal).to_local(gpx.wo);
        let samples: Vec<TrainingSample> = batch
            .iter()
            .map(|rec| {
                let g = sgmap::square_density_to_solid_angle(mixture::gaussian_pdf_square(&lobe, rec.sq));
                let b = m.pdf_local(rec.dir, wo);
                TrainingSample {
                    rec: *rec,
                    resp: mixture::e_step_responsibility(s.pi as f64, g, b),
                }
            })
            .collect();
        let step = mixture::m_step_update(&s, &samples, cfg.kmax);
        (
            step.stats,
            TrainingStats {
                lookups,
                records: samples.len(),
                skipped: step.skipped,
            },
        )
    });
    let mut totals = TrainingStats::default();
    let mut out = Vec::with_capacity(w * h);
    for (s, t) in results {
        out.push(s);
        totals.lookups += t.lookups;
        totals.records += t.records;
        totals.skipped += t.skipped;
    }
    (gamma.successor(out), totals)
}

const MAGIC: &[u8; 4] = b"PGG1";
const HEADER_LEN: usize = 12;

pub fn checkpoint_encode(gamma: &GuidingBuffer) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + gamma.stats.len() * 32);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(gamma.width as u32).to_le_bytes());
    bytes.extend_from_slice(&(gamma.height as u32).to_le_bytes());
    for s in &gamma.stats {
        for v in s.to_array() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn checkpoint_decode(bytes: &[u8]) -> Result<GuidingBuffer> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::CheckpointTruncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(Error::CheckpointVersion(magic));
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + w * h * 32;
    if bytes.len() != expected {
        return Err(Error::CheckpointTruncated {
            expected,
            found: bytes.len(),
        });
    }
    let stats = bytes[HEADER_LEN..]
        .chunks_exact(32)
        .map(|px| {
            let mut a = [0f32; 8];
            for (v, b) in a.iter_mut().zip(px.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap());
            }
            GuidingStats::from_array(a)
        })
        .collect();
    Ok(GuidingBuffer::from_stats(w, h, stats))
}

pub fn checkpoint_save(gamma: &GuidingBuffer, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_encode(gamma)).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: &Path) -> Result<GuidingBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_decode(&bytes)
}

/// Loads a checkpoint and checks it matches a `width × height` session.
pub fn checkpoint_load_for(path: &Path, width: usize, height: usize) -> Result<GuidingBuffer> {
    let g = checkpoint_load(path)?;
    if (g.width, g.height) != (width, height) {
        return Err(Error::CheckpointDimensions {
            found_w: g.width as u32,
            found_h: g.height as u32,
            want_w: width,
            want_h: height,
        });
    }
    Ok(g)
}
