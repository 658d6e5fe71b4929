//! Path-tracing pass: ray-cast G-buffer, guided first bounce, next-event
//! estimation, and VPL write-out.

use rand::Rng;

use crate::guide_buffers::{GuidingBuffer, Vpl, VplBuffer};
use crate::math::{Rgb, Vec3};
use crate::mixture::{self, GaussianLobe, GuidingStats, Strategy};
use crate::par::Exec;
use crate::rng::{pixel_rng, Pass};
use crate::scene::material::LocalBrdf;
use crate::scene::{Camera, CameraKeyframe, Ray, Scene};
use crate::sgmap::TangentFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    /// Maximum number of shaded surface vertices per path, primary hit included.
    pub max_depth: u32,
    pub nee: bool,
    pub guiding: bool,
    /// Surfaces smoother than this are never guided.
    pub roughness_min_guide: f64,
    pub spp: u32,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            max_depth: 4,
            nee: true,
            guiding: false,
            roughness_min_guide: 0.05,
            spp: 1,
        }
    }
}

impl PathConfig {
    pub fn guided() -> Self {
        PathConfig {
            guiding: true,
            ..Self::default()
        }
    }
}

/// Primary-hit record for one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GBufferPixel {
    pub valid: bool,
    pub pos: Vec3,
    /// Shading normal, facing the camera.
    pub normal: Vec3,
    /// Distance along the camera's view axis.
    pub depth: f64,
    pub material_id: usize,
    pub roughness: f64,
    /// Unit direction from the hit back towards the camera.
    pub wo: Vec3,
    /// Radiance emitted towards the camera.
    pub emitted: Rgb,
    /// Offset in pixels from this pixel's centre to where its surface point
    /// was in the previous frame; `None` if it was outside that frame.
    pub motion: Option<(f64, f64)>,
}

impl GBufferPixel {
    pub const INVALID: GBufferPixel = GBufferPixel {
        valid: false,
        pos: Vec3::ZERO,
        normal: Vec3::ZERO,
        depth: 0.0,
        material_id: 0,
        roughness: 0.0,
        wo: Vec3::ZERO,
        emitted: Vec3::ZERO,
        motion: None,
    };
}

#[derive(Debug, Clone)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub camera: Camera,
    /// Radiance recorded for pixels whose primary ray escapes.
    pub background: Rgb,
    pub pixels: Vec<GBufferPixel>,
}

impl GBuffer {
    pub fn get(&self, x: usize, y: usize) -> &GBufferPixel {
        &self.pixels[y * self.width + x]
    }
}

/// Casts one ray through each pixel centre. Motion vectors are measured
/// against the camera of `frame − 1` (the same camera for frame 0).
pub fn gbuffer_pass(scene: &Scene, frame: u32, width: usize, height: usize, exec: Exec) -> GBuffer {
    let key = scene.camera_at(frame);
    let prev_key = scene.camera_at(frame.saturating_sub(1));
    let camera = Camera::new(&key, width, height);
    let prev = Camera::new(&prev_key, width, height);
    let still = CameraKeyframe { frame: 0, ..key } == CameraKeyframe { frame: 0, ..prev_key };
    let pixels = exec.map(width * height, |i| {
        let (px, py) = (i % width, i / width);
        let dir = camera.pixel_dir(px, py);
        let Some(hit) = scene.intersect(&Ray::new(camera.origin, dir)) else {
            return GBufferPixel::INVALID;
        };
        let m = scene.material(hit.material_id);
        GBufferPixel {
            valid: true,
            pos: hit.pos,
            normal: hit.normal,
            depth: camera.view_depth(hit.pos),
            material_id: hit.material_id,
            roughness: m.roughness,
            wo: -dir,
            emitted: scene.emitted(&hit),
            motion: if still {
                Some((0.0, 0.0))
            } else {
                pixel_motion(&prev, hit.pos, px, py)
            },
        }
    });
    GBuffer {
        width,
        height,
        camera,
        background: scene.background,
        pixels,
    }
}

fn pixel_motion(prev: &Camera, pos: Vec3, px: usize, py: usize) -> Option<(f64, f64)> {
    let (x, y) = prev.project(pos)?;
    let inside = (0.0..prev.width as f64).contains(&x) && (0.0..prev.height as f64).contains(&y);
    inside.then_some((x - (px as f64 + 0.5), y - (py as f64 + 0.5)))
}

/// Motion of every valid pixel of `gbuf` relative to `prev_cam`.
pub fn motion_vectors(prev_cam: &Camera, gbuf: &GBuffer) -> Vec<Option<(f64, f64)>> {
    gbuf.pixels
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.valid {
                pixel_motion(prev_cam, p.pos, i % gbuf.width, i / gbuf.width)
            } else {
                None
            }
        })
        .collect()
}

/// Result of one path sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub color: Rgb,
    pub vpl: Vpl,
    /// Number of surface vertices visited.
    pub path_length: u32,
    /// The estimate was non-finite and has been replaced by black.
    pub nonfinite: bool,
}

fn direct_light<R: Rng + ?Sized>(
    scene: &Scene,
    x: Vec3,
    frame: &TangentFrame,
    wo_local: Vec3,
    m: &crate::scene::Material,
    rng: &mut R,
) -> Rgb {
    let Some(ls) = scene.sample_emitter(x, rng) else {
        return Vec3::ZERO;
    };
    if ls.pdf_sr <= 0.0 {
        return Vec3::ZERO;
    }
    let wi = frame.to_local(ls.dir);
    if wi.z <= 0.0 {
        return Vec3::ZERO;
    }
    let f = m.eval_local(wi, wo_local);
    if f.is_black() || scene.occluded(x, x + ls.dir * ls.dist) {
        return Vec3::ZERO;
    }
    f.mul_elem(ls.emitted) * (wi.z / ls.pdf_sr)
}

/// Radiance arriving at the previous vertex along `ray`, which was the
/// ray leaving vertex `depth − 1`. Returns the radiance, the first hit
/// position, and the number of vertices visited.
fn incoming<R: Rng + ?Sized>(
    scene: &Scene,
    ray: Ray,
    depth: u32,
    cfg: &PathConfig,
    rng: &mut R,
) -> (Rgb, Option<Vec3>, u32) {
    let mut radiance = Vec3::ZERO;
    let mut beta = Vec3::ONE;
    let mut ray = ray;
    let mut first = None;
    let mut visited = 0;
    for d in depth..cfg.max_depth {
        let Some(hit) = scene.intersect(&ray) else {
            radiance += beta.mul_elem(scene.background);
            break;
        };
        visited += 1;
        if first.is_none() {
            first = Some(hit.pos);
        }
        if !cfg.nee {
            radiance += beta.mul_elem(scene.emitted(&hit));
        }
        let m = scene.material(hit.material_id);
        let frame = TangentFrame::from_normal(hit.normal);
        let wo = frame.to_local(-ray.dir);
        if cfg.nee {
            radiance += beta.mul_elem(direct_light(scene, hit.pos, &frame, wo, m, rng));
        }
        if d + 1 >= cfg.max_depth {
            break;
        }
        let Some(wi) = m.sample_local(wo, rng) else { break };
        let pdf = m.pdf_local(wi, wo);
        let f = m.eval_local(wi, wo);
        if pdf <= 0.0 || f.is_black() {
            break;
        }
        beta = beta.mul_elem(f) * (wi.z / pdf);
        ray = Ray::new(hit.pos, frame.to_world(wi));
    }
    (radiance, first, visited)
}

/// One path through a G-buffer pixel. `guide` carries the pixel's stats and
/// lobe when guiding may be used.
pub fn trace_pixel<R: Rng + ?Sized>(
    scene: &Scene,
    background: Rgb,
    gpx: &GBufferPixel,
    guide: Option<(&GuidingStats, &GaussianLobe)>,
    cfg: &PathConfig,
    rng: &mut R,
) -> PixelSample {
    if !gpx.valid {
        return PixelSample {
            color: background,
            vpl: Vpl::INVALID,
            path_length: 0,
            nonfinite: false,
        };
    }
    let m = scene.material(gpx.material_id);
    let frame = TangentFrame::from_normal(gpx.normal);
    let wo = frame.to_local(gpx.wo);
    let mut color = gpx.emitted;
    if cfg.nee {
        color += direct_light(scene, gpx.pos, &frame, wo, m, rng);
    }
    let mut vpl = Vpl::INVALID;
    let mut path_length = 1;

    if cfg.max_depth >= 2 {
        let brdf = LocalBrdf { material: m, wo };
        let guide = guide.filter(|_| cfg.guiding && m.roughness >= cfg.roughness_min_guide);
        let sample = match guide {
            Some((stats, lobe)) => mixture::sample_mixture(stats, lobe, &brdf, rng).map(|s| (s.dir, s.pdf, s.strategy)),
            None => m.sample_local(wo, rng).map(|d| (d, m.pdf_local(d, wo), Strategy::Brdf)),
        };
        if let Some((wi, pdf, strategy)) = sample {
            debug_assert!(pdf > 0.0 || m.eval_local(wi, wo).is_black());
            let f = m.eval_local(wi, wo);
            if pdf > 0.0 && !f.is_black() {
                let ray = Ray::new(gpx.pos, frame.to_world(wi));
                let (li, y, visited) = incoming(scene, ray, 1, cfg, rng);
                path_length += visited;
                color += f.mul_elem(li) * (wi.z / pdf);
                if let Some(y) = y {
                    if li.is_finite() {
                        vpl = Vpl {
                            valid: true,
                            y,
                            radiance: li,
                            strategy,
                        };
                    }
                }
            }
        }
    }

    let nonfinite = !color.is_finite();
    if nonfinite {
        color = Vec3::ZERO;
    }
    PixelSample {
        color,
        vpl,
        path_length,
        nonfinite,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RenderStats {
    pub nonfinite: u64,
    pub mean_path_length: f64,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// Per-pixel mean of `spp` samples, linear radiance.
    pub image: Vec<Rgb>,
    /// Unbiased sample variance of the per-sample luminance (0 when `spp = 1`).
    pub lum_var: Vec<f64>,
    /// VPLs of each pixel's first sample.
    pub vpls: VplBuffer,
    pub stats: RenderStats,
}

/// Renders one frame from a prepared G-buffer. With `gamma = None` the
/// guiding buffer is never touched.
pub fn render_with_gbuffer(
    scene: &Scene,
    gbuf: &GBuffer,
    frame: u32,
    gamma: Option<&GuidingBuffer>,
    cfg: &PathConfig,
    seed: u64,
    exec: Exec,
) -> RenderOutput {
    let (w, h) = (gbuf.width, gbuf.height);
    if let Some(g) = gamma {
        assert_eq!((g.width, g.height), (w, h), "guiding buffer size does not match the frame");
    }
    let spp = cfg.spp.max(1);
    let results = exec.map(w * h, |i| {
        let gpx = &gbuf.pixels[i];
        let mut rng = pixel_rng(seed, frame as u64, i as u64, Pass::Trace);
        let guide = match gamma {
            Some(g) if cfg.guiding && gpx.valid => {
                let s = g.get(i);
                Some((s, mixture::lobe_from_stats(&s)))
            }
            _ => None,
        };
        let guide_ref = guide.as_ref().map(|(s, l)| (s, l));
        let mut sum = Vec3::ZERO;
        let (mut mean_l, mut m2_l) = (0.0, 0.0);
        let mut vpl = Vpl::INVALID;
        let mut bad = 0u64;
        let mut length = 0u64;
        for n in 0..spp {
            let s = trace_pixel(scene, gbuf.background, gpx, guide_ref, cfg, &mut rng);
            if n == 0 {
                vpl = s.vpl;
            }
            sum += s.color;
            bad += s.nonfinite as u64;
            length += s.path_length as u64;
            let l = s.color.luminance();
            let delta = l - mean_l;
            mean_l += delta / (n + 1) as f64;
            m2_l += delta * (l - mean_l);
        }
        let var = if spp > 1 { m2_l / (spp - 1) as f64 } else { 0.0 };
        (sum / spp as f64, var, vpl, bad, length)
    });

    let mut image = Vec::with_capacity(w * h);
    let mut lum_var = Vec::with_capacity(w * h);
    let mut vpls = Vec::with_capacity(w * h);
    let mut stats = RenderStats::default();
    let mut total_len = 0u64;
    for (c, v, vpl, bad, len) in results {
        image.push(c);
        lum_var.push(v);
        vpls.push(vpl);
        stats.nonfinite += bad;
        total_len += len;
    }
    let samples = (w * h) as f64 * spp as f64;
    stats.mean_path_length = if samples > 0.0 { total_len as f64 / samples } else { 0.0 };
    RenderOutput {
        width: w,
        height: h,
        image,
        lum_var,
        vpls: VplBuffer::from_vec(w, h, vpls),
        stats,
    }
}

/// G-buffer pass followed by the path-tracing pass.
#[allow(clippy::too_many_arguments)]
pub fn render_frame(
    scene: &Scene,
    frame: u32,
    width: usize,
    height: usize,
    gamma: Option<&GuidingBuffer>,
    cfg: &PathConfig,
    seed: u64,
    exec: Exec,
) -> (RenderOutput, GBuffer) {
    let gbuf = gbuffer_pass(scene, frame, width, height, exec);
    let out = render_with_gbuffer(scene, &gbuf, frame, gamma, cfg, seed, exec);
    (out, gbuf)
}
