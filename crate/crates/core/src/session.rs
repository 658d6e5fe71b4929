//! Frame-by-frame pipeline (G-buffer, reprojection, path tracing, training)
//! and the experiment protocols built on it.

use std::time::Instant;

use crate::error::Result;
use crate::guide_buffers::{
    reproject, training_pass, GuidingBuffer, ReprojectionPolicy, ReprojectionStats, TrainingConfig, TrainingStats,
};
use crate::metrics::{self, ImageRGB};
use crate::par::Exec;
use crate::ptrace::{gbuffer_pass, render_frame, render_with_gbuffer, GBuffer, PathConfig, RenderOutput};
use crate::rng::splitmix64;
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Plain path tracing.
    Pt,
    /// Path tracing with screen-space guiding and online training.
    Pg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub width: usize,
    pub height: usize,
    pub mode: Mode,
    pub seed: u64,
    pub path: PathConfig,
    pub training: TrainingConfig,
    pub policy: ReprojectionPolicy,
    pub exec: Exec,
}

impl SessionConfig {
    pub fn new(width: usize, height: usize, mode: Mode, seed: u64) -> Self {
        SessionConfig {
            width,
            height,
            mode,
            seed,
            path: PathConfig {
                guiding: mode == Mode::Pg,
                ..PathConfig::default()
            },
            training: TrainingConfig::default(),
            policy: ReprojectionPolicy::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTiming {
    pub gbuffer_ms: f64,
    pub reproject_ms: f64,
    pub trace_ms: f64,
    pub train_ms: f64,
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub frame: u32,
    pub output: RenderOutput,
    pub timing: FrameTiming,
    pub reprojection: Option<ReprojectionStats>,
    pub training: Option<TrainingStats>,
}

impl FrameResult {
    pub fn image(&self) -> ImageRGB {
        ImageRGB::from_rgb(self.output.width, self.output.height, &self.output.image)
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Owns Γ and the previous G-buffer across a sequence of frames.
pub struct Session<'a> {
    scene: &'a Scene,
    cfg: SessionConfig,
    gamma: GuidingBuffer,
    prev_gbuf: Option<GBuffer>,
    frame: u32,
}

impl<'a> Session<'a> {
    pub fn new(scene: &'a Scene, cfg: SessionConfig) -> Self {
        Session {
            scene,
            cfg,
            gamma: GuidingBuffer::new(cfg.width, cfg.height),
            prev_gbuf: None,
            frame: 0,
        }
    }

    /// Starts from a previously trained Γ. The first frame uses it as is.
    pub fn with_gamma(mut self, gamma: GuidingBuffer) -> Self {
        assert_eq!((gamma.width, gamma.height), (self.cfg.width, self.cfg.height));
        self.gamma = gamma;
        self
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn gamma(&self) -> &GuidingBuffer {
        &self.gamma
    }

    pub fn next_frame(&self) -> u32 {
        self.frame
    }

    /// Renders the next frame; in guided mode also reprojects Γ beforehand
    /// and trains it afterwards.
    pub fn step(&mut self) -> FrameResult {
        let cfg = self.cfg;
        let frame = self.frame;
        let t = Instant::now();
        let gbuf = gbuffer_pass(self.scene, frame, cfg.width, cfg.height, cfg.exec);
        let mut timing = FrameTiming {
            gbuffer_ms: elapsed_ms(t),
            ..FrameTiming::default()
        };
        let guided = cfg.mode == Mode::Pg;
        let mut reprojection = None;
        if guided {
            if let Some(prev) = &self.prev_gbuf {
                let t = Instant::now();
                let (g, st) = reproject(&self.gamma, prev, &gbuf, &cfg.policy);
                self.gamma = g;
                reprojection = Some(st);
                timing.reproject_ms = elapsed_ms(t);
            }
        }
        let t = Instant::now();
        let gamma = guided.then_some(&self.gamma);
        let output = render_with_gbuffer(self.scene, &gbuf, frame, gamma, &cfg.path, cfg.seed, cfg.exec);
        timing.trace_ms = elapsed_ms(t);
        let mut training = None;
        if guided {
            let t = Instant::now();
            let (g, st) = training_pass(
                &self.gamma,
                &output.vpls,
                &gbuf,
                self.scene,
                &cfg.training,
                cfg.seed,
                frame,
                cfg.exec,
            );
            self.gamma = g;
            training = Some(st);
            timing.train_ms = elapsed_ms(t);
        }
        self.prev_gbuf = Some(gbuf);
        self.frame += 1;
        FrameResult {
            frame,
            output,
            timing,
            reprojection,
            training,
        }
    }

    /// Renders `frame` with the current Γ held fixed (no reprojection, no
    /// training). In plain mode Γ is not touched.
    pub fn render_frozen(&self, frame: u32, seed: u64, spp: u32) -> RenderOutput {
        let cfg = PathConfig { spp, ..self.cfg.path };
        let gamma = (self.cfg.mode == Mode::Pg).then_some(&self.gamma);
        render_frame(self.scene, frame, self.cfg.width, self.cfg.height, gamma, &cfg, seed, self.cfg.exec).0
    }
}

/// Seed of the `i`-th paired render derived from a base seed.
pub fn pair_seed(seed: u64, i: u64) -> u64 {
    splitmix64(seed ^ splitmix64(i.wrapping_add(0x5151)))
}

/// Plain path-traced reference with `spp` samples per pixel.
pub fn reference(scene: &Scene, cfg: &SessionConfig, frame: u32, spp: u32) -> RenderOutput {
    let path = PathConfig {
        guiding: false,
        spp,
        ..cfg.path
    };
    render_frame(scene, frame, cfg.width, cfg.height, None, &path, cfg.seed, cfg.exec).0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbConfig {
    pub warmup: u32,
    pub pairs: u32,
    pub reference_spp: u32,
}

impl Default for AbConfig {
    fn default() -> Self {
        AbConfig {
            warmup: 128,
            pairs: 64,
            reference_spp: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbSummary {
    pub relmse_pt: Vec<f64>,
    pub relmse_pg: Vec<f64>,
    pub mean_relmse_pt: f64,
    pub mean_relmse_pg: f64,
    /// `mean_relmse_pg / mean_relmse_pt`.
    pub ratio: f64,
    /// Counted Γ reads and writes made while rendering the plain arm.
    pub pt_gamma_accesses: u64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Paired 1-spp comparison against a freshly rendered reference. See
/// [`run_ab_with_reference`].
pub fn run_ab(scene: &Scene, cfg: &SessionConfig, ab: &AbConfig) -> Result<AbSummary> {
    let reference_cfg = SessionConfig {
        seed: splitmix64(cfg.seed ^ 0x00C0_FFEE),
        ..*cfg
    };
    let r = reference(scene, &reference_cfg, 0, ab.reference_spp);
    run_ab_with_reference(scene, cfg, ab, &ImageRGB::from_rgb(r.width, r.height, &r.image))
}

/// Trains guiding for `ab.warmup` frames, freezes Γ, then renders
/// `ab.pairs` 1-spp frames per mode, the two renders of a pair sharing a
/// seed, and reports their mean relMSE against `reference`.
pub fn run_ab_with_reference(scene: &Scene, cfg: &SessionConfig, ab: &AbConfig, reference: &ImageRGB) -> Result<AbSummary> {
    let mut pg = Session::new(scene, SessionConfig { mode: Mode::Pg, ..*cfg }.with_guiding());
    for _ in 0..ab.warmup {
        pg.step();
    }
    let pt = Session::new(scene, SessionConfig { mode: Mode::Pt, ..*cfg }.with_guiding());

    let mut relmse_pt = Vec::with_capacity(ab.pairs as usize);
    let mut relmse_pg = Vec::with_capacity(ab.pairs as usize);
    let mut pt_gamma_accesses = 0;
    for i in 0..ab.pairs {
        let seed = pair_seed(cfg.seed, i as u64);
        let frame = ab.warmup + i;
        let before = pg.gamma().accesses();
        let a = pt.render_frozen(frame, seed, 1);
        pt_gamma_accesses += pg.gamma().accesses() - before;
        let b = pg.render_frozen(frame, seed, 1);
        relmse_pt.push(metrics::rel_mse(&ImageRGB::from_rgb(a.width, a.height, &a.image), reference)?);
        relmse_pg.push(metrics::rel_mse(&ImageRGB::from_rgb(b.width, b.height, &b.image), reference)?);
    }
    pt_gamma_accesses += pt.gamma().accesses();
    let mean_relmse_pt = mean(&relmse_pt);
    let mean_relmse_pg = mean(&relmse_pg);
    Ok(AbSummary {
        ratio: mean_relmse_pg / mean_relmse_pt,
        relmse_pt,
        relmse_pg,
        mean_relmse_pt,
        mean_relmse_pg,
        pt_gamma_accesses,
    })
}

impl SessionConfig {
    /// Path config consistent with `mode`.
    pub fn with_guiding(mut self) -> Self {
        self.path.guiding = self.mode == Mode::Pg;
        self
    }
}

/// Renders `warmup` frames, then returns the next `frames` frames of a
/// continuing sequence (guiding keeps training in guided mode).
pub fn run_sequence(scene: &Scene, cfg: &SessionConfig, warmup: u32, frames: u32) -> Vec<ImageRGB> {
    let mut s = Session::new(scene, cfg.with_guiding());
    for _ in 0..warmup {
        s.step();
    }
    (0..frames).map(|_| s.step().image()).collect()
}
