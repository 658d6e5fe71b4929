//! Command-line driver: `render`, `reference`, `compare`, `flicker`, `ab`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guide_buffers::{checkpoint_load_for, checkpoint_save};
use crate::metrics::{self, ImageRGB, MetricRow};
use crate::par;
use crate::scene::{load_scene, Scene};
use crate::session::{self, AbConfig, Mode, Session, SessionConfig};

#[derive(Debug, Parser)]
#[command(name = "screenguide", version, about = "Screen-space path guiding renderer and experiment harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a frame sequence, writing frame_NNNN.pfm/.ppm and timing.csv.
    Render(RunArgs),
    /// Render a high-spp path-traced reference.pfm.
    Reference(RunArgs),
    /// Compare two images against a reference (MSE and relMSE).
    Compare(CompareArgs),
    /// Temporal MSE between consecutive frames of a static-camera sequence.
    Flicker(RunArgs),
    /// Paired 1-spp PT vs PG comparison against a reference.
    Ab(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Pt,
    Pg,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Pt => Mode::Pt,
            ModeArg::Pg => Mode::Pg,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with any of the settings below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scene name or path to a JSON scene document.
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub frames: Option<u32>,
    #[arg(long)]
    pub spp: Option<u32>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kmax: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_in: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_out: Option<PathBuf>,
    /// Guided frames rendered before measurement starts.
    #[arg(long)]
    pub warmup: Option<u32>,
    /// Number of paired renders in `ab`.
    #[arg(long)]
    pub pairs: Option<u32>,
    /// Samples per pixel of the reference rendered by `ab`.
    #[arg(long)]
    pub reference_spp: Option<u32>,
    #[arg(long)]
    pub depth_rel_tol: Option<f64>,
    #[arg(long)]
    pub normal_dot_min: Option<f64>,
    #[arg(long)]
    pub neighbor_radius: Option<f64>,
    #[arg(long)]
    pub roughness_min_guide: Option<f64>,
    /// Exposure of the PPM previews.
    #[arg(long)]
    pub exposure: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    pub reference: PathBuf,
    /// CSV output path.
    #[arg(long, default_value = "compare.csv")]
    pub out: PathBuf,
}

/// Settings read from `--config`; every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scene: Option<String>,
    width: Option<usize>,
    height: Option<usize>,
    frames: Option<u32>,
    spp: Option<u32>,
    mode: Option<Mode>,
    seed: Option<u64>,
    kmax: Option<f64>,
    out: Option<PathBuf>,
    checkpoint_in: Option<PathBuf>,
    checkpoint_out: Option<PathBuf>,
    warmup: Option<u32>,
    pairs: Option<u32>,
    reference_spp: Option<u32>,
    depth_rel_tol: Option<f64>,
    normal_dot_min: Option<f64>,
    neighbor_radius: Option<f64>,
    roughness_min_guide: Option<f64>,
    exposure: Option<f64>,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: String,
    pub width: usize,
    pub height: usize,
    pub frames: u32,
    pub spp: u32,
    pub mode: Mode,
    pub seed: u64,
    pub kmax: f64,
    pub out: PathBuf,
    pub checkpoint_in: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
    pub warmup: u32,
    pub pairs: u32,
    pub reference_spp: u32,
    pub depth_rel_tol: f64,
    pub normal_dot_min: f64,
    pub neighbor_radius: f64,
    pub roughness_min_guide: f64,
    pub exposure: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: "cornell-occluder".into(),
            width: 64,
            height: 64,
            frames: 1,
            spp: 1,
            mode: Mode::Pg,
            seed: 0,
            kmax: crate::mixture::DEFAULT_KMAX,
            out: PathBuf::from("out"),
            checkpoint_in: None,
            checkpoint_out: None,
            warmup: 128,
            pairs: 64,
            reference_spp: 4096,
            depth_rel_tol: 0.1,
            normal_dot_min: 0.9,
            neighbor_radius: 10.0,
            roughness_min_guide: 0.05,
            exposure: 1.0,
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

impl RunConfig {
    /// Defaults, overridden by the config file, overridden by flags.
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str::<ConfigFile>(&text)
                    .map_err(|e| usage(format!("config {}: {e}", p.display())))?
            }
            None => ConfigFile::default(),
        };
        let d = RunConfig::default();
        let cfg = RunConfig {
            scene: args.scene.clone().or(file.scene).unwrap_or(d.scene),
            width: args.width.or(file.width).unwrap_or(d.width),
            height: args.height.or(file.height).unwrap_or(d.height),
            frames: args.frames.or(file.frames).unwrap_or(d.frames),
            spp: args.spp.or(file.spp).unwrap_or(d.spp),
            mode: args.mode.map(Mode::from).or(file.mode).unwrap_or(d.mode),
            seed: args.seed.or(file.seed).unwrap_or(d.seed),
            kmax: args.kmax.or(file.kmax).unwrap_or(d.kmax),
            out: args.out.clone().or(file.out).unwrap_or(d.out),
            checkpoint_in: args.checkpoint_in.clone().or(file.checkpoint_in),
            checkpoint_out: args.checkpoint_out.clone().or(file.checkpoint_out),
            warmup: args.warmup.or(file.warmup).unwrap_or(d.warmup),
            pairs: args.pairs.or(file.pairs).unwrap_or(d.pairs),
            reference_spp: args.reference_spp.or(file.reference_spp).unwrap_or(d.reference_spp),
            depth_rel_tol: args.depth_rel_tol.or(file.depth_rel_tol).unwrap_or(d.depth_rel_tol),
            normal_dot_min: args.normal_dot_min.or(file.normal_dot_min).unwrap_or(d.normal_dot_min),
            neighbor_radius: args.neighbor_radius.or(file.neighbor_radius).unwrap_or(d.neighbor_radius),
            roughness_min_guide: args
                .roughness_min_guide
                .or(file.roughness_min_guide)
                .unwrap_or(d.roughness_min_guide),
            exposure: args.exposure.or(file.exposure).unwrap_or(d.exposure),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(usage("resolution must be at least 1x1"));
        }
        if self.frames == 0 {
            return Err(usage("--frames must be at least 1"));
        }
        if self.spp == 0 || self.reference_spp == 0 {
            return Err(usage("samples per pixel must be at least 1"));
        }
        if self.pairs == 0 {
            return Err(usage("--pairs must be at least 1"));
        }
        if !(self.kmax >= 1.0 && self.kmax.is_finite()) {
            return Err(usage("--kmax must be a finite value >= 1"));
        }
        if !(self.depth_rel_tol > 0.0) || !(self.normal_dot_min > -1.0 && self.normal_dot_min < 1.0) {
            return Err(usage("reprojection tolerances out of range"));
        }
        if !(self.neighbor_radius >= 0.0) || !(self.roughness_min_guide >= 0.0) {
            return Err(usage("neighbour radius and roughness threshold must be non-negative"));
        }
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(usage("--exposure must be positive"));
        }
        Ok(())
    }

    pub fn session_config(&self, mode: Mode) -> SessionConfig {
        let mut s = SessionConfig::new(self.width, self.height, mode, self.seed);
        s.path.spp = self.spp;
        s.path.roughness_min_guide = self.roughness_min_guide;
        s.training.kmax = self.kmax;
        s.training.radius = self.neighbor_radius;
        s.policy.depth_rel_tol = self.depth_rel_tol;
        s.policy.normal_dot_min = self.normal_dot_min;
        s
    }

    fn load_scene(&self) -> Result<Scene> {
        load_scene(&self.scene)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

#[derive(Debug, Serialize)]
struct TimingRow {
    frame: u32,
    gbuffer_ms: f64,
    reproject_ms: f64,
    trace_ms: f64,
    train_ms: f64,
    mean_path_length: f64,
    nonfinite: u64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(f))
}

fn write_key_values(path: &Path, rows: &[(&str, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_render(cfg: &RunConfig) -> Result<()> {
    let scene = cfg.load_scene()?;
    let out = cfg.out_dir()?;
    let mut session = Session::new(&scene, cfg.session_config(cfg.mode));
    if let Some(p) = &cfg.checkpoint_in {
        if cfg.mode == Mode::Pg {
            session = session.with_gamma(checkpoint_load_for(p, cfg.width, cfg.height)?);
        }
    }
    let timing_path = out.join("timing.csv");
    let mut timing = csv_writer(&timing_path)?;
    for _ in 0..cfg.frames {
        let r = session.step();
        let img = r.image();
        metrics::write_pfm(&img, &out.join(format!("frame_{:04}.pfm", r.frame)))?;
        metrics::write_ppm_tonemapped(&img, &out.join(format!("frame_{:04}.ppm", r.frame)), cfg.exposure)?;
        timing.serialize(TimingRow {
            frame: r.frame,
            gbuffer_ms: r.timing.gbuffer_ms,
            reproject_ms: r.timing.reproject_ms,
            trace_ms: r.timing.trace_ms,
            train_ms: r.timing.train_ms,
            mean_path_length: r.output.stats.mean_path_length,
            nonfinite: r.output.stats.nonfinite,
        })?;
        println!(
            "frame {:4}  trace {:8.2} ms  train {:8.2} ms  path length {:.3}",
            r.frame, r.timing.trace_ms, r.timing.train_ms, r.output.stats.mean_path_length
        );
    }
    timing.flush().map_err(|e| Error::io(&timing_path, e))?;
    if let Some(p) = &cfg.checkpoint_out {
        checkpoint_save(session.gamma(), p)?;
    }
    Ok(())
}

pub fn cmd_reference(cfg: &RunConfig) -> Result<()> {
    let scene = cfg.load_scene()?;
    let out = cfg.out_dir()?;
    let r = session::reference(&scene, &cfg.session_config(Mode::Pt), 0, cfg.spp);
    let img = ImageRGB::from_rgb(r.width, r.height, &r.image);
    metrics::write_pfm(&img, &out.join("reference.pfm"))?;
    metrics::write_ppm_tonemapped(&img, &out.join("reference.ppm"), cfg.exposure)?;
    println!("reference: {} spp, {}x{}", cfg.spp, cfg.width, cfg.height);
    Ok(())
}

/// Error metrics of `a` and `b` against `reference`, as `(name, value)` rows.
pub fn compare_images(a: &ImageRGB, b: &ImageRGB, reference: &ImageRGB) -> Result<Vec<(&'static str, f64)>> {
    let mse_a = metrics::mse(a, reference)?;
    let mse_b = metrics::mse(b, reference)?;
    let rel_a = metrics::rel_mse(a, reference)?;
    let rel_b = metrics::rel_mse(b, reference)?;
    let ratio = |x: f64, y: f64| if x == y { 1.0 } else { y / x };
    Ok(vec![
        ("mse_a", mse_a),
        ("mse_b", mse_b),
        ("mse_ratio_b_over_a", ratio(mse_a, mse_b)),
        ("relmse_a", rel_a),
        ("relmse_b", rel_b),
        ("relmse_ratio_b_over_a", ratio(rel_a, rel_b)),
    ])
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let a = metrics::read_pfm(&args.a)?;
    let b = metrics::read_pfm(&args.b)?;
    let r = metrics::read_pfm(&args.reference)?;
    let rows = compare_images(&a, &b, &r)?;
    for (k, v) in &rows {
        println!("{k},{v}");
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_key_values(&args.out, &rows)
}

pub fn cmd_flicker(cfg: &RunConfig, scene: &Scene) -> Result<Vec<MetricRow>> {
    if cfg.frames < 2 {
        return Err(usage("flicker needs --frames >= 2"));
    }
    if !scene.camera_is_static() {
        return Err(usage("flicker requires a static camera"));
    }
    let warmup = if cfg.mode == Mode::Pg { cfg.warmup } else { 0 };
    let frames = session::run_sequence(scene, &cfg.session_config(cfg.mode), warmup, cfg.frames);
    metrics::flicker_series(&frames)
}

pub fn cmd_ab(cfg: &RunConfig, scene: &Scene) -> Result<session::AbSummary> {
    let ab = AbConfig {
        warmup: cfg.warmup,
        pairs: cfg.pairs,
        reference_spp: cfg.reference_spp,
    };
    session::run_ab(scene, &cfg.session_config(Mode::Pg), &ab)
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Render(a) => cmd_render(&RunConfig::resolve(&a)?),
        Command::Reference(a) => {
            let mut a = a;
            a.mode = Some(ModeArg::Pt);
            if a.spp.is_none() {
                a.spp = Some(2048);
            }
            cmd_reference(&RunConfig::resolve(&a)?)
        }
        Command::Compare(a) => cmd_compare(&a),
        Command::Flicker(a) => {
            let cfg = RunConfig::resolve(&a)?;
            let scene = cfg.load_scene()?;
            let rows = cmd_flicker(&cfg, &scene)?;
            let mean = rows.iter().map(|r| r.value).sum::<f64>() / rows.len() as f64;
            println!("mean temporal_mse {mean}");
            metrics::save_metrics_csv(&rows, &cfg.out_dir()?.join("flicker.csv"))
        }
        Command::Ab(a) => {
            let cfg = RunConfig::resolve(&a)?;
            let scene = cfg.load_scene()?;
            let s = cmd_ab(&cfg, &scene)?;
            let out = cfg.out_dir()?;
            let rows = [
                ("mean_relmse_pt", s.mean_relmse_pt),
                ("mean_relmse_pg", s.mean_relmse_pg),
                ("ratio_pg_over_pt", s.ratio),
            ];
            for (k, v) in &rows {
                println!("{k},{v}");
            }
            write_key_values(&out.join("ab_summary.csv"), &rows)?;
            let per_pair: Vec<MetricRow> = s
                .relmse_pt
                .iter()
                .zip(&s.relmse_pg)
                .enumerate()
                .flat_map(|(i, (pt, pg))| {
                    [
                        MetricRow {
                            frame: i,
                            metric: "relmse_pt".into(),
                            value: *pt,
                        },
                        MetricRow {
                            frame: i,
                            metric: "relmse_pg".into(),
                            value: *pg,
                        },
                    ]
                })
                .collect();
            metrics::save_metrics_csv(&per_pair, &out.join("ab_pairs.csv"))
        }
    }
}

/// Parses `PG_THREADS`; unset or empty means machine parallelism.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("PG_THREADS") {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| usage(format!("PG_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Entry point shared by the binary and tests. Exit codes: 0 success,
/// 1 runtime or IO failure, 2 usage error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = threads_from_env().and_then(|threads| par::with_threads(threads, || run_command(cli.command)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
