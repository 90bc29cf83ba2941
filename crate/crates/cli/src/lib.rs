//! `ngp` command line: train, render, bench, slice, serve and synth.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ngp_core::bench::{emit_report, run_benchmark, to_text_table, BenchConfig, FieldRendererFactory};
use ngp_core::field::{HashGridConfig, MlpConfig, NeuralField, RadianceField};
use ngp_core::math::{Aabb, Pose, Quat, Vec3};
use ngp_core::render::{render_stereo, RenderSettings, StereoRig};
use ngp_core::scenes::ScenePreset;
use ngp_core::train::{
    dataset_psnr, load_dataset, load_snapshot, save_snapshot, synthesize_dataset, train, SnapshotMeta,
    SynthOptions, TrainConfig,
};
use ngp_core::volume::{export_volume, write_slices, SliceFormat, DEFAULT_VOXEL_BUDGET};
use ngp_service::{Encoding, FieldSource, Server, Session, ViewState};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ngp", version, about = "Hash-encoded radiance fields: train, render, benchmark, slice and serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a field from a transforms.json manifest and write a snapshot
    Train(TrainArgs),
    /// Render one stereo pair to image files
    Render(RenderArgs),
    /// Run a frame-timing benchmark sweep and write CSV, JSON and a text table
    Bench(BenchArgs),
    /// Export a field to a voxel grid and write it as slices
    Slice(SliceArgs),
    /// Stream stereo frames to WebSocket viewers
    Serve(ServeArgs),
    /// Render an analytic preset into a posed image dataset
    Synth(SynthArgs),
}

/// A preset name or a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    Preset(ScenePreset),
    Snapshot(PathBuf),
}

impl FromStr for SceneSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(p) = s.parse::<ScenePreset>() {
            return Ok(SceneSource::Preset(p));
        }
        let path = PathBuf::from(s);
        if path.is_file() {
            return Ok(SceneSource::Snapshot(path));
        }
        let names: Vec<&str> = ngp_core::scenes::ALL_PRESETS.iter().map(|p| p.name()).collect();
        Err(format!("'{s}' is neither a snapshot file nor a preset ({})", names.join(", ")))
    }
}

struct LoadedScene {
    field: Box<dyn RadianceField<f32>>,
    aabb: Aabb<f32>,
    orbit_radius: f32,
}

impl SceneSource {
    fn load(&self) -> Result<LoadedScene, CliError> {
        Ok(match self {
            SceneSource::Preset(p) => LoadedScene {
                field: Box::new(p.field()),
                aabb: p.aabb(),
                orbit_radius: p.orbit_radius(),
            },
            SceneSource::Snapshot(path) => {
                let (field, _) = load_snapshot(path).map_err(runtime)?;
                let aabb = field.aabb();
                LoadedScene {
                    field: Box::new(field),
                    aabb,
                    orbit_radius: 1.25 * aabb.scale(),
                }
            }
        })
    }
}

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("no such file: {s}"))
    }
}

fn parse_resolution(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width in '{s}'"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height in '{s}'"))?;
    if w == 0 || h == 0 || w > 16384 || h > 16384 {
        return Err(format!("resolution '{s}' out of range"));
    }
    Ok((w, h))
}

/// `px,py,pz,qx,qy,qz,qw`; the quaternion is renormalised.
fn parse_pose(s: &str) -> Result<Pose<f32>, String> {
    let v: Vec<f32> = s
        .split(',')
        .map(|t| t.trim().parse::<f32>().map_err(|_| format!("bad number '{t}' in pose")))
        .collect::<Result<_, _>>()?;
    if v.len() != 7 || v.iter().any(|x| !x.is_finite()) {
        return Err("pose needs 7 finite numbers: px,py,pz,qx,qy,qz,qw".into());
    }
    let q = Quat::new(v[3], v[4], v[5], v[6]).normalized().map_err(|e| e.to_string())?;
    Ok(Pose::new(Vec3::new(v[0], v[1], v[2]), q))
}

fn parse_nonneg(s: &str) -> Result<f32, String> {
    match s.parse::<f32>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a finite number >= 0, got '{s}'")),
    }
}

fn parse_upscale(s: &str) -> Result<u32, String> {
    match s {
        "1" | "2" | "4" => Ok(s.parse().expect("digit")),
        _ => Err(format!("upscale must be 1, 2 or 4, got '{s}'")),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// transforms.json manifest
    #[arg(long, value_parser = existing_file)]
    pub manifest: PathBuf,
    /// Snapshot file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Optimizer steps (overrides the config file)
    #[arg(long)]
    pub steps: Option<usize>,
    /// RNG seed for initialization and ray sampling (overrides the config file)
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON training config
    #[arg(long, value_parser = existing_file)]
    pub config: Option<PathBuf>,
    /// Rays per batch (overrides the config file)
    #[arg(long)]
    pub batch_rays: Option<usize>,
    /// Samples per training ray (overrides the config file)
    #[arg(long)]
    pub samples: Option<usize>,
    /// Print the loss every N steps; 0 disables
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Snapshot to render
    #[arg(long, value_parser = existing_file, conflicts_with = "scene")]
    pub snapshot: Option<PathBuf>,
    /// Analytic preset to render instead of a snapshot
    #[arg(long, value_parser = ScenePreset::from_str)]
    pub scene: Option<ScenePreset>,
    /// Head pose px,py,pz,qx,qy,qz,qw; defaults to looking at the origin from +Z
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    pub pose: Option<Pose<f32>>,
    /// Output resolution WxH
    #[arg(long, value_parser = parse_resolution, default_value = "640x480")]
    pub res: (u32, u32),
    /// Interpupillary distance in meters
    #[arg(long, value_parser = parse_nonneg, default_value_t = 0.063)]
    pub ipd: f32,
    /// Upscale factor from the internal render resolution (1, 2 or 4)
    #[arg(long, value_parser = parse_upscale, default_value_t = 1)]
    pub upscale: u32,
    /// Vertical field of view in degrees
    #[arg(long, default_value_t = 60.0)]
    pub fov: f32,
    /// Samples per ray
    #[arg(long, default_value_t = 128)]
    pub samples: usize,
    /// Left eye image (.png, or .raw for float RGB)
    #[arg(long)]
    pub out_left: PathBuf,
    /// Right eye image (.png, or .raw for float RGB)
    #[arg(long)]
    pub out_right: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON benchmark config
    #[arg(long, value_parser = existing_file)]
    pub config: PathBuf,
    /// Directory for report.csv, report.json and report.txt
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SliceFormatArg {
    Png,
    Raw,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// Snapshot to export
    #[arg(long, value_parser = existing_file, conflicts_with = "scene")]
    pub snapshot: Option<PathBuf>,
    /// Analytic preset to export instead of a snapshot
    #[arg(long, value_parser = ScenePreset::from_str)]
    pub scene: Option<ScenePreset>,
    /// Voxels per axis
    #[arg(long)]
    pub res: usize,
    /// Output directory
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Slice file format
    #[arg(long, value_enum, default_value_t = SliceFormatArg::Png)]
    pub format: SliceFormatArg,
    /// Largest voxel count accepted
    #[arg(long, default_value_t = DEFAULT_VOXEL_BUDGET)]
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Png,
    Raw,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Snapshot file or preset name
    #[arg(long)]
    pub scene: SceneSource,
    /// Listen address
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub listen: String,
    /// Target render ticks per second
    #[arg(long, default_value_t = ngp_service::DEFAULT_TICK_RATE)]
    pub tick_rate: f64,
    /// Initial resolution WxH
    #[arg(long, value_parser = parse_resolution, default_value = "640x480")]
    pub res: (u32, u32),
    /// Initial upscale factor (1, 2 or 4)
    #[arg(long, value_parser = parse_upscale, default_value_t = 2)]
    pub upscale: u32,
    /// Samples per ray
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Vertical field of view in degrees
    #[arg(long, default_value_t = 60.0)]
    pub fov: f32,
    /// Frame payload encoding
    #[arg(long, value_enum, default_value_t = EncodingArg::Png)]
    pub encoding: EncodingArg,
    /// Stop after this many seconds instead of running until interrupted
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Analytic preset to photograph
    #[arg(long, value_parser = ScenePreset::from_str, default_value = "sphere")]
    pub scene: ScenePreset,
    /// Output directory for images and transforms.json
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Number of views
    #[arg(long, default_value_t = 20)]
    pub views: usize,
    /// Square image size in pixels
    #[arg(long, default_value_t = 64)]
    pub res: u32,
    /// Vertical field of view in degrees
    #[arg(long, default_value_t = 40.0)]
    pub fov: f32,
    /// Camera distance from the origin; defaults to the preset's orbit radius
    #[arg(long)]
    pub radius: Option<f32>,
    /// Samples per ray for the reference renders
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
}

/// Parses `args` (including the program name). `--help` and `--version`
/// come back as `Ok(Err(text))`.
pub fn parse<I, T>(args: I) -> Result<Result<Cli, String>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => Ok(Ok(cli)),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Ok(Err(e.to_string())),
            _ => Err(CliError::Usage(e.to_string())),
        },
    }
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = match parse(args) {
        Ok(Ok(cli)) => execute(cli),
        Ok(Err(text)) => {
            print!("{text}");
            return EXIT_OK;
        }
        Err(e) => Err(e),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprint!("{}", if m.ends_with('\n') { m.clone() } else { format!("error: {m}\n") }),
                CliError::Runtime(m) => eprintln!("error: {m}"),
            }
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Render(a) => cmd_render(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Slice(a) => cmd_slice(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn pick_scene(snapshot: Option<PathBuf>, scene: Option<ScenePreset>) -> Result<SceneSource, CliError> {
    match (snapshot, scene) {
        (Some(p), None) => Ok(SceneSource::Snapshot(p)),
        (None, Some(s)) => Ok(SceneSource::Preset(s)),
        _ => Err(CliError::Usage("exactly one of --snapshot or --scene is required".into())),
    }
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut value = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<serde_json::Value>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => serde_json::json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Usage("training config must be a JSON object".into()))?;
    if let Some(s) = a.seed {
        obj.insert("seed".into(), s.into());
    }
    if let Some(n) = a.steps {
        obj.insert("steps".into(), n.into());
    }
    if let Some(n) = a.batch_rays {
        obj.insert("batch_rays".into(), n.into());
    }
    if let Some(n) = a.samples {
        obj.insert("samples_per_ray".into(), n.into());
    }
    if !obj.contains_key("seed") {
        return Err(CliError::Usage("a seed is required: pass --seed or set \"seed\" in --config".into()));
    }
    let config: TrainConfig = serde_json::from_value(value).map_err(|e| CliError::Usage(e.to_string()))?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let config = train_config(&a)?;
    let dataset = load_dataset(&a.manifest).map_err(runtime)?;
    let field = NeuralField::<f32>::new(HashGridConfig::default(), MlpConfig::default(), dataset.aabb(), config.seed)
        .map_err(runtime)?;
    let start = Instant::now();
    let every = a.log_every;
    let outcome = train(field, &dataset, &config, |i, loss| {
        if every > 0 && (i + 1) % every == 0 {
            eprintln!("step {:>6}  loss {loss:.6}  {:.1}s", i + 1, start.elapsed().as_secs_f64());
        }
    })
    .map_err(runtime)?;
    let final_loss = outcome.losses.last().copied();
    let meta = SnapshotMeta {
        steps: config.steps,
        final_loss,
        seed: Some(config.seed),
    };
    save_snapshot(&outcome.field, &meta, &a.out).map_err(runtime)?;
    let psnr = dataset_psnr(&outcome.field, &dataset, config.samples_per_ray, config.background).map_err(runtime)?;
    println!(
        "steps {} final loss {:.6} training psnr {psnr:.2} dB -> {}",
        config.steps,
        final_loss.unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<(), CliError> {
    let scene = pick_scene(a.snapshot, a.scene)?.load()?;
    if !(a.fov > 0.0 && a.fov < 180.0) {
        return Err(CliError::Usage(format!("--fov {} must lie in (0, 180)", a.fov)));
    }
    let pose = match a.pose {
        Some(p) => p,
        None => Pose::look_at(Vec3::new(0.0, 0.0, scene.orbit_radius), Vec3::zero()).map_err(runtime)?,
    };
    let (w, h) = a.res;
    let mut settings = RenderSettings::new(w, h, scene.aabb);
    settings.upscale = a.upscale;
    settings.samples_per_ray = a.samples;
    settings.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let rig = StereoRig::new(pose, a.ipd, a.fov.to_radians()).map_err(|e| CliError::Usage(e.to_string()))?;
    let (left, right) = render_stereo(&*scene.field, &rig, &settings).map_err(runtime)?;
    left.save(&a.out_left).map_err(runtime)?;
    right.save(&a.out_right).map_err(runtime)?;
    let (iw, ih) = settings.internal_size();
    println!(
        "rendered {w}x{h} (internal {iw}x{ih}) -> {}, {}",
        a.out_left.display(),
        a.out_right.display()
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.config).map_err(|e| runtime(format!("{}: {e}", a.config.display())))?;
    let config: BenchConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_benchmark(&config, &FieldRendererFactory, |c| {
        let status = match (&c.error, c.dnf, &c.stats) {
            (Some(e), _, _) => format!("error: {e}"),
            (None, true, _) => "DNF".into(),
            (None, false, Some(s)) => format!("mean {:.2} ms, {:.2} fps, {} frames", s.mean_ms, s.fps, s.count),
            (None, false, None) => "no frames".into(),
        };
        eprintln!(
            "rep {} {} {}x{} upscale {}: {status}",
            c.repetition, c.scene, c.width, c.height, c.upscale
        );
    })
    .map_err(runtime)?;
    let files = emit_report(&report, &a.out_dir).map_err(runtime)?;
    print!("{}", to_text_table(&report));
    println!(
        "wrote {}, {}, {}",
        files.csv.display(),
        files.json.display(),
        files.table.display()
    );
    Ok(())
}

fn cmd_slice(a: SliceArgs) -> Result<(), CliError> {
    if a.res < 2 {
        return Err(CliError::Usage("--res must be >= 2".into()));
    }
    let scene = pick_scene(a.snapshot, a.scene)?.load()?;
    let grid = export_volume(&*scene.field, &scene.aabb, [a.res; 3], a.budget).map_err(runtime)?;
    let format = match a.format {
        SliceFormatArg::Png => SliceFormat::Png,
        SliceFormatArg::Raw => SliceFormat::Raw,
    };
    let meta = write_slices(&grid, &a.out_dir, format).map_err(runtime)?;
    println!(
        "wrote {}^3 voxels, density [{}, {}] -> {}",
        a.res,
        meta.density_range[0],
        meta.density_range[1],
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<(), CliError> {
    if !(a.tick_rate.is_finite() && a.tick_rate > 0.0) {
        return Err(CliError::Usage(format!("--tick-rate {} must be > 0", a.tick_rate)));
    }
    let scene = a.scene.load()?;
    let (w, h) = a.res;
    let mut settings = RenderSettings::new(w, h, scene.aabb);
    settings.upscale = a.upscale;
    settings.samples_per_ray = a.samples;
    let view = ViewState::looking_at_origin(scene.orbit_radius, a.fov.to_radians(), settings)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let encoding = match a.encoding {
        EncodingArg::Png => Encoding::Png,
        EncodingArg::Raw => Encoding::RawRgb8,
    };
    let session = Session::new(Box::new(FieldSource::new(scene.field)), view, encoding).map_err(runtime)?;
    let server = Server::bind(a.listen.as_str(), session, a.tick_rate).map_err(runtime)?;
    let addr = server.local_addr().map_err(runtime)?;
    println!("listening on ws://{addr}");
    let _ = std::io::stdout().flush();
    let stop = Arc::new(AtomicBool::new(false));
    if let Some(secs) = a.duration {
        let stop = stop.clone();
        std::thread::spawn(move || {
            std::thread::sleep(Duration::from_secs_f64(secs.max(0.0)));
            stop.store(true, std::sync::atomic::Ordering::Relaxed);
        });
    }
    server.run(&stop).map_err(runtime)
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    if a.views == 0 || a.res == 0 {
        return Err(CliError::Usage("--views and --res must be >= 1".into()));
    }
    let preset = a.scene;
    let opts = SynthOptions {
        views: a.views,
        resolution: a.res,
        fov_y: a.fov.to_radians(),
        orbit_radius: a.radius.unwrap_or(preset.orbit_radius()),
        aabb_scale: preset.aabb_scale(),
        samples_per_ray: a.samples,
    };
    let manifest = synthesize_dataset(&preset.field(), &opts, &a.out_dir).map_err(runtime)?;
    println!("wrote {} views -> {}", a.views, manifest.display());
    Ok(())
}
