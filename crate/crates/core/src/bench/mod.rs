//! Frame-time benchmark: timed render sweeps over scenes × resolutions ×
//! upscale arms, quartile statistics and report emission.

mod report;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, to_csv, to_json, to_text_table, ReportFiles};

use crate::field::RadianceField;
use crate::math::{Aabb, Camera, Pose, Vec3};
use crate::render::{render_frame, render_stereo, RenderSettings, StereoRig};
use crate::scenes::ScenePreset;
use crate::train::load_snapshot;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("frame_stats needs at least 4 timings, got {0}")]
    TooFewSamples(usize),
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error("report has no scenes")]
    EmptyReport,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Quartile summary of one cell's frame times, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub mean_ms: f64,
    pub fastest25_mean_ms: f64,
    pub slowest25_mean_ms: f64,
    pub median_ms: f64,
    pub fps: f64,
    pub count: usize,
}

/// Mean, mean of the ⌈N/4⌉ fastest and slowest frames, median, and
/// `fps = 1000 / mean`.
pub fn frame_stats(timings_ms: &[f64]) -> Result<FrameStats, BenchError> {
    let n = timings_ms.len();
    if n < 4 {
        return Err(BenchError::TooFewSamples(n));
    }
    let mut sorted = timings_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = n.div_ceil(4);
    let mean_of = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let mean = mean_of(&sorted);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(FrameStats {
        mean_ms: mean,
        // clamp away summation round-off so the ordering holds exactly
        fastest25_mean_ms: mean_of(&sorted[..q]).min(mean),
        slowest25_mean_ms: mean_of(&sorted[n - q..]).max(mean),
        median_ms: median,
        fps: 1000.0 / mean,
        count: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSpec {
    Preset(ScenePreset),
    Snapshot(PathBuf),
}

impl SceneSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Preset(p) => p.name().to_string(),
            Self::Snapshot(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenes: Vec<SceneSpec>,
    #[serde(default = "defaults::resolutions")]
    pub resolutions: Vec<[u32; 2]>,
    /// Upscale factors, one arm each; 1 means no upscaling.
    #[serde(default = "defaults::upscale_arms")]
    pub upscale_arms: Vec<u32>,
    #[serde(default = "defaults::min_duration_s")]
    pub min_duration_s: f64,
    #[serde(default = "defaults::warmup_s")]
    pub warmup_s: f64,
    #[serde(default = "defaults::repetitions")]
    pub repetitions: usize,
    #[serde(default = "defaults::min_frames")]
    pub min_frames: usize,
    #[serde(default = "defaults::frame_timeout_ms")]
    pub frame_timeout_ms: f64,
    #[serde(default = "defaults::dnf_consecutive")]
    pub dnf_consecutive: usize,
    #[serde(default = "defaults::samples_per_ray")]
    pub samples_per_ray: usize,
    #[serde(default = "defaults::fov_y_deg")]
    pub fov_y_deg: f64,
    #[serde(default = "defaults::stereo")]
    pub stereo: bool,
    #[serde(default)]
    pub orbit: OrbitPath,
}

mod defaults {
    pub fn resolutions() -> Vec<[u32; 2]> {
        vec![[320, 240], [640, 480], [1280, 720], [2560, 1440]]
    }
    pub fn upscale_arms() -> Vec<u32> {
        vec![2, 1]
    }
    pub fn min_duration_s() -> f64 {
        60.0
    }
    pub fn warmup_s() -> f64 {
        2.0
    }
    pub fn repetitions() -> usize {
        3
    }
    pub fn min_frames() -> usize {
        4
    }
    pub fn frame_timeout_ms() -> f64 {
        2000.0
    }
    pub fn dnf_consecutive() -> usize {
        3
    }
    pub fn samples_per_ray() -> usize {
        128
    }
    pub fn fov_y_deg() -> f64 {
        60.0
    }
    pub fn stereo() -> bool {
        true
    }
}

impl BenchConfig {
    pub fn new(scenes: Vec<SceneSpec>) -> Self {
        Self {
            scenes,
            resolutions: defaults::resolutions(),
            upscale_arms: defaults::upscale_arms(),
            min_duration_s: defaults::min_duration_s(),
            warmup_s: defaults::warmup_s(),
            repetitions: defaults::repetitions(),
            min_frames: defaults::min_frames(),
            frame_timeout_ms: defaults::frame_timeout_ms(),
            dnf_consecutive: defaults::dnf_consecutive(),
            samples_per_ray: defaults::samples_per_ray(),
            fov_y_deg: defaults::fov_y_deg(),
            stereo: defaults::stereo(),
            orbit: OrbitPath::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidConfig(m));
        if self.scenes.is_empty() {
            return bad("scene list is empty".into());
        }
        if self.resolutions.is_empty() {
            return bad("resolution list is empty".into());
        }
        if self.upscale_arms.is_empty() {
            return bad("upscale arm list is empty".into());
        }
        for &s in &self.upscale_arms {
            if ![1, 2, 4].contains(&s) {
                return bad(format!("upscale {s} not in {{1, 2, 4}}"));
            }
            for &[w, h] in &self.resolutions {
                if w == 0 || h == 0 || w % s != 0 || h % s != 0 {
                    return bad(format!("{w}x{h} not divisible by upscale {s}"));
                }
            }
        }
        if !(self.min_duration_s > 0.0) || !(self.warmup_s >= 0.0) || !(self.frame_timeout_ms > 0.0) {
            return bad("durations must be positive".into());
        }
        if self.repetitions == 0 || self.dnf_consecutive == 0 {
            return bad("repetitions and dnf_consecutive must be positive".into());
        }
        if self.min_frames < 4 {
            return bad("min_frames must be >= 4".into());
        }
        if self.samples_per_ray < 2 {
            return bad("samples_per_ray must be >= 2".into());
        }
        Ok(())
    }
}

/// Seeded orbit around the scene centre. The start angle and elevation are
/// drawn from `seed`; the camera then advances `step_rad` per frame, so the
/// path depends only on the frame index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitPath {
    pub seed: u64,
    pub step_rad: f64,
    pub max_elevation_rad: f64,
}

impl Default for OrbitPath {
    fn default() -> Self {
        Self {
            seed: 0,
            step_rad: 0.05,
            max_elevation_rad: 0.5,
        }
    }
}

impl OrbitPath {
    pub fn pose(&self, center: Vec3<f32>, radius: f32, frame: usize) -> Pose<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let start: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let elevation: f64 = rng.random_range(-self.max_elevation_rad..=self.max_elevation_rad);
        let azimuth = start + self.step_rad * frame as f64;
        let offset = Vec3::new(
            (elevation.cos() * azimuth.cos()) as f32,
            elevation.sin() as f32,
            (elevation.cos() * azimuth.sin()) as f32,
        ) * radius;
        Pose::look_at(center + offset, center).expect("orbit keeps away from the poles")
    }
}

/// Something the harness can time. One instance serves one scene for one
/// repetition.
pub trait FrameRenderer {
    fn aabb(&self) -> Aabb<f32>;

    fn orbit_radius(&self) -> f32 {
        1.25 * self.aabb().scale()
    }

    fn render(&mut self, camera: &Camera<f32>, settings: &RenderSettings<f32>) -> Result<(), String>;
}

pub trait RendererFactory {
    fn create(&self, scene: &SceneSpec, config: &BenchConfig) -> Result<Box<dyn FrameRenderer>, String>;
}

/// Renders analytic presets or snapshots with the volume renderer.
pub struct FieldRenderer {
    field: Box<dyn RadianceField<f32>>,
    aabb: Aabb<f32>,
    radius: f32,
    stereo: bool,
}

impl FieldRenderer {
    pub fn new(field: Box<dyn RadianceField<f32>>, aabb: Aabb<f32>, radius: f32, stereo: bool) -> Self {
        Self {
            field,
            aabb,
            radius,
            stereo,
        }
    }
}

impl FrameRenderer for FieldRenderer {
    fn aabb(&self) -> Aabb<f32> {
        self.aabb
    }

    fn orbit_radius(&self) -> f32 {
        self.radius
    }

    fn render(&mut self, camera: &Camera<f32>, settings: &RenderSettings<f32>) -> Result<(), String> {
        if self.stereo {
            let rig = StereoRig::new(camera.pose, StereoRig::<f32>::DEFAULT_IPD as f32, camera.fov_y)
                .map_err(|e| e.to_string())?;
            render_stereo(&*self.field, &rig, settings).map_err(|e| e.to_string())?;
        } else {
            render_frame(&*self.field, camera, settings, Vec3::zero()).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Builds a fresh [`FieldRenderer`] per request; snapshots are reloaded
/// from disk every time.
pub struct FieldRendererFactory;

impl RendererFactory for FieldRendererFactory {
    fn create(&self, scene: &SceneSpec, config: &BenchConfig) -> Result<Box<dyn FrameRenderer>, String> {
        Ok(Box::new(match scene {
            SceneSpec::Preset(p) => {
                FieldRenderer::new(Box::new(p.field()), p.aabb(), p.orbit_radius(), config.stereo)
            }
            SceneSpec::Snapshot(path) => {
                let (field, _) = load_snapshot(path).map_err(|e| e.to_string())?;
                let aabb = field.aabb();
                FieldRenderer::new(Box::new(field), aabb, 1.25 * aabb.scale(), config.stereo)
            }
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scene: String,
    pub width: u32,
    pub height: u32,
    pub upscale: u32,
    pub repetition: usize,
    pub stats: Option<FrameStats>,
    pub dnf: bool,
    pub error: Option<String>,
    pub timings_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub threads: usize,
    pub host: String,
    pub samples_per_ray: usize,
    pub repetitions: usize,
    pub min_duration_s: f64,
    pub warmup_s: f64,
    pub frame_timeout_ms: f64,
    pub stereo: bool,
    pub orbit: OrbitPath,
    pub scenes: Vec<String>,
    pub resolutions: Vec<[u32; 2]>,
    pub upscale_arms: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub meta: ReportMeta,
    /// One entry per (repetition, scene, resolution, arm).
    pub cells: Vec<CellResult>,
}

/// Pooled statistics of one (scene, resolution, arm) over all repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub stats: Option<FrameStats>,
    pub dnf: bool,
}

impl BenchReport {
    pub fn summary(&self, scene: &str, resolution: [u32; 2], upscale: u32) -> SummaryCell {
        let matching: Vec<&CellResult> = self
            .cells
            .iter()
            .filter(|c| c.scene == scene && [c.width, c.height] == resolution && c.upscale == upscale)
            .collect();
        let timings: Vec<f64> = matching
            .iter()
            .filter(|c| c.stats.is_some())
            .flat_map(|c| c.timings_ms.iter().copied())
            .collect();
        match frame_stats(&timings) {
            Ok(stats) => SummaryCell {
                stats: Some(stats),
                dnf: false,
            },
            Err(_) => SummaryCell {
                stats: None,
                dnf: true,
            },
        }
    }
}

pub fn host_description() -> String {
    let name = std::env::var("HOSTNAME")
        .ok()
        .or_else(|| std::fs::read_to_string("/etc/hostname").ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into());
    format!("{name} ({}-{})", std::env::consts::OS, std::env::consts::ARCH)
}

enum CellOutcome {
    Done(Vec<f64>),
    Dnf(Vec<f64>),
    Failed(String),
}

fn run_cell(
    renderer: &mut dyn FrameRenderer,
    config: &BenchConfig,
    resolution: [u32; 2],
    upscale: u32,
) -> CellOutcome {
    let aabb = renderer.aabb();
    let mut settings = RenderSettings::new(resolution[0], resolution[1], aabb);
    settings.samples_per_ray = config.samples_per_ray;
    settings.upscale = upscale;
    let center = aabb.center();
    let radius = renderer.orbit_radius();
    let fov = (config.fov_y_deg as f32).to_radians();
    let timeout = config.frame_timeout_ms;
    let mut consecutive = 0;
    let mut frame = 0;
    let mut timings = Vec::new();

    let timed = |renderer: &mut dyn FrameRenderer, frame: usize| -> Result<f64, String> {
        let pose = config.orbit.pose(center, radius, frame);
        let camera =
            Camera::new(pose, fov, resolution[0], resolution[1]).map_err(|e| e.to_string())?;
        let start = Instant::now();
        renderer.render(&camera, &settings)?;
        Ok(start.elapsed().as_secs_f64() * 1000.0)
    };

    let warmup = Duration::from_secs_f64(config.warmup_s);
    let begin = Instant::now();
    while begin.elapsed() < warmup {
        match timed(renderer, frame) {
            Ok(ms) if ms > timeout => {
                consecutive += 1;
                if consecutive >= config.dnf_consecutive {
                    return CellOutcome::Dnf(timings);
                }
            }
            Ok(_) => consecutive = 0,
            Err(e) => return CellOutcome::Failed(e),
        }
        frame += 1;
    }

    let duration = Duration::from_secs_f64(config.min_duration_s);
    let begin = Instant::now();
    while begin.elapsed() < duration || timings.len() < config.min_frames {
        match timed(renderer, frame) {
            Ok(ms) => {
                timings.push(ms);
                if ms > timeout {
                    consecutive += 1;
                    if consecutive >= config.dnf_consecutive {
                        return CellOutcome::Dnf(timings);
                    }
                } else {
                    consecutive = 0;
                }
            }
            Err(e) => return CellOutcome::Failed(e),
        }
        frame += 1;
    }
    CellOutcome::Done(timings)
}

/// Runs every (repetition, scene, resolution, arm) cell. Each scene gets a
/// fresh renderer per repetition. `progress` sees every finished cell.
pub fn run_benchmark(
    config: &BenchConfig,
    factory: &dyn RendererFactory,
    mut progress: impl FnMut(&CellResult),
) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let mut cells = Vec::new();
    for repetition in 0..config.repetitions {
        for scene in &config.scenes {
            let label = scene.label();
            let mut renderer = factory.create(scene, config);
            for &resolution in &config.resolutions {
                for &upscale in &config.upscale_arms {
                    let mut cell = CellResult {
                        scene: label.clone(),
                        width: resolution[0],
                        height: resolution[1],
                        upscale,
                        repetition,
                        stats: None,
                        dnf: false,
                        error: None,
                        timings_ms: Vec::new(),
                    };
                    match &mut renderer {
                        Err(e) => {
                            cell.dnf = true;
                            cell.error = Some(format!("scene load failed: {e}"));
                        }
                        Ok(r) => match run_cell(r.as_mut(), config, resolution, upscale) {
                            CellOutcome::Done(t) => {
                                cell.stats = frame_stats(&t).ok();
                                cell.dnf = cell.stats.is_none();
                                cell.timings_ms = t;
                            }
                            CellOutcome::Dnf(t) => {
                                cell.dnf = true;
                                cell.timings_ms = t;
                            }
                            CellOutcome::Failed(e) => {
                                cell.dnf = true;
                                cell.error = Some(e);
                            }
                        },
                    }
                    progress(&cell);
                    cells.push(cell);
                }
            }
        }
    }
    Ok(BenchReport {
        meta: ReportMeta {
            seed: config.orbit.seed,
            threads: rayon::current_num_threads(),
            host: host_description(),
            samples_per_ray: config.samples_per_ray,
            repetitions: config.repetitions,
            min_duration_s: config.min_duration_s,
            warmup_s: config.warmup_s,
            frame_timeout_ms: config.frame_timeout_ms,
            stereo: config.stereo,
            orbit: config.orbit,
            scenes: config.scenes.iter().map(SceneSpec::label).collect(),
            resolutions: config.resolutions.clone(),
            upscale_arms: config.upscale_arms.clone(),
        },
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stats_of_one_to_hundred() {
        let t: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = frame_stats(&t).unwrap();
        assert_eq!(s.mean_ms, 50.5);
        assert_eq!(s.fastest25_mean_ms, 13.0);
        assert_eq!(s.slowest25_mean_ms, 88.0);
        assert!((s.fps - 19.80).abs() < 0.005);
        assert_eq!(s.median_ms, 50.5);
        assert_eq!(s.count, 100);
    }

    #[test]
    fn stats_of_constant_stream() {
        let s = frame_stats(&[26.94; 4]).unwrap();
        assert_eq!(s.mean_ms, 26.94);
        assert_eq!(s.fastest25_mean_ms, 26.94);
        assert_eq!(s.slowest25_mean_ms, 26.94);
        assert!((s.fps - 37.11).abs() < 0.05);
        assert!(matches!(frame_stats(&[1.0; 3]), Err(BenchError::TooFewSamples(3))));
    }

    #[test]
    fn quartile_uses_ceiling() {
        // N = 5 → ⌈5/4⌉ = 2 frames per tail
        let s = frame_stats(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.fastest25_mean_ms, 1.5);
        assert_eq!(s.slowest25_mean_ms, 4.5);
        assert_eq!(s.median_ms, 3.0);
    }

    proptest! {
        #[test]
        fn stats_are_ordered(t in proptest::collection::vec(0.01f64..1e4, 4..200)) {
            let s = frame_stats(&t).unwrap();
            prop_assert!(s.fastest25_mean_ms <= s.mean_ms);
            prop_assert!(s.mean_ms <= s.slowest25_mean_ms);
            prop_assert!((s.fps * s.mean_ms - 1000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn config_defaults_follow_protocol() {
        let c: BenchConfig = serde_json::from_str(r#"{"scenes": [{"preset": "small"}]}"#).unwrap();
        assert_eq!(c.resolutions.len(), 4);
        assert_eq!(c.resolutions[3], [2560, 1440]);
        assert_eq!(c.upscale_arms, vec![2, 1]);
        assert_eq!(c.min_duration_s, 60.0);
        assert_eq!(c.warmup_s, 2.0);
        assert_eq!(c.repetitions, 3);
        assert_eq!(c.frame_timeout_ms, 2000.0);
        assert_eq!(c, BenchConfig::new(vec![SceneSpec::Preset(ScenePreset::Small)]));
        assert!(BenchConfig::new(vec![]).validate().is_err());
    }

    #[test]
    fn orbit_is_seeded_and_aims_at_centre() {
        let o = OrbitPath::default();
        let c = Vec3::new(1.0, 0.0, -1.0);
        let a = o.pose(c, 3.0, 5);
        assert_eq!(a, o.pose(c, 3.0, 5));
        assert!(((a.position - c).length() - 3.0).abs() < 1e-5);
        let f = a.forward();
        let to_c = (c - a.position).normalized();
        assert!(f.dot(to_c) > 0.9999);
        let other = OrbitPath { seed: 1, ..o };
        assert_ne!(a, other.pose(c, 3.0, 5));
    }

    struct Sleeper {
        ms: u64,
    }

    impl FrameRenderer for Sleeper {
        fn aabb(&self) -> Aabb<f32> {
            Aabb::centered_cube(2.0)
        }

        fn render(&mut self, _: &Camera<f32>, _: &RenderSettings<f32>) -> Result<(), String> {
            std::thread::sleep(Duration::from_millis(self.ms));
            Ok(())
        }
    }

    struct SleeperFactory(u64);

    impl RendererFactory for SleeperFactory {
        fn create(&self, scene: &SceneSpec, _: &BenchConfig) -> Result<Box<dyn FrameRenderer>, String> {
            match scene {
                SceneSpec::Snapshot(p) => Err(format!("cannot open {}", p.display())),
                _ => Ok(Box::new(Sleeper { ms: self.0 })),
            }
        }
    }

    fn quick(scenes: Vec<SceneSpec>, seconds: f64) -> BenchConfig {
        let mut c = BenchConfig::new(scenes);
        c.resolutions = vec![[32, 24]];
        c.upscale_arms = vec![1];
        c.min_duration_s = seconds;
        c.warmup_s = 0.05;
        c.repetitions = 1;
        c
    }

    #[test]
    fn fixed_frame_stub_measures_its_sleep() {
        let c = quick(vec![SceneSpec::Preset(ScenePreset::Constant)], 0.5);
        let r = run_benchmark(&c, &SleeperFactory(10), |_| {}).unwrap();
        let s = r.cells[0].stats.unwrap();
        assert!((s.mean_ms - 10.0).abs() < 1.0, "{}", s.mean_ms);
    }

    #[test]
    fn slow_stub_is_marked_dnf() {
        let c = quick(vec![SceneSpec::Preset(ScenePreset::Constant)], 0.05);
        assert_eq!(c.frame_timeout_ms, 2000.0);
        let start = std::time::Instant::now();
        let r = run_benchmark(&c, &SleeperFactory(3000), |_| {}).unwrap();
        assert!(start.elapsed() < Duration::from_secs(15));
        let cell = &r.cells[0];
        assert!(cell.dnf && cell.stats.is_none() && cell.error.is_none());
        assert!(r.summary("constant", [32, 24], 1).dnf);
        assert!(super::to_text_table(&r).contains("DNF"));
    }

    #[test]
    fn scene_load_failure_is_recorded_per_cell() {
        let c = quick(
            vec![
                SceneSpec::Snapshot("missing.ngpf".into()),
                SceneSpec::Preset(ScenePreset::Constant),
            ],
            0.05,
        );
        let r = run_benchmark(&c, &SleeperFactory(1), |_| {}).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert!(r.cells[0].dnf && r.cells[0].error.as_deref().unwrap().contains("missing"));
        assert!(r.cells[1].stats.is_some());
    }

    #[test]
    fn constant_scene_smoke() {
        let mut c = quick(vec![SceneSpec::Preset(ScenePreset::Constant)], 0.3);
        c.samples_per_ray = 8;
        let r = run_benchmark(&c, &FieldRendererFactory, |_| {}).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert!(r.cells[0].stats.unwrap().count >= 4);
        assert_eq!(r.meta.threads, rayon::current_num_threads());
    }
}
