use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use ngp_core::field::RadianceField;
use ngp_core::math::{Aabb, Pose, Similarity, Vec3};
use ngp_core::render::{render_stereo, Eye, Image, RenderSettings, StereoRig};

use crate::control::{parse_control, Control, ControlError};
use crate::wire::{encode_frame, Encoding, FrameMessage, WireError};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("rejected: {0}")]
    Rejected(String),
}

/// Produces one image per eye for a rig and settings snapshot.
pub trait StereoSource: Send + Sync {
    fn render(&self, rig: &StereoRig<f32>, settings: &RenderSettings<f32>) -> Result<(Image, Image), String>;
}

/// Renders a radiance field with the volume renderer.
pub struct FieldSource {
    field: Box<dyn RadianceField<f32>>,
}

impl FieldSource {
    pub fn new(field: Box<dyn RadianceField<f32>>) -> Self {
        Self { field }
    }
}

impl StereoSource for FieldSource {
    fn render(&self, rig: &StereoRig<f32>, settings: &RenderSettings<f32>) -> Result<(Image, Image), String> {
        render_stereo(&*self.field, rig, settings).map_err(|e| e.to_string())
    }
}

/// Everything a frame is rendered from. The manipulation lives in
/// `settings.scene_transform`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewState {
    pub rig: StereoRig<f32>,
    pub settings: RenderSettings<f32>,
}

impl ViewState {
    /// Head at `distance` on +Z looking at the origin, default IPD.
    pub fn looking_at_origin(distance: f32, fov_y: f32, settings: RenderSettings<f32>) -> Result<Self, SessionError> {
        let pose = Pose::look_at(Vec3::new(0.0, 0.0, distance), Vec3::zero())
            .map_err(|e| SessionError::Rejected(e.to_string()))?;
        let rig = StereoRig::new(pose, StereoRig::<f32>::DEFAULT_IPD as f32, fov_y)
            .map_err(|e| SessionError::Rejected(e.to_string()))?;
        let state = Self { rig, settings };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.settings
            .validate()
            .map_err(|e| SessionError::Rejected(e.to_string()))?;
        self.rig
            .camera(self.settings.width, self.settings.height)
            .map_err(|e| SessionError::Rejected(e.to_string()))?;
        Ok(())
    }

    pub fn manipulation(&self) -> Similarity<f32> {
        self.settings.scene_transform
    }

    pub fn aabb(&self) -> Aabb<f32> {
        self.settings.aabb
    }

    /// Applies `control` to a copy; `Stats` is a per-client concern and
    /// leaves the view unchanged.
    pub fn with(&self, control: &Control) -> Result<Self, SessionError> {
        let mut next = self.clone();
        match *control {
            Control::Pose(p) => next.rig.head_pose = p,
            Control::Ipd(m) => next.rig.ipd = m,
            Control::Settings(u) => {
                if let Some((w, h)) = u.resolution {
                    next.settings.width = w;
                    next.settings.height = h;
                }
                if let Some(s) = u.upscale {
                    next.settings.upscale = s;
                }
                if let Some(n) = u.samples_per_ray {
                    next.settings.samples_per_ray = n;
                }
            }
            Control::Aabb(b) => next.settings.aabb = b,
            Control::Manip(m) => next.settings.scene_transform = m,
            Control::Stats(_) => {}
        }
        next.validate()?;
        Ok(next)
    }
}

/// Outcome of one render tick.
#[derive(Debug, Clone, PartialEq)]
pub enum TickOutput {
    Frames {
        frame_id: u32,
        left: FrameMessage,
        right: FrameMessage,
        render_ms: f64,
    },
    Error {
        frame_id: u32,
        detail: String,
    },
}

impl TickOutput {
    pub fn frame_id(&self) -> u32 {
        match self {
            TickOutput::Frames { frame_id, .. } | TickOutput::Error { frame_id, .. } => *frame_id,
        }
    }
}

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// One scene, one render loop. Control updates land in a staged view that
/// the next tick snapshots; a newer update overwrites an older one that no
/// tick has consumed yet.
pub struct Session {
    source: Box<dyn StereoSource>,
    staged: Mutex<ViewState>,
    next_id: Mutex<u32>,
    encoding: Encoding,
}

impl Session {
    pub fn new(source: Box<dyn StereoSource>, initial: ViewState, encoding: Encoding) -> Result<Self, SessionError> {
        initial.validate()?;
        Ok(Self {
            source,
            staged: Mutex::new(initial),
            next_id: Mutex::new(0),
            encoding,
        })
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    /// On error the staged view is left untouched.
    pub fn apply_control(&self, control: &Control) -> Result<(), SessionError> {
        let mut staged = self.staged.lock().expect("staged view lock");
        *staged = staged.with(control)?;
        Ok(())
    }

    pub fn apply_text(&self, text: &str) -> Result<Control, SessionError> {
        let control = parse_control(text)?;
        self.apply_control(&control)?;
        Ok(control)
    }

    pub fn snapshot(&self) -> ViewState {
        self.staged.lock().expect("staged view lock").clone()
    }

    /// Id the next tick will carry.
    pub fn next_frame_id(&self) -> u32 {
        *self.next_id.lock().expect("frame id lock")
    }

    /// Renders both eyes from a single snapshot of the staged view. Ids are
    /// consumed by failed ticks too.
    pub fn render_tick(&self) -> TickOutput {
        let mut next_id = self.next_id.lock().expect("frame id lock");
        let frame_id = *next_id;
        *next_id = next_id.wrapping_add(1);
        let view = self.snapshot();
        let start = Instant::now();
        let result = self
            .source
            .render(&view.rig, &view.settings)
            .and_then(|(l, r)| {
                let render_ms = start.elapsed().as_secs_f64() * 1e3;
                let ts = unix_ms();
                let enc = |img: &Image, eye| {
                    encode_frame(img, frame_id, eye, self.encoding, ts).map_err(|e: WireError| e.to_string())
                };
                Ok(TickOutput::Frames {
                    frame_id,
                    left: enc(&l, Eye::Left)?,
                    right: enc(&r, Eye::Right)?,
                    render_ms,
                })
            });
        result.unwrap_or_else(|detail| TickOutput::Error { frame_id, detail })
    }
}

/// Rolling once-per-second frame statistics.
#[derive(Debug, Clone)]
pub struct StatsWindow {
    start: Instant,
    frames: usize,
    total_ms: f64,
    period: Duration,
}

impl StatsWindow {
    pub fn new(period: Duration) -> Self {
        Self {
            start: Instant::now(),
            frames: 0,
            total_ms: 0.0,
            period,
        }
    }

    pub fn record(&mut self, render_ms: f64) {
        self.frames += 1;
        self.total_ms += render_ms;
    }

    /// Returns `(mean frame ms, fps)` once a full period has elapsed, then
    /// starts a new window.
    pub fn poll(&mut self, now: Instant) -> Option<(f64, f64)> {
        let elapsed = now.duration_since(self.start);
        if elapsed < self.period {
            return None;
        }
        let out = if self.frames == 0 {
            (0.0, 0.0)
        } else {
            (self.total_ms / self.frames as f64, self.frames as f64 / elapsed.as_secs_f64())
        };
        self.start = now;
        self.frames = 0;
        self.total_ms = 0.0;
        Some(out)
    }
}

/// Ticks `session` at up to `tick_rate` per second until `stop` is set,
/// handing each output to `sink`. A late tick does not bank time for a
/// burst afterwards. Returns the number of ticks.
pub fn run_loop(
    session: &Session,
    tick_rate: f64,
    stop: &AtomicBool,
    mut sink: impl FnMut(TickOutput),
) -> usize {
    let period = Duration::from_secs_f64(1.0 / tick_rate.max(1e-3));
    let mut deadline = Instant::now();
    let mut ticks = 0;
    while !stop.load(Ordering::Relaxed) {
        let now = Instant::now();
        if now < deadline {
            std::thread::sleep((deadline - now).min(Duration::from_millis(50)));
            continue;
        }
        deadline = (deadline + period).max(now);
        sink(session.render_tick());
        ticks += 1;
    }
    ticks
}

#[cfg(test)]
mod tests {
    use super::*;
    use ngp_core::math::Quat;
    use ngp_core::scenes::ScenePreset;
    use std::sync::Arc;

    /// Fills each eye with a colour derived from the rig and records what
    /// it was asked to render.
    #[derive(Default)]
    struct Recorder {
        rigs: Arc<Mutex<Vec<StereoRig<f32>>>>,
        fail: bool,
    }

    impl StereoSource for Recorder {
        fn render(&self, rig: &StereoRig<f32>, s: &RenderSettings<f32>) -> Result<(Image, Image), String> {
            self.rigs.lock().unwrap().push(*rig);
            if self.fail {
                return Err("boom".into());
            }
            let p = rig.head_pose.position;
            let c = [p.x.fract().abs(), p.y.fract().abs(), p.z.fract().abs()];
            Ok((Image::filled(s.width, s.height, c), Image::filled(s.width, s.height, c)))
        }
    }

    fn view() -> ViewState {
        ViewState::looking_at_origin(3.0, 1.0, RenderSettings::new(8, 6, Aabb::centered_cube(2.0))).unwrap()
    }

    fn session(rec: Recorder) -> Session {
        Session::new(Box::new(rec), view(), Encoding::RawRgb8).unwrap()
    }

    fn pose(x: f32) -> Control {
        Control::Pose(Pose::new(Vec3::new(x, 2.0, 3.0), Quat::identity()))
    }

    #[test]
    fn pose_update_reaches_next_frame() {
        let rec = Recorder::default();
        let rigs = rec.rigs.clone();
        let s = session(rec);
        s.apply_text(r#"{"type":"pose","position":[1,2,3],"orientation":[0,0,0,1]}"#).unwrap();
        s.render_tick();
        assert_eq!(rigs.lock().unwrap()[0].head_pose, Pose::new(Vec3::new(1.0, 2.0, 3.0), Quat::identity()));
    }

    #[test]
    fn latest_pose_wins() {
        let rec = Recorder::default();
        let rigs = rec.rigs.clone();
        let s = session(rec);
        for k in 0..50 {
            s.apply_control(&pose(k as f32)).unwrap();
        }
        s.render_tick();
        s.apply_control(&pose(100.0)).unwrap();
        s.apply_control(&pose(200.0)).unwrap();
        s.render_tick();
        let xs: Vec<f32> = rigs.lock().unwrap().iter().map(|r| r.head_pose.position.x).collect();
        assert_eq!(xs, vec![49.0, 200.0]);
    }

    #[test]
    fn rejected_control_leaves_state_unchanged() {
        let s = session(Recorder::default());
        let before = s.snapshot();
        assert!(s.apply_text(r#"{"type":"ipd","meters":-0.01}"#).is_err());
        assert!(s.apply_text(r#"{"type":"settings","width":641,"height":480,"upscale":2}"#).is_err());
        assert_eq!(s.snapshot(), before);
        s.apply_text(r#"{"type":"settings","width":640,"height":480,"upscale":2}"#).unwrap();
        assert_eq!(s.snapshot().settings.internal_size(), (320, 240));
    }

    #[test]
    fn repeated_ticks_are_identical_with_increasing_ids() {
        let s = session(Recorder::default());
        let (a, b) = (s.render_tick(), s.render_tick());
        let (
            TickOutput::Frames { frame_id: ia, left: la, right: ra, .. },
            TickOutput::Frames { frame_id: ib, left: lb, right: rb, .. },
        ) = (a, b)
        else {
            panic!("render failed")
        };
        assert_eq!(ib, ia + 1);
        assert_eq!(la.payload, lb.payload);
        assert_eq!(ra.payload, rb.payload);
        assert_eq!(la.header.eye, Eye::Left);
        assert_eq!(ra.header.eye, Eye::Right);
    }

    #[test]
    fn error_frames_consume_ids() {
        let s = session(Recorder {
            fail: true,
            ..Default::default()
        });
        let ids: Vec<u32> = (0..3).map(|_| s.render_tick()).map(|t| {
            assert!(matches!(t, TickOutput::Error { .. }));
            t.frame_id()
        }).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(s.next_frame_id(), 3);
    }

    #[test]
    fn zero_ipd_gives_identical_eyes() {
        let p = ScenePreset::Sphere;
        let mut settings = RenderSettings::new(48, 32, p.aabb());
        settings.samples_per_ray = 32;
        let mut v = ViewState::looking_at_origin(2.0, 1.0, settings).unwrap();
        v.rig.ipd = 0.0;
        let s = Session::new(Box::new(FieldSource::new(Box::new(p.field()))), v, Encoding::Png).unwrap();
        let TickOutput::Frames { left, right, .. } = s.render_tick() else {
            panic!()
        };
        assert_eq!(left.payload, right.payload);
        s.apply_text(r#"{"type":"ipd","meters":0.063}"#).unwrap();
        let TickOutput::Frames { left, right, .. } = s.render_tick() else {
            panic!()
        };
        assert_ne!(left.payload, right.payload);
    }

    #[test]
    fn stats_window_reports_once_per_period() {
        let mut w = StatsWindow::new(Duration::from_secs(1));
        let t0 = w.start;
        w.record(10.0);
        w.record(20.0);
        assert_eq!(w.poll(t0 + Duration::from_millis(500)), None);
        let (ms, fps) = w.poll(t0 + Duration::from_secs(2)).unwrap();
        assert_eq!(ms, 15.0);
        assert_eq!(fps, 1.0);
        assert_eq!(w.poll(t0 + Duration::from_millis(2500)), None);
    }
}
