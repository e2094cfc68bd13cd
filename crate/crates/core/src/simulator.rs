//! Synthetic event streams of a fragment flight with ground-truth labels.
//!
//! Each camera sees a bright disk (the projected fragment) crossing a uniform
//! background. Every pixel keeps the log intensity at which it last fired and
//! emits one event per sample whose log-intensity change reaches the trigger
//! threshold. Tailing re-triggers and uniform noise are layered on top, and
//! every event carries the label of the process that produced it.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraExtrinsics, CameraIntrinsics, CameraModel, Event, Line3D, Pixel, Point3, Polarity};
use crate::ingest::{write_events, write_rig, EventStream, IngestError, RigCamera, RigConfig, RigFile, DEFAULT_OMEGA_PX, DEFAULT_STEP_M};
use crate::motion_fit::{decay_coefficient, displacement_at_time, FragmentPhysical};

/// Distance from the disk front within which a target event counts as leading.
pub const LEADING_TOLERANCE_PX: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("time {0} µs is outside the flight model")]
    DomainError(i64),
    #[error(transparent)]
    Rig(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Leading,
    Body,
    Tailing,
    Noise,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Leading => "leading",
            Label::Body => "body",
            Label::Tailing => "tailing",
            Label::Noise => "noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "leading" => Some(Label::Leading),
            "body" => Some(Label::Body),
            "tailing" => Some(Label::Tailing),
            "noise" => Some(Label::Noise),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledEvent {
    pub event: Event,
    pub label: Label,
}

/// Scene description as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub rig: RigFile,
    pub v0_mps: f64,
    pub k_per_m: f64,
    pub launch_us: i64,
    pub origin_m: [f64; 3],
    pub direction: [f64; 3],
    pub radius_m: f64,
    pub duration_us: i64,
    pub background_level: f64,
    pub target_contrast: f64,
    pub threshold_log: f64,
    pub sample_interval_us: i64,
    pub tailing_lag_us: f64,
    /// Expected tailing events per pixel of projected track length.
    pub tailing_events_per_px: f64,
    pub noise_rate_per_px_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub rig: RigConfig,
    pub v0: f64,
    pub k: f64,
    pub launch_us: i64,
    pub trajectory: Line3D,
    pub radius_m: f64,
    pub duration_us: i64,
    pub background_level: f64,
    pub target_contrast: f64,
    pub threshold: f64,
    pub sample_interval_us: i64,
    pub tailing_lag_us: f64,
    pub tailing_events_per_px: f64,
    pub noise_rate: f64,
    pub seed: u64,
}

fn check(ok: bool, field: &str, msg: impl std::fmt::Display) -> Result<(), SimError> {
    if ok {
        Ok(())
    } else {
        Err(SimError::InvalidScene(format!("`{field}` {msg}")))
    }
}

impl SimScene {
    pub fn from_file(f: &SceneFile) -> Result<Self, SimError> {
        check(f.v0_mps > 0.0 && f.v0_mps.is_finite(), "v0_mps", "must be > 0")?;
        check(f.k_per_m >= 0.0 && f.k_per_m.is_finite(), "k_per_m", "must be ≥ 0")?;
        check(f.radius_m > 0.0 && f.radius_m.is_finite(), "radius_m", "must be > 0")?;
        check(f.duration_us > 0, "duration_us", "must be > 0")?;
        check(f.launch_us >= 0, "launch_us", "must be ≥ 0")?;
        check(f.background_level > 0.0 && f.background_level.is_finite(), "background_level", "must be > 0")?;
        check(f.target_contrast > -1.0 && f.target_contrast.is_finite(), "target_contrast", "must be > -1")?;
        check(f.threshold_log > 0.0 && f.threshold_log.is_finite(), "threshold_log", "must be > 0")?;
        check(f.sample_interval_us >= 1, "sample_interval_us", "must be ≥ 1")?;
        check(f.tailing_lag_us > 0.0 && f.tailing_lag_us.is_finite(), "tailing_lag_us", "must be > 0")?;
        check(
            f.tailing_events_per_px >= 0.0 && f.tailing_events_per_px.is_finite(),
            "tailing_events_per_px",
            "must be ≥ 0",
        )?;
        check(
            f.noise_rate_per_px_s >= 0.0 && f.noise_rate_per_px_s.is_finite(),
            "noise_rate_per_px_s",
            "must be ≥ 0",
        )?;
        let origin = Point3::from(f.origin_m);
        let trajectory = Line3D::new(origin, Vector3::from(f.direction))
            .map_err(|e| SimError::InvalidScene(format!("`direction` {e}")))?;
        let rig = RigConfig::from_file(&f.rig).map_err(|e| SimError::InvalidScene(format!("`rig` {e}")))?;
        Ok(Self {
            rig,
            v0: f.v0_mps,
            k: f.k_per_m,
            launch_us: f.launch_us,
            trajectory,
            radius_m: f.radius_m,
            duration_us: f.duration_us,
            background_level: f.background_level,
            target_contrast: f.target_contrast,
            threshold: f.threshold_log,
            sample_interval_us: f.sample_interval_us,
            tailing_lag_us: f.tailing_lag_us,
            tailing_events_per_px: f.tailing_events_per_px,
            noise_rate: f.noise_rate_per_px_s,
            seed: f.seed,
        })
    }

    pub fn to_file(&self) -> SceneFile {
        let o = self.trajectory.origin;
        let d = self.trajectory.dir;
        SceneFile {
            rig: self.rig.to_file(),
            v0_mps: self.v0,
            k_per_m: self.k,
            launch_us: self.launch_us,
            origin_m: [o.x, o.y, o.z],
            direction: [d.x, d.y, d.z],
            radius_m: self.radius_m,
            duration_us: self.duration_us,
            background_level: self.background_level,
            target_contrast: self.target_contrast,
            threshold_log: self.threshold,
            sample_interval_us: self.sample_interval_us,
            tailing_lag_us: self.tailing_lag_us,
            tailing_events_per_px: self.tailing_events_per_px,
            noise_rate_per_px_s: self.noise_rate,
            seed: self.seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let f: SceneFile = serde_json::from_str(text).map_err(|e| SimError::InvalidScene(e.to_string()))?;
        Self::from_file(&f)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("scene serialises");
        s.push('\n');
        s
    }

    /// Two 1280×720 cameras 0.5 m apart watching a 5 g, 4 mm fragment fly
    /// about 1 m from the muzzle at 385.6 m/s.
    pub fn default_scene() -> Self {
        let intr = CameraIntrinsics::new(1200.0, 1200.0, 640.0, 360.0, 1280, 720).expect("valid intrinsics");
        let target = Point3::new(0.5, 0.05, 0.0);
        let cameras = [(0, -0.25), (1, 0.25)]
            .into_iter()
            .map(|(id, y)| RigCamera {
                id,
                model: CameraModel::new(
                    intr,
                    CameraExtrinsics::look_at(Point3::new(0.5, y, -1.2), target, Vector3::y()).expect("valid pose"),
                ),
            })
            .collect();
        let muzzle = Point3::origin();
        let mut rig = RigConfig {
            cameras,
            muzzle,
            scatter_origins: Default::default(),
            omega_px: DEFAULT_OMEGA_PX,
            step_m: DEFAULT_STEP_M,
        };
        for c in &rig.cameras {
            let px = c.model.project(&muzzle).expect("muzzle in front of cameras");
            rig.scatter_origins.insert(c.id, px);
        }
        let frag = FragmentPhysical::new(0.005, 1.225, 5.03e-5, 1.0).expect("valid fragment");
        Self {
            rig,
            v0: 385.6,
            k: decay_coefficient(&frag),
            launch_us: 100,
            trajectory: Line3D::new(muzzle, Vector3::new(1.0, 0.12, 0.05)).expect("valid direction"),
            radius_m: (frag.frontal_area_m2 / std::f64::consts::PI).sqrt(),
            duration_us: 2800,
            background_level: 1.0,
            target_contrast: 1.0,
            threshold: 0.2,
            sample_interval_us: 1,
            tailing_lag_us: 300.0,
            tailing_events_per_px: 3.0,
            noise_rate: 1.0,
            seed: 7,
        }
    }

    /// Arc length of the fragment centre along the trajectory at `t_us`.
    pub fn truth_arc(&self, t_us: i64) -> Result<f64, SimError> {
        if t_us < self.launch_us {
            return Err(SimError::DomainError(t_us));
        }
        displacement_at_time(self.v0, self.k, 0.0, (t_us - self.launch_us) as f64 * 1e-6)
            .map_err(|_| SimError::DomainError(t_us))
    }
}

/// Fragment centre at `t_us`.
pub fn truth_position(scene: &SimScene, t_us: i64) -> Result<Point3, SimError> {
    Ok(scene.trajectory.point_at(scene.truth_arc(t_us)?))
}

/// Projected disk of the fragment in one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageDisk {
    pub center: Pixel,
    pub radius: f64,
    /// Unit image-plane direction of motion.
    pub heading: Pixel,
}

impl ImageDisk {
    pub fn front(&self) -> Pixel {
        self.center + self.heading * self.radius
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        (px - self.center).norm_squared() <= self.radius * self.radius
    }
}

/// Fragment disk as seen by `cam` at `t_us`, if it is in front of the camera.
pub fn image_disk(scene: &SimScene, cam: &CameraModel, t_us: i64) -> Option<ImageDisk> {
    let p = truth_position(scene, t_us).ok()?;
    let depth = cam.depth(&p);
    if depth <= scene.radius_m {
        return None;
    }
    let center = cam.project(&p).ok()?;
    let ahead = cam.project(&(p + scene.trajectory.dir * 1e-3)).ok()?;
    let heading = (ahead - center).try_normalize(1e-15)?;
    Some(ImageDisk {
        center,
        radius: cam.intrinsics().fx() * scene.radius_m / depth,
        heading,
    })
}

/// Events of one camera, sorted by `(t, y, x, label)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedCamera {
    pub cam: u32,
    pub width: u32,
    pub height: u32,
    pub events: Vec<LabeledEvent>,
}

impl RenderedCamera {
    pub fn stream(&self) -> EventStream {
        EventStream {
            cam: self.cam,
            width: self.width,
            height: self.height,
            events: self.events.iter().map(|e| e.event).collect(),
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.events.iter().filter(|e| e.label == label).count()
    }
}

fn pixel_box(disk: &ImageDisk, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let x0 = (disk.center.x - disk.radius).floor().max(0.0);
    let y0 = (disk.center.y - disk.radius).floor().max(0.0);
    let x1 = (disk.center.x + disk.radius).ceil().min(width as f64 - 1.0);
    let y1 = (disk.center.y + disk.radius).ceil().min(height as f64 - 1.0);
    (x0 <= x1 && y0 <= y1).then(|| (x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

fn union_box(a: Option<(u32, u32, u32, u32)>, b: Option<(u32, u32, u32, u32)>) -> Option<(u32, u32, u32, u32)> {
    match (a, b) {
        (Some(a), Some(b)) => Some((a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3))),
        (a, None) => a,
        (None, b) => b,
    }
}

fn camera_rng(seed: u64, cam: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(cam) + 1);
    rng
}

fn random_polarity(rng: &mut ChaCha8Rng) -> Polarity {
    if rng.random_bool(0.5) {
        Polarity::Pos
    } else {
        Polarity::Neg
    }
}

fn render_camera(scene: &SimScene, rc: &RigCamera) -> RenderedCamera {
    let cam = &rc.model;
    let (w, h) = (cam.intrinsics().width(), cam.intrinsics().height());
    let log_bg = scene.background_level.ln();
    let log_target = log_bg + scene.target_contrast.ln_1p();
    let mut reference = vec![log_bg; w as usize * h as usize];
    let mut events = Vec::new();
    let mut track_px = 0.0;
    let mut prev: Option<ImageDisk> = None;

    let mut t = 0;
    while t <= scene.duration_us {
        let disk = if t >= scene.launch_us { image_disk(scene, cam, t) } else { None };
        let region = union_box(
            prev.and_then(|d| pixel_box(&d, w, h)),
            disk.and_then(|d| pixel_box(&d, w, h)),
        );
        if let Some((x0, y0, x1, y1)) = region {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let idx = y as usize * w as usize + x as usize;
                    let px = Pixel::new(x as f64, y as f64);
                    let now_inside = disk.is_some_and(|d| d.contains(&px));
                    let level = if now_inside { log_target } else { log_bg };
                    let change = level - reference[idx];
                    if change.abs() >= scene.threshold {
                        reference[idx] = level;
                        let label = match disk {
                            Some(d) if (px - d.front()).norm() <= LEADING_TOLERANCE_PX => Label::Leading,
                            _ => Label::Body,
                        };
                        events.push(LabeledEvent {
                            event: Event {
                                x,
                                y,
                                t,
                                p: if change > 0.0 { Polarity::Pos } else { Polarity::Neg },
                                cam: rc.id,
                            },
                            label,
                        });
                    }
                }
            }
        }
        if let (Some(a), Some(b)) = (prev, disk) {
            track_px += (b.center - a.center).norm();
        }
        prev = disk;
        t += scene.sample_interval_us;
    }

    let mut rng = camera_rng(scene.seed, rc.id);
    let target_events = events.len();
    let expected_tailing = scene.tailing_events_per_px * track_px;
    if target_events > 0 && expected_tailing > 0.0 {
        let n = Poisson::new(expected_tailing).expect("positive mean").sample(&mut rng) as usize;
        let lag = Exp::new(1.0 / scene.tailing_lag_us).expect("positive rate");
        for _ in 0..n {
            let src = events[rng.random_range(0..target_events)].event;
            let dt = lag.sample(&mut rng).ceil() as i64;
            let p = random_polarity(&mut rng);
            if src.t + dt <= scene.duration_us {
                events.push(LabeledEvent {
                    event: Event { t: src.t + dt, p, ..src },
                    label: Label::Tailing,
                });
            }
        }
    }

    let expected_noise = scene.noise_rate * w as f64 * h as f64 * (scene.duration_us as f64 + 1.0) * 1e-6;
    if expected_noise > 0.0 {
        let n = Poisson::new(expected_noise).expect("positive mean").sample(&mut rng) as usize;
        for _ in 0..n {
            let x = rng.random_range(0..w);
            let y = rng.random_range(0..h);
            let t = rng.random_range(0..=scene.duration_us);
            let p = random_polarity(&mut rng);
            events.push(LabeledEvent {
                event: Event { x, y, t, p, cam: rc.id },
                label: Label::Noise,
            });
        }
    }

    events.sort_by_key(|e| (e.event.t, e.event.y, e.event.x, e.label, e.event.p));
    RenderedCamera {
        cam: rc.id,
        width: w,
        height: h,
        events,
    }
}

/// Renders every camera of the scene. Output does not depend on thread count.
pub fn render_events(scene: &SimScene) -> Vec<RenderedCamera> {
    scene.rig.cameras.par_iter().map(|rc| render_camera(scene, rc)).collect()
}

pub const LABEL_HEADER: &str = "x,y,t_us,p,label";

pub fn write_labels(events: &[LabeledEvent]) -> String {
    let mut out = String::with_capacity(24 * (events.len() + 1));
    out.push_str(LABEL_HEADER);
    out.push('\n');
    for e in events {
        let ev = &e.event;
        let _ = writeln!(out, "{},{},{},{},{}", ev.x, ev.y, ev.t, ev.p.as_i8(), e.label.as_str());
    }
    out
}

pub fn parse_labels(text: &str, cam: u32) -> Result<Vec<LabeledEvent>, IngestError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == LABEL_HEADER => {}
        _ => return Err(IngestError::Schema(format!("expected header `{LABEL_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| IngestError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let x = f[0].parse().map_err(|_| bad("bad x"))?;
        let y = f[1].parse().map_err(|_| bad("bad y"))?;
        let t = f[2].parse().map_err(|_| bad("bad t_us"))?;
        let p = f[3]
            .parse::<i64>()
            .ok()
            .and_then(Polarity::from_i64)
            .ok_or_else(|| bad("bad polarity"))?;
        let label = Label::parse(f[4]).ok_or_else(|| bad("bad label"))?;
        out.push(LabeledEvent {
            event: Event { x, y, t, p, cam },
            label,
        });
    }
    Ok(out)
}

pub fn events_file_name(cam: u32) -> String {
    format!("cam{cam}_events.csv")
}

pub fn labels_file_name(cam: u32) -> String {
    format!("cam{cam}_labels.csv")
}

pub const RIG_FILE_NAME: &str = "rig.json";

/// File names and contents for a rendered scene, in a fixed order.
pub fn scene_artifacts(scene: &SimScene, rendered: &[RenderedCamera]) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(2 * rendered.len() + 1);
    for r in rendered {
        let plain: Vec<Event> = r.events.iter().map(|e| e.event).collect();
        out.push((events_file_name(r.cam), write_events(&plain)));
        out.push((labels_file_name(r.cam), write_labels(&r.events)));
    }
    out.push((RIG_FILE_NAME.to_string(), write_rig(&scene.rig)));
    out
}

/// Writes event CSVs, label CSVs and the rig into `dir`.
pub fn write_scene(dir: &Path, scene: &SimScene, rendered: &[RenderedCamera]) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (name, body) in scene_artifacts(scene, rendered) {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_events;

    fn quiet(mut s: SimScene) -> SimScene {
        s.noise_rate = 0.0;
        s.tailing_events_per_px = 0.0;
        s
    }

    #[test]
    fn truth_position_examples() {
        let mut s = SimScene::default_scene();
        assert_eq!(truth_position(&s, s.launch_us).unwrap(), s.trajectory.origin);
        assert!(matches!(truth_position(&s, s.launch_us - 1), Err(SimError::DomainError(_))));
        s.k = 0.0;
        s.v0 = 400.0;
        let p = truth_position(&s, s.launch_us + 1000).unwrap();
        assert!((s.trajectory.arc_of(&p) - 0.4).abs() < 1e-12);
        let s = SimScene::default_scene();
        for dt in [1, 10, 1000, 2500] {
            let d = displacement_at_time(s.v0, s.k, 0.0, dt as f64 * 1e-6).unwrap();
            assert_eq!(s.truth_arc(s.launch_us + dt).unwrap(), d);
        }
    }

    #[test]
    fn default_scene_is_sane() {
        let s = SimScene::default_scene();
        assert!((s.k - 6.16175e-3).abs() < 1e-9);
        assert!((s.radius_m - 4.0e-3).abs() < 1e-5);
        let end = truth_position(&s, s.duration_us).unwrap();
        assert!(s.trajectory.arc_of(&end) > 1.0);
        for c in &s.rig.cameras {
            for t in [s.launch_us, s.duration_us] {
                let d = image_disk(&s, &c.model, t).unwrap();
                assert!(c.model.intrinsics().contains(d.center.x as u32, d.center.y as u32));
            }
        }
        let back = SimScene::from_json(&s.to_json()).unwrap();
        assert_eq!(back.to_json(), s.to_json());
    }

    #[test]
    fn config_errors_name_the_field() {
        let s = SimScene::default_scene();
        let mut f = s.to_file();
        f.threshold_log = 0.0;
        let err = SimScene::from_file(&f).unwrap_err().to_string();
        assert!(err.contains("threshold_log"), "{err}");
        let json = s.to_json().replace("\"duration_us\"", "\"duration\"");
        let err = SimScene::from_json(&json).unwrap_err().to_string();
        assert!(err.contains("duration"), "{err}");
    }

    #[test]
    fn zero_contrast_gives_only_noise() {
        let mut s = SimScene::default_scene();
        s.target_contrast = 0.0;
        s.duration_us = 400;
        for r in render_events(&s) {
            assert!(!r.events.is_empty());
            assert!(r.events.iter().all(|e| e.label == Label::Noise));
        }
    }

    #[test]
    fn noiseless_events_stay_in_the_swept_tube() {
        let s = quiet(SimScene::default_scene());
        for (r, rc) in render_events(&s).iter().zip(&s.rig.cameras) {
            assert!(r.count(Label::Leading) > 100);
            for e in &r.events {
                assert!(matches!(e.label, Label::Leading | Label::Body));
                let px = e.event.pixel();
                let before = image_disk(&s, &rc.model, (e.event.t - 1).max(s.launch_us)).unwrap();
                let now = image_disk(&s, &rc.model, e.event.t).unwrap();
                assert!(before.contains(&px) || now.contains(&px));
            }
        }
    }

    #[test]
    fn leading_events_follow_the_front() {
        let s = quiet(SimScene::default_scene());
        for (r, rc) in render_events(&s).iter().zip(&s.rig.cameras) {
            for e in r.events.iter().filter(|e| e.label == Label::Leading) {
                let px = e.event.pixel();
                let disk = image_disk(&s, &rc.model, e.event.t).unwrap();
                assert!((px - disk.front()).norm() <= disk.radius + 2.0);
                assert_eq!(e.event.p, Polarity::Pos);
                // Continuous-time entry of the pixel centre into the disk.
                let inside = |t: f64| {
                    let arc = displacement_at_time(s.v0, s.k, 0.0, (t - s.launch_us as f64) * 1e-6).unwrap();
                    let p = s.trajectory.point_at(arc);
                    let c = rc.model.project(&p).unwrap();
                    let rad = rc.model.intrinsics().fx() * s.radius_m / rc.model.depth(&p);
                    (px - c).norm() <= rad
                };
                let t_event = e.event.t as f64;
                let entry = if inside(s.launch_us as f64) {
                    s.launch_us as f64
                } else {
                    let (mut lo, mut hi) = (s.launch_us as f64, t_event);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if inside(mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    hi
                };
                let lag = t_event - entry;
                assert!((0.0..=2.0 * s.sample_interval_us as f64).contains(&lag), "lag {lag}");
            }
        }
    }

    #[test]
    fn each_event_reaches_the_threshold() {
        let s = quiet(SimScene::default_scene());
        let log_target = s.target_contrast.ln_1p();
        for r in render_events(&s) {
            let mut last = std::collections::HashMap::new();
            for e in &r.events {
                let prev = *last.get(&(e.event.x, e.event.y)).unwrap_or(&0.0);
                let now = if e.event.p == Polarity::Pos { log_target } else { 0.0 };
                assert!((now - prev).abs() >= s.threshold);
                assert_eq!((now - prev) > 0.0, e.event.p == Polarity::Pos);
                last.insert((e.event.x, e.event.y), now);
            }
        }
    }

    #[test]
    fn rendering_is_deterministic_and_labelled() {
        let mut s = SimScene::default_scene();
        s.duration_us = 1200;
        let a = render_events(&s);
        let b = render_events(&s);
        assert_eq!(a, b);
        let counts = |r: &RenderedCamera| {
            [Label::Leading, Label::Body, Label::Tailing, Label::Noise].map(|l| r.count(l))
        };
        for r in &a {
            assert_eq!(counts(r).iter().sum::<usize>(), r.events.len());
            assert!(counts(r).iter().all(|&c| c > 0), "{:?}", counts(r));
            assert!(r.events.windows(2).all(|w| w[0].event.t <= w[1].event.t));
        }
        s.seed += 1;
        assert_ne!(render_events(&s), a);
    }

    #[test]
    fn artifacts_round_trip() {
        let mut s = SimScene::default_scene();
        s.duration_us = 600;
        let rendered = render_events(&s);
        let files = scene_artifacts(&s, &rendered);
        assert_eq!(files.len(), 5);
        for r in &rendered {
            let ev = &files.iter().find(|f| f.0 == events_file_name(r.cam)).unwrap().1;
            let lab = &files.iter().find(|f| f.0 == labels_file_name(r.cam)).unwrap().1;
            let stream = parse_events(ev, r.cam, r.width, r.height).unwrap();
            assert_eq!(stream, r.stream());
            assert_eq!(parse_labels(lab, r.cam).unwrap(), r.events);
        }
        let empty = RenderedCamera {
            cam: 0,
            width: 10,
            height: 10,
            events: vec![],
        };
        let files = scene_artifacts(&s, &[empty]);
        assert_eq!(files[0].1, "x,y,t_us,p\n");
        assert_eq!(files[1].1, "x,y,t_us,p,label\n");
    }
}
