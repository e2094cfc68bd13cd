//! Text formats: event CSV, rig JSON and observation CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::ObservationPoint;
use crate::geometry::{
    CameraExtrinsics, CameraIntrinsics, CameraModel, Event, GeometryError, Pixel, Point3, Polarity,
};

pub const EVENT_HEADER: &str = "x,y,t_us,p";
pub const OBSERVATION_HEADER: &str = "X,Y,Z,t_us,cam,arc_m";

/// Reception threshold used when the rig file does not set one.
pub const DEFAULT_OMEGA_PX: f64 = 2.0;
/// Search step used when the rig file does not set one (0.01 mm).
pub const DEFAULT_STEP_M: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
}

impl From<GeometryError> for IngestError {
    fn from(e: GeometryError) -> Self {
        IngestError::Validation(e.to_string())
    }
}

/// Formats a real with 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Time-ordered events of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub cam: u32,
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, stably sorting by timestamp and checking bounds.
    pub fn new(cam: u32, width: u32, height: u32, mut events: Vec<Event>) -> Result<Self, IngestError> {
        for (i, e) in events.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(IngestError::Validation(format!(
                    "event {i} at ({}, {}) outside {width}x{height} sensor",
                    e.x, e.y
                )));
            }
        }
        events.sort_by_key(|e| e.t);
        for e in &mut events {
            e.cam = cam;
        }
        Ok(Self {
            cam,
            width,
            height,
            events,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

pub fn parse_events(text: &str, cam: u32, width: u32, height: u32) -> Result<EventStream, IngestError> {
    let mut lines = text.split('\n').enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == EVENT_HEADER => {}
        Some((_, h)) => {
            return Err(IngestError::Parse {
                line: 1,
                reason: format!("expected header `{EVENT_HEADER}`, found `{h}`"),
            })
        }
        None => unreachable!("split yields at least one item"),
    }
    let body: Vec<(usize, &str)> = lines.collect();
    let n_rows = match body.last() {
        Some((_, last)) if last.is_empty() => body.len() - 1,
        _ => body.len(),
    };

    let mut events = Vec::with_capacity(n_rows);
    for &(idx, raw) in &body[..n_rows] {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        let err = |reason: String| IngestError::Parse { line, reason };
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let int = |name: &str, s: &str| -> Result<i64, IngestError> {
            s.trim()
                .parse::<i64>()
                .map_err(|_| err(format!("field `{name}` is not an integer: `{s}`")))
        };
        let x = int("x", fields[0])?;
        let y = int("y", fields[1])?;
        let t = int("t_us", fields[2])?;
        let p = int("p", fields[3])?;
        if x < 0 || x >= width as i64 {
            return Err(err(format!("x = {x} outside [0, {width})")));
        }
        if y < 0 || y >= height as i64 {
            return Err(err(format!("y = {y} outside [0, {height})")));
        }
        let p = Polarity::from_i64(p).ok_or_else(|| err(format!("polarity {p} not in {{-1, 1}}")))?;
        events.push(Event {
            x: x as u32,
            y: y as u32,
            t,
            p,
            cam,
        });
    }
    EventStream::new(cam, width, height, events)
}

pub fn write_events(events: &[Event]) -> String {
    let mut out = String::with_capacity(16 * (events.len() + 1));
    out.push_str(EVENT_HEADER);
    out.push('\n');
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", e.x, e.y, e.t, e.p.as_i8());
    }
    out
}

// ---------------------------------------------------------------------------
// Rig configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub id: u32,
    pub fx: f64,
    pub fy: f64,
    pub ox: f64,
    pub oy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    #[serde(rename = "T")]
    pub t: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterOriginEntry {
    pub cam: u32,
    pub x0: f64,
    pub y0: f64,
}

/// On-disk rig layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigFile {
    pub cameras: Vec<CameraEntry>,
    pub muzzle: [f64; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scatter_origin_px: Vec<ScatterOriginEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigCamera {
    pub id: u32,
    pub model: CameraModel,
}

/// Validated camera rig with per-view scatter origins resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
    pub cameras: Vec<RigCamera>,
    pub muzzle: Point3,
    pub scatter_origins: BTreeMap<u32, Pixel>,
    pub omega_px: f64,
    pub step_m: f64,
}

impl RigConfig {
    pub fn from_file(file: &RigFile) -> Result<Self, IngestError> {
        if file.cameras.is_empty() {
            return Err(IngestError::Validation("rig has no cameras".into()));
        }
        let mut seen = BTreeSet::new();
        let mut cameras = Vec::with_capacity(file.cameras.len());
        for c in &file.cameras {
            if !seen.insert(c.id) {
                return Err(IngestError::Validation(format!("duplicate camera id {}", c.id)));
            }
            let intr = CameraIntrinsics::new(c.fx, c.fy, c.ox, c.oy, c.width, c.height)
                .map_err(|e| IngestError::Validation(format!("camera {}: {e}", c.id)))?;
            let r = Matrix3::from_row_slice(&c.r);
            let extr = CameraExtrinsics::new(r, Vector3::from(c.t))
                .map_err(|e| IngestError::Validation(format!("camera {}: {e}", c.id)))?;
            cameras.push(RigCamera {
                id: c.id,
                model: CameraModel::new(intr, extr),
            });
        }
        let muzzle = Point3::from(file.muzzle);
        if !muzzle.coords.iter().all(|v| v.is_finite()) {
            return Err(IngestError::Validation("muzzle is not finite".into()));
        }

        let mut scatter_origins = BTreeMap::new();
        for s in &file.scatter_origin_px {
            if !seen.contains(&s.cam) {
                return Err(IngestError::Validation(format!(
                    "scatter origin given for unknown camera {}",
                    s.cam
                )));
            }
            scatter_origins.insert(s.cam, Pixel::new(s.x0, s.y0));
        }
        for c in &cameras {
            if !scatter_origins.contains_key(&c.id) {
                let px = c.model.project(&muzzle).map_err(|e| {
                    IngestError::Validation(format!(
                        "camera {}: cannot default scatter origin from muzzle: {e}",
                        c.id
                    ))
                })?;
                scatter_origins.insert(c.id, px);
            }
        }

        let omega_px = file.omega_px.unwrap_or(DEFAULT_OMEGA_PX);
        if !(omega_px > 0.0 && omega_px.is_finite()) {
            return Err(IngestError::Validation(format!("omega_px must be > 0, got {omega_px}")));
        }
        let step_m = file.step_m.unwrap_or(DEFAULT_STEP_M);
        if !(step_m > 0.0 && step_m.is_finite()) {
            return Err(IngestError::Validation(format!("step_m must be > 0, got {step_m}")));
        }
        Ok(Self {
            cameras,
            muzzle,
            scatter_origins,
            omega_px,
            step_m,
        })
    }

    pub fn to_file(&self) -> RigFile {
        RigFile {
            cameras: self
                .cameras
                .iter()
                .map(|c| {
                    let k = c.model.intrinsics();
                    let r = c.model.extrinsics().rotation();
                    let t = c.model.extrinsics().translation();
                    CameraEntry {
                        id: c.id,
                        fx: k.fx(),
                        fy: k.fy(),
                        ox: k.ox(),
                        oy: k.oy(),
                        width: k.width(),
                        height: k.height(),
                        r: [
                            r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)],
                            r[(2, 1)], r[(2, 2)],
                        ],
                        t: [t.x, t.y, t.z],
                    }
                })
                .collect(),
            muzzle: [self.muzzle.x, self.muzzle.y, self.muzzle.z],
            scatter_origin_px: self
                .scatter_origins
                .iter()
                .map(|(&cam, px)| ScatterOriginEntry {
                    cam,
                    x0: px.x,
                    y0: px.y,
                })
                .collect(),
            omega_px: Some(self.omega_px),
            step_m: Some(self.step_m),
        }
    }

    pub fn camera(&self, id: u32) -> Option<&CameraModel> {
        self.cameras.iter().find(|c| c.id == id).map(|c| &c.model)
    }

    pub fn scatter_origin(&self, id: u32) -> Option<Pixel> {
        self.scatter_origins.get(&id).copied()
    }

    pub fn camera_ids(&self) -> Vec<u32> {
        self.cameras.iter().map(|c| c.id).collect()
    }
}

pub fn parse_rig(text: &str) -> Result<RigConfig, IngestError> {
    let file: RigFile = serde_json::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))?;
    RigConfig::from_file(&file)
}

pub fn write_rig(rig: &RigConfig) -> String {
    let mut s = serde_json::to_string_pretty(&rig.to_file()).expect("rig serialises");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Observation set
// ---------------------------------------------------------------------------

pub fn write_observations(obs: &[ObservationPoint]) -> String {
    let mut out = String::with_capacity(110 * (obs.len() + 1));
    out.push_str(OBSERVATION_HEADER);
    out.push('\n');
    for o in obs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format_real(o.point.x),
            format_real(o.point.y),
            format_real(o.point.z),
            o.t,
            o.cam,
            format_real(o.arc)
        );
    }
    out
}

/// Reads an observation CSV. The residual is not part of the file format and
/// comes back as `NaN`.
pub fn parse_observations(text: &str) -> Result<Vec<ObservationPoint>, IngestError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == OBSERVATION_HEADER => {}
        other => {
            return Err(IngestError::Parse {
                line: 1,
                reason: format!(
                    "expected header `{OBSERVATION_HEADER}`, found `{}`",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        let err = |reason: String| IngestError::Parse { line, reason };
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let real = |name: &str, s: &str| -> Result<f64, IngestError> {
            s.parse::<f64>()
                .map_err(|_| err(format!("field `{name}` is not a number: `{s}`")))
        };
        let point = Point3::new(real("X", f[0])?, real("Y", f[1])?, real("Z", f[2])?);
        let t = f[3]
            .parse::<i64>()
            .map_err(|_| err(format!("field `t_us` is not an integer: `{}`", f[3])))?;
        let cam = f[4]
            .parse::<u32>()
            .map_err(|_| err(format!("field `cam` is not a camera index: `{}`", f[4])))?;
        let arc = real("arc_m", f[5])?;
        out.push(ObservationPoint {
            point,
            arc,
            t,
            cam,
            resid: f64::NAN,
        });
    }
    Ok(out)
}
