//! Corresponding-point stereo intersection, kept as a comparison baseline.
//!
//! Events of two views are accumulated in fixed time windows; each window's
//! event centroid is the view's target feature. A window yields a 3D point
//! only when both centroids satisfy the epipolar constraint within the gate.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{CameraModel, Pixel, Point3};
use crate::leading_edge::RadialSample;

pub const DEFAULT_WINDOW_US: i64 = 20;
pub const DEFAULT_EPIPOLAR_GATE_PX: f64 = 2.0;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Fundamental matrix `F` with `x_bᵀ F x_a = 0` for corresponding pixels.
pub fn fundamental_matrix(a: &CameraModel, b: &CameraModel) -> Matrix3<f64> {
    let (ra, ta) = (a.extrinsics().rotation(), a.extrinsics().translation());
    let (rb, tb) = (b.extrinsics().rotation(), b.extrinsics().translation());
    let r = rb * ra.transpose();
    let t = tb - r * ta;
    let e = skew(&t) * r;
    let ka_inv = a.intrinsics().matrix().try_inverse().expect("intrinsics invertible");
    let kb_inv = b.intrinsics().matrix().try_inverse().expect("intrinsics invertible");
    kb_inv.transpose() * e * ka_inv
}

/// Distance from `x_b` to the epipolar line of `x_a` in view `b`.
pub fn epipolar_distance(f: &Matrix3<f64>, x_a: &Pixel, x_b: &Pixel) -> f64 {
    let l = f * Vector3::new(x_a.x, x_a.y, 1.0);
    (l.x * x_b.x + l.y * x_b.y + l.z).abs() / l.x.hypot(l.y)
}

/// Midpoint of the shortest segment between two viewing rays.
pub fn midpoint_triangulate(a: &CameraModel, xa: &Pixel, b: &CameraModel, xb: &Pixel) -> Option<Point3> {
    let (ca, da) = (a.center(), a.ray_direction(xa));
    let (cb, db) = (b.center(), b.ray_direction(xb));
    let w = ca - cb;
    let bdot = da.dot(&db);
    let denom = 1.0 - bdot * bdot;
    if denom < 1e-12 {
        return None;
    }
    let d = da.dot(&w);
    let e = db.dot(&w);
    let sa = (bdot * e - d) / denom;
    let sb = (e - bdot * d) / denom;
    Some(Point3::from(((ca + da * sa).coords + (cb + db * sb).coords) * 0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    /// Windows in which both views had events.
    pub windows_compared: usize,
    /// Triangulated `(point, window start µs)` pairs that passed the gate.
    pub points: Vec<(Point3, i64)>,
}

impl BaselineResult {
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

fn centroid(samples: &[RadialSample]) -> Option<Pixel> {
    if samples.is_empty() {
        return None;
    }
    let sum = samples.iter().fold(Pixel::zeros(), |acc, s| acc + s.event.pixel());
    Some(sum / samples.len() as f64)
}

/// Runs the windowed centroid intersection on two time-ordered event sets.
pub fn corresponding_point_baseline(
    cam_a: &CameraModel,
    events_a: &[RadialSample],
    cam_b: &CameraModel,
    events_b: &[RadialSample],
    window_us: i64,
    gate_px: f64,
) -> BaselineResult {
    let mut result = BaselineResult {
        windows_compared: 0,
        points: Vec::new(),
    };
    let (Some(first_a), Some(first_b)) = (events_a.first(), events_b.first()) else {
        return result;
    };
    let window_us = window_us.max(1);
    let start = first_a.event.t.min(first_b.event.t);
    let end = events_a
        .last()
        .map(|s| s.event.t)
        .max(events_b.last().map(|s| s.event.t))
        .unwrap_or(start);
    let f_ab = fundamental_matrix(cam_a, cam_b);
    let f_ba = fundamental_matrix(cam_b, cam_a);

    let (mut ia, mut ib) = (0, 0);
    let mut w0 = start;
    while w0 <= end {
        let w1 = w0 + window_us;
        let ja = ia + events_a[ia..].partition_point(|s| s.event.t < w1);
        let jb = ib + events_b[ib..].partition_point(|s| s.event.t < w1);
        if let (Some(ca), Some(cb)) = (centroid(&events_a[ia..ja]), centroid(&events_b[ib..jb])) {
            result.windows_compared += 1;
            let d = epipolar_distance(&f_ab, &ca, &cb).max(epipolar_distance(&f_ba, &cb, &ca));
            if d <= gate_px {
                if let Some(p) = midpoint_triangulate(cam_a, &ca, cam_b, &cb) {
                    result.points.push((p, w0));
                }
            }
        }
        ia = ja;
        ib = jb;
        w0 = w1;
    }
    result
}
