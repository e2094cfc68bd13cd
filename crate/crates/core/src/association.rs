//! Event to trajectory association by minimal reprojection distance.
//!
//! Every leading-edge event is compared against the projections, in its own
//! camera, of points sampled along the 3D trajectory at a fixed arc-length
//! step. The closest projection wins if it is strictly inside the reception
//! threshold; ties go to the smaller arc length.
//!
//! A direct scan costs `events × grid points`. Instead the projected grid is
//! sorted by its coordinate along the projected image line; since the
//! distance to any grid projection is at least the difference of those
//! coordinates, each event only inspects a narrow window around its own
//! coordinate. The result is identical to the exhaustive scan.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{CameraModel, Line2D, Line3D, Pixel, Point3};
use crate::ingest::RigConfig;
use crate::leading_edge::LeadingEdgeSet;

pub const DEFAULT_MARGIN_M: f64 = 0.02;

/// Slack on the along-line lower bound, absorbs rounding in the projection.
const BOUND_SLACK_PX: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssociationError {
    #[error("no leading-edge events to associate")]
    EmptyInput,
    #[error("invalid search grid: {0}")]
    InvalidGrid(String),
    #[error("camera {0} is not in the rig")]
    UnknownCamera(u32),
    #[error("every search point is behind camera {0}")]
    PointBehindCamera(u32),
}

/// One associated event: a trajectory point paired with the event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationPoint {
    pub point: Point3,
    pub arc: f64,
    /// Event timestamp in µs.
    pub t: i64,
    pub cam: u32,
    /// Final reprojection distance in pixels.
    pub resid: f64,
}

/// Evenly spaced arc lengths `s_min + j·step` on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchGrid {
    line: Line3D,
    s_min: f64,
    s_max: f64,
    step: f64,
    len: usize,
}

impl SearchGrid {
    pub fn new(line: Line3D, s_min: f64, s_max: f64, step: f64) -> Result<Self, AssociationError> {
        if !(s_min.is_finite() && s_max.is_finite() && s_min < s_max) {
            return Err(AssociationError::InvalidGrid(format!(
                "need s_min < s_max, got [{s_min}, {s_max}]"
            )));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(AssociationError::InvalidGrid(format!("step must be > 0, got {step}")));
        }
        let q = (s_max - s_min) / step;
        // Snap ratios that are integral up to rounding, e.g. 0.9 / 1e-5.
        let intervals = if (q - q.round()).abs() < 1e-6 { q.round() } else { q.floor() };
        if intervals > 1e9 {
            return Err(AssociationError::InvalidGrid(format!("{intervals} points is too many")));
        }
        Ok(Self {
            line,
            s_min,
            s_max,
            step,
            len: intervals as usize + 1,
        })
    }

    pub fn line(&self) -> &Line3D {
        &self.line
    }
    pub fn s_min(&self) -> f64 {
        self.s_min
    }
    pub fn s_max(&self) -> f64 {
        self.s_max
    }
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn arc(&self, j: usize) -> f64 {
        self.s_min + j as f64 * self.step
    }

    pub fn point(&self, j: usize) -> Point3 {
        self.line.point_at(self.arc(j))
    }
}

/// Arc length of the trajectory point closest to the viewing ray of an event.
pub fn back_projected_arc(cam: &CameraModel, line: &Line3D, px: &Pixel) -> f64 {
    line.arc_closest_to_ray(&cam.center(), &cam.ray_direction(px))
}

/// Search range covering every leading-edge event's back-projection, padded
/// by `margin` metres, at the rig's step.
pub fn bound_search_range(
    edges: &[LeadingEdgeSet],
    line: &Line3D,
    rig: &RigConfig,
    margin: f64,
) -> Result<SearchGrid, AssociationError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for edge in edges {
        if edge.is_empty() {
            continue;
        }
        let cam = rig.camera(edge.cam).ok_or(AssociationError::UnknownCamera(edge.cam))?;
        for s in &edge.events {
            let arc = back_projected_arc(cam, line, &s.event.pixel());
            lo = lo.min(arc);
            hi = hi.max(arc);
        }
    }
    if !lo.is_finite() {
        return Err(AssociationError::EmptyInput);
    }
    SearchGrid::new(*line, lo - margin, hi + margin, rig.step_m)
}

/// Grid projections of one camera, indexed by coordinate along the image line.
struct ProjectedGrid {
    pixels: Vec<Option<Pixel>>,
    axis: Option<Line2D>,
    /// `(along, j)` sorted ascending.
    sorted: Vec<(f64, u32)>,
}

impl ProjectedGrid {
    fn new(cam: &CameraModel, grid: &SearchGrid) -> Self {
        let pixels: Vec<Option<Pixel>> = (0..grid.len())
            .into_par_iter()
            .map(|j| cam.project(&grid.point(j)).ok())
            .collect();
        let first = pixels.iter().flatten().next().copied();
        let last = pixels.iter().rev().flatten().next().copied();
        let axis = match (first, last) {
            (Some(a), Some(b)) => Line2D::through(a, b).ok(),
            _ => None,
        };
        let mut sorted = Vec::new();
        if let Some(axis) = &axis {
            sorted = pixels
                .iter()
                .enumerate()
                .filter_map(|(j, p)| p.map(|p| (axis.along(&p), j as u32)))
                .collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        Self {
            pixels,
            axis,
            sorted,
        }
    }

    fn has_any(&self) -> bool {
        self.pixels.iter().any(Option::is_some)
    }

    /// `(distance, j)` of the closest projection strictly inside `omega`.
    fn nearest(&self, px: &Pixel, omega: f64) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        let consider = |j: usize, best: &mut Option<(f64, usize)>| {
            if let Some(p) = self.pixels[j] {
                let d = reprojection_distance(&p, px);
                let better = match *best {
                    None => d < omega,
                    Some((bd, bj)) => d < bd || (d == bd && j < bj),
                };
                if better {
                    *best = Some((d, j));
                }
            }
        };

        let Some(axis) = &self.axis else {
            // Grid seen end-on: every projection coincides, scan directly.
            for j in 0..self.pixels.len() {
                consider(j, &mut best);
            }
            return best;
        };
        let a = axis.along(px);
        let bound = |best: &Option<(f64, usize)>| best.map_or(omega, |b| b.0) + BOUND_SLACK_PX;
        let pos = self.sorted.partition_point(|&(s, _)| s < a);
        let mut hi = pos;
        while hi < self.sorted.len() {
            let (s, j) = self.sorted[hi];
            if s - a > bound(&best) {
                break;
            }
            consider(j as usize, &mut best);
            hi += 1;
        }
        let mut lo = pos;
        while lo > 0 {
            let (s, j) = self.sorted[lo - 1];
            if a - s > bound(&best) {
                break;
            }
            consider(j as usize, &mut best);
            lo -= 1;
        }
        best
    }
}

/// Euclidean pixel distance between a projected point and an event.
pub fn reprojection_distance(projected: &Pixel, event: &Pixel) -> f64 {
    let dx = projected.x - event.x;
    let dy = projected.y - event.y;
    (dx * dx + dy * dy).sqrt()
}

/// Associates every leading-edge event with its closest trajectory point.
/// Events whose best distance is not below the rig's reception threshold are
/// dropped. Output follows the order of `edges` and of events within them.
pub fn associate(
    edges: &[LeadingEdgeSet],
    grid: &SearchGrid,
    rig: &RigConfig,
) -> Result<Vec<ObservationPoint>, AssociationError> {
    associate_with_threshold(edges, grid, rig, rig.omega_px)
}

pub fn associate_with_threshold(
    edges: &[LeadingEdgeSet],
    grid: &SearchGrid,
    rig: &RigConfig,
    omega: f64,
) -> Result<Vec<ObservationPoint>, AssociationError> {
    let mut out = Vec::new();
    let mut cache: Vec<(u32, ProjectedGrid)> = Vec::new();
    for edge in edges {
        if edge.is_empty() {
            continue;
        }
        let cam = rig.camera(edge.cam).ok_or(AssociationError::UnknownCamera(edge.cam))?;
        if !cache.iter().any(|(id, _)| *id == edge.cam) {
            let projected = ProjectedGrid::new(cam, grid);
            if !projected.has_any() {
                return Err(AssociationError::PointBehindCamera(edge.cam));
            }
            cache.push((edge.cam, projected));
        }
        let projected = &cache.iter().find(|(id, _)| *id == edge.cam).expect("cached").1;
        let matched: Vec<Option<ObservationPoint>> = edge
            .events
            .par_iter()
            .map(|s| {
                projected.nearest(&s.event.pixel(), omega).map(|(d, j)| ObservationPoint {
                    point: grid.point(j),
                    arc: grid.arc(j),
                    t: s.event.t,
                    cam: edge.cam,
                    resid: d,
                })
            })
            .collect();
        out.extend(matched.into_iter().flatten());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraExtrinsics, CameraIntrinsics, Event, Polarity};
    use crate::ingest::RigCamera;
    use crate::leading_edge::RadialSample;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn rig() -> RigConfig {
        let target = Point3::new(0.5, 0.0, 0.0);
        let cams: Vec<RigCamera> = [-0.25, 0.25]
            .iter()
            .enumerate()
            .map(|(i, &y)| RigCamera {
                id: i as u32,
                model: CameraModel::new(
                    CameraIntrinsics::new(1200.0, 1200.0, 640.0, 360.0, 1280, 720).unwrap(),
                    CameraExtrinsics::look_at(Point3::new(0.5, y, -1.2), target, Vector3::y()).unwrap(),
                ),
            })
            .collect();
        let mut origins = BTreeMap::new();
        for c in &cams {
            origins.insert(c.id, c.model.project(&Point3::origin()).unwrap());
        }
        RigConfig {
            cameras: cams,
            muzzle: Point3::origin(),
            scatter_origins: origins,
            omega_px: 2.0,
            step_m: 1e-3,
        }
    }

    fn line() -> Line3D {
        Line3D::new(Point3::origin(), Vector3::new(1.0, 0.05, 0.02)).unwrap()
    }

    fn edge_at(cam: u32, pixels: &[(u32, u32, i64)]) -> LeadingEdgeSet {
        LeadingEdgeSet {
            cam,
            origin: Pixel::zeros(),
            events: pixels
                .iter()
                .map(|&(x, y, t)| RadialSample {
                    event: Event {
                        x,
                        y,
                        t,
                        p: Polarity::Pos,
                        cam,
                    },
                    r: 0.0,
                })
                .collect(),
        }
    }

    fn brute_force(edges: &[LeadingEdgeSet], grid: &SearchGrid, rig: &RigConfig) -> Vec<ObservationPoint> {
        let mut out = Vec::new();
        for edge in edges {
            let cam = rig.camera(edge.cam).unwrap();
            let proj: Vec<Option<Pixel>> = (0..grid.len()).map(|j| cam.project(&grid.point(j)).ok()).collect();
            for s in &edge.events {
                let e = s.event.pixel();
                let mut record = f64::INFINITY;
                let mut arg = None;
                for (j, p) in proj.iter().enumerate() {
                    let Some(p) = p else { continue };
                    let d = ((p.x - e.x).powi(2) + (p.y - e.y).powi(2)).sqrt();
                    if d < rig.omega_px.min(record) {
                        record = d;
                        arg = Some(j);
                    }
                }
                if let Some(j) = arg {
                    out.push(ObservationPoint {
                        point: grid.point(j),
                        arc: grid.arc(j),
                        t: s.event.t,
                        cam: edge.cam,
                        resid: record,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn grid_sizes() {
        let g = SearchGrid::new(line(), 0.05, 0.95, 1e-5).unwrap();
        assert_eq!(g.len(), 90_001);
        let g = SearchGrid::new(line(), 0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 4);
        assert!(SearchGrid::new(line(), 1.0, 1.0, 0.1).is_err());
        assert!(SearchGrid::new(line(), 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bound_single_event() {
        let rig = rig();
        let cam = rig.camera(0).unwrap();
        let p = cam.project(&line().point_at(0.5)).unwrap();
        // Use a non-integer pixel through a synthetic edge by rounding only for storage.
        let edge = edge_at(0, &[(p.x.round() as u32, p.y.round() as u32, 10)]);
        let arc = back_projected_arc(cam, &line(), &Pixel::new(p.x.round(), p.y.round()));
        let g = bound_search_range(&[edge], &line(), &rig, 0.05).unwrap();
        assert!((g.s_min() - (arc - 0.05)).abs() < 1e-12);
        assert!((g.s_max() - (arc + 0.05)).abs() < 1e-12);
        assert!((arc - 0.5).abs() < 2e-3);
        assert_eq!(bound_search_range(&[], &line(), &rig, 0.05), Err(AssociationError::EmptyInput));
    }

    #[test]
    fn event_on_grid_projection_and_far_event() {
        let rig = rig();
        let grid = SearchGrid::new(line(), -0.1, 1.1, 1e-3).unwrap();
        let cam = rig.camera(0).unwrap();
        // Find a grid point whose projection lands on an integer pixel.
        let line_px = cam.project(&line().point_at(0.3)).unwrap();
        let target = Pixel::new(line_px.x.round(), line_px.y.round());
        let exact_line = Line3D::new(cam.center(), cam.ray_direction(&target)).unwrap();
        let grid_exact = SearchGrid::new(exact_line, 1.0, 1.5, 0.25).unwrap();
        let edge = edge_at(0, &[(target.x as u32, target.y as u32, 3)]);
        let obs = associate(&[edge.clone()], &grid_exact, &rig).unwrap();
        assert_eq!(obs.len(), 1);
        assert!(obs[0].resid < 1e-9);
        assert!([1.0, 1.25, 1.5].contains(&obs[0].arc));

        let far = edge_at(0, &[(target.x as u32, target.y as u32 + 5, 3)]);
        let obs = associate(&[far], &grid, &rig).unwrap();
        assert!(obs.is_empty());
    }

    #[test]
    fn matches_brute_force_on_random_events() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rig = rig();
        let grid = SearchGrid::new(line(), -0.05, 1.05, rig.step_m).unwrap();
        let mut edges = Vec::new();
        for cam in [0u32, 1] {
            let model = rig.camera(cam).unwrap();
            let pts: Vec<(u32, u32, i64)> = (0..400)
                .map(|i| {
                    let p = model.project(&line().point_at(rng.random_range(0.0..1.0))).unwrap();
                    let q = p + Pixel::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                    (q.x.round().clamp(0.0, 1279.0) as u32, q.y.round().clamp(0.0, 719.0) as u32, i)
                })
                .collect();
            edges.push(edge_at(cam, &pts));
        }
        let fast = associate(&edges, &grid, &rig).unwrap();
        let slow = brute_force(&edges, &grid, &rig);
        assert_eq!(fast.len(), slow.len());
        assert!(!fast.is_empty());
        for (a, b) in fast.iter().zip(&slow) {
            assert_eq!(a.arc, b.arc);
            assert_eq!(a.resid, b.resid);
            assert_eq!((a.t, a.cam), (b.t, b.cam));
            assert!(a.resid < rig.omega_px);
            assert!((a.point - line().point_at(a.arc)).norm() < 1e-12);
        }
    }

    #[test]
    fn refinement_never_worsens_and_events_are_independent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rig = rig();
        let model = rig.camera(1).unwrap();
        let pts: Vec<(u32, u32, i64)> = (0..200)
            .map(|i| {
                let p = model.project(&line().point_at(rng.random_range(0.1..0.9))).unwrap();
                (p.x.round() as u32, (p.y + rng.random_range(-1.5..1.5)).round() as u32, i)
            })
            .collect();
        let edge = edge_at(1, &pts);
        let coarse = SearchGrid::new(line(), 0.0, 1.0, 2e-3).unwrap();
        let fine = SearchGrid::new(line(), 0.0, 1.0, 1e-3).unwrap();
        let a = associate(&[edge.clone()], &coarse, &rig).unwrap();
        let b = associate(&[edge.clone()], &fine, &rig).unwrap();
        let by_t = |v: &[ObservationPoint]| v.iter().map(|o| (o.t, o.resid)).collect::<BTreeMap<_, _>>();
        let (ma, mb) = (by_t(&a), by_t(&b));
        for (t, r) in &ma {
            assert!(mb[t] <= *r, "t={t}");
        }

        let mut reduced = edge.clone();
        reduced.events.remove(17);
        let c = associate(&[reduced], &fine, &rig).unwrap();
        for o in &c {
            let full = b.iter().find(|x| x.t == o.t).unwrap();
            assert_eq!(full.arc, o.arc);
        }
    }

    #[test]
    fn unknown_camera_and_all_behind() {
        let rig = rig();
        let grid = SearchGrid::new(line(), 0.0, 1.0, 0.1).unwrap();
        assert_eq!(
            associate(&[edge_at(9, &[(1, 1, 0)])], &grid, &rig),
            Err(AssociationError::UnknownCamera(9))
        );
        let behind = Line3D::new(Point3::new(0.0, 0.0, -5.0), Vector3::x()).unwrap();
        let grid = SearchGrid::new(behind, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(
            associate(&[edge_at(0, &[(1, 1, 0)])], &grid, &rig),
            Err(AssociationError::PointBehindCamera(0))
        );
    }
}
