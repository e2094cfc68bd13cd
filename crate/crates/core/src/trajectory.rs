//! Per-view line fitting and line-based triangulation of the 3D trajectory.

use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{back_project_plane, GeometryError, Line2D, Line3D, Pixel, Plane};
use crate::ingest::{format_real, RigConfig};
use crate::leading_edge::LeadingEdgeSet;

/// Minimum `‖n_i × n_j‖` between two back-projected planes.
pub const MIN_PLANE_SEPARATION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("isotropic point cloud, line direction undefined")]
    IsotropicCloud,
    #[error("triangulation needs at least 2 views, got {0}")]
    InsufficientViews(usize),
    #[error("back-projected planes of cameras {0} and {1} are nearly parallel")]
    NearParallelPlanes(u32, u32),
    #[error("camera {0} is not in the rig")]
    UnknownCamera(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit2D {
    pub line: Line2D,
    /// Orthogonal RMS residual in pixels.
    pub rms: f64,
    pub inliers: usize,
}

impl Fit2D {
    pub fn to_csv(&self) -> String {
        format!(
            "point_px,point_py,dir_x,dir_y,rms_px\n{},{},{},{},{}\n",
            format_real(self.line.point.x),
            format_real(self.line.point.y),
            format_real(self.line.dir.x),
            format_real(self.line.dir.y),
            format_real(self.rms)
        )
    }

    pub fn sum_squared_residuals(&self, points: &[Pixel]) -> f64 {
        points.iter().map(|p| self.line.distance(p).powi(2)).sum()
    }

    /// Flips the direction so the along-line coordinate grows with `times`.
    pub fn oriented_by(mut self, points: &[Pixel], times: &[i64]) -> Self {
        debug_assert_eq!(points.len(), times.len());
        let n = points.len() as f64;
        if n < 2.0 {
            return self;
        }
        let mean_t = times.iter().map(|&t| t as f64).sum::<f64>() / n;
        let cov: f64 = points
            .iter()
            .zip(times)
            .map(|(p, &t)| self.line.along(p) * (t as f64 - mean_t))
            .sum();
        if cov < 0.0 {
            self.line.dir = -self.line.dir;
        }
        self
    }
}

/// Total-least-squares line through `points`.
pub fn fit_line_2d(points: &[Pixel]) -> Result<Fit2D, TrajectoryError> {
    let Some(first) = points.first() else {
        return Err(TrajectoryError::DegenerateInput("no points".into()));
    };
    if points.iter().all(|p| p == first) {
        return Err(TrajectoryError::DegenerateInput(
            "fewer than 2 distinct points".into(),
        ));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Pixel::zeros(), |a, p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - centroid;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let half_trace = 0.5 * (sxx + syy);
    let disc = (0.5 * (sxx - syy)).hypot(sxy);
    let major = half_trace + disc;
    if 2.0 * disc <= 1e-12 * major {
        return Err(TrajectoryError::IsotropicCloud);
    }
    // Eigenvector of the larger eigenvalue; pick the better-conditioned form.
    let v1 = Vector2::new(sxy, major - sxx);
    let v2 = Vector2::new(major - syy, sxy);
    let dir = if v1.norm_squared() >= v2.norm_squared() { v1 } else { v2 };
    let line = Line2D::new(centroid, dir)?;
    let ss: f64 = points.iter().map(|p| line.distance(p).powi(2)).sum();
    Ok(Fit2D {
        line,
        rms: (ss / n).sqrt(),
        inliers: points.len(),
    })
}

/// Fits the view's leading-edge events and orients the line along travel.
pub fn fit_leading_edge(edge: &LeadingEdgeSet) -> Result<Fit2D, TrajectoryError> {
    let pts: Vec<Pixel> = edge.events.iter().map(|s| s.event.pixel()).collect();
    let times: Vec<i64> = edge.events.iter().map(|s| s.event.t).collect();
    Ok(fit_line_2d(&pts)?.oriented_by(&pts, &times))
}

/// Intersects the back-projected planes of per-view image lines.
///
/// With two views this is the exact plane intersection; with more it is the
/// least-squares line over plane incidences. The origin is the point closest
/// to the rig's muzzle and the direction agrees with the views' oriented
/// image lines.
pub fn triangulate_line_3d(fits: &[(u32, Fit2D)], rig: &RigConfig) -> Result<Line3D, TrajectoryError> {
    if fits.len() < 2 {
        return Err(TrajectoryError::InsufficientViews(fits.len()));
    }
    let mut planes: Vec<(u32, Plane)> = Vec::with_capacity(fits.len());
    for (cam, fit) in fits {
        let model = rig.camera(*cam).ok_or(TrajectoryError::UnknownCamera(*cam))?;
        planes.push((*cam, back_project_plane(model, &fit.line)));
    }

    let mut best = (0.0f64, planes[0].0, planes[1].0);
    for i in 0..planes.len() {
        for j in i + 1..planes.len() {
            let s = planes[i].1.normal.cross(&planes[j].1.normal).norm();
            if s > best.0 {
                best = (s, planes[i].0, planes[j].0);
            }
        }
    }
    if best.0 < MIN_PLANE_SEPARATION {
        return Err(TrajectoryError::NearParallelPlanes(best.1, best.2));
    }

    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (_, p) in &planes {
        a += p.normal * p.normal.transpose();
        b += p.normal * p.offset;
    }
    let mut dir = if planes.len() == 2 {
        planes[0].1.normal.cross(&planes[1].1.normal).normalize()
    } else {
        let eig = SymmetricEigen::new(a);
        let k = eig.eigenvalues.imin();
        eig.eigenvectors.column(k).into_owned().normalize()
    };

    let m = a + dir * dir.transpose();
    let rhs = b + dir * dir.dot(&rig.muzzle.coords);
    let origin = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| TrajectoryError::DegenerateInput("singular incidence system".into()))?;
    let origin = crate::geometry::Point3::from(origin);

    let mut vote = 0.0;
    for (cam, fit) in fits {
        let model = rig.camera(*cam).ok_or(TrajectoryError::UnknownCamera(*cam))?;
        let a = model.project(&origin)?;
        let b = model.project(&(origin + dir * 1e-3))?;
        if let Some(d) = (b - a).try_normalize(1e-300) {
            vote += d.dot(&fit.line.dir);
        }
    }
    if vote < 0.0 {
        dir = -dir;
    }
    Ok(Line3D::new(origin, dir)?)
}
