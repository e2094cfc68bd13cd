//! Pinhole cameras, projection and the primitive geometric types shared by
//! the rest of the pipeline.
//!
//! Conventions: world frame is right-handed and metric with its origin at the
//! launcher muzzle; pixel coordinates are 0-based with integer values at pixel
//! centres; all matrices are `f64`.

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point3 = nalgebra::Point3<f64>;
pub type Pixel = Vector2<f64>;

/// Homogeneous scale below which a point counts as behind the camera.
pub const MIN_DEPTH_SCALE: f64 = 1e-12;

const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("point is behind the camera (homogeneous scale {0:e})")]
    PointBehindCamera(f64),
    #[error("degenerate direction vector")]
    DegenerateDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Neg,
    Pos,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Neg => -1,
            Polarity::Pos => 1,
        }
    }

    pub fn from_i64(v: i64) -> Option<Self> {
        match v {
            -1 => Some(Polarity::Neg),
            1 => Some(Polarity::Pos),
            _ => None,
        }
    }
}

/// A single brightness-change detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u32,
    pub y: u32,
    /// Microseconds from recording start.
    pub t: i64,
    pub p: Polarity,
    pub cam: u32,
}

impl Event {
    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.x as f64, self.y as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    ox: f64,
    oy: f64,
    width: u32,
    height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        ox: f64,
        oy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(ox > 0.0 && ox < width as f64 && oy > 0.0 && oy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({ox}, {oy}) outside sensor {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            ox,
            oy,
            width,
            height,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn ox(&self) -> f64 {
        self.ox
    }
    pub fn oy(&self) -> f64 {
        self.oy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.ox, //
            0.0, self.fy, self.oy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }
}

/// World-to-camera rigid transform `X_cam = R X_world + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraExtrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let gram = rotation.transpose() * rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if !(dev <= ROTATION_TOL) {
            return Err(GeometryError::InvalidRotation(format!(
                "R^T R deviates from identity by {dev:e}"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(GeometryError::InvalidRotation(format!(
                "det(R) = {det}, expected 1"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidRotation(
                "translation is not finite".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `center` whose optical axis points at `target`, image `y`
    /// axis as close to `down` as possible.
    pub fn look_at(center: Point3, target: Point3, down: Vector3<f64>) -> Result<Self, GeometryError> {
        let z = (target - center)
            .try_normalize(1e-12)
            .ok_or(GeometryError::DegenerateDirection)?;
        let x = down
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or(GeometryError::DegenerateDirection)?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * center.coords);
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn center(&self) -> Point3 {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }
}

/// `K [R | T]`.
pub fn compose_projection(intr: &CameraIntrinsics, extr: &CameraExtrinsics) -> Matrix3x4<f64> {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&extr.rotation);
    rt.set_column(3, &extr.translation);
    intr.matrix() * rt
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    projection: Matrix3x4<f64>,
}

impl CameraModel {
    pub fn new(intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics) -> Self {
        let projection = compose_projection(&intrinsics, &extrinsics);
        Self {
            intrinsics,
            extrinsics,
            projection,
        }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }
    pub fn extrinsics(&self) -> &CameraExtrinsics {
        &self.extrinsics
    }
    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.projection
    }

    pub fn center(&self) -> Point3 {
        self.extrinsics.center()
    }

    /// Depth of `p` along the optical axis.
    pub fn depth(&self, p: &Point3) -> f64 {
        (self.extrinsics.rotation * p.coords + self.extrinsics.translation).z
    }

    pub fn project(&self, p: &Point3) -> Result<Pixel, GeometryError> {
        let h = self.projection * Vector4::new(p.x, p.y, p.z, 1.0);
        if !(h.z > MIN_DEPTH_SCALE) {
            return Err(GeometryError::PointBehindCamera(h.z));
        }
        Ok(Pixel::new(h.x / h.z, h.y / h.z))
    }

    /// Unit world-frame direction of the ray through `px`.
    pub fn ray_direction(&self, px: &Pixel) -> Vector3<f64> {
        let k = &self.intrinsics;
        let cam = Vector3::new((px.x - k.ox) / k.fx, (px.y - k.oy) / k.fy, 1.0);
        (self.extrinsics.rotation.transpose() * cam).normalize()
    }
}

/// `{ X : normal · X = offset }` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

/// Plane through the camera centre containing every ray that images onto `line`.
pub fn back_project_plane(cam: &CameraModel, line: &Line2D) -> Plane {
    let a = Vector3::new(line.point.x, line.point.y, 1.0);
    let b = Vector3::new(line.dir.x, line.dir.y, 0.0);
    let l = a.cross(&b);
    let pi = cam.projection.transpose() * l;
    let n = Vector3::new(pi[0], pi[1], pi[2]);
    let norm = n.norm();
    Plane {
        normal: n / norm,
        offset: -pi[3] / norm,
    }
}

/// Image line as point plus unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2D {
    pub point: Pixel,
    pub dir: Vector2<f64>,
}

impl Line2D {
    pub fn new(point: Pixel, dir: Vector2<f64>) -> Result<Self, GeometryError> {
        let dir = dir
            .try_normalize(1e-300)
            .ok_or(GeometryError::DegenerateDirection)?;
        Ok(Self { point, dir })
    }

    pub fn through(a: Pixel, b: Pixel) -> Result<Self, GeometryError> {
        Self::new(a, b - a)
    }

    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(-self.dir.y, self.dir.x)
    }

    /// Signed coordinate of `p` along the line, measured from `point`.
    pub fn along(&self, p: &Pixel) -> f64 {
        (p - self.point).dot(&self.dir)
    }

    pub fn distance(&self, p: &Pixel) -> f64 {
        (p - self.point).dot(&self.normal()).abs()
    }

    pub fn at(&self, s: f64) -> Pixel {
        self.point + self.dir * s
    }
}

/// Arc-length parameterised 3D line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line3D {
    pub origin: Point3,
    pub dir: Vector3<f64>,
}

impl Line3D {
    pub fn new(origin: Point3, dir: Vector3<f64>) -> Result<Self, GeometryError> {
        let dir = dir
            .try_normalize(1e-300)
            .ok_or(GeometryError::DegenerateDirection)?;
        Ok(Self { origin, dir })
    }

    pub fn point_at(&self, arc: f64) -> Point3 {
        self.origin + self.dir * arc
    }

    pub fn arc_of(&self, p: &Point3) -> f64 {
        (p - self.origin).dot(&self.dir)
    }

    pub fn distance(&self, p: &Point3) -> f64 {
        let d = p - self.origin;
        (d - self.dir * d.dot(&self.dir)).norm()
    }

    /// Arc of the point on this line closest to the ray `start + λ·ray_dir`.
    /// Falls back to the projection of `start` when the two are parallel.
    pub fn arc_closest_to_ray(&self, start: &Point3, ray_dir: &Vector3<f64>) -> f64 {
        let w = self.origin - start;
        let b = self.dir.dot(ray_dir);
        let denom = 1.0 - b * b;
        if denom < 1e-15 {
            return self.arc_of(start);
        }
        let d = self.dir.dot(&w);
        let e = ray_dir.dot(&w);
        (b * e - d) / denom
    }
}
