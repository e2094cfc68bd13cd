//! Fragment velocity measurement from multi-view event-camera streams.
//!
//! The pipeline runs per view: keep the leading edge of the scattering
//! events, fit an image line to it, intersect the back-projected planes of
//! all views into a 3D trajectory, attach every leading-edge event to the
//! trajectory by reprojection distance, and fit a quadratic-drag decay law to
//! the resulting displacement-over-time samples.

pub mod association;
pub mod baseline;
pub mod geometry;
pub mod ingest;
pub mod leading_edge;
pub mod motion_fit;
pub mod pipeline;
pub mod simulator;
pub mod theory;
pub mod trajectory;

pub use nalgebra;

pub use association::{associate, associate_with_threshold, bound_search_range, AssociationError, ObservationPoint, SearchGrid};
pub use geometry::{
    back_project_plane, compose_projection, CameraExtrinsics, CameraIntrinsics, CameraModel, Event, GeometryError,
    Line2D, Line3D, Pixel, Plane, Point3, Polarity,
};
pub use ingest::{parse_events, parse_observations, parse_rig, EventStream, IngestError, RigConfig};
pub use leading_edge::{extract_leading_edge, extract_with_diagnostics, EdgeError, EdgeOptions, LeadingEdgeSet, PolarityFilter};
pub use motion_fit::{fit_decay, DecayFit, FitError, FragmentPhysical};
pub use pipeline::{run_pipeline, PipelineOptions, PipelineOutput};
pub use simulator::{render_events, Label, LabeledEvent, SimError, SimScene};
pub use theory::{muzzle_energy, predict_muzzle_velocity, GasGunConfig, TheoryError};
pub use trajectory::{fit_line_2d, triangulate_line_3d, Fit2D, TrajectoryError};

/// Any error raised by the library, tagged by stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("leading edge: {0}")]
    Edge(#[from] EdgeError),
    #[error("trajectory: {0}")]
    Trajectory(#[from] TrajectoryError),
    #[error("association: {0}")]
    Association(#[from] AssociationError),
    #[error("motion fit: {0}")]
    Fit(#[from] FitError),
    #[error("theory: {0}")]
    Theory(#[from] TheoryError),
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
}
