//! End-to-end chain over a rig and its event streams.

use std::time::Instant;

use crate::association::{associate_with_threshold, bound_search_range, ObservationPoint, SearchGrid, DEFAULT_MARGIN_M};
use crate::baseline::{corresponding_point_baseline, BaselineResult, DEFAULT_EPIPOLAR_GATE_PX, DEFAULT_WINDOW_US};
use crate::geometry::Line3D;
use crate::ingest::{EventStream, RigConfig};
use crate::leading_edge::{extract_with_diagnostics, EdgeExtraction, EdgeOptions};
use crate::motion_fit::{fit_decay, DecayFit};
use crate::trajectory::{fit_leading_edge, triangulate_line_3d, Fit2D, TrajectoryError};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub edge: EdgeOptions,
    /// Overrides the rig's reception threshold.
    pub omega_px: Option<f64>,
    /// Overrides the rig's search step.
    pub step_m: Option<f64>,
    /// Known trajectory; skips line fitting and triangulation.
    pub line: Option<Line3D>,
    pub margin_m: f64,
    pub run_baseline: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            edge: EdgeOptions::default(),
            omega_px: None,
            step_m: None,
            line: None,
            margin_m: DEFAULT_MARGIN_M,
            run_baseline: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub extractions: Vec<EdgeExtraction>,
    /// Per-view image lines; empty when the trajectory was injected.
    pub fits: Vec<(u32, Fit2D)>,
    pub line: Line3D,
    pub grid: SearchGrid,
    pub observations: Vec<ObservationPoint>,
    pub fit: DecayFit,
    pub baseline: Option<BaselineResult>,
    /// Wall-clock milliseconds per stage, in execution order.
    pub stage_ms: Vec<(&'static str, f64)>,
}

fn timed<T>(stages: &mut Vec<(&'static str, f64)>, name: &'static str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    stages.push((name, start.elapsed().as_secs_f64() * 1e3));
    out
}

pub fn run_pipeline(rig: &RigConfig, streams: &[EventStream], opts: &PipelineOptions) -> Result<PipelineOutput, Error> {
    let mut stage_ms = Vec::new();
    let mut rig = rig.clone();
    if let Some(w) = opts.omega_px {
        rig.omega_px = w;
    }
    if let Some(s) = opts.step_m {
        rig.step_m = s;
    }

    let extractions = timed(&mut stage_ms, "leading_edge", || {
        streams
            .iter()
            .map(|s| {
                let origin = rig
                    .scatter_origin(s.cam)
                    .ok_or(TrajectoryError::UnknownCamera(s.cam))?;
                Ok(extract_with_diagnostics(s, origin, &opts.edge)?)
            })
            .collect::<Result<Vec<_>, Error>>()
    })?;
    let edges: Vec<_> = extractions.iter().map(|x| x.edge.clone()).collect();

    let (fits, line) = match opts.line {
        Some(line) => (Vec::new(), line),
        None => timed(&mut stage_ms, "trajectory", || -> Result<_, Error> {
            if edges.len() < 2 {
                return Err(TrajectoryError::InsufficientViews(edges.len()).into());
            }
            let fits = edges
                .iter()
                .map(|e| Ok((e.cam, fit_leading_edge(e)?)))
                .collect::<Result<Vec<_>, Error>>()?;
            let line = triangulate_line_3d(&fits, &rig)?;
            Ok((fits, line))
        })?,
    };

    let (grid, observations) = timed(&mut stage_ms, "association", || -> Result<_, Error> {
        let grid = bound_search_range(&edges, &line, &rig, opts.margin_m)?;
        let obs = associate_with_threshold(&edges, &grid, &rig, rig.omega_px)?;
        Ok((grid, obs))
    })?;

    let fit = timed(&mut stage_ms, "motion_fit", || fit_decay(&observations))?;

    let baseline = if opts.run_baseline && extractions.len() >= 2 {
        let (a, b) = (&extractions[0], &extractions[1]);
        let cam_a = rig.camera(a.edge.cam).ok_or(TrajectoryError::UnknownCamera(a.edge.cam))?;
        let cam_b = rig.camera(b.edge.cam).ok_or(TrajectoryError::UnknownCamera(b.edge.cam))?;
        Some(timed(&mut stage_ms, "baseline", || {
            corresponding_point_baseline(
                cam_a,
                &a.candidates,
                cam_b,
                &b.candidates,
                DEFAULT_WINDOW_US,
                DEFAULT_EPIPOLAR_GATE_PX,
            )
        }))
    } else {
        None
    };

    Ok(PipelineOutput {
        extractions,
        fits,
        line,
        grid,
        observations,
        fit,
        baseline,
        stage_ms,
    })
}
