//! Whole-pipeline checks against simulator ground truth.

use std::collections::HashMap;

use evvel_core::association::{associate_with_threshold, bound_search_range, SearchGrid};
use evvel_core::geometry::{back_project_plane, Line2D, Pixel, Point3};
use evvel_core::leading_edge::{extract_with_diagnostics, EdgeOptions, LeadingEdgeSet};
use evvel_core::motion_fit::naive_velocity_baseline;
use evvel_core::pipeline::{run_pipeline, PipelineOptions};
use evvel_core::simulator::{render_events, truth_position, Label, RenderedCamera, SimScene};
use evvel_core::trajectory::{fit_line_2d, triangulate_line_3d, Fit2D};

fn default_run() -> (SimScene, Vec<RenderedCamera>) {
    let scene = SimScene::default_scene();
    let rendered = render_events(&scene);
    (scene, rendered)
}

/// Keeps events whose radius exceeds every earlier one; the first event
/// only seeds the maximum.
fn running_max_oracle(radii: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let Some(&first) = radii.first() else {
        return out;
    };
    let mut best = first;
    for (i, &r) in radii.iter().enumerate().skip(1) {
        if r > best {
            out.push(i);
            best = r;
        }
    }
    out
}

#[test]
fn recovers_velocity_and_decay() {
    let (scene, rendered) = default_run();
    let streams: Vec<_> = rendered.iter().map(|r| r.stream()).collect();
    let out = run_pipeline(&scene.rig, &streams, &PipelineOptions::default()).unwrap();
    let fit = &out.fit;
    assert!(fit.converged);
    assert!((fit.v0 / scene.v0 - 1.0).abs() < 0.02, "v0 {}", fit.v0);
    assert!((fit.k / scene.k - 1.0).abs() < 0.25, "k {}", fit.k);
    assert_eq!(fit.t0_us, scene.launch_us);

    // Finite differences on the same data scatter far more than the fit errs.
    let naive = naive_velocity_baseline(&out.observations, 1).unwrap();
    let mean = naive.iter().map(|p| p.1).sum::<f64>() / naive.len() as f64;
    let sd = (naive.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / naive.len() as f64).sqrt();
    assert!(sd >= 10.0 * (fit.v0 - scene.v0).abs(), "sd {sd}");
}

#[test]
fn leading_edge_keeps_the_front_and_drops_the_tail() {
    let (scene, rendered) = default_run();
    for r in &rendered {
        let origin = scene.rig.scatter_origin(r.cam).unwrap();
        let x = extract_with_diagnostics(&r.stream(), origin, &EdgeOptions::default()).unwrap();
        let mut lead = (0, 0);
        let mut tail_kept = 0;
        let mut kept = 0;
        for (e, &k) in r.events.iter().zip(&x.kept) {
            kept += usize::from(k);
            match e.label {
                Label::Leading => {
                    lead.0 += usize::from(k);
                    lead.1 += 1;
                }
                Label::Tailing => tail_kept += usize::from(k),
                _ => {}
            }
        }
        assert!(lead.0 as f64 >= 0.8 * lead.1 as f64, "cam {} kept {lead:?}", r.cam);
        assert!(tail_kept as f64 <= 0.01 * kept as f64, "cam {} tail {tail_kept}/{kept}", r.cam);

        // No kept tailing event lies below the front at its timestamp.
        for (e, &k) in r.events.iter().zip(&x.kept) {
            if k && e.label == Label::Tailing {
                let front = scene.rig.camera(r.cam).unwrap().project(&truth_position(&scene, e.event.t).unwrap()).unwrap();
                assert!((e.event.pixel() - origin).norm() >= (front - origin).norm());
            }
        }
    }
}

#[test]
fn leading_edge_equals_running_max_on_simulated_streams() {
    let mut scenes = vec![SimScene::default_scene()];
    let mut quiet = SimScene::default_scene();
    quiet.noise_rate = 0.0;
    quiet.tailing_events_per_px = 0.0;
    scenes.push(quiet);
    let mut other = SimScene::default_scene();
    other.seed = 99;
    other.tailing_events_per_px = 10.0;
    scenes.push(other);
    for scene in &scenes {
        for r in render_events(scene) {
            let stream = r.stream();
            let origin = scene.rig.scatter_origin(r.cam).unwrap();
            let x = extract_with_diagnostics(&stream, origin, &EdgeOptions::unfiltered()).unwrap();
            let radii: Vec<f64> = stream.events.iter().map(|e| (e.pixel() - origin).norm()).collect();
            let expect: Vec<_> = running_max_oracle(&radii).into_iter().map(|i| stream.events[i]).collect();
            let got: Vec<_> = x.edge.events.iter().map(|s| s.event).collect();
            assert_eq!(got, expect);

            // With the gates on, the filter is still the running max of what
            // survives them.
            let gated = extract_with_diagnostics(&stream, origin, &EdgeOptions::default()).unwrap();
            let radii: Vec<f64> = gated.candidates.iter().map(|s| s.r).collect();
            let expect: Vec<_> = running_max_oracle(&radii).into_iter().map(|i| gated.candidates[i].event).collect();
            let got: Vec<_> = gated.edge.events.iter().map(|s| s.event).collect();
            assert_eq!(got, expect);
        }
    }
}

#[test]
fn noiseless_line_matches_two_plane_algebra() {
    let scene = SimScene::default_scene();
    let truth = scene.trajectory;
    // Exact image lines of the true trajectory in each view.
    let fits: Vec<(u32, Fit2D)> = scene
        .rig
        .cameras
        .iter()
        .map(|c| {
            let a = c.model.project(&truth.point_at(0.1)).unwrap();
            let b = c.model.project(&truth.point_at(0.9)).unwrap();
            let line = Line2D::through(a, b).unwrap();
            (c.id, Fit2D { line, rms: 0.0, inliers: 2 })
        })
        .collect();
    let got = triangulate_line_3d(&fits, &scene.rig).unwrap();

    // Closed form: direction n0 × n1, point solving both plane equations
    // plus the perpendicular-to-direction constraint through the muzzle.
    let p0 = back_project_plane(&scene.rig.cameras[0].model, &fits[0].1.line);
    let p1 = back_project_plane(&scene.rig.cameras[1].model, &fits[1].1.line);
    let dir = p0.normal.cross(&p1.normal).normalize();
    let m = nalgebra::Matrix3::from_rows(&[p0.normal.transpose(), p1.normal.transpose(), dir.transpose()]);
    let rhs = nalgebra::Vector3::new(p0.offset, p1.offset, dir.dot(&scene.rig.muzzle.coords));
    let origin = Point3::from(m.lu().solve(&rhs).unwrap());

    assert!((got.origin - origin).norm() < 1e-6);
    assert!((got.origin - truth.origin).norm() < 1e-6);
    assert!(got.dir.dot(&dir).abs() > 1.0 - 1e-12);
    assert!(got.dir.dot(&truth.dir) > 1.0 - 1e-12);
}

#[test]
fn later_edge_events_project_further_along() {
    let mut scene = SimScene::default_scene();
    scene.noise_rate = 0.0;
    scene.tailing_events_per_px = 0.0;
    for r in render_events(&scene) {
        let origin = scene.rig.scatter_origin(r.cam).unwrap();
        let edge = extract_with_diagnostics(&r.stream(), origin, &EdgeOptions::default()).unwrap().edge;
        let pts: Vec<Pixel> = edge.events.iter().map(|s| s.event.pixel()).collect();
        let times: Vec<i64> = edge.events.iter().map(|s| s.event.t).collect();
        let fit = fit_line_2d(&pts).unwrap().oriented_by(&pts, &times);
        // Window-averaged projections increase monotonically.
        let mut last = f64::NEG_INFINITY;
        for chunk in pts.chunks(50) {
            let mean = chunk.iter().map(|p| fit.line.along(p)).sum::<f64>() / chunk.len() as f64;
            assert!(mean > last);
            last = mean;
        }
    }
}

#[test]
fn search_range_covers_every_true_position() {
    let (scene, rendered) = default_run();
    let edges: Vec<LeadingEdgeSet> = rendered
        .iter()
        .map(|r| {
            let origin = scene.rig.scatter_origin(r.cam).unwrap();
            extract_with_diagnostics(&r.stream(), origin, &EdgeOptions::default()).unwrap().edge
        })
        .collect();
    let grid = bound_search_range(&edges, &scene.trajectory, &scene.rig, 0.02).unwrap();
    for e in edges.iter().flat_map(|e| &e.events) {
        let arc = scene.truth_arc(e.event.t).unwrap();
        assert!(arc >= grid.s_min() && arc <= grid.s_max(), "arc {arc}");
    }
}

/// Exhaustive nearest-grid-point search with the same tie and threshold rules.
fn brute_force(
    edges: &[LeadingEdgeSet],
    grid: &SearchGrid,
    scene: &SimScene,
    omega: f64,
) -> Vec<(u32, i64, usize, f64)> {
    let mut out = Vec::new();
    for edge in edges {
        let cam = scene.rig.camera(edge.cam).unwrap();
        let proj: Vec<Option<Pixel>> = (0..grid.len()).map(|j| cam.project(&grid.point(j)).ok()).collect();
        for s in &edge.events {
            let px = s.event.pixel();
            let mut best: Option<(f64, usize)> = None;
            for (j, p) in proj.iter().enumerate() {
                let Some(p) = p else { continue };
                let d = ((p.x - px.x).powi(2) + (p.y - px.y).powi(2)).sqrt();
                if d < omega && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            if let Some((d, j)) = best {
                out.push((edge.cam, s.event.t, j, d));
            }
        }
    }
    out
}

#[test]
fn association_equals_brute_force_on_a_short_scene() {
    let mut scene = SimScene::default_scene();
    scene.duration_us = 700;
    let rendered = render_events(&scene);
    let edges: Vec<LeadingEdgeSet> = rendered
        .iter()
        .map(|r| {
            let origin = scene.rig.scatter_origin(r.cam).unwrap();
            extract_with_diagnostics(&r.stream(), origin, &EdgeOptions::default()).unwrap().edge
        })
        .collect();
    let n: usize = edges.iter().map(|e| e.len()).sum();
    assert!(n <= 2000, "{n} events");
    let mut rig = scene.rig.clone();
    rig.step_m = 5e-5;
    let grid = bound_search_range(&edges, &scene.trajectory, &rig, 0.02).unwrap();
    assert!(grid.len() <= 10_000, "{} grid points", grid.len());
    let got = associate_with_threshold(&edges, &grid, &rig, 2.0).unwrap();
    let expect = brute_force(&edges, &grid, &scene, 2.0);
    assert_eq!(got.len(), expect.len());
    let index: HashMap<u64, usize> = (0..grid.len()).map(|j| (grid.arc(j).to_bits(), j)).collect();
    for (o, e) in got.iter().zip(&expect) {
        assert_eq!((o.cam, o.t), (e.0, e.1));
        assert_eq!(index[&o.arc.to_bits()], e.2);
        assert!((o.resid - e.3).abs() < 1e-12);
        assert!(o.resid < 2.0);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (scene, rendered) = default_run();
    let streams: Vec<_> = rendered.iter().map(|r| r.stream()).collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = render_events(&scene);
            let out = run_pipeline(&scene.rig, &streams, &PipelineOptions::default()).unwrap();
            (r, out.observations, out.fit.report())
        })
    };
    let (r1, o1, f1) = run(1);
    let (r4, o4, f4) = run(4);
    assert_eq!(r1, rendered);
    assert_eq!(r1, r4);
    assert_eq!(o1, o4);
    assert_eq!(f1, f4);
}
