use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use evvel_bench::default_fixture;
use evvel_core::association::associate;
use evvel_core::leading_edge::{extract_leading_edge, EdgeOptions};
use evvel_core::motion_fit::fit_decay;
use evvel_core::pipeline::{run_pipeline, PipelineOptions};
use evvel_core::simulator::{render_events, SimScene};
use evvel_core::trajectory::{fit_leading_edge, triangulate_line_3d};

fn stages(c: &mut Criterion) {
    let f = default_fixture();
    let rig = f.rig();

    c.bench_function("leading_edge", |b| {
        b.iter(|| {
            for s in &f.streams {
                let origin = rig.scatter_origin(s.cam).unwrap();
                black_box(extract_leading_edge(s, origin, &EdgeOptions::default()).unwrap());
            }
        })
    });

    c.bench_function("trajectory", |b| {
        b.iter(|| {
            let fits: Vec<_> = f.edges.iter().map(|e| (e.cam, fit_leading_edge(e).unwrap())).collect();
            black_box(triangulate_line_3d(&fits, rig).unwrap())
        })
    });

    c.bench_function("association", |b| b.iter(|| black_box(associate(&f.edges, &f.grid, rig).unwrap())));

    let obs = associate(&f.edges, &f.grid, rig).unwrap();
    c.bench_function("motion_fit", |b| b.iter(|| black_box(fit_decay(&obs).unwrap())));

    c.bench_function("pipeline", |b| {
        b.iter(|| black_box(run_pipeline(rig, &f.streams, &PipelineOptions::default()).unwrap()))
    });

    let mut group = c.benchmark_group("simulator");
    group.sample_size(10);
    group.bench_function("render_default_scene", |b| {
        let scene = SimScene::default_scene();
        b.iter(|| black_box(render_events(&scene)))
    });
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
