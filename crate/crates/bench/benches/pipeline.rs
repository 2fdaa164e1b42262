use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use contourpan_bench::{clustered_points, fixture, large_spec};
use contourpan_core::dbscan::dbscan;
use contourpan_core::derive::{connected_components, Connectivity};
use contourpan_core::metrics::Evaluator;
use contourpan_core::metrics::ImageOutputs;
use contourpan_core::pipeline::{run_pipeline, PipelineConfig, PipelineInputs};

fn labeling(c: &mut Criterion) {
    let spec = large_spec();
    let (scene, pred) = fixture(&spec);
    let things = scene.labels.map(|&l| spec.catalog.is_thing(l));
    let interiors = pred.contours.grid().map(|&p| p < 0.5);
    let mut group = c.benchmark_group("connected_components");
    group.bench_function("things_4", |b| {
        b.iter(|| connected_components(&things, Connectivity::Four))
    });
    group.bench_function("interiors_8", |b| {
        b.iter(|| connected_components(&interiors, Connectivity::Eight))
    });
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let mut group = c.benchmark_group("dbscan");
    for (clusters, per) in [(4, 500), (32, 1000)] {
        let points = clustered_points(clusters, per);
        group.bench_function(format!("{clusters}x{per}"), |b| {
            b.iter(|| dbscan(&points, 20.0, 10).unwrap())
        });
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let spec = large_spec();
    let (scene, pred) = fixture(&spec);
    let inputs = PipelineInputs {
        probs: &pred.probs,
        contours: &pred.contours,
        offsets: Some(&pred.offsets),
    };
    let mut group = c.benchmark_group("pipeline_1024x2048");
    group.sample_size(20);
    for (name, config) in [
        ("refine", PipelineConfig::default()),
        (
            "no_refine",
            PipelineConfig {
                no_refine: true,
                ..PipelineConfig::default()
            },
        ),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| run_pipeline(&inputs, &spec.catalog, &config).unwrap())
        });
    }
    let out = run_pipeline(&inputs, &spec.catalog, &PipelineConfig::default()).unwrap();
    group.bench_function("evaluate", |b| {
        b.iter_batched(
            || Evaluator::new(&spec.catalog),
            |mut ev| {
                ev.add(
                    &ImageOutputs {
                        labels: &out.labels,
                        panoptic: &out.panoptic,
                        segments: Some(&out.segments),
                    },
                    &ImageOutputs {
                        labels: &scene.labels,
                        panoptic: &scene.panoptic,
                        segments: None,
                    },
                )
                .unwrap();
                ev.finish()
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, labeling, clustering, pipeline);
criterion_main!(benches);
