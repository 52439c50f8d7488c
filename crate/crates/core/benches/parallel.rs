//! Sequential vs rayon execution of the hot stages on one 256x256 frame
//! pair of the standard scene.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mvseg::block_motion::{estimate_motion, SearchParams};
use mvseg::features::{extract_features, ExtractorConfig};
use mvseg::frame_io::{generate_synthetic, SceneSpec, VideoSequence};
use mvseg::parallel::Exec;
use mvseg::pipeline::{run, MotionProvider, MotionSet, ScheduleConfig, Scheme};
use mvseg::warp::{mv_to_field, propagate_with, Direction};

const POLICIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn scene(frames: usize) -> VideoSequence {
    generate_synthetic(&SceneSpec::standard(frames, 0)).unwrap()
}

fn motion_search(c: &mut Criterion) {
    let video = scene(2);
    let mut g = c.benchmark_group("estimate_motion");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let params = SearchParams {
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                estimate_motion(
                    black_box(&video.frames[0]),
                    black_box(&video.frames[1]),
                    &params,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn extraction(c: &mut Criterion) {
    let video = scene(1);
    let mut g = c.benchmark_group("extract_features");
    for (name, exec) in POLICIES {
        let cfg = ExtractorConfig {
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| extract_features(black_box(&video.frames[0]), video.label(0), &cfg).unwrap())
        });
    }
    g.finish();
}

fn warping(c: &mut Criterion) {
    let video = scene(11);
    let ex = ExtractorConfig::handcraft(64);
    let f = extract_features(&video.frames[0], None, &ex).unwrap();
    let params = SearchParams::default();
    let fields: Vec<_> = (1..11)
        .map(|i| {
            let mv = estimate_motion(&video.frames[i - 1], &video.frames[i], &params).unwrap();
            mv_to_field(&mv, 16, Direction::Forward).unwrap()
        })
        .collect();
    let mut g = c.benchmark_group("propagate_10_steps_64ch");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| propagate_with(black_box(&f), 10, &fields, exec).unwrap())
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let video = scene(20);
    let motion = MotionSet::estimate(&video, &SearchParams::default(), true).unwrap();
    let ex = ExtractorConfig::default();
    let feats: Vec<_> = (0..video.len())
        .map(|i| extract_features(&video.frames[i], video.label(i), &ex).unwrap())
        .collect();
    let head = mvseg::features::fit_task_head(
        &feats,
        video.labels.as_ref().unwrap(),
        &mvseg::features::HeadFitOptions::new(5),
    )
    .unwrap();
    let mut g = c.benchmark_group("interp_n5_20_frames");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let cfg = ScheduleConfig::new(Scheme::Interp, 5, ex.clone()).with_exec(exec);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run(&video, &MotionProvider::memory(&motion), &head, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, motion_search, extraction, warping, pipeline);
criterion_main!(benches);
