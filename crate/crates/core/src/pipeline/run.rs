use std::time::Instant;

use super::{
    BackwardMode, Counters, InterpMode, MotionProvider, PipelineResult, ScheduleConfig, Scheme,
    TimingBreakdown,
};
use crate::block_motion::MotionVectorMap;
use crate::error::{Error, Result};
use crate::features::{extract_features, head::segment, FeatureMap, SegmentationMap, TaskHead};
use crate::frame_io::VideoSequence;
use crate::fusion::{fuse, relevance_weights, FusionSample};
use crate::warp::{mv_to_field, warp_features_with, Direction};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stage {
    Extraction,
    Ingest,
    Estimation,
    Field,
    Warp,
    Fusion,
    Head,
}

/// Per-run state: timings, counters, and per-frame outputs.
struct Run<'a> {
    video: &'a VideoSequence,
    head: &'a TaskHead,
    cfg: &'a ScheduleConfig,
    motion: Option<&'a MotionProvider<'a>>,
    n: usize,
    timing: TimingBreakdown,
    counters: Counters,
    segmentations: Vec<Option<SegmentationMap>>,
    warp_distance: Vec<usize>,
    features: Vec<Option<FeatureMap>>,
}

impl<'a> Run<'a> {
    fn new(
        video: &'a VideoSequence,
        head: &'a TaskHead,
        cfg: &'a ScheduleConfig,
        motion: Option<&'a MotionProvider<'a>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if video.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot run on an empty video".into(),
            ));
        }
        let a = cfg.extractor.feature_channels();
        if head.in_channels != a {
            return Err(Error::ShapeMismatch(format!(
                "task head expects {} channels, extractor produces {a}",
                head.in_channels
            )));
        }
        let t = video.len();
        Ok(Run {
            video,
            head,
            cfg,
            motion,
            n: cfg.effective_interval(),
            timing: TimingBreakdown {
                include_ingest: cfg.include_ingest,
                frame_ms: vec![0.0; t],
                ..Default::default()
            },
            counters: Counters::default(),
            segmentations: vec![None; t],
            warp_distance: vec![0; t],
            features: vec![None; t],
        })
    }

    /// Runs `f`, charging its wall time to `stage` and to `frame`.
    fn timed<T>(&mut self, stage: Stage, frame: usize, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let t = &mut self.timing;
        let bucket = match stage {
            Stage::Extraction => &mut t.extraction_ms,
            Stage::Ingest => &mut t.ingest_ms,
            Stage::Estimation => &mut t.estimation_ms,
            Stage::Field => &mut t.field_ms,
            Stage::Warp => &mut t.warp_ms,
            Stage::Fusion => &mut t.fusion_ms,
            Stage::Head => &mut t.head_ms,
        };
        *bucket += ms;
        if stage != Stage::Ingest || t.include_ingest {
            t.frame_ms[frame] += ms;
        }
        Ok(out)
    }

    fn extract(&mut self, i: usize) -> Result<FeatureMap> {
        self.counters.extractions += 1;
        let (video, cfg) = (self.video, self.cfg);
        self.timed(Stage::Extraction, i, || {
            extract_features(&video.frames[i], video.label(i), &cfg.extractor)
        })
    }

    fn motion_map(
        &mut self,
        frame: usize,
        get: impl FnOnce(&MotionProvider, &VideoSequence) -> Result<MotionVectorMap>,
    ) -> Result<MotionVectorMap> {
        let motion = self
            .motion
            .ok_or_else(|| Error::InvalidArgument("this scheme needs a motion source".into()))?;
        self.counters.motion_maps += 1;
        let stage = if motion.is_estimated() {
            Stage::Estimation
        } else {
            Stage::Ingest
        };
        let video = self.video;
        self.timed(stage, frame, || get(motion, video))
    }

    /// Warps `src` one step to produce features for `frame`.
    fn warp_step(
        &mut self,
        src: &FeatureMap,
        frame: usize,
        mv: &MotionVectorMap,
        direction: Direction,
    ) -> Result<FeatureMap> {
        let stride = src.stride();
        let field = self.timed(Stage::Field, frame, || mv_to_field(mv, stride, direction))?;
        self.counters.warps += 1;
        let exec = self.cfg.exec;
        self.timed(Stage::Warp, frame, || warp_features_with(src, &field, exec))
    }

    /// One forward step from frame `frame - 1`.
    fn forward_step(&mut self, src: &FeatureMap, frame: usize) -> Result<FeatureMap> {
        let mv = self.motion_map(frame, |m, v| m.forward(v, frame))?;
        self.warp_step(src, frame, &mv, Direction::Forward)
    }

    /// One backward step from frame `frame + 1`.
    fn backward_step(&mut self, src: &FeatureMap, frame: usize) -> Result<FeatureMap> {
        let (mv, direction) = match self.cfg.backward {
            BackwardMode::Estimate => (
                self.motion_map(frame, |m, v| m.backward(v, frame))?,
                Direction::Forward,
            ),
            BackwardMode::Negate => (
                self.motion_map(frame, |m, v| m.forward(v, frame + 1))?,
                Direction::Backward,
            ),
        };
        self.warp_step(src, frame, &mv, direction)
    }

    fn emit(&mut self, i: usize, f: FeatureMap, distance: usize) -> Result<()> {
        self.counters.head_runs += 1;
        let (head, exec) = (self.head, self.cfg.exec);
        let seg = self.timed(Stage::Head, i, || segment(&f, head, false, exec))?;
        self.segmentations[i] = Some(seg);
        self.warp_distance[i] = distance;
        if self.cfg.keep_features {
            self.features[i] = Some(f);
        }
        Ok(())
    }

    fn finish(self, scheme: Scheme, delay: usize) -> PipelineResult {
        let n = self.n;
        let offsets: Vec<usize> = (0..self.video.len()).map(|i| i % n).collect();
        let mut timing = self.timing;
        for (&p, &ms) in offsets.iter().zip(&timing.frame_ms) {
            if p == 0 {
                timing.keyframe_ms += ms;
                timing.keyframes += 1;
            } else {
                timing.intermediate_ms += ms;
                timing.intermediates += 1;
            }
        }
        let keep = self.cfg.keep_features;
        PipelineResult {
            scheme,
            interval: n,
            segmentations: self
                .segmentations
                .into_iter()
                .map(|s| s.expect("every frame emitted"))
                .collect(),
            offsets,
            warp_distance: self.warp_distance,
            delay,
            timing,
            counters: self.counters,
            features: keep.then(|| {
                self.features
                    .into_iter()
                    .map(|f| f.expect("every frame emitted"))
                    .collect()
            }),
        }
    }
}

/// Extracts features and runs the task head on every frame.
pub fn run_baseline(
    video: &VideoSequence,
    head: &TaskHead,
    cfg: &ScheduleConfig,
) -> Result<PipelineResult> {
    let cfg = ScheduleConfig {
        scheme: Scheme::Baseline,
        ..cfg.clone()
    };
    let mut run = Run::new(video, head, &cfg, None)?;
    for i in 0..video.len() {
        let f = run.extract(i)?;
        run.emit(i, f, 0)?;
    }
    Ok(run.finish(Scheme::Baseline, 0))
}

/// Keyframes extract features; every other frame warps the previous
/// frame's features one step along its forward motion.
pub fn run_propagation(
    video: &VideoSequence,
    motion: &MotionProvider,
    head: &TaskHead,
    cfg: &ScheduleConfig,
) -> Result<PipelineResult> {
    let mut run = Run::new(video, head, cfg, Some(motion))?;
    let n = run.n;
    let mut cache: Option<FeatureMap> = None;
    for i in 0..video.len() {
        let p = i % n;
        let f = match (&cache, p) {
            (Some(prev), p) if p != 0 => run.forward_step(prev, i)?,
            _ => run.extract(i)?,
        };
        run.emit(i, f.clone(), p)?;
        cache = Some(f);
    }
    Ok(run.finish(Scheme::Prop, 0))
}

/// Fuses features propagated forward from keyframe `k` and backward from
/// keyframe `k + n`. Each keyframe is extracted once; a window without a
/// following keyframe falls back to forward propagation.
pub fn run_interpolation(
    video: &VideoSequence,
    motion: &MotionProvider,
    head: &TaskHead,
    cfg: &ScheduleConfig,
) -> Result<PipelineResult> {
    let mut run = Run::new(video, head, cfg, Some(motion))?;
    let (n, t) = (run.n, video.len());
    let mode = cfg.interp_mode;
    let mut key = run.extract(0)?;
    let mut k = 0;
    while k < t {
        run.emit(k, key.clone(), 0)?;
        if k + n >= t {
            // partial final window
            let mut f = key.clone();
            for i in k + 1..t {
                f = run.forward_step(&f, i)?;
                run.emit(i, f.clone(), i - k)?;
            }
            break;
        }
        let next = run.extract(k + n)?;
        let (wf, wb) = precompute_window(&mut run, k, &key, &next, mode)?;
        for p in 1..n {
            let i = k + p;
            let (f, distance) = match mode {
                InterpMode::ForwardOnly => (wf[p].clone(), p),
                InterpMode::BackwardOnly => (wb[n - p].clone(), n - p),
                InterpMode::Fuse => {
                    let (alpha, _) = relevance_weights(n, p)?;
                    run.counters.fusions += 1;
                    let fusion = &cfg.fusion;
                    let (a, b) = (&wf[p], &wb[n - p]);
                    (
                        run.timed(Stage::Fusion, i, || fuse(a, b, alpha, fusion))?,
                        p.min(n - p),
                    )
                }
            };
            run.emit(i, f, distance)?;
        }
        key = next;
        k += n;
    }
    let delay = if n > 1 { n } else { 0 };
    Ok(run.finish(Scheme::Interp, delay))
}

/// `W_f[p]` (features of frame `k + p` propagated from `k`) and `W_b[j]`
/// (features of frame `k + n - j` propagated from `k + n`), for the
/// directions `mode` uses. Index 0 holds the keyframe itself.
fn precompute_window(
    run: &mut Run,
    k: usize,
    key: &FeatureMap,
    next: &FeatureMap,
    mode: InterpMode,
) -> Result<(Vec<FeatureMap>, Vec<FeatureMap>)> {
    let n = run.n;
    let mut wf = vec![key.clone()];
    let mut wb = vec![next.clone()];
    if mode != InterpMode::BackwardOnly {
        for p in 1..n {
            let f = run.forward_step(&wf[p - 1], k + p)?;
            wf.push(f);
        }
    }
    if mode != InterpMode::ForwardOnly {
        for j in 1..n {
            let f = run.backward_step(&wb[j - 1], k + n - j)?;
            wb.push(f);
        }
    }
    Ok((wf, wb))
}

/// Dispatches on `cfg.scheme`; the baseline ignores `motion`.
pub fn run(
    video: &VideoSequence,
    motion: &MotionProvider,
    head: &TaskHead,
    cfg: &ScheduleConfig,
) -> Result<PipelineResult> {
    match cfg.scheme {
        Scheme::Baseline => run_baseline(video, head, cfg),
        Scheme::Prop => run_propagation(video, motion, head, cfg),
        Scheme::Interp => run_interpolation(video, motion, head, cfg),
    }
}

/// Warped input pairs for every intermediate frame of every full window,
/// with the frame's extracted features as the target. Training data for
/// conv fusion.
pub fn fusion_samples(
    video: &VideoSequence,
    motion: &MotionProvider,
    head: &TaskHead,
    cfg: &ScheduleConfig,
) -> Result<Vec<FusionSample>> {
    let mut run = Run::new(video, head, cfg, Some(motion))?;
    let (n, t) = (run.n, video.len());
    let mut samples = Vec::new();
    let mut k = 0;
    let mut key = run.extract(0)?;
    while k + n < t && n > 1 {
        let next = run.extract(k + n)?;
        let (wf, wb) = precompute_window(&mut run, k, &key, &next, InterpMode::Fuse)?;
        for p in 1..n {
            samples.push(FusionSample {
                forward: wf[p].clone(),
                backward: wb[n - p].clone(),
                alpha: relevance_weights(n, p)?.0,
                target: run.extract(k + p)?,
            });
        }
        key = next;
        k += n;
    }
    Ok(samples)
}
