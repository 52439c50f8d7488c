use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::settings::Settings;
use super::{BenchArgs, EncodeArgs, EvalArgs, ReportArgs, RunArgs, SynthArgs};
use crate::block_motion::{MotionVectorMap, SearchParams};
use crate::error::{Error, Result};
use crate::eval::{
    emit_curve, measure_throughput, offset_accuracy, per_offset_accuracy, CurveRow, OffsetAccuracy,
    Throughput,
};
use crate::features::{
    extract_features, fit_task_head, read_head, write_fmap, write_head, FeatureMap, TaskHead,
};
use crate::frame_io::{
    generate_synthetic, load_sequence, store_sequence, write_pgm, SceneSpec, SequenceFormat,
    VideoSequence,
};
use crate::fusion::{fit_conv_fusion, write_conv_fusion, ConvFusion, FusionConfig, FusionOperator};
use crate::pipeline::{
    fusion_samples, rotate_offset_eval, run, BackwardMode, Counters, MotionProvider, MotionSet,
    ScheduleConfig, Scheme, TimingBreakdown,
};

pub const SCENE_FILE: &str = "scene.json";
pub const MOTION_SUMMARY_FILE: &str = "motion.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const HEAD_FILE: &str = "head.bin";
pub const FUSION_FILE: &str = "fusion.bin";

pub fn seg_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("seg_{i:06}.pgm"))
}

pub fn feature_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("feat_{i:06}.fmap"))
}

/// Everything needed to replay a run. Wall-clock data lives only under
/// `timing` and `throughput`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub input: String,
    /// Sidecar directory, or `"estimated"` when motion was computed from
    /// the frames before the run.
    pub motion: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub settings: Settings,
    pub delay: usize,
    pub mean_warp_distance: f64,
    pub counters: Counters,
    pub accuracy: Option<OffsetAccuracy>,
    pub timing: TimingBreakdown,
    pub throughput: Throughput,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn curve_row(&self) -> Result<CurveRow> {
        let acc = self.accuracy.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("manifest for {} has no accuracy", self.input))
        })?;
        Ok(CurveRow {
            scheme: self.settings.scheme,
            n: effective_interval(&self.settings),
            miou_avg: acc.avg,
            miou_min: acc.min,
            fps: self.throughput.fps,
            delay_frames: self.delay,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub command: String,
    pub version: String,
    pub input: String,
    pub motion: String,
    pub frames: usize,
    pub num_classes: usize,
    pub settings: Settings,
    pub clips: usize,
    pub accuracy: OffsetAccuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionStats {
    pub maps: usize,
    pub mean_magnitude: f64,
    pub zero_fraction: f64,
}

impl MotionStats {
    fn of<'a>(maps: impl Iterator<Item = &'a MotionVectorMap>) -> MotionStats {
        let (mut n, mut mag, mut zero) = (0, 0.0, 0.0);
        for m in maps {
            n += 1;
            mag += m.mean_magnitude();
            zero += m.zero_fraction();
        }
        let d = n.max(1) as f64;
        MotionStats {
            maps: n,
            mean_magnitude: mag / d,
            zero_fraction: zero / d,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeSummary {
    pub frames: usize,
    pub block_size: usize,
    pub radius: usize,
    pub forward: MotionStats,
    pub backward: Option<MotionStats>,
}

fn effective_interval(s: &Settings) -> usize {
    match s.scheme {
        Scheme::Baseline => 1,
        _ => s.interval,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            serde_json::from_str::<SceneSpec>(&text)
                .map_err(|e| Error::format(path, e.to_string()))?
        }
        None => SceneSpec::standard(100, 0),
    };
    if let Some(frames) = args.frames {
        spec.frames = frames;
    }
    if let Some(seed) = args.seed {
        if args.spec.is_none() {
            spec = SceneSpec::standard(spec.frames, seed);
        } else {
            spec.seed = seed;
        }
    }
    let video = generate_synthetic(&spec)?;
    store_sequence(&video, &args.out, args.format)?;
    write_json(&args.out.join(SCENE_FILE), &spec)?;
    eprintln!(
        "wrote {} {}x{} frames to {}",
        video.len(),
        video.width(),
        video.height(),
        args.out.display()
    );
    Ok(())
}

pub fn load_input(dir: &Path) -> Result<VideoSequence> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    load_sequence(dir, SequenceFormat::detect(dir))
}

/// Class count from the scene file if present, else from the labels.
fn num_classes(dir: &Path, video: &VideoSequence) -> Result<usize> {
    let scene = dir.join(SCENE_FILE);
    if scene.is_file() {
        let text = fs::read_to_string(&scene)
            .map_err(|e| Error::io(format!("reading {}", scene.display()), e))?;
        let spec: SceneSpec =
            serde_json::from_str(&text).map_err(|e| Error::format(&scene, e.to_string()))?;
        return Ok(spec.num_classes);
    }
    video
        .labels
        .as_ref()
        .and_then(|ls| ls.iter().filter_map(|l| l.max_label()).max())
        .map(|m| m as usize + 1)
        .ok_or_else(|| Error::InvalidArgument("cannot infer the class count without labels".into()))
}

pub fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let video = load_input(&args.input)?;
    let params = SearchParams {
        block_size: args.block_size,
        radius: args.radius,
        ..Default::default()
    };
    let set = MotionSet::estimate(&video, &params, !args.no_backward)?;
    let out = args.out.as_deref().unwrap_or(&args.input);
    set.store(out)?;
    let summary = EncodeSummary {
        frames: video.len(),
        block_size: params.block_size,
        radius: params.radius,
        forward: MotionStats::of(set.forward.iter().flatten()),
        backward: (!args.no_backward).then(|| MotionStats::of(set.backward.iter().flatten())),
    };
    write_json(&out.join(MOTION_SUMMARY_FILE), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// Where a run's motion comes from.
enum Motion {
    Sidecars(PathBuf),
    Estimated(MotionSet),
}

impl Motion {
    fn prepare(
        video: &VideoSequence,
        dir: Option<&Path>,
        s: &Settings,
        backward: bool,
    ) -> Result<Motion> {
        match dir {
            Some(d) => Ok(Motion::Sidecars(d.to_path_buf())),
            None => {
                let need_bwd = backward && s.backward == BackwardMode::Estimate;
                Ok(Motion::Estimated(MotionSet::estimate(
                    video,
                    &s.search(),
                    need_bwd,
                )?))
            }
        }
    }

    fn provider(&self) -> MotionProvider<'_> {
        match self {
            Motion::Sidecars(d) => MotionProvider::sidecar(d.clone()),
            Motion::Estimated(set) => MotionProvider::memory(set),
        }
    }

    fn describe(&self) -> String {
        match self {
            Motion::Sidecars(d) => d.display().to_string(),
            Motion::Estimated(_) => "estimated".into(),
        }
    }
}

/// Fits the task head on every frame's extracted features.
fn fit_head(video: &VideoSequence, s: &Settings, num_classes: usize) -> Result<TaskHead> {
    let labels = video
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fitting the task head needs label maps".into()))?;
    let ex = s.extractor_config(num_classes);
    let feats = video
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| extract_features(f, video.label(i), &ex))
        .collect::<Result<Vec<FeatureMap>>>()?;
    fit_task_head(&feats, labels, &s.head_options(num_classes))
}

fn obtain_head(
    video: &VideoSequence,
    s: &Settings,
    num_classes: usize,
    path: Option<&Path>,
) -> Result<TaskHead> {
    match path {
        Some(p) => read_head(p),
        None => fit_head(video, s, num_classes),
    }
}

/// The schedule for `s`, with conv fusion weights fit on this sequence's
/// full windows when conv fusion is selected.
fn schedule(
    video: &VideoSequence,
    motion: &MotionProvider,
    head: &TaskHead,
    s: &Settings,
    num_classes: usize,
) -> Result<ScheduleConfig> {
    let mut cfg = s.schedule(num_classes);
    if s.fusion == FusionOperator::Conv {
        let a = head.in_channels;
        let mut conv = ConvFusion::sum(a);
        if s.scheme == Scheme::Interp && s.interval > 1 {
            let mut probe = cfg.clone();
            probe.fusion = FusionConfig::conv(ConvFusion::sum(a));
            let samples = fusion_samples(video, motion, head, &probe)?;
            if !samples.is_empty() {
                conv = fit_conv_fusion(&samples, s.fusion_lambda)?;
            }
        }
        cfg.fusion = FusionConfig::conv(conv);
    }
    Ok(cfg)
}

struct RunInputs<'a> {
    input: &'a Path,
    video: &'a VideoSequence,
    num_classes: usize,
    motion: &'a Motion,
    head: &'a TaskHead,
}

fn execute(ctx: &RunInputs, s: &Settings, out: &Path, dump_features: bool) -> Result<RunManifest> {
    let provider = ctx.motion.provider();
    let mut cfg = schedule(ctx.video, &provider, ctx.head, s, ctx.num_classes)?;
    cfg.keep_features = dump_features;
    let result = run(ctx.video, &provider, ctx.head, &cfg)?;

    create_dir(out)?;
    for (i, seg) in result.segmentations.iter().enumerate() {
        write_pgm(&seg_path(out, i), seg.width, seg.height, &seg.labels)?;
    }
    write_head(&out.join(HEAD_FILE), ctx.head)?;
    if let Some(conv) = &cfg.fusion.conv {
        write_conv_fusion(&out.join(FUSION_FILE), conv)?;
    }
    if let Some(features) = &result.features {
        for (i, f) in features.iter().enumerate() {
            write_fmap(&feature_path(out, i), f)?;
        }
    }
    let accuracy = match &ctx.video.labels {
        Some(labels) => {
            let gts: Vec<_> = labels.iter().map(Some).collect();
            Some(per_offset_accuracy(&result, &gts, ctx.num_classes)?)
        }
        None => None,
    };
    let manifest = RunManifest {
        command: "run".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input: ctx.input.display().to_string(),
        motion: ctx.motion.describe(),
        frames: ctx.video.len(),
        width: ctx.video.width(),
        height: ctx.video.height(),
        num_classes: ctx.num_classes,
        settings: s.clone(),
        delay: result.delay,
        mean_warp_distance: result.mean_warp_distance(),
        counters: result.counters.clone(),
        accuracy,
        throughput: measure_throughput(&result)?,
        timing: result.timing,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn progress(m: &RunManifest) {
    let acc = m
        .accuracy
        .as_ref()
        .map(|a| format!(" avg {:.4} min {:.4}", a.avg, a.min))
        .unwrap_or_default();
    eprintln!(
        "{} n={}:{} fps {:.1} delay {}",
        m.settings.scheme.name(),
        effective_interval(&m.settings),
        acc,
        m.throughput.fps,
        m.delay
    );
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let s = args.settings.resolve(args.scheme, args.interval)?;
    let video = load_input(&args.input)?;
    let head_path = args.head.as_deref();
    let num_classes = match head_path {
        Some(p) => read_head(p)?.num_classes,
        None => num_classes(&args.input, &video)?,
    };
    let motion = Motion::prepare(
        &video,
        args.motion.as_deref(),
        &s,
        s.scheme == Scheme::Interp,
    )?;
    let head = obtain_head(&video, &s, num_classes, head_path)?;
    let ctx = RunInputs {
        input: &args.input,
        video: &video,
        num_classes,
        motion: &motion,
        head: &head,
    };
    let manifest = execute(&ctx, &s, &args.out, args.dump_features)?;
    progress(&manifest);
    Ok(())
}

/// Scores each labeled frame on a short clip that starts at the keyframe
/// `offset` frames before it, with offsets rotating over the labeled
/// frames so every offset is represented equally.
pub fn rotating_eval(
    video: &VideoSequence,
    motion: &MotionProvider,
    head: &TaskHead,
    cfg: &ScheduleConfig,
    num_classes: usize,
) -> Result<(usize, OffsetAccuracy)> {
    let labels = video
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("evaluation needs label maps".into()))?;
    let n = cfg.effective_interval();
    let t = video.len();
    // Each clip needs its keyframe and, for n > 1, the next one.
    let (lo, hi) = (
        n - 1,
        if n == 1 {
            t - 1
        } else {
            t.saturating_sub(n + 1)
        },
    );
    if hi < lo {
        return Err(Error::InvalidArgument(format!(
            "{t} frames are too few to evaluate interval {n}"
        )));
    }
    let eligible: Vec<usize> = (lo..=hi).collect();
    let offsets = rotate_offset_eval(eligible.len(), n)?;
    let mut scored = Vec::with_capacity(eligible.len());
    for (&frame, &o) in eligible.iter().zip(&offsets) {
        let k = frame - o;
        let end = (k + n).min(t - 1);
        let clip = VideoSequence::new(
            video.frames[k..=end].to_vec(),
            Some(labels[k..=end].to_vec()),
            video.fps,
        )?;
        let mut result = run(&clip, &motion.offset(k), head, cfg)?;
        scored.push((o, result.segmentations.swap_remove(o), frame));
    }
    let acc = offset_accuracy(
        scored.iter().map(|(o, s, f)| (*o, s, &labels[*f])),
        num_classes,
    )?;
    Ok((scored.len(), acc))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let s = args.settings.resolve(args.scheme, args.interval)?;
    let video = load_input(&args.input)?;
    let num_classes = num_classes(&args.input, &video)?;
    let motion = Motion::prepare(
        &video,
        args.motion.as_deref(),
        &s,
        s.scheme == Scheme::Interp,
    )?;
    let head = fit_head(&video, &s, num_classes)?;
    let provider = motion.provider();
    let cfg = schedule(&video, &provider, &head, &s, num_classes)?;
    let (clips, accuracy) = rotating_eval(&video, &provider, &head, &cfg, num_classes)?;
    let report = EvalReport {
        command: "eval".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input: args.input.display().to_string(),
        motion: motion.describe(),
        frames: video.len(),
        num_classes,
        settings: s,
        clips,
        accuracy,
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Name of the per-run directory inside a bench output.
pub fn run_dir_name(scheme: Scheme, n: usize) -> String {
    format!("{}_n{n:02}", scheme.name())
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let base = args.settings.resolve(None, None)?;
    let video = load_input(&args.input)?;
    let num_classes = num_classes(&args.input, &video)?;
    let mut schemes = args.schemes.clone();
    schemes.sort();
    schemes.dedup();
    if schemes.is_empty() {
        return Err(Error::InvalidArgument("--schemes is empty".into()));
    }
    let (lo, hi) = (*args.sweep.start(), *args.sweep.end());
    let needs_bwd = schemes.contains(&Scheme::Interp);
    let motion = Motion::prepare(&video, args.motion.as_deref(), &base, needs_bwd)?;
    let head = fit_head(&video, &base, num_classes)?;
    create_dir(&args.out)?;
    write_head(&args.out.join(HEAD_FILE), &head)?;
    let ctx = RunInputs {
        input: &args.input,
        video: &video,
        num_classes,
        motion: &motion,
        head: &head,
    };
    let mut rows = Vec::new();
    for &scheme in &schemes {
        let intervals = if scheme == Scheme::Baseline {
            1..=1
        } else {
            lo..=hi
        };
        for n in intervals {
            let s = Settings {
                scheme,
                interval: n,
                ..base.clone()
            };
            let m = execute(&ctx, &s, &args.out.join(run_dir_name(scheme, n)), false)?;
            progress(&m);
            rows.push(m.curve_row()?);
        }
    }
    let csv = emit_curve(&rows)?;
    fs::write(args.out.join(CURVE_FILE), &csv).map_err(|e| {
        Error::io(
            format!("writing {}", args.out.join(CURVE_FILE).display()),
            e,
        )
    })?;
    print!("{csv}");
    Ok(())
}

/// Manifest files under `path`: the file itself, or `manifest.json` in the
/// directory and in each of its immediate subdirectories.
fn find_manifests(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut found = Vec::new();
    let own = path.join(MANIFEST_FILE);
    if own.is_file() {
        found.push(own);
    }
    let entries =
        fs::read_dir(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    found.extend(
        subdirs
            .into_iter()
            .map(|d| d.join(MANIFEST_FILE))
            .filter(|p| p.is_file()),
    );
    Ok(found)
}

/// Checks that manifests describe the same experiment up to scheme and
/// interval, then builds the curve.
pub fn merge_manifests(manifests: &[RunManifest]) -> Result<String> {
    let Some(first) = manifests.first() else {
        return Err(Error::InvalidArgument("no run manifests found".into()));
    };
    let strip = |m: &RunManifest| Settings {
        scheme: Scheme::Baseline,
        interval: 1,
        ..m.settings.clone()
    };
    let reference = strip(first);
    let mut seen = std::collections::BTreeSet::new();
    let mut rows = Vec::with_capacity(manifests.len());
    for m in manifests {
        let same = m.input == first.input
            && m.frames == first.frames
            && m.num_classes == first.num_classes
            && m.motion == first.motion
            && strip(m) == reference;
        if !same {
            return Err(Error::InvalidArgument(format!(
                "mismatched manifests: {} n={} differs from {} n={} in input or settings",
                m.settings.scheme.name(),
                m.settings.interval,
                first.settings.scheme.name(),
                first.settings.interval
            )));
        }
        let row = m.curve_row()?;
        if !seen.insert((row.scheme, row.n)) {
            return Err(Error::InvalidArgument(format!(
                "mismatched manifests: {} n={} appears twice",
                row.scheme.name(),
                row.n
            )));
        }
        rows.push(row);
    }
    emit_curve(&rows)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut manifests = Vec::new();
    for path in &args.input {
        for p in find_manifests(path)? {
            manifests.push(RunManifest::load(&p)?);
        }
    }
    let csv = merge_manifests(&manifests)?;
    match &args.out {
        Some(out) => {
            fs::write(out, &csv).map_err(|e| Error::io(format!("writing {}", out.display()), e))?
        }
        None => print!("{csv}"),
    }
    Ok(())
}
