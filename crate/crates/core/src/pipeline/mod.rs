//! Keyframe scheduling: frame-by-frame baseline, forward feature
//! propagation, and bidirectional feature interpolation.

mod motion;
mod run;

use serde::{Deserialize, Serialize};

pub use motion::{
    backward_sidecar_path, forward_sidecar_path, MotionProvider, MotionSet, MotionSource,
};
pub use run::{fusion_samples, run, run_baseline, run_interpolation, run_propagation};

use crate::error::{Error, Result};
use crate::features::{ExtractorConfig, FeatureMap, SegmentationMap};
use crate::fusion::FusionConfig;
use crate::parallel::Exec;

#[derive(
    Clone,
    Copy,
    Debug,
    Default,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Baseline,
    Prop,
    Interp,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::Prop => "prop",
            Scheme::Interp => "interp",
        }
    }
}

/// How interpolation obtains the motion from frame `i` to frame `i + 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackwardMode {
    /// Use separately estimated backward maps.
    #[default]
    Estimate,
    /// Negate the forward map of frame `i + 1`.
    Negate,
}

/// Which warped inputs interpolation uses for intermediate frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpMode {
    #[default]
    Fuse,
    ForwardOnly,
    BackwardOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleConfig {
    pub scheme: Scheme,
    /// Keyframe interval `n`; ignored (treated as 1) by the baseline.
    pub interval: usize,
    pub backward: BackwardMode,
    pub interp_mode: InterpMode,
    pub fusion: FusionConfig,
    pub extractor: ExtractorConfig,
    /// Count sidecar reads toward per-frame time.
    pub include_ingest: bool,
    /// Keep the features used for every frame in the result.
    pub keep_features: bool,
    pub exec: Exec,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            scheme: Scheme::Baseline,
            interval: 1,
            backward: BackwardMode::Estimate,
            interp_mode: InterpMode::Fuse,
            fusion: FusionConfig::default(),
            extractor: ExtractorConfig::default(),
            include_ingest: false,
            keep_features: false,
            exec: Exec::default(),
        }
    }
}

impl ScheduleConfig {
    pub fn new(scheme: Scheme, interval: usize, extractor: ExtractorConfig) -> Self {
        ScheduleConfig {
            scheme,
            interval,
            extractor,
            ..Default::default()
        }
    }

    /// Sets the executor for every stage, including the extractor.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self.extractor.exec = exec;
        self.fusion.exec = exec;
        self
    }

    pub fn effective_interval(&self) -> usize {
        match self.scheme {
            Scheme::Baseline => 1,
            _ => self.interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::InvalidArgument(
                "keyframe interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Accumulated wall time per stage, in milliseconds.
///
/// `frame_ms[i]` is the time attributed to frame `i`: its extraction, the
/// warps and fusion that produce its features, and its task head. Sidecar
/// reads are kept in `ingest_ms` and only attributed when `include_ingest`
/// is set; on-demand estimation always is.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub extraction_ms: f64,
    pub ingest_ms: f64,
    pub estimation_ms: f64,
    pub field_ms: f64,
    pub warp_ms: f64,
    pub fusion_ms: f64,
    pub head_ms: f64,
    pub include_ingest: bool,
    pub frame_ms: Vec<f64>,
    pub keyframe_ms: f64,
    pub keyframes: usize,
    pub intermediate_ms: f64,
    pub intermediates: usize,
}

impl TimingBreakdown {
    /// Inference time over all frames.
    pub fn total_ms(&self) -> f64 {
        self.frame_ms.iter().sum()
    }

    pub fn mean_keyframe_ms(&self) -> Option<f64> {
        (self.keyframes > 0).then(|| self.keyframe_ms / self.keyframes as f64)
    }

    pub fn mean_intermediate_ms(&self) -> Option<f64> {
        (self.intermediates > 0).then(|| self.intermediate_ms / self.intermediates as f64)
    }

    /// Named stage totals that make up [`total_ms`](Self::total_ms).
    pub fn stages(&self) -> Vec<(&'static str, f64)> {
        let mut stages = vec![
            ("extraction", self.extraction_ms),
            ("estimation", self.estimation_ms),
            ("field", self.field_ms),
            ("warp", self.warp_ms),
            ("fusion", self.fusion_ms),
            ("head", self.head_ms),
        ];
        if self.include_ingest {
            stages.insert(1, ("ingest", self.ingest_ms));
        }
        stages
    }
}

/// Work counters; unlike timings these are exact and reproducible.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub extractions: usize,
    pub warps: usize,
    pub fusions: usize,
    pub head_runs: usize,
    pub motion_maps: usize,
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub scheme: Scheme,
    pub interval: usize,
    pub segmentations: Vec<SegmentationMap>,
    /// Keyframe offset `i mod n` of each frame.
    pub offsets: Vec<usize>,
    /// Warp steps between each frame's features and the keyframe that
    /// dominates them: `p` for propagation, `min(p, n - p)` when fused.
    pub warp_distance: Vec<usize>,
    /// Frames of lookahead needed before a frame can be emitted.
    pub delay: usize,
    pub timing: TimingBreakdown,
    pub counters: Counters,
    pub features: Option<Vec<FeatureMap>>,
}

impl PipelineResult {
    /// Mean warp distance over intermediate frames (0 if there are none).
    pub fn mean_warp_distance(&self) -> f64 {
        let inter: Vec<usize> = self
            .offsets
            .iter()
            .zip(&self.warp_distance)
            .filter(|(&p, _)| p != 0)
            .map(|(_, &d)| d)
            .collect();
        if inter.is_empty() {
            0.0
        } else {
            inter.iter().sum::<usize>() as f64 / inter.len() as f64
        }
    }
}

/// Offset assigned to each of `labeled` frames so that successive labeled
/// frames cycle through `0, 1, ..., interval - 1`.
pub fn rotate_offset_eval(labeled: usize, interval: usize) -> Result<Vec<usize>> {
    if interval == 0 {
        return Err(Error::InvalidArgument(
            "keyframe interval must be at least 1".into(),
        ));
    }
    Ok((0..labeled).map(|j| j % interval).collect())
}
