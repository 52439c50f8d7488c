//! Accuracy, throughput, and the analytic cost model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SegmentationMap;
use crate::frame_io::LabelMap;
use crate::pipeline::{PipelineResult, Scheme, TimingBreakdown};

/// Counts indexed `[gt][pred]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, pred: &SegmentationMap, gt: &LabelMap) -> Result<()> {
        if pred.width != gt.width || pred.height != gt.height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} prediction vs {}x{} ground truth",
                pred.width, pred.height, gt.width, gt.height
            )));
        }
        let c = self.num_classes;
        for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
            let (p, g) = (p as usize, g as usize);
            if p >= c || g >= c {
                return Err(Error::InvalidArgument(format!(
                    "label {} outside {c} classes",
                    p.max(g)
                )));
            }
            self.counts[g * c + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::ShapeMismatch(
                "confusion matrices differ in class count".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// IoU of class `k`, or `None` when it appears in neither ground truth
    /// nor prediction.
    pub fn iou(&self, k: usize) -> Option<f64> {
        let c = self.num_classes;
        let diag = self.get(k, k);
        let row: u64 = (0..c).map(|j| self.get(k, j)).sum();
        let col: u64 = (0..c).map(|i| self.get(i, k)).sum();
        let union = row + col - diag;
        (union > 0).then(|| diag as f64 / union as f64)
    }

    /// Mean IoU over classes present in ground truth or prediction.
    pub fn miou(&self) -> Option<f64> {
        let ious: Vec<f64> = (0..self.num_classes).filter_map(|k| self.iou(k)).collect();
        (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

/// Pooled mIoU over aligned prediction and ground-truth lists.
pub fn miou(preds: &[SegmentationMap], gts: &[LabelMap], num_classes: usize) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (p, g) in preds.iter().zip(gts) {
        cm.add(p, g)?;
    }
    cm.miou()
        .ok_or_else(|| Error::InvalidArgument("no labeled pixels to evaluate".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetAccuracy {
    pub per_offset: BTreeMap<usize, f64>,
    /// mIoU pooled over all evaluated frames.
    pub avg: f64,
    /// Worst per-offset mIoU.
    pub min: f64,
}

/// Groups `(offset, prediction, ground truth)` triples by offset.
pub fn offset_accuracy<'a>(
    items: impl IntoIterator<Item = (usize, &'a SegmentationMap, &'a LabelMap)>,
    num_classes: usize,
) -> Result<OffsetAccuracy> {
    let mut pooled = ConfusionMatrix::new(num_classes);
    let mut by_offset: BTreeMap<usize, ConfusionMatrix> = BTreeMap::new();
    for (p, pred, gt) in items {
        let cm = by_offset
            .entry(p)
            .or_insert_with(|| ConfusionMatrix::new(num_classes));
        cm.add(pred, gt)?;
    }
    if by_offset.is_empty() {
        return Err(Error::InvalidArgument(
            "no labeled frames to evaluate".into(),
        ));
    }
    let mut per_offset = BTreeMap::new();
    for (&p, cm) in &by_offset {
        pooled.merge(cm)?;
        let m = cm
            .miou()
            .ok_or_else(|| Error::InvalidArgument(format!("offset {p} has no labeled pixels")))?;
        per_offset.insert(p, m);
    }
    let avg = pooled.miou().expect("pooled matrix is nonempty");
    let min = per_offset.values().copied().fold(f64::INFINITY, f64::min);
    Ok(OffsetAccuracy {
        per_offset,
        avg,
        min,
    })
}

/// Per-offset accuracy of a run over every frame with a ground-truth map.
pub fn per_offset_accuracy(
    result: &PipelineResult,
    gts: &[Option<&LabelMap>],
    num_classes: usize,
) -> Result<OffsetAccuracy> {
    if gts.len() != result.segmentations.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ground-truth slots for {} frames",
            gts.len(),
            result.segmentations.len()
        )));
    }
    offset_accuracy(
        result
            .offsets
            .iter()
            .zip(&result.segmentations)
            .zip(gts)
            .filter_map(|((&p, s), g)| g.map(|g| (p, s, g))),
        num_classes,
    )
}

/// Per-frame costs in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Feature extraction plus task head on a keyframe.
    pub t_key: f64,
    /// Warp, fusion, and task head on an intermediate frame.
    pub t_inter: f64,
    /// Extra per-frame motion estimation, for flow-style schemes.
    pub t_motion: f64,
}

impl CostModel {
    pub fn new(t_key: f64, t_inter: f64, t_motion: f64) -> Self {
        CostModel {
            t_key,
            t_inter,
            t_motion,
        }
    }

    /// Mean keyframe and intermediate-frame times of a run. Runs without
    /// intermediate frames get `t_inter = t_key`.
    pub fn from_timing(t: &TimingBreakdown) -> Result<Self> {
        let t_key = t
            .mean_keyframe_ms()
            .ok_or_else(|| Error::InvalidArgument("run has no keyframes".into()))?;
        Ok(CostModel::new(
            t_key,
            t.mean_intermediate_ms().unwrap_or(t_key),
            0.0,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t_key > 0.0 && self.t_inter >= 0.0 && self.t_motion >= 0.0;
        if !ok || !(self.t_key + self.t_inter + self.t_motion).is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid cost model {self:?}"
            )));
        }
        Ok(())
    }

    /// Intermediate frames cost at least as much as keyframes, so skipping
    /// extraction cannot pay off.
    pub fn is_degenerate(&self) -> bool {
        self.t_inter + self.t_motion >= self.t_key
    }
}

/// Frames per second predicted for keyframe interval `n`.
pub fn predict_fps(model: &CostModel, n: usize, scheme: Scheme) -> Result<f64> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "keyframe interval must be at least 1".into(),
        ));
    }
    Ok(match scheme {
        Scheme::Baseline => 1000.0 / model.t_key,
        Scheme::Prop | Scheme::Interp => {
            1000.0 * n as f64 / (model.t_key + (n - 1) as f64 * (model.t_inter + model.t_motion))
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub fps: f64,
    pub total_ms: f64,
    /// Fraction of the total spent in each stage.
    pub shares: Vec<(String, f64)>,
}

pub fn measure_throughput(result: &PipelineResult) -> Result<Throughput> {
    let total_ms = result.timing.total_ms();
    if total_ms.is_nan() || total_ms <= 0.0 {
        return Err(Error::InvalidArgument(
            "run recorded no elapsed time".into(),
        ));
    }
    let shares = result
        .timing
        .stages()
        .into_iter()
        .map(|(name, ms)| (name.to_string(), ms / total_ms))
        .collect();
    Ok(Throughput {
        fps: result.segmentations.len() as f64 * 1000.0 / total_ms,
        total_ms,
        shares,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub scheme: Scheme,
    pub n: usize,
    pub miou_avg: f64,
    pub miou_min: f64,
    pub fps: f64,
    pub delay_frames: usize,
}

/// CSV with one row per run, sorted by scheme then interval.
pub fn emit_curve(runs: &[CurveRow]) -> Result<String> {
    let mut rows = runs.to_vec();
    rows.sort_by_key(|r| (r.scheme, r.n));
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_curve(text: &str) -> Result<Vec<CurveRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
