//! Toy feature networks.
//!
//! `Oracle` reads the ground-truth label map and emits per-cell class
//! fractions plus seeded Gaussian noise, so accuracy loss downstream comes
//! only from warping and fusion. `Handcraft` computes per-cell color,
//! gradient and luma-histogram statistics from pixels alone.
//!
//! Both run `backbone_layers` passes of a 3x3 filter over the luma plane
//! first. For `Handcraft` the filtered plane feeds the gradient statistic;
//! for `Oracle` the pass only stands in for the cost of a real backbone so
//! that keyframes are expensive relative to the task head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FeatureMap;
use crate::error::{Error, Result};
use crate::frame_io::{Frame, LabelMap};
use crate::parallel::Exec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    #[default]
    Oracle,
    Handcraft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    pub stride: usize,
    /// Class count `C`; the oracle emits exactly this many channels.
    pub num_classes: usize,
    /// Output width `A` of the handcraft extractor (at least 6).
    pub handcraft_channels: usize,
    /// Oracle noise standard deviation.
    pub noise_sigma: f32,
    pub seed: u64,
    pub backbone_layers: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            kind: ExtractorKind::Oracle,
            stride: 16,
            num_classes: 5,
            handcraft_channels: 16,
            noise_sigma: 0.05,
            seed: 0,
            backbone_layers: 64,
            exec: Exec::default(),
        }
    }
}

impl ExtractorConfig {
    pub fn oracle(num_classes: usize, noise_sigma: f32, seed: u64) -> Self {
        ExtractorConfig {
            num_classes,
            noise_sigma,
            seed,
            ..Default::default()
        }
    }

    pub fn handcraft(channels: usize) -> Self {
        ExtractorConfig {
            kind: ExtractorKind::Handcraft,
            handcraft_channels: channels,
            ..Default::default()
        }
    }

    /// Number of feature channels `A` this configuration produces.
    pub fn feature_channels(&self) -> usize {
        match self.kind {
            ExtractorKind::Oracle => self.num_classes,
            ExtractorKind::Handcraft => self.handcraft_channels,
        }
    }
}

pub fn extract_features(
    frame: &Frame,
    labels: Option<&LabelMap>,
    cfg: &ExtractorConfig,
) -> Result<FeatureMap> {
    let s = cfg.stride;
    if s == 0 || !frame.width().is_multiple_of(s) || !frame.height().is_multiple_of(s) {
        return Err(Error::InvalidDimensions(format!(
            "stride {s} does not tile {}x{}",
            frame.width(),
            frame.height()
        )));
    }
    let luma = backbone(frame, cfg.backbone_layers, cfg.exec);
    match cfg.kind {
        ExtractorKind::Oracle => {
            let labels = labels.ok_or_else(|| {
                Error::InvalidArgument("the oracle extractor needs ground-truth labels".into())
            })?;
            std::hint::black_box(&luma);
            oracle(frame, labels, cfg)
        }
        ExtractorKind::Handcraft => handcraft(frame, &luma, cfg),
    }
}

/// Repeated `[1 2 1]^T [1 2 1] / 16` smoothing of the luma plane with
/// clamped borders.
fn backbone(frame: &Frame, layers: usize, exec: Exec) -> Vec<f32> {
    let (w, h) = (frame.width(), frame.height());
    let mut plane: Vec<f32> = frame.to_luma().data().iter().map(|&v| v as f32).collect();
    let mut next = vec![0.0f32; w * h];
    for _ in 0..layers {
        let src = &plane;
        exec.for_each_chunk_mut(&mut next, w, |y, out| {
            let up = &src[y.saturating_sub(1) * w..][..w];
            let mid = &src[y * w..][..w];
            let down = &src[(y + 1).min(h - 1) * w..][..w];
            for (x, o) in out.iter_mut().enumerate() {
                let (l, r) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let col = |row: &[f32]| row[l] + 2.0 * row[x] + row[r];
                *o = (col(up) + 2.0 * col(mid) + col(down)) / 16.0;
            }
        });
        std::mem::swap(&mut plane, &mut next);
    }
    plane
}

fn oracle(frame: &Frame, labels: &LabelMap, cfg: &ExtractorConfig) -> Result<FeatureMap> {
    if labels.width != frame.width() || labels.height != frame.height() {
        return Err(Error::ShapeMismatch(
            "label map does not match the frame".into(),
        ));
    }
    let c = cfg.num_classes;
    if let Some(max) = labels.max_label() {
        if max as usize >= c {
            return Err(Error::InvalidArgument(format!(
                "label {max} exceeds num_classes {c}"
            )));
        }
    }
    let s = cfg.stride;
    let (rows, cols) = (frame.height() / s, frame.width() / s);
    let mut data = vec![0.0f32; c * rows * cols];
    let area = (s * s) as f32;
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let k = labels.get(x, y) as usize;
            data[(k * rows + y / s) * cols + x / s] += 1.0;
        }
    }
    for v in &mut data {
        *v /= area;
    }
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, cfg.noise_sigma)
            .map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ fnv1a(&labels.labels));
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    FeatureMap::new(c, rows, cols, s, data)
}

fn handcraft(frame: &Frame, filtered: &[f32], cfg: &ExtractorConfig) -> Result<FeatureMap> {
    let a = cfg.handcraft_channels;
    if a < 6 {
        return Err(Error::InvalidArgument(format!(
            "handcraft extractor needs at least 6 channels, got {a}"
        )));
    }
    let bins = a - 5;
    let s = cfg.stride;
    let (w, h) = (frame.width(), frame.height());
    let (rows, cols) = (h / s, w / s);
    let luma = frame.to_luma();
    let ch = frame.channels();
    let area = (s * s) as f64;

    let cells = cfg.exec.map(rows * cols, |cell| {
        let (cy, cx) = (cell / cols, cell % cols);
        let mut v = vec![0.0f64; a];
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for y in cy * s..(cy + 1) * s {
            for x in cx * s..(cx + 1) * s {
                for (k, acc) in v[..3].iter_mut().enumerate() {
                    *acc += frame.pixel(x, y, if ch == 1 { 0 } else { k }) as f64;
                }
                let g = filtered[y * w + x];
                let gx = filtered[y * w + (x + 1).min(w - 1)] - g;
                let gy = filtered[(y + 1).min(h - 1) * w + x] - g;
                v[3] += (gx.abs() + gy.abs()) as f64;
                let l = luma.pixel(x, y, 0) as usize;
                sum += l as f64;
                sum_sq += (l * l) as f64;
                v[5 + l * bins / 256] += 1.0;
            }
        }
        v[..4].iter_mut().for_each(|x| *x /= area * 255.0);
        let mean = sum / area;
        v[4] = (sum_sq / area - mean * mean).max(0.0).sqrt() / 255.0;
        for b in &mut v[5..] {
            *b /= area;
        }
        v
    });

    let n = rows * cols;
    let mut data = vec![0.0f32; a * n];
    for (cell, v) in cells.iter().enumerate() {
        for (k, &x) in v.iter().enumerate() {
            data[k * n + cell] = x as f32;
        }
    }
    FeatureMap::new(a, rows, cols, s, data)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
