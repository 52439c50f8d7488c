//! Desk-scale feature network and task network.
//!
//! The feature network maps a frame to a stride-`s` grid of feature
//! vectors; the task head turns a feature grid into per-pixel class
//! predictions (1x1 projection, ReLU, 1x1 scoring, bilinear upsampling,
//! softmax).

mod extract;
pub(crate) mod head;
pub(crate) mod persist;

use crate::error::{Error, Result};

pub use extract::{extract_features, ExtractorConfig, ExtractorKind};
pub use head::{
    fit_task_head, run_task_head, run_task_head_probs, upsample_bilinear, HeadFitOptions, TaskHead,
};
pub use persist::{read_fmap, read_head, write_fmap, write_head};

/// `channels x rows x cols` feature tensor, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        channels: usize,
        rows: usize,
        cols: usize,
        stride: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != channels * rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{channels}x{rows}x{cols} feature map needs {} values, got {}",
                channels * rows * cols,
                data.len()
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "feature values must be finite".into(),
            ));
        }
        Ok(FeatureMap {
            channels,
            rows,
            cols,
            stride,
            data,
        })
    }

    pub fn zeros(channels: usize, rows: usize, cols: usize, stride: usize) -> Self {
        FeatureMap {
            channels,
            rows,
            cols,
            stride,
            data: vec![0.0; channels * rows * cols],
        }
    }

    /// Builds a map from `f(c, y, x)`.
    pub fn from_fn(
        channels: usize,
        rows: usize,
        cols: usize,
        stride: usize,
        f: impl Fn(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * rows * cols);
        for c in 0..channels {
            for y in 0..rows {
                for x in 0..cols {
                    data.push(f(c, y, x));
                }
            }
        }
        FeatureMap::new(channels, rows, cols, stride, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.rows + y) * self.cols + x]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.cells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels
            && self.rows == other.rows
            && self.cols == other.cols
            && self.stride == other.stride
    }

    pub fn scaled(&self, k: f32) -> FeatureMap {
        FeatureMap {
            data: self.data.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Per-pixel class predictions at full frame resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationMap {
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub labels: Vec<u8>,
    /// `num_classes x height x width` softmax probabilities, when requested.
    pub probs: Option<Vec<f32>>,
}
