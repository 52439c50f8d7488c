//! Motion-vector maps to feature-grid displacement fields, and bilinear
//! feature warping.
//!
//! Warping pulls: output cell `(y, x)` samples the source map at
//! `(y + dy, x + dx)`. A block vector points from a block of the frame being
//! predicted into the frame the source features belong to, so it is used
//! as-is; the negation that a push-style warp would need is absorbed here.

use serde::{Deserialize, Serialize};

use crate::block_motion::MotionVectorMap;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::parallel::Exec;

/// How a motion map relates to the warp it should drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// The map was estimated on the target frame against the source frame
    /// (forward motion for propagation from the previous keyframe, or a
    /// directly estimated backward map for the next keyframe). Used as-is.
    Forward,
    /// The map was estimated in the opposite temporal direction; its
    /// negation approximates the needed field.
    Backward,
}

/// Per-cell displacement in feature-grid units.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    rows: usize,
    cols: usize,
    dx: Vec<f32>,
    dy: Vec<f32>,
}

impl DisplacementField {
    pub fn new(rows: usize, cols: usize, dx: Vec<f32>, dy: Vec<f32>) -> Result<Self> {
        if dx.len() != rows * cols || dy.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} field needs {} entries per axis",
                rows * cols
            )));
        }
        if dx.iter().chain(&dy).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "displacements must be finite".into(),
            ));
        }
        Ok(DisplacementField { rows, cols, dx, dy })
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        DisplacementField {
            rows,
            cols,
            dx: vec![0.0; rows * cols],
            dy: vec![0.0; rows * cols],
        }
    }

    pub fn uniform(rows: usize, cols: usize, dx: f32, dy: f32) -> Result<Self> {
        DisplacementField::new(rows, cols, vec![dx; rows * cols], vec![dy; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> (f32, f32) {
        let i = y * self.cols + x;
        (self.dx[i], self.dy[i])
    }
}

/// Converts pixel offsets to grid units for a feature map of stride `s`.
///
/// With block size equal to `s` every cell takes its own block's vector.
/// Otherwise each cell takes the vector of the block containing the cell
/// center; block size and stride must then divide one another.
pub fn mv_to_field(
    mv: &MotionVectorMap,
    stride: usize,
    direction: Direction,
) -> Result<DisplacementField> {
    let bs = mv.block_size();
    if stride == 0 || (!bs.is_multiple_of(stride) && !stride.is_multiple_of(bs)) {
        return Err(Error::ShapeMismatch(format!(
            "block size {bs} and stride {stride} are incommensurate"
        )));
    }
    let (w, h) = (mv.cols() * bs, mv.rows() * bs);
    if w % stride != 0 || h % stride != 0 {
        return Err(Error::ShapeMismatch(format!(
            "stride {stride} does not tile the {w}x{h} motion grid"
        )));
    }
    let (rows, cols) = (h / stride, w / stride);
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let s = stride as f32;
    let mut dx = Vec::with_capacity(rows * cols);
    let mut dy = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        for x in 0..cols {
            let v = if bs == stride {
                mv.get(x, y)
            } else {
                let cx = x * stride + stride / 2;
                let cy = y * stride + stride / 2;
                mv.get(cx / bs, cy / bs)
            };
            dx.push(sign * v.dx as f32 / s);
            dy.push(sign * v.dy as f32 / s);
        }
    }
    DisplacementField::new(rows, cols, dx, dy)
}

pub fn warp_features(f: &FeatureMap, d: &DisplacementField) -> Result<FeatureMap> {
    warp_features_with(f, d, Exec::default())
}

/// Bilinear pull-warp with clamp-to-edge sampling; parallel over channels.
pub fn warp_features_with(f: &FeatureMap, d: &DisplacementField, exec: Exec) -> Result<FeatureMap> {
    if d.rows != f.rows() || d.cols != f.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} field cannot warp a {}x{} feature map",
            d.rows,
            d.cols,
            f.rows(),
            f.cols()
        )));
    }
    let (rows, cols) = (f.rows(), f.cols());
    let n = rows * cols;
    // taps are shared by every channel
    let taps: Vec<[(usize, f64); 4]> = (0..n)
        .map(|i| {
            let (y, x) = (i / cols, i % cols);
            let sy = (y as f64 + d.dy[i] as f64).clamp(0.0, (rows - 1) as f64);
            let sx = (x as f64 + d.dx[i] as f64).clamp(0.0, (cols - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(rows - 1), (x0 + 1).min(cols - 1));
            let (wy, wx) = (sy - y0 as f64, sx - x0 as f64);
            [
                (y0 * cols + x0, (1.0 - wy) * (1.0 - wx)),
                (y0 * cols + x1, (1.0 - wy) * wx),
                (y1 * cols + x0, wy * (1.0 - wx)),
                (y1 * cols + x1, wy * wx),
            ]
        })
        .collect();

    let mut out = FeatureMap::zeros(f.channels(), rows, cols, f.stride());
    let src = f.data();
    exec.for_each_chunk_mut(out.data_mut(), n, |c, dst| {
        let plane = &src[c * n..(c + 1) * n];
        for (o, t) in dst.iter_mut().zip(&taps) {
            let mut acc = 0.0f64;
            for &(j, wgt) in t {
                if wgt != 0.0 {
                    acc += wgt * plane[j] as f64;
                }
            }
            *o = acc as f32;
        }
    });
    Ok(out)
}

/// Repeated one-step warps: `out[0] = f`, `out[i] = warp(out[i-1], fields[i-1])`.
pub fn propagate(
    f: &FeatureMap,
    steps: usize,
    fields: &[DisplacementField],
) -> Result<Vec<FeatureMap>> {
    propagate_with(f, steps, fields, Exec::default())
}

pub fn propagate_with(
    f: &FeatureMap,
    steps: usize,
    fields: &[DisplacementField],
    exec: Exec,
) -> Result<Vec<FeatureMap>> {
    if fields.len() < steps {
        return Err(Error::InvalidArgument(format!(
            "{steps} propagation steps need {steps} fields, got {}",
            fields.len()
        )));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(f.clone());
    for field in &fields[..steps] {
        let next = warp_features_with(out.last().unwrap(), field, exec)?;
        out.push(next);
    }
    Ok(out)
}
