//! Block motion compensation: per-block exhaustive motion search,
//! residuals, exact reconstruction, and the `.mvec` sidecar format.

mod residual;
mod search;
mod sidecar;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::Exec;

pub use residual::{compute_residual, reconstruct, ResidualMap};
pub use search::{block_cost, estimate_motion, estimate_motion_costs, BlockMatches};
pub use sidecar::{read_mvec, write_mvec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMetric {
    /// Sum of squared differences; ranks offsets exactly like MSE.
    #[default]
    Ssd,
    /// Sum of absolute differences.
    Sad,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchPlane {
    #[default]
    Luma,
    AllChannels,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    pub block_size: usize,
    /// Exhaustive window is `±radius` pixels on both axes.
    pub radius: usize,
    pub metric: MatchMetric,
    pub plane: MatchPlane,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            block_size: 16,
            radius: 16,
            metric: MatchMetric::Ssd,
            plane: MatchPlane::Luma,
            exec: Exec::default(),
        }
    }
}

impl SearchParams {
    pub fn with_radius(radius: usize) -> Self {
        SearchParams {
            radius,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    pub fn new(dx: i32, dy: i32) -> Self {
        MotionVector { dx, dy }
    }

    pub fn l1(self) -> u32 {
        self.dx.unsigned_abs() + self.dy.unsigned_abs()
    }

}

impl std::ops::Neg for MotionVector {
    type Output = MotionVector;

    fn neg(self) -> MotionVector {
        MotionVector::new(-self.dx, -self.dy)
    }
}

/// Row-major grid of per-block offsets. The block whose top-left corner is
/// `(x, y)` in the current frame matches the reference-frame block at
/// `(x + dx, y + dy)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionVectorMap {
    cols: usize,
    rows: usize,
    block_size: usize,
    vectors: Vec<MotionVector>,
}

impl MotionVectorMap {
    pub fn new(
        cols: usize,
        rows: usize,
        block_size: usize,
        vectors: Vec<MotionVector>,
    ) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        if vectors.len() != cols * rows {
            return Err(Error::ShapeMismatch(format!(
                "{cols}x{rows} motion grid needs {} vectors, got {}",
                cols * rows,
                vectors.len()
            )));
        }
        Ok(MotionVectorMap {
            cols,
            rows,
            block_size,
            vectors,
        })
    }

    pub fn uniform(cols: usize, rows: usize, block_size: usize, v: MotionVector) -> Result<Self> {
        MotionVectorMap::new(cols, rows, block_size, vec![v; cols * rows])
    }

    /// Grid width N in blocks.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Grid height M in blocks.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn vectors(&self) -> &[MotionVector] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> MotionVector {
        self.vectors[row * self.cols + col]
    }

    pub fn negated(&self) -> MotionVectorMap {
        MotionVectorMap {
            vectors: self.vectors.iter().map(|&v| -v).collect(),
            ..self.clone()
        }
    }

    pub fn mean_magnitude(&self) -> f64 {
        if self.vectors.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .vectors
            .iter()
            .map(|v| ((v.dx * v.dx + v.dy * v.dy) as f64).sqrt())
            .sum();
        sum / self.vectors.len() as f64
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.vectors.is_empty() {
            return 1.0;
        }
        let zeros = self
            .vectors
            .iter()
            .filter(|v| **v == MotionVector::ZERO)
            .count();
        zeros as f64 / self.vectors.len() as f64
    }

    /// Checks that the grid tiles a `width`x`height` frame and that every
    /// matched block lies fully inside it.
    pub fn check_frame(&self, width: usize, height: usize) -> Result<()> {
        if self.cols * self.block_size != width || self.rows * self.block_size != height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} grid of {}px blocks does not tile a {width}x{height} frame",
                self.cols, self.rows, self.block_size
            )));
        }
        let bs = self.block_size as i64;
        for row in 0..self.rows {
            for col in 0..self.cols {
                let v = self.get(col, row);
                let x = col as i64 * bs + v.dx as i64;
                let y = row as i64 * bs + v.dy as i64;
                if x < 0 || y < 0 || x + bs > width as i64 || y + bs > height as i64 {
                    return Err(Error::InvalidArgument(format!(
                        "vector ({}, {}) of block ({col}, {row}) leaves the frame",
                        v.dx, v.dy
                    )));
                }
            }
        }
        Ok(())
    }
}
