use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureMap, SegmentationMap};
use crate::error::{Error, Result};
use crate::frame_io::LabelMap;
use crate::linalg::ridge;
use crate::parallel::Exec;

/// Task network: per-position projection `A -> P`, ReLU, per-position
/// scoring `P -> C`, bilinear upsampling by the feature stride, softmax.
///
/// Weight matrices are row-major `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskHead {
    pub in_channels: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub stride: usize,
    pub proj_w: Vec<f32>,
    pub proj_b: Vec<f32>,
    pub score_w: Vec<f32>,
    pub score_b: Vec<f32>,
}

impl TaskHead {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        hidden: usize,
        num_classes: usize,
        stride: usize,
        proj_w: Vec<f32>,
        proj_b: Vec<f32>,
        score_w: Vec<f32>,
        score_b: Vec<f32>,
    ) -> Result<Self> {
        let ok = proj_w.len() == hidden * in_channels
            && proj_b.len() == hidden
            && score_w.len() == num_classes * hidden
            && score_b.len() == num_classes;
        if !ok || num_classes == 0 || num_classes > 256 || stride == 0 {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent task head shapes for A={in_channels}, P={hidden}, C={num_classes}"
            )));
        }
        Ok(TaskHead {
            in_channels,
            hidden,
            num_classes,
            stride,
            proj_w,
            proj_b,
            score_w,
            score_b,
        })
    }

    /// Post-ReLU projection, `hidden x cells`.
    pub fn project(&self, f: &FeatureMap) -> Result<Vec<f32>> {
        if f.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "task head expects {} channels, got {}",
                self.in_channels,
                f.channels()
            )));
        }
        if f.stride() != self.stride {
            return Err(Error::ShapeMismatch(format!(
                "task head expects stride {}, got {}",
                self.stride,
                f.stride()
            )));
        }
        let n = f.cells();
        let mut out = vec![0.0f32; self.hidden * n];
        for (h, dst) in out.chunks_exact_mut(n).enumerate() {
            let w = &self.proj_w[h * self.in_channels..][..self.in_channels];
            dst.fill(self.proj_b[h]);
            for (c, &wc) in w.iter().enumerate() {
                for (d, &v) in dst.iter_mut().zip(f.channel(c)) {
                    *d += wc * v;
                }
            }
            for d in dst.iter_mut() {
                *d = d.max(0.0);
            }
        }
        Ok(out)
    }

    /// Class scores on the feature grid, `classes x cells`.
    pub fn score(&self, hidden: &[f32], cells: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; self.num_classes * cells];
        for (k, dst) in out.chunks_exact_mut(cells).enumerate() {
            let w = &self.score_w[k * self.hidden..][..self.hidden];
            dst.fill(self.score_b[k]);
            for (h, &wh) in w.iter().enumerate() {
                for (d, &v) in dst.iter_mut().zip(&hidden[h * cells..(h + 1) * cells]) {
                    *d += wh * v;
                }
            }
        }
        out
    }

    /// Grid-level logits for `f`, `classes x rows x cols`.
    pub fn logits(&self, f: &FeatureMap) -> Result<Vec<f32>> {
        let hidden = self.project(f)?;
        Ok(self.score(&hidden, f.cells()))
    }
}

/// Per-pixel class labels (argmax of the upsampled scores; lowest class
/// wins ties). Softmax is monotone, so it is skipped here.
pub fn run_task_head(f: &FeatureMap, head: &TaskHead) -> Result<SegmentationMap> {
    segment(f, head, false, Exec::default())
}

/// Like [`run_task_head`] but also fills in softmax probabilities.
pub fn run_task_head_probs(f: &FeatureMap, head: &TaskHead) -> Result<SegmentationMap> {
    segment(f, head, true, Exec::default())
}

pub(crate) fn segment(
    f: &FeatureMap,
    head: &TaskHead,
    with_probs: bool,
    exec: Exec,
) -> Result<SegmentationMap> {
    let logits = head.logits(f)?;
    let (rows, cols, s) = (f.rows(), f.cols(), f.stride());
    let (w, h) = (cols * s, rows * s);
    let c = head.num_classes;
    let xs = sample_taps(w, s, cols);
    let ys = sample_taps(h, s, rows);
    let n = rows * cols;

    // vertical pass per output row, then horizontal taps per pixel
    let vertical = |y: usize, v: &mut [f32]| {
        let (y0, y1, wy) = ys[y];
        for k in 0..c {
            let g = &logits[k * n..(k + 1) * n];
            let (top, bot) = (&g[y0 * cols..][..cols], &g[y1 * cols..][..cols]);
            for (x, o) in v[k * cols..(k + 1) * cols].iter_mut().enumerate() {
                *o = top[x] * (1.0 - wy) + bot[x] * wy;
            }
        }
    };
    let pixel = |v: &[f32], x: usize, scores: &mut [f32]| {
        let (x0, x1, wx) = xs[x];
        for (k, sc) in scores.iter_mut().enumerate() {
            let r = &v[k * cols..];
            *sc = r[x0] * (1.0 - wx) + r[x1] * wx;
        }
    };

    let mut labels = vec![0u8; w * h];
    let band = s.max(1) * w;
    exec.for_each_chunk_mut(&mut labels, band, |b, chunk| {
        let mut v = vec![0.0f32; c * cols];
        let mut scores = vec![0.0f32; c];
        for (r, row) in chunk.chunks_exact_mut(w).enumerate() {
            vertical(b * s.max(1) + r, &mut v);
            for (x, label) in row.iter_mut().enumerate() {
                pixel(&v, x, &mut scores);
                *label = argmax(&scores) as u8;
            }
        }
    });

    let probs = with_probs.then(|| {
        let mut probs = vec![0.0f32; c * w * h];
        let mut v = vec![0.0f32; c * cols];
        let mut scores = vec![0.0f32; c];
        for y in 0..h {
            vertical(y, &mut v);
            for x in 0..w {
                pixel(&v, x, &mut scores);
                let m = scores[labels[y * w + x] as usize] as f64;
                let exps: Vec<f64> = scores.iter().map(|&t| (t as f64 - m).exp()).collect();
                let z: f64 = exps.iter().sum();
                for (k, e) in exps.iter().enumerate() {
                    probs[(k * h + y) * w + x] = (e / z) as f32;
                }
            }
        }
        probs
    });
    Ok(SegmentationMap {
        width: w,
        height: h,
        num_classes: c,
        labels,
        probs,
    })
}

fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Bilinear taps for each of `out_len` output samples over a grid of
/// `grid_len` cells: output `i` samples grid coordinate `(i + 0.5)/s - 0.5`,
/// clamped to the grid.
fn sample_taps(out_len: usize, s: usize, grid_len: usize) -> Vec<(usize, usize, f32)> {
    (0..out_len)
        .map(|i| {
            let u = ((i as f64 + 0.5) / s as f64 - 0.5).clamp(0.0, (grid_len - 1) as f64);
            let i0 = u.floor() as usize;
            let i1 = (i0 + 1).min(grid_len - 1);
            (i0, i1, (u - i0 as f64) as f32)
        })
        .collect()
}

/// Upsamples a `rows x cols` grid by `s` with the task head's sampling
/// convention.
pub fn upsample_bilinear(grid: &[f32], rows: usize, cols: usize, s: usize) -> Vec<f32> {
    assert_eq!(grid.len(), rows * cols, "grid size mismatch");
    let xs = sample_taps(cols * s, s, cols);
    let ys = sample_taps(rows * s, s, rows);
    let mut out = Vec::with_capacity(rows * cols * s * s);
    for &(y0, y1, wy) in &ys {
        for &(x0, x1, wx) in &xs {
            let top = grid[y0 * cols + x0] * (1.0 - wx) + grid[y0 * cols + x1] * wx;
            let bot = grid[y1 * cols + x0] * (1.0 - wx) + grid[y1 * cols + x1] * wx;
            out.push(top * (1.0 - wy) + bot * wy);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadFitOptions {
    pub num_classes: usize,
    /// Projection width `P`; defaults to `max(A/2, C)`.
    pub hidden: Option<usize>,
    pub lambda: f64,
    pub seed: u64,
    /// Fit a scoring bias. Off by default so the head stays positively
    /// homogeneous (scaling all features leaves labels unchanged).
    pub intercept: bool,
}

impl HeadFitOptions {
    pub fn new(num_classes: usize) -> Self {
        HeadFitOptions {
            num_classes,
            hidden: None,
            lambda: 1e-3,
            seed: 0,
            intercept: false,
        }
    }
}

/// Seeded nonnegative projection close to a (tiled) identity with unit-norm
/// rows. Nonnegative inputs stay nonnegative, so the ReLU is inactive on
/// them.
pub(crate) fn seeded_projection(hidden: usize, in_channels: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0f32; hidden * in_channels];
    for (i, row) in w.chunks_exact_mut(in_channels).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let tied = i % in_channels == j || j % hidden == i;
            *v = if tied { 1.0 } else { 0.0 } + 0.1 * rng.random::<f32>();
        }
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    w
}

/// Majority class of each stride cell (lowest class on ties).
pub(crate) fn cell_majority(labels: &LabelMap, stride: usize, num_classes: usize) -> Vec<usize> {
    let (rows, cols) = (labels.height / stride, labels.width / stride);
    let mut counts = vec![0u32; rows * cols * num_classes];
    for y in 0..rows * stride {
        for x in 0..cols * stride {
            let k = labels.get(x, y) as usize;
            counts[((y / stride) * cols + x / stride) * num_classes + k] += 1;
        }
    }
    counts
        .chunks_exact(num_classes)
        .map(|c| {
            let mut best = 0;
            for k in 1..num_classes {
                if c[k] > c[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Fits the scoring layer by ridge regression from post-ReLU projected
/// features to one-hot cell-majority labels. The projection is fixed by
/// `opts.seed`.
pub fn fit_task_head(
    features: &[FeatureMap],
    labels: &[LabelMap],
    opts: &HeadFitOptions,
) -> Result<TaskHead> {
    let Some(first) = features.first() else {
        return Err(Error::InvalidArgument("no training features".into()));
    };
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature maps vs {} label maps",
            features.len(),
            labels.len()
        )));
    }
    let a = first.channels();
    let c = opts.num_classes;
    let hidden = opts.hidden.unwrap_or((a / 2).max(c)).max(1);
    let stride = first.stride();
    let proj_w = seeded_projection(hidden, a, opts.seed);
    let proto = TaskHead::new(
        a,
        hidden,
        c,
        stride,
        proj_w.clone(),
        vec![0.0; hidden],
        vec![0.0; c * hidden],
        vec![0.0; c],
    )?;

    let cols_x = hidden + usize::from(opts.intercept);
    let mut design: Vec<f64> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (f, l) in features.iter().zip(labels) {
        if !f.same_shape(first) || l.width != f.cols() * stride || l.height != f.rows() * stride {
            return Err(Error::ShapeMismatch("training pair shapes differ".into()));
        }
        if l.max_label().is_some_and(|m| m as usize >= c) {
            return Err(Error::InvalidArgument("label exceeds num_classes".into()));
        }
        let z = proto.project(f)?;
        let n = f.cells();
        let majority = cell_majority(l, stride, c);
        for cell in 0..n {
            design.extend((0..hidden).map(|h| z[h * n + cell] as f64));
            if opts.intercept {
                design.push(1.0);
            }
            targets.extend((0..c).map(|k| if k == majority[cell] { 1.0 } else { 0.0 }));
        }
    }
    let samples = targets.len() / c;
    let x = DMatrix::from_row_slice(samples, cols_x, &design);
    let y = DMatrix::from_row_slice(samples, c, &targets);
    let sol = ridge(&x, &y, opts.lambda)?;

    let mut score_w = vec![0.0f32; c * hidden];
    let mut score_b = vec![0.0f32; c];
    for k in 0..c {
        for h in 0..hidden {
            score_w[k * hidden + h] = sol[(h, k)] as f32;
        }
        if opts.intercept {
            score_b[k] = sol[(hidden, k)] as f32;
        }
    }
    TaskHead::new(
        a,
        hidden,
        c,
        stride,
        proj_w,
        vec![0.0; hidden],
        score_w,
        score_b,
    )
}
