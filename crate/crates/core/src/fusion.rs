//! Relevance-weighted fusion of forward- and backward-warped features.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::persist::{read_blob, write_blob};
use crate::features::FeatureMap;
use crate::linalg::ridge;
use crate::parallel::Exec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FusionOperator {
    Max,
    #[default]
    Avg,
    Conv,
}

/// Per-position linear map from the stacked `[a; b]` (2A channels) to A
/// channels. `weights` is row-major `A x 2A`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvFusion {
    channels: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvFusion {
    pub fn new(channels: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if channels == 0 || weights.len() != channels * 2 * channels || bias.len() != channels {
            return Err(Error::ShapeMismatch(format!(
                "conv fusion over {channels} channels needs {} weights and {channels} biases, got {} and {}",
                2 * channels * channels,
                weights.len(),
                bias.len()
            )));
        }
        Ok(ConvFusion {
            channels,
            weights,
            bias,
        })
    }

    /// `[I | I]` with zero bias: the sum of both weighted halves.
    pub fn sum(channels: usize) -> Self {
        let mut weights = vec![0.0; 2 * channels * channels];
        for c in 0..channels {
            weights[c * 2 * channels + c] = 1.0;
            weights[c * 2 * channels + channels + c] = 1.0;
        }
        ConvFusion {
            channels,
            weights,
            bias: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FusionConfig {
    pub operator: FusionOperator,
    pub conv: Option<ConvFusion>,
    pub exec: Exec,
}

impl FusionConfig {
    pub fn new(operator: FusionOperator) -> Self {
        FusionConfig {
            operator,
            ..Default::default()
        }
    }

    pub fn conv(weights: ConvFusion) -> Self {
        FusionConfig {
            operator: FusionOperator::Conv,
            conv: Some(weights),
            exec: Exec::default(),
        }
    }
}

/// `(alpha, 1 - alpha)` with `alpha = (n - p) / n` for an intermediate
/// offset `0 < p < n`.
pub fn relevance_weights(n: usize, p: usize) -> Result<(f32, f32)> {
    if p == 0 || p >= n {
        return Err(Error::InvalidArgument(format!(
            "offset {p} is not strictly inside an interval of {n}"
        )));
    }
    let alpha = (n - p) as f64 / n as f64;
    Ok((alpha as f32, (p as f64 / n as f64) as f32))
}

/// Fuses `alpha * ff` with `(1 - alpha) * fb`.
pub fn fuse(
    ff: &FeatureMap,
    fb: &FeatureMap,
    alpha: f32,
    cfg: &FusionConfig,
) -> Result<FeatureMap> {
    if !ff.same_shape(fb) {
        return Err(Error::ShapeMismatch(format!(
            "cannot fuse {}x{}x{} with {}x{}x{}",
            ff.channels(),
            ff.rows(),
            ff.cols(),
            fb.channels(),
            fb.rows(),
            fb.cols()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fusion weight {alpha} outside (0, 1)"
        )));
    }
    let beta = 1.0 - alpha;
    let mut out = FeatureMap::zeros(ff.channels(), ff.rows(), ff.cols(), ff.stride());
    let (a, b) = (ff.data(), fb.data());
    match cfg.operator {
        FusionOperator::Avg => {
            for ((o, x), y) in out.data_mut().iter_mut().zip(a).zip(b) {
                *o = alpha * x + beta * y;
            }
        }
        FusionOperator::Max => {
            for ((o, x), y) in out.data_mut().iter_mut().zip(a).zip(b) {
                *o = (alpha * x).max(beta * y);
            }
        }
        FusionOperator::Conv => {
            let conv = cfg.conv.as_ref().ok_or_else(|| {
                Error::InvalidArgument("conv fusion selected without weights".into())
            })?;
            let ch = ff.channels();
            if conv.channels != ch {
                return Err(Error::ShapeMismatch(format!(
                    "conv fusion expects {} channels, features have {ch}",
                    conv.channels
                )));
            }
            let cells = ff.cells();
            // one output channel per chunk; each reads every input channel
            cfg.exec
                .for_each_chunk_mut(out.data_mut(), cells, |o, dst| {
                    let row = &conv.weights[o * 2 * ch..(o + 1) * 2 * ch];
                    dst.fill(conv.bias[o]);
                    for c in 0..ch {
                        let (wa, wb) = (row[c] * alpha, row[ch + c] * beta);
                        let (pa, pb) = (
                            &a[c * cells..(c + 1) * cells],
                            &b[c * cells..(c + 1) * cells],
                        );
                        for i in 0..cells {
                            dst[i] += wa * pa[i] + wb * pb[i];
                        }
                    }
                });
        }
    }
    Ok(out)
}

/// One training example: warped inputs, their forward weight, and the
/// features the fusion should reproduce.
#[derive(Clone, Debug)]
pub struct FusionSample {
    pub forward: FeatureMap,
    pub backward: FeatureMap,
    pub alpha: f32,
    pub target: FeatureMap,
}

/// Ridge fit of the conv fusion weights and bias from stacked weighted
/// inputs to targets, pooled over every cell of every sample.
pub fn fit_conv_fusion(samples: &[FusionSample], lambda: f64) -> Result<ConvFusion> {
    let first = samples.first().ok_or_else(|| {
        Error::InvalidArgument("conv fusion fit needs at least one sample".into())
    })?;
    let ch = first.forward.channels();
    let cells = first.forward.cells();
    for s in samples {
        if !s.forward.same_shape(&first.forward)
            || !s.backward.same_shape(&first.forward)
            || !s.target.same_shape(&first.forward)
        {
            return Err(Error::ShapeMismatch(
                "fusion samples differ in shape".into(),
            ));
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fusion weight {} outside (0, 1)",
                s.alpha
            )));
        }
    }
    let n = samples.len() * cells;
    let mut x = DMatrix::<f64>::zeros(n, 2 * ch + 1);
    let mut y = DMatrix::<f64>::zeros(n, ch);
    for (k, s) in samples.iter().enumerate() {
        let (alpha, beta) = (s.alpha as f64, 1.0 - s.alpha as f64);
        for i in 0..cells {
            let r = k * cells + i;
            for c in 0..ch {
                x[(r, c)] = alpha * s.forward.data()[c * cells + i] as f64;
                x[(r, ch + c)] = beta * s.backward.data()[c * cells + i] as f64;
                y[(r, c)] = s.target.data()[c * cells + i] as f64;
            }
            x[(r, 2 * ch)] = 1.0;
        }
    }
    let w = ridge(&x, &y, lambda)?;
    let mut weights = Vec::with_capacity(2 * ch * ch);
    for o in 0..ch {
        for i in 0..2 * ch {
            weights.push(w[(i, o)] as f32);
        }
    }
    let bias = (0..ch).map(|o| w[(2 * ch, o)] as f32).collect();
    ConvFusion::new(ch, weights, bias)
}

/// `FUSE` file: u32 channels, then `A x 2A` weights and `A` biases as f32.
pub fn write_conv_fusion(path: &Path, conv: &ConvFusion) -> Result<()> {
    write_blob(
        path,
        b"FUSE",
        &[conv.channels],
        &[&conv.weights, &conv.bias],
    )
}

pub fn read_conv_fusion(path: &Path) -> Result<ConvFusion> {
    let (h, v) = read_blob(path, b"FUSE", 1, |h| {
        h[0].checked_mul(h[0])?.checked_mul(2)?.checked_add(h[0])
    })?;
    let a = h[0];
    let (weights, bias) = v.split_at(2 * a * a);
    ConvFusion::new(a, weights.to_vec(), bias.to_vec())
        .map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, ch: usize, rows: usize, cols: usize) -> FeatureMap {
        let data = (0..ch * rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        FeatureMap::new(ch, rows, cols, 16, data).unwrap()
    }

    #[test]
    fn relevance_weight_examples() {
        assert_eq!(relevance_weights(5, 1).unwrap(), (0.8, 0.2));
        assert_eq!(relevance_weights(2, 1).unwrap(), (0.5, 0.5));
        assert_eq!(relevance_weights(10, 9).unwrap(), (0.1, 0.9));
        for (n, p) in [(5, 0), (5, 5), (5, 6), (1, 0)] {
            assert!(relevance_weights(n, p).is_err());
        }
        for n in 2..20 {
            for p in 1..n {
                let (a, b) = relevance_weights(n, p).unwrap();
                assert!(a > 0.0 && b > 0.0 && (a + b - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn equal_inputs() {
        let f = FeatureMap::from_fn(3, 2, 2, 16, |c, y, x| (c + y + x) as f32 * 0.25).unwrap();
        let avg = fuse(&f, &f, 0.5, &FusionConfig::new(FusionOperator::Avg)).unwrap();
        assert_eq!(avg, f);
        let max = fuse(&f, &f, 0.5, &FusionConfig::new(FusionOperator::Max)).unwrap();
        assert_eq!(max, f.scaled(0.5));
    }

    #[test]
    fn sum_conv_matches_avg() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (random_map(&mut rng, 4, 3, 5), random_map(&mut rng, 4, 3, 5));
        for alpha in [0.1, 0.5, 0.875] {
            let avg = fuse(&a, &b, alpha, &FusionConfig::new(FusionOperator::Avg)).unwrap();
            let conv = fuse(&a, &b, alpha, &FusionConfig::conv(ConvFusion::sum(4))).unwrap();
            assert!(avg.max_abs_diff(&conv) <= 1e-6);
        }
    }

    #[test]
    fn approaches_forward_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (random_map(&mut rng, 2, 4, 4), random_map(&mut rng, 2, 4, 4));
        let out = fuse(&a, &b, 1.0 - 1e-6, &FusionConfig::new(FusionOperator::Avg)).unwrap();
        assert!(out.max_abs_diff(&a) <= 1e-5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = FeatureMap::zeros(2, 2, 2, 16);
        let b = FeatureMap::zeros(3, 2, 2, 16);
        let avg = FusionConfig::new(FusionOperator::Avg);
        assert!(fuse(&a, &b, 0.5, &avg).is_err());
        assert!(fuse(&a, &a, 0.0, &avg).is_err());
        assert!(fuse(&a, &a, 1.0, &avg).is_err());
        assert!(fuse(&a, &a, 0.5, &FusionConfig::new(FusionOperator::Conv)).is_err());
        assert!(fuse(&a, &a, 0.5, &FusionConfig::conv(ConvFusion::sum(3))).is_err());
        assert!(fit_conv_fusion(&[], 1.0).is_err());
    }

    fn avg_samples(seed: u64, count: usize) -> Vec<FusionSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|k| {
                let forward = random_map(&mut rng, 3, 4, 4);
                let backward = random_map(&mut rng, 3, 4, 4);
                let alpha = [0.25, 0.5, 0.75][k % 3];
                let target = fuse(
                    &forward,
                    &backward,
                    alpha,
                    &FusionConfig::new(FusionOperator::Avg),
                )
                .unwrap();
                FusionSample {
                    forward,
                    backward,
                    alpha,
                    target,
                }
            })
            .collect()
    }

    #[test]
    fn fit_recovers_avg() {
        let samples = avg_samples(5, 6);
        let conv = fit_conv_fusion(&samples, 1e-9).unwrap();
        let expected = ConvFusion::sum(3);
        for (w, e) in conv.weights().iter().zip(expected.weights()) {
            assert!((w - e).abs() <= 1e-4, "{w} vs {e}");
        }
        assert!(conv.bias().iter().all(|b| b.abs() <= 1e-4));
        let cfg = FusionConfig::conv(conv);
        for s in &samples {
            let out = fuse(&s.forward, &s.backward, s.alpha, &cfg).unwrap();
            assert!(out.max_abs_diff(&s.target) <= 1e-4);
        }
    }

    #[test]
    fn heavy_regularization_shrinks_to_zero() {
        let conv = fit_conv_fusion(&avg_samples(6, 3), 1e12).unwrap();
        assert!(conv
            .weights()
            .iter()
            .chain(conv.bias())
            .all(|w| w.abs() < 1e-6));
    }

    #[test]
    fn duplicated_samples_fit_identically() {
        let one = avg_samples(7, 1);
        let mut noisy = one[0].clone();
        noisy.target = noisy.target.scaled(1.5);
        let single = fit_conv_fusion(std::slice::from_ref(&noisy), 0.0).unwrap();
        let doubled = fit_conv_fusion(&[noisy.clone(), noisy], 0.0).unwrap();
        for (a, b) in single.weights().iter().zip(doubled.weights()) {
            assert!((a - b).abs() <= 1e-4);
        }
    }

    #[test]
    fn conv_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fusion.bin");
        let conv = ConvFusion::new(1, vec![0.5, 0.25], vec![-1.0]).unwrap();
        write_conv_fusion(&path, &conv).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut expected = b"FUSE".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        for v in [0.5f32, 0.25, -1.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
        assert_eq!(read_conv_fusion(&path).unwrap(), conv);
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(read_conv_fusion(&path).unwrap_err().is_data_format());
    }

    fn arb_pair() -> impl Strategy<Value = (FeatureMap, FeatureMap)> {
        (1usize..4, 1usize..5, 1usize..5).prop_flat_map(|(c, r, w)| {
            let n = c * r * w;
            (
                proptest::collection::vec(-2.0f32..2.0, n),
                proptest::collection::vec(-2.0f32..2.0, n),
            )
                .prop_map(move |(a, b)| {
                    (
                        FeatureMap::new(c, r, w, 16, a).unwrap(),
                        FeatureMap::new(c, r, w, 16, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn avg_is_symmetric((a, b) in arb_pair(), n in 2usize..12, p in 1usize..11) {
            prop_assume!(p < n);
            let avg = FusionConfig::new(FusionOperator::Avg);
            let (alpha, beta) = relevance_weights(n, p).unwrap();
            let lhs = fuse(&a, &b, alpha, &avg).unwrap();
            let rhs = fuse(&b, &a, beta, &avg).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-6);
        }

        #[test]
        fn max_picks_a_weighted_input((a, b) in arb_pair(), alpha in 0.01f32..0.99) {
            let out = fuse(&a, &b, alpha, &FusionConfig::new(FusionOperator::Max)).unwrap();
            for i in 0..out.data().len() {
                let (x, y) = (alpha * a.data()[i], (1.0 - alpha) * b.data()[i]);
                let v = out.data()[i];
                prop_assert!((v == x || v == y) && v >= x && v >= y);
            }
        }
    }
}
