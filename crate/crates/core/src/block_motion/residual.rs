use super::MotionVectorMap;
use crate::error::{Error, Result};
use crate::frame_io::Frame;

/// Signed per-pixel difference between a frame and its motion-compensated
/// prediction. Same layout as [`Frame`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<i16>,
}

impl ResidualMap {
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Sum of squared residuals over one block.
    pub fn block_energy(&self, col: usize, row: usize, block_size: usize) -> u64 {
        let mut total = 0u64;
        for y in row * block_size..(row + 1) * block_size {
            let start = (y * self.width + col * block_size) * self.channels;
            total += self.data[start..start + block_size * self.channels]
                .iter()
                .map(|&v| (v as i64 * v as i64) as u64)
                .sum::<u64>();
        }
        total
    }
}

/// Calls `f(dst_index, src_index)` for every sample, where `src_index` is
/// the motion-compensated source of `dst_index`.
fn for_each_compensated(
    width: usize,
    channels: usize,
    mv: &MotionVectorMap,
    mut f: impl FnMut(usize, usize),
) {
    let bs = mv.block_size();
    for row in 0..mv.rows() {
        for col in 0..mv.cols() {
            let v = mv.get(col, row);
            for j in 0..bs {
                let y = row * bs + j;
                let sy = (y as i64 + v.dy as i64) as usize;
                for i in 0..bs {
                    let x = col * bs + i;
                    let sx = (x as i64 + v.dx as i64) as usize;
                    for c in 0..channels {
                        f(
                            (y * width + x) * channels + c,
                            (sy * width + sx) * channels + c,
                        );
                    }
                }
            }
        }
    }
}

/// `residual(p) = cur(p) - prev(p + mv(block(p)))`.
pub fn compute_residual(prev: &Frame, cur: &Frame, mv: &MotionVectorMap) -> Result<ResidualMap> {
    if !prev.same_shape(cur) {
        return Err(Error::ShapeMismatch(
            "previous and current frame differ".into(),
        ));
    }
    mv.check_frame(cur.width(), cur.height())?;
    let mut data = vec![0i16; cur.data().len()];
    let (p, c) = (prev.data(), cur.data());
    for_each_compensated(cur.width(), cur.channels(), mv, |dst, src| {
        data[dst] = c[dst] as i16 - p[src] as i16;
    });
    Ok(ResidualMap {
        width: cur.width(),
        height: cur.height(),
        channels: cur.channels(),
        data,
    })
}

/// Decoder step: motion-compensate `prev` and add the residual.
pub fn reconstruct(prev: &Frame, mv: &MotionVectorMap, residual: &ResidualMap) -> Result<Frame> {
    if residual.width != prev.width()
        || residual.height != prev.height()
        || residual.channels != prev.channels()
    {
        return Err(Error::ShapeMismatch(
            "residual does not match the frame".into(),
        ));
    }
    mv.check_frame(prev.width(), prev.height())?;
    let mut data = vec![0u8; prev.data().len()];
    let p = prev.data();
    let mut overflow = false;
    for_each_compensated(prev.width(), prev.channels(), mv, |dst, src| {
        let v = p[src] as i16 + residual.data[dst];
        overflow |= !(0..=255).contains(&v);
        data[dst] = v.clamp(0, 255) as u8;
    });
    if overflow {
        return Err(Error::InvalidArgument(
            "residual drives samples outside [0, 255]".into(),
        ));
    }
    Frame::new(prev.width(), prev.height(), prev.channels(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_motion::{estimate_motion_costs, MatchPlane, MotionVector, SearchParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Frame {
        let data = (0..w * h * c).map(|_| rng.random()).collect();
        Frame::new(w, h, c, data).unwrap()
    }

    #[test]
    fn zero_motion_residual_is_plain_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_frame(&mut rng, 32, 32, 3);
        let b = random_frame(&mut rng, 32, 32, 3);
        let mv = MotionVectorMap::uniform(2, 2, 16, MotionVector::ZERO).unwrap();
        let r = compute_residual(&a, &b, &mv).unwrap();
        for i in 0..a.data().len() {
            assert_eq!(r.data[i], b.data()[i] as i16 - a.data()[i] as i16);
        }
        assert!(compute_residual(&a, &a, &mv).unwrap().is_zero());
    }

    #[test]
    fn block_energy_equals_match_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_frame(&mut rng, 48, 32, 1);
        let b = random_frame(&mut rng, 48, 32, 1);
        let params = SearchParams {
            radius: 6,
            plane: MatchPlane::AllChannels,
            ..Default::default()
        };
        let m = estimate_motion_costs(&a, &b, &params).unwrap();
        let r = compute_residual(&a, &b, &m.map).unwrap();
        for row in 0..m.map.rows() {
            for col in 0..m.map.cols() {
                assert_eq!(
                    r.block_energy(col, row, 16),
                    m.costs[row * m.map.cols() + col]
                );
            }
        }
    }

    #[test]
    fn zero_residual_with_global_shift_equals_direct_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_frame(&mut rng, 64, 64, 3);
        // Interior blocks only: a uniform (3, -2) would push border blocks out.
        let mut vectors = vec![MotionVector::ZERO; 16];
        for row in 1..4 {
            for col in 0..3 {
                vectors[row * 4 + col] = MotionVector::new(3, -2);
            }
        }
        let mv = MotionVectorMap::new(4, 4, 16, vectors).unwrap();
        let zero = ResidualMap {
            width: 64,
            height: 64,
            channels: 3,
            data: vec![0; 64 * 64 * 3],
        };
        let out = reconstruct(&a, &mv, &zero).unwrap();
        for y in 16..64 {
            for x in 0..48 {
                for c in 0..3 {
                    assert_eq!(out.pixel(x, y, c), a.pixel(x + 3, y - 2, c));
                }
            }
        }
    }

    #[test]
    fn out_of_frame_vectors_are_rejected() {
        let f = Frame::filled(32, 32, 1, 0).unwrap();
        let mv = MotionVectorMap::uniform(2, 2, 16, MotionVector::new(1, 0)).unwrap();
        assert!(compute_residual(&f, &f, &mv).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn reconstruction_is_exact_for_any_valid_motion(
            seed in any::<u64>(),
            cols in 2usize..=4,
            rows in 2usize..=4,
            corner in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (cols * 16, rows * 16);
            let prev = random_frame(&mut rng, w, h, 3);
            let cur = random_frame(&mut rng, w, h, 3);
            let vectors = (0..cols * rows)
                .map(|b| {
                    let (x, y) = ((b % cols * 16) as i32, (b / cols * 16) as i32);
                    let (max_x, max_y) = ((w - 16) as i32, (h - 16) as i32);
                    if corner {
                        // push every block to the far corner of its window
                        MotionVector::new(max_x - x, -y)
                    } else {
                        MotionVector::new(rng.random_range(-x..=max_x - x), rng.random_range(-y..=max_y - y))
                    }
                })
                .collect();
            let mv = MotionVectorMap::new(cols, rows, 16, vectors).unwrap();
            let res = compute_residual(&prev, &cur, &mv).unwrap();
            prop_assert!(res.data.iter().all(|v| (-255..=255).contains(v)));
            prop_assert_eq!(reconstruct(&prev, &mv, &res).unwrap(), cur);
        }
    }
}
