use super::{MatchMetric, MatchPlane, MotionVector, MotionVectorMap, SearchParams};
use crate::error::{Error, Result};
use crate::frame_io::Frame;

/// Motion map plus the winning cost of every block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMatches {
    pub map: MotionVectorMap,
    pub costs: Vec<u64>,
}

/// Exhaustive block matching of `cur` against `prev`.
///
/// Candidates whose reference block would leave `prev` are skipped. Among
/// equal-cost offsets the smallest `|dx| + |dy|` wins, then the first in
/// row-major order (`dy`, then `dx`, ascending).
pub fn estimate_motion(
    prev: &Frame,
    cur: &Frame,
    params: &SearchParams,
) -> Result<MotionVectorMap> {
    estimate_motion_costs(prev, cur, params).map(|m| m.map)
}

pub fn estimate_motion_costs(
    prev: &Frame,
    cur: &Frame,
    params: &SearchParams,
) -> Result<BlockMatches> {
    if !prev.same_shape(cur) {
        return Err(Error::ShapeMismatch(format!(
            "cannot match {}x{}x{} against {}x{}x{}",
            cur.width(),
            cur.height(),
            cur.channels(),
            prev.width(),
            prev.height(),
            prev.channels()
        )));
    }
    let bs = params.block_size;
    if bs == 0 || !prev.width().is_multiple_of(bs) || !prev.height().is_multiple_of(bs) {
        return Err(Error::InvalidDimensions(format!(
            "block size {bs} does not tile {}x{}",
            prev.width(),
            prev.height()
        )));
    }
    let (prev, cur) = match params.plane {
        MatchPlane::Luma => (prev.to_luma(), cur.to_luma()),
        MatchPlane::AllChannels => (prev.clone(), cur.clone()),
    };
    let cols = prev.width() / bs;
    let rows = prev.height() / bs;
    let results = params.exec.map(cols * rows, |b| {
        search_block(&prev, &cur, b % cols, b / cols, params)
    });
    let (vectors, costs) = results.into_iter().unzip();
    Ok(BlockMatches {
        map: MotionVectorMap::new(cols, rows, bs, vectors)?,
        costs,
    })
}

fn search_block(
    prev: &Frame,
    cur: &Frame,
    col: usize,
    row: usize,
    params: &SearchParams,
) -> (MotionVector, u64) {
    let bs = params.block_size as i64;
    let r = params.radius as i64;
    let (x0, y0) = (col as i64 * bs, row as i64 * bs);
    let max_x = prev.width() as i64 - bs;
    let max_y = prev.height() as i64 - bs;

    // Zero motion first gives a tight pruning bound.
    let zero_cost = block_cost(
        prev,
        cur,
        col,
        row,
        params.block_size,
        MotionVector::ZERO,
        params.metric,
        u64::MAX,
    );
    let mut best = (zero_cost, 0u32, 0i64, 0i64);

    for dy in (-r).max(-y0)..=r.min(max_y - y0) {
        for dx in (-r).max(-x0)..=r.min(max_x - x0) {
            let l1 = (dx.unsigned_abs() + dy.unsigned_abs()) as u32;
            if l1 == 0 {
                continue;
            }
            let v = MotionVector::new(dx as i32, dy as i32);
            let cost = block_cost(
                prev,
                cur,
                col,
                row,
                params.block_size,
                v,
                params.metric,
                best.0,
            );
            if (cost, l1, dy, dx) < best {
                best = (cost, l1, dy, dx);
            }
        }
    }
    (MotionVector::new(best.3 as i32, best.2 as i32), best.0)
}

/// Match cost of `cur`'s block `(col, row)` against the `prev` block offset
/// by `v`. Stops early and returns a value above `bound` once the running
/// sum exceeds it. The offset must keep the block inside `prev`.
#[allow(clippy::too_many_arguments)]
pub fn block_cost(
    prev: &Frame,
    cur: &Frame,
    col: usize,
    row: usize,
    block_size: usize,
    v: MotionVector,
    metric: MatchMetric,
    bound: u64,
) -> u64 {
    let ch = cur.channels();
    let stride = cur.width() * ch;
    let (x0, y0) = (col * block_size, row * block_size);
    let px = (x0 as i64 + v.dx as i64) as usize;
    let py = (y0 as i64 + v.dy as i64) as usize;
    let span = block_size * ch;
    let (cd, pd) = (cur.data(), prev.data());
    let mut total = 0u64;
    for j in 0..block_size {
        let c = &cd[(y0 + j) * stride + x0 * ch..][..span];
        let p = &pd[(py + j) * stride + px * ch..][..span];
        let row_cost: u64 = match metric {
            MatchMetric::Ssd => c
                .iter()
                .zip(p)
                .map(|(&a, &b)| {
                    let d = a as i32 - b as i32;
                    (d * d) as u64
                })
                .sum(),
            MatchMetric::Sad => c
                .iter()
                .zip(p)
                .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
                .sum(),
        };
        total += row_cost;
        if total > bound {
            return total;
        }
    }
    total
}
