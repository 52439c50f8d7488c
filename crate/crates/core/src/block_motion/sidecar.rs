//! `.mvec` files: `MVEC`, u32 LE grid width, grid height and block size,
//! then one `(dx, dy)` i16 LE pair per block in row-major order.

use std::fs;
use std::path::Path;

use super::{MotionVector, MotionVectorMap};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MVEC";
const HEADER_LEN: usize = 16;

pub fn write_mvec(path: &Path, map: &MotionVectorMap) -> Result<()> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.vectors().len());
    out.extend_from_slice(MAGIC);
    for v in [map.cols(), map.rows(), map.block_size()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in map.vectors() {
        let dx = i16::try_from(v.dx);
        let dy = i16::try_from(v.dy);
        let (Ok(dx), Ok(dy)) = (dx, dy) else {
            return Err(Error::InvalidArgument(format!(
                "vector ({}, {}) does not fit in i16",
                v.dx, v.dy
            )));
        };
        out.extend_from_slice(&dx.to_le_bytes());
        out.extend_from_slice(&dy.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_mvec(path: &Path) -> Result<MotionVectorMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing MVEC header"));
    }
    let field =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (cols, rows, block_size) = (field(0), field(1), field(2));
    let count = cols
        .checked_mul(rows)
        .ok_or_else(|| Error::format(path, "grid size overflows"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 4 {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", count * 4, body.len()),
        ));
    }
    if block_size == 0 {
        return Err(Error::format(path, "block size is zero"));
    }
    let vectors = body
        .chunks_exact(4)
        .map(|c| {
            MotionVector::new(
                i16::from_le_bytes([c[0], c[1]]) as i32,
                i16::from_le_bytes([c[2], c[3]]) as i32,
            )
        })
        .collect();
    MotionVectorMap::new(cols, rows, block_size, vectors)
}
