//! Single-file planar RGB sequence: a 16-byte header (`MVSQ`, then u32 LE
//! width, height, frame count) followed by each frame as three planes.

use std::fs;
use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MVSQ";
const HEADER_LEN: usize = 16;

pub fn write_mvsq(path: &Path, frames: &[Frame]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::InvalidArgument(
            "cannot store an empty sequence".into(),
        ));
    };
    let (w, h) = (first.width(), first.height());
    let plane = w * h;
    let mut out = Vec::with_capacity(HEADER_LEN + frames.len() * plane * 3);
    out.extend_from_slice(MAGIC);
    for v in [w, h, frames.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for f in frames {
        if f.width() != w || f.height() != h {
            return Err(Error::ShapeMismatch("frames differ in size".into()));
        }
        let c = f.channels();
        for ch in 0..3 {
            let src = if c == 1 { 0 } else { ch };
            out.extend(f.data().iter().skip(src).step_by(c));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_mvsq(path: &Path) -> Result<Vec<Frame>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing MVSQ header"));
    }
    let field =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (w, h, count) = (field(0), field(1), field(2));
    let plane = w * h;
    let need = count
        .checked_mul(plane * 3)
        .ok_or_else(|| Error::format(path, "header sizes overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < need {
        return Err(Error::format(
            path,
            format!("truncated payload: need {need} bytes, have {}", body.len()),
        ));
    }
    body.chunks_exact(plane * 3)
        .take(count)
        .map(|planes| {
            let mut data = vec![0u8; plane * 3];
            for ch in 0..3 {
                let src = &planes[ch * plane..(ch + 1) * plane];
                for (i, &v) in src.iter().enumerate() {
                    data[i * 3 + ch] = v;
                }
            }
            Frame::new(w, h, 3, data)
        })
        .collect()
}
