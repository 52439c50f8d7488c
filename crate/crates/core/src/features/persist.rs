//! Binary tensor files: a 4-byte magic, a fixed number of u32 LE header
//! fields, then f32 LE values.
//!
//! - `FMAP`: channels, rows, cols, stride; values channel-major.
//! - `HEAD`: in channels A, hidden P, classes C, stride; then projection
//!   weights (P x A), projection bias, scoring weights (C x P), scoring bias.

use std::fs;
use std::path::Path;

use super::{FeatureMap, TaskHead};
use crate::error::{Error, Result};

pub(crate) fn write_blob(
    path: &Path,
    magic: &[u8; 4],
    header: &[usize],
    values: &[&[f32]],
) -> Result<()> {
    let total: usize = values.iter().map(|v| v.len()).sum();
    let mut out = Vec::with_capacity(4 + 4 * header.len() + 4 * total);
    out.extend_from_slice(magic);
    for &h in header {
        let h = u32::try_from(h)
            .map_err(|_| Error::InvalidArgument(format!("header value {h} exceeds u32")))?;
        out.extend_from_slice(&h.to_le_bytes());
    }
    for v in values.iter().flat_map(|v| v.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads the header and exactly `expected(header)` values.
pub(crate) fn read_blob(
    path: &Path,
    magic: &[u8; 4],
    header_len: usize,
    expected: impl Fn(&[usize]) -> Option<usize>,
) -> Result<(Vec<usize>, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let body_start = 4 + 4 * header_len;
    if bytes.len() < body_start || &bytes[..4] != magic {
        return Err(Error::format(
            path,
            format!("missing {} header", String::from_utf8_lossy(magic)),
        ));
    }
    let header: Vec<usize> = bytes[4..body_start]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = expected(&header).ok_or_else(|| Error::format(path, "header sizes overflow"))?;
    let body = &bytes[body_start..];
    if body.len() != count * 4 {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", count * 4, body.len()),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

pub fn write_fmap(path: &Path, f: &FeatureMap) -> Result<()> {
    write_blob(
        path,
        b"FMAP",
        &[f.channels(), f.rows(), f.cols(), f.stride()],
        &[f.data()],
    )
}

pub fn read_fmap(path: &Path) -> Result<FeatureMap> {
    let (h, values) = read_blob(path, b"FMAP", 4, |h| {
        h[0].checked_mul(h[1])?.checked_mul(h[2])
    })?;
    FeatureMap::new(h[0], h[1], h[2], h[3], values).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_head(path: &Path, head: &TaskHead) -> Result<()> {
    write_blob(
        path,
        b"HEAD",
        &[head.in_channels, head.hidden, head.num_classes, head.stride],
        &[&head.proj_w, &head.proj_b, &head.score_w, &head.score_b],
    )
}

pub fn read_head(path: &Path) -> Result<TaskHead> {
    let (h, v) = read_blob(path, b"HEAD", 4, |h| {
        let (a, p, c) = (h[0], h[1], h[2]);
        p.checked_mul(a)?
            .checked_add(p)?
            .checked_add(c.checked_mul(p)?)?
            .checked_add(c)
    })?;
    let (a, p, c, s) = (h[0], h[1], h[2], h[3]);
    let (proj_w, rest) = v.split_at(p * a);
    let (proj_b, rest) = rest.split_at(p);
    let (score_w, score_b) = rest.split_at(c * p);
    TaskHead::new(
        a,
        p,
        c,
        s,
        proj_w.to_vec(),
        proj_b.to_vec(),
        score_w.to_vec(),
        score_b.to_vec(),
    )
    .map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fmap_byte_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("key.fmap");
        let f = FeatureMap::new(1, 1, 2, 16, vec![1.0, -0.5]).unwrap();
        write_fmap(&p, &f).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(
            &bytes[..20],
            b"FMAP\x01\0\0\0\x01\0\0\0\x02\0\0\0\x10\0\0\0"
        );
        assert_eq!(&bytes[20..], &[0, 0, 0x80, 0x3f, 0, 0, 0, 0xbf]);
    }

    #[test]
    fn head_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.head");
        let head = TaskHead::new(
            4,
            2,
            3,
            16,
            (0..8).map(|i| i as f32).collect(),
            vec![0.5, -0.5],
            (0..6).map(|i| -(i as f32)).collect(),
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        write_head(&p, &head).unwrap();
        assert_eq!(read_head(&p).unwrap(), head);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_head(&p).unwrap_err().is_data_format());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn fmap_round_trip(c in 1usize..5, r in 1usize..5, w in 1usize..5, vals in proptest::collection::vec(-1e6f32..1e6, 64)) {
            let f = FeatureMap::new(c, r, w, 16, vals[..c * r * w].to_vec()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("f.fmap");
            write_fmap(&p, &f).unwrap();
            prop_assert_eq!(read_fmap(&p).unwrap(), f);
        }
    }
}
