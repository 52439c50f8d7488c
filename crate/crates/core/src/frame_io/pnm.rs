//! Binary PPM (P6) and PGM (P5) with maxval 255.

use std::fs;
use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};

struct Header {
    width: usize,
    height: usize,
    payload_offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2], path: &Path) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(
            path,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "header value out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(path, "malformed header"));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(
            path,
            format!("only maxval 255 is supported, got {maxval}"),
        ));
    }
    Ok(Header {
        width,
        height,
        payload_offset: pos + 1,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn payload<'a>(bytes: &'a [u8], header: &Header, channels: usize, path: &Path) -> Result<&'a [u8]> {
    let need = header.width * header.height * channels;
    let body = &bytes[header.payload_offset..];
    if body.len() < need {
        return Err(Error::format(
            path,
            format!("truncated payload: need {need} bytes, have {}", body.len()),
        ));
    }
    Ok(&body[..need])
}

pub fn read_ppm(path: &Path) -> Result<Frame> {
    let bytes = read_file(path)?;
    let header = parse_header(&bytes, b"P6", path)?;
    let data = payload(&bytes, &header, 3, path)?.to_vec();
    Frame::new(header.width, header.height, 3, data)
}

/// Writes a P6 file. Luma frames are replicated into all three channels.
pub fn write_ppm(path: &Path, frame: &Frame) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    if frame.channels() == 3 {
        out.extend_from_slice(frame.data());
    } else {
        out.extend(frame.data().iter().flat_map(|&v| [v, v, v]));
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads a P5 file as `(width, height, bytes)`. No alignment is required.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read_file(path)?;
    let header = parse_header(&bytes, b"P5", path)?;
    let data = payload(&bytes, &header, 1, path)?.to_vec();
    Ok((header.width, header.height, data))
}

pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "{width}x{height} image needs {} bytes, got {}",
            width * height,
            data.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
