//! Frames, label maps, on-disk sequence formats and the synthetic scene
//! generator.

mod mvsq;
mod pnm;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mvsq::{read_mvsq, write_mvsq};
pub use pnm::{read_pgm, read_ppm, write_pgm, write_ppm};
pub use synth::{generate_synthetic, Background, Motion, SceneSpec, Shape, Sprite};

/// Frame dimensions must be a multiple of this.
pub const FRAME_ALIGN: usize = 16;

/// One video frame, row-major and channel-interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_aligned(width, height)?;
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "frames have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} frame needs {} bytes, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Frame::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single-channel luma plane using the ITU-R BT.601 weights in 8-bit
    /// fixed point. A luma frame is returned unchanged.
    pub fn to_luma(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| {
                let y = 77 * px[0] as u32 + 150 * px[1] as u32 + 29 * px[2] as u32 + 128;
                (y >> 8) as u8
            })
            .collect();
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

fn check_aligned(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || !width.is_multiple_of(FRAME_ALIGN) || !height.is_multiple_of(FRAME_ALIGN) {
        return Err(Error::InvalidDimensions(format!(
            "{width}x{height} is not a nonzero multiple of {FRAME_ALIGN}"
        )));
    }
    Ok(())
}

/// Per-pixel ground-truth class identifiers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} label map needs {} entries, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(LabelMap {
            width,
            height,
            labels,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn max_label(&self) -> Option<u8> {
        self.labels.iter().copied().max()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    pub frames: Vec<Frame>,
    pub labels: Option<Vec<LabelMap>>,
    pub fps: f64,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, labels: Option<Vec<LabelMap>>, fps: f64) -> Result<Self> {
        if let Some(first) = frames.first() {
            if let Some(bad) = frames.iter().position(|f| !f.same_shape(first)) {
                return Err(Error::ShapeMismatch(format!(
                    "frame {bad} differs in shape from frame 0"
                )));
            }
            if let Some(labels) = &labels {
                if labels.len() != frames.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} label maps for {} frames",
                        labels.len(),
                        frames.len()
                    )));
                }
                if let Some(bad) = labels
                    .iter()
                    .position(|l| l.width != first.width || l.height != first.height)
                {
                    return Err(Error::ShapeMismatch(format!(
                        "label map {bad} does not match the frame size"
                    )));
                }
            }
        }
        Ok(VideoSequence {
            frames,
            labels,
            fps,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, Frame::width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, Frame::height)
    }

    pub fn label(&self, i: usize) -> Option<&LabelMap> {
        self.labels.as_ref().map(|l| &l[i])
    }
}

/// On-disk layout of the frame data in a sequence directory. Label maps are
/// always stored as `label_%06d.pgm` next to the frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SequenceFormat {
    /// `frame_%06d.ppm`, binary P6.
    Ppm,
    /// A single planar RGB `frames.mvsq` file.
    Raw,
}

pub const RAW_FILE_NAME: &str = "frames.mvsq";

pub fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("frame_{i:06}.ppm"))
}

pub fn label_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("label_{i:06}.pgm"))
}

impl SequenceFormat {
    /// Raw if the directory holds a `frames.mvsq`, PPM otherwise.
    pub fn detect(dir: &Path) -> SequenceFormat {
        if dir.join(RAW_FILE_NAME).is_file() {
            SequenceFormat::Raw
        } else {
            SequenceFormat::Ppm
        }
    }
}

pub fn store_sequence(seq: &VideoSequence, dir: &Path, format: SequenceFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    match format {
        SequenceFormat::Ppm => {
            for (i, f) in seq.frames.iter().enumerate() {
                write_ppm(&frame_path(dir, i), f)?;
            }
        }
        SequenceFormat::Raw => write_mvsq(&dir.join(RAW_FILE_NAME), &seq.frames)?,
    }
    if let Some(labels) = &seq.labels {
        for (i, l) in labels.iter().enumerate() {
            write_pgm(&label_path(dir, i), l.width, l.height, &l.labels)?;
        }
    }
    Ok(())
}

/// Loads a sequence directory. Label maps are picked up when
/// `label_000000.pgm` exists; then every frame must have one.
pub fn load_sequence(dir: &Path, format: SequenceFormat) -> Result<VideoSequence> {
    let frames = match format {
        SequenceFormat::Ppm => {
            let mut frames = Vec::new();
            loop {
                let p = frame_path(dir, frames.len());
                if !p.is_file() {
                    break;
                }
                frames.push(read_ppm(&p)?);
            }
            frames
        }
        SequenceFormat::Raw => read_mvsq(&dir.join(RAW_FILE_NAME))?,
    };
    if frames.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no frames found in {}",
            dir.display()
        )));
    }
    let labels = if label_path(dir, 0).is_file() {
        let labels = (0..frames.len())
            .map(|i| {
                let p = label_path(dir, i);
                let (w, h, data) = read_pgm(&p)?;
                LabelMap::new(w, h, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(labels)
    } else {
        None
    };
    VideoSequence::new(frames, labels, 30.0)
}
