//! Where the block motion for a run comes from.
//!
//! Forward map `i` takes frame `i` to frame `i - 1`; backward map `i` takes
//! frame `i` to frame `i + 1`. Sidecar directories hold them as
//! `fwd_%06d.mvec` and `bwd_%06d.mvec` under the same indices.

use std::path::{Path, PathBuf};

use crate::block_motion::{estimate_motion, read_mvec, write_mvec, MotionVectorMap, SearchParams};
use crate::error::{Error, Result};
use crate::frame_io::VideoSequence;

pub fn forward_sidecar_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("fwd_{i:06}.mvec"))
}

pub fn backward_sidecar_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("bwd_{i:06}.mvec"))
}

/// Motion maps held in memory, indexed by frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MotionSet {
    pub forward: Vec<Option<MotionVectorMap>>,
    pub backward: Vec<Option<MotionVectorMap>>,
}

impl MotionSet {
    /// Estimates forward maps for frames `1..T` and, if asked, backward maps
    /// for frames `0..T-1`.
    pub fn estimate(video: &VideoSequence, params: &SearchParams, backward: bool) -> Result<Self> {
        let t = video.len();
        let mut set = MotionSet {
            forward: vec![None; t],
            backward: vec![None; t],
        };
        for i in 1..t {
            set.forward[i] = Some(estimate_motion(
                &video.frames[i - 1],
                &video.frames[i],
                params,
            )?);
            if backward {
                set.backward[i - 1] = Some(estimate_motion(
                    &video.frames[i],
                    &video.frames[i - 1],
                    params,
                )?);
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn store(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        for (i, m) in self.forward.iter().enumerate() {
            if let Some(m) = m {
                write_mvec(&forward_sidecar_path(dir, i), m)?;
            }
        }
        for (i, m) in self.backward.iter().enumerate() {
            if let Some(m) = m {
                write_mvec(&backward_sidecar_path(dir, i), m)?;
            }
        }
        Ok(())
    }

    /// Reads whichever sidecars exist for a `frames`-long sequence.
    pub fn load(dir: &Path, frames: usize) -> Result<Self> {
        let read = |p: PathBuf| -> Result<Option<MotionVectorMap>> {
            if p.exists() {
                read_mvec(&p).map(Some)
            } else {
                Ok(None)
            }
        };
        let mut set = MotionSet::default();
        for i in 0..frames {
            set.forward.push(read(forward_sidecar_path(dir, i))?);
            set.backward.push(read(backward_sidecar_path(dir, i))?);
        }
        Ok(set)
    }
}

#[derive(Clone, Debug)]
pub enum MotionSource<'a> {
    Memory(&'a MotionSet),
    Sidecar(PathBuf),
    /// Estimate on demand from the frames being processed.
    Estimate(SearchParams),
}

/// A motion source viewed from frame `base` onward, so a clip of a longer
/// sequence can reuse the full sequence's maps.
#[derive(Clone, Debug)]
pub struct MotionProvider<'a> {
    source: MotionSource<'a>,
    base: usize,
}

impl<'a> MotionProvider<'a> {
    pub fn new(source: MotionSource<'a>) -> Self {
        MotionProvider { source, base: 0 }
    }

    pub fn memory(set: &'a MotionSet) -> Self {
        MotionProvider::new(MotionSource::Memory(set))
    }

    pub fn sidecar(dir: impl Into<PathBuf>) -> Self {
        MotionProvider::new(MotionSource::Sidecar(dir.into()))
    }

    pub fn estimate(params: SearchParams) -> Self {
        MotionProvider::new(MotionSource::Estimate(params))
    }

    /// Shifts stored indices by `base`; on-demand estimation always works on
    /// the frames it is given.
    pub fn offset(&self, base: usize) -> Self {
        MotionProvider {
            source: self.source.clone(),
            base: self.base + base,
        }
    }

    /// True when maps are computed during the run rather than read.
    pub fn is_estimated(&self) -> bool {
        matches!(self.source, MotionSource::Estimate(_))
    }

    pub fn forward(&self, video: &VideoSequence, i: usize) -> Result<MotionVectorMap> {
        let missing = || Error::MissingMotion {
            direction: "forward",
            frame: self.base + i,
        };
        match &self.source {
            MotionSource::Memory(set) => set
                .forward
                .get(self.base + i)
                .and_then(Option::as_ref)
                .cloned()
                .ok_or_else(missing),
            MotionSource::Sidecar(dir) => {
                read_sidecar(&forward_sidecar_path(dir, self.base + i), missing)
            }
            MotionSource::Estimate(params) => {
                if i == 0 || i >= video.len() {
                    return Err(missing());
                }
                estimate_motion(&video.frames[i - 1], &video.frames[i], params)
            }
        }
    }

    pub fn backward(&self, video: &VideoSequence, i: usize) -> Result<MotionVectorMap> {
        let missing = || Error::MissingMotion {
            direction: "backward",
            frame: self.base + i,
        };
        match &self.source {
            MotionSource::Memory(set) => set
                .backward
                .get(self.base + i)
                .and_then(Option::as_ref)
                .cloned()
                .ok_or_else(missing),
            MotionSource::Sidecar(dir) => {
                read_sidecar(&backward_sidecar_path(dir, self.base + i), missing)
            }
            MotionSource::Estimate(params) => {
                if i + 1 >= video.len() {
                    return Err(missing());
                }
                estimate_motion(&video.frames[i + 1], &video.frames[i], params)
            }
        }
    }
}

fn read_sidecar(path: &Path, missing: impl Fn() -> Error) -> Result<MotionVectorMap> {
    if !path.exists() {
        return Err(missing());
    }
    read_mvec(path)
}
