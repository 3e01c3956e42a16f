//! Dataset container and its binary file format.
//!
//! Layout: magic `KSRLDATA`, `u32` version, `u64` n, `u64` count, one split
//! byte per image, a length-prefixed JSON provenance block, row-major
//! little-endian `f64` pixels, and a SHA-256 trailer over everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::phantom::PhantomConfig;
use crate::binio::{atomic_write, hex, sha256, Reader, Writer};
use crate::error::{invalid_input, Error, Result};
use crate::numerics::RealImage;

const MAGIC: &[u8; 8] = b"KSRLDATA";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Split::Train),
            1 => Ok(Split::Val),
            2 => Ok(Split::Test),
            _ => Err(Error::Load(format!("unknown split tag {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub phantom: Option<PhantomConfig>,
    pub format_version: u32,
    #[serde(default)]
    pub note: String,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            phantom: None,
            format_version: DATASET_VERSION,
            note: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub images: Vec<RealImage>,
    pub splits: Vec<Split>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(n: usize, images: Vec<RealImage>, splits: Vec<Split>, provenance: Provenance) -> Result<Self> {
        if images.len() != splits.len() {
            return Err(invalid_input("one split tag per image required"));
        }
        if images.iter().any(|im| im.n() != n) {
            return Err(invalid_input(format!("all images must be {n}x{n}")));
        }
        Ok(Self {
            n,
            images,
            splits,
            provenance,
        })
    }

    /// Every image tagged `split`.
    pub fn from_images(images: Vec<RealImage>, split: Split) -> Result<Self> {
        let n = images
            .first()
            .map(|im| im.n())
            .ok_or_else(|| invalid_input("empty dataset"))?;
        let splits = vec![split; images.len()];
        Self::new(n, images, splits, Provenance::default())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn split(&self, split: Split) -> Vec<RealImage> {
        self.indices(split)
            .into_iter()
            .map(|i| self.images[i].clone())
            .collect()
    }

    /// Validation images if any exist, otherwise the test images.
    pub fn eval_split(&self) -> (Split, Vec<RealImage>) {
        let val = self.split(Split::Val);
        if val.is_empty() {
            (Split::Test, self.split(Split::Test))
        } else {
            (Split::Val, val)
        }
    }

    /// SHA-256 over width, split tags and pixel bits (not provenance).
    pub fn fingerprint(&self) -> String {
        let mut w = Writer::default();
        w.u64(self.n as u64);
        for s in &self.splits {
            w.u8(s.code());
        }
        for im in &self.images {
            im.as_slice().iter().for_each(|&v| w.f64(v));
        }
        hex(&sha256(&w.buf))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(DATASET_VERSION);
        w.u64(self.n as u64);
        w.u64(self.len() as u64);
        for s in &self.splits {
            w.u8(s.code());
        }
        let prov = serde_json::to_string(&self.provenance)
            .map_err(|e| invalid_input(format!("provenance not serializable: {e}")))?;
        w.str(&prov);
        for im in &self.images {
            im.as_slice().iter().for_each(|&v| w.f64(v));
        }
        Ok(w.finish())
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::checked(data)?;
        if r.take(8)? != MAGIC {
            return Err(Error::Load("not a dataset file".into()));
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::Load(format!("unsupported dataset version {version}")));
        }
        let n = r.usize()?;
        let count = r.usize()?;
        if !(2..=4096).contains(&n) {
            return Err(Error::Load(format!("implausible image width {n}")));
        }
        let tags = r.take(count)?;
        let splits = tags.iter().map(|&c| Split::from_code(c)).collect::<Result<Vec<_>>>()?;
        let prov: Provenance =
            serde_json::from_str(&r.str()?).map_err(|e| Error::Load(format!("bad provenance block: {e}")))?;
        let mut images = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = r.take(n * n * 8)?;
            let px = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            images.push(RealImage::new(n, px).map_err(|e| Error::Load(e.to_string()))?);
        }
        r.done()?;
        Dataset::new(n, images, splits, prov).map_err(|e| Error::Load(e.to_string()))
    }
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    atomic_write(path, &d.to_bytes()?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&std::fs::read(path)?)
}
