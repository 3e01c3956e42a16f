use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid_input, Result};
use crate::harness::{Dataset, Split};
use crate::numerics::{dft2, ComplexKSpace, RealImage};

/// Images of one split together with their precomputed k-space.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub images: Vec<RealImage>,
    pub kspaces: Vec<Arc<ComplexKSpace>>,
}

impl PreparedSplit {
    pub fn new(images: Vec<RealImage>) -> Result<Self> {
        if images.is_empty() {
            return Err(invalid_input("no images in split"));
        }
        let kspaces = images
            .par_iter()
            .map(|x| dft2(x).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { images, kspaces })
    }

    pub fn from_dataset(data: &Dataset, split: Split) -> Result<Self> {
        let images = data.split(split);
        if images.is_empty() {
            return Err(invalid_input(format!("dataset has no {split:?} images")));
        }
        Self::new(images)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n(&self) -> usize {
        self.images[0].n()
    }
}
