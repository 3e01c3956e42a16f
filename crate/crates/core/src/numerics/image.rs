use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};

/// Square real image stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealImage {
    n: usize,
    pixels: Vec<f64>,
}

impl RealImage {
    pub fn new(n: usize, pixels: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(invalid_input(format!("image width must be >= 2, got {n}")));
        }
        if pixels.len() != n * n {
            return Err(invalid_input(format!(
                "expected {} pixels for a {n}x{n} image, got {}",
                n * n,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(invalid_input(format!("non-finite pixel at index {i}")));
        }
        Ok(Self { n, pixels })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            pixels: vec![0.0; n * n],
        }
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            pixels: vec![value; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                pixels.push(f(r, c));
            }
        }
        Self { n, pixels }
    }

    /// Wraps an already validated buffer. Used on hot paths inside the crate.
    pub(crate) fn from_raw(n: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), n * n);
        Self { n, pixels }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.pixels[r * self.n + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pixels
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.pixels
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |r, c| self.get(c, r))
    }

    pub fn norm(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Square complex k-space matrix stored row-major. Column `j` holds the
/// entries `(r, j)` for every row `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexKSpace {
    n: usize,
    entries: Vec<Complex64>,
}

impl ComplexKSpace {
    pub fn new(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        if n < 1 || entries.len() != n * n {
            return Err(invalid_input(format!(
                "expected {} entries for a {n}x{n} k-space, got {}",
                n * n,
                entries.len()
            )));
        }
        if let Some(i) = entries.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(invalid_input(format!("non-finite k-space entry at index {i}")));
        }
        Ok(Self { n, entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub(crate) fn from_raw(n: usize, entries: Vec<Complex64>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.entries[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.entries[r * self.n + c] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry-wise modulus of the difference restricted to `cols`.
    pub fn max_abs_diff_on_cols(&self, other: &Self, cols: &[usize]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for &c in cols {
                worst = worst.max((self.get(r, c) - other.get(r, c)).norm());
            }
        }
        worst
    }

    pub fn real_part(&self) -> RealImage {
        RealImage::from_raw(self.n, self.entries.iter().map(|v| v.re).collect())
    }

    pub fn modulus(&self) -> RealImage {
        RealImage::from_raw(self.n, self.entries.iter().map(|v| v.norm()).collect())
    }
}
