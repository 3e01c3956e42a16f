use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{hex, sha256};
use crate::error::{invalid_input, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl BlockSpec {
    pub fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A flat parameter (or gradient) vector partitioned into named blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    specs: Vec<BlockSpec>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(specs: Vec<BlockSpec>) -> Self {
        let mut offsets = Vec::with_capacity(specs.len() + 1);
        let mut total = 0;
        for s in &specs {
            offsets.push(total);
            total += s.len();
        }
        offsets.push(total);
        Self {
            specs,
            offsets,
            values: vec![0.0; total],
        }
    }

    pub fn from_values(specs: Vec<BlockSpec>, values: Vec<f64>) -> Result<Self> {
        let mut set = Self::zeros(specs);
        if values.len() != set.values.len() {
            return Err(invalid_input(format!(
                "expected {} parameters, got {}",
                set.values.len(),
                values.len()
            )));
        }
        set.values = values;
        Ok(set)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            specs: self.specs.clone(),
            offsets: self.offsets.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn specs(&self) -> &[BlockSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Two disjoint mutable blocks (`i < j`).
    pub(crate) fn blocks_mut2(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        assert!(i < j);
        let (a, b) = self.values.split_at_mut(self.offsets[j]);
        (
            &mut a[self.offsets[i]..self.offsets[i + 1]],
            &mut b[..self.offsets[j + 1] - self.offsets[j]],
        )
    }

    pub fn block_by_name(&self, name: &str) -> Option<&[f64]> {
        self.specs.iter().position(|s| s.name == name).map(|i| self.block(i))
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.specs == other.specs
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// SHA-256 over the layout and the exact bit patterns of the values.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(self.values.len() * 8 + 64);
        for s in &self.specs {
            bytes.extend_from_slice(s.name.as_bytes());
            for d in &s.shape {
                bytes.extend_from_slice(&(*d as u64).to_le_bytes());
            }
        }
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        hex(&sha256(&bytes))
    }

    pub(crate) fn fill_uniform(&mut self, i: usize, bound: f64, rng: &mut impl Rng) {
        for v in self.block_mut(i) {
            *v = rng.gen_range(-bound..=bound);
        }
    }
}

/// Sums a sequence of gradients in iteration order, so the reduction is
/// independent of how the items were produced.
pub(crate) fn sum_in_order<I: IntoIterator<Item = ParamSet>>(template: &ParamSet, items: I) -> ParamSet {
    let mut acc = template.zeros_like();
    for g in items {
        acc.add_assign(&g);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets() {
        let mut p = ParamSet::zeros(vec![BlockSpec::new("a", &[2, 3]), BlockSpec::new("b", &[4])]);
        assert_eq!(p.len(), 10);
        p.block_mut(1)[0] = 5.0;
        assert_eq!(p.values()[6], 5.0);
        assert_eq!(p.block_by_name("b").unwrap()[0], 5.0);
        let (a, b) = p.blocks_mut2(0, 1);
        a[5] = 1.0;
        b[3] = 2.0;
        assert_eq!(p.values()[5], 1.0);
        assert_eq!(p.values()[9], 2.0);
    }

    #[test]
    fn fingerprint_tracks_bits() {
        let p = ParamSet::zeros(vec![BlockSpec::new("a", &[3])]);
        let mut q = p.clone();
        assert_eq!(p.fingerprint(), q.fingerprint());
        q.values_mut()[0] = -0.0;
        assert_ne!(p.fingerprint(), q.fingerprint());
    }
}
