use serde::{Deserialize, Serialize};

use super::image::ComplexKSpace;
use crate::error::{invalid_input, Result};

/// Binary column-sampling vector. The full mask matrix is `1 * cols^T`:
/// each k-space column is either entirely observed or entirely zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnMask {
    cols: Vec<bool>,
}

impl ColumnMask {
    pub fn empty(n: usize) -> Self {
        Self { cols: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { cols: vec![true; n] }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut cols = Vec::with_capacity(bits.len());
        for &b in bits {
            match b {
                0 => cols.push(false),
                1 => cols.push(true),
                other => return Err(invalid_input(format!("mask entry {other} is not 0 or 1"))),
            }
        }
        Ok(Self { cols })
    }

    pub fn from_indices(n: usize, idx: &[usize]) -> Result<Self> {
        let mut m = Self::empty(n);
        for &i in idx {
            if i >= n {
                return Err(invalid_input(format!("column {i} out of range for width {n}")));
            }
            m.cols[i] = true;
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.cols.len()
    }

    pub fn is_sampled(&self, col: usize) -> bool {
        self.cols[col]
    }

    pub fn count(&self) -> usize {
        self.cols.iter().filter(|&&b| b).count()
    }

    pub fn sampled(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.cols[i]).collect()
    }

    pub fn unsampled(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.cols[i]).collect()
    }

    pub fn is_full(&self) -> bool {
        self.cols.iter().all(|&b| b)
    }

    /// The mask as a 0/1 float vector (the first row of the mask matrix).
    pub fn as_f64(&self) -> Vec<f64> {
        self.cols.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn bits(&self) -> Vec<u8> {
        self.cols.iter().map(|&b| b as u8).collect()
    }

    pub fn contains(&self, other: &ColumnMask) -> bool {
        self.cols.iter().zip(&other.cols).all(|(&a, &b)| a || !b)
    }
}

/// `1(m + one_hot(action))`.
pub fn mask_union(m: &ColumnMask, action: usize) -> Result<ColumnMask> {
    if action >= m.n() {
        return Err(invalid_input(format!(
            "action {action} out of range for width {}",
            m.n()
        )));
    }
    let mut out = m.clone();
    out.cols[action] = true;
    Ok(out)
}

pub fn apply_mask(ks: &ComplexKSpace, m: &ColumnMask) -> Result<ComplexKSpace> {
    let n = ks.n();
    if m.n() != n {
        return Err(invalid_input(format!(
            "mask width {} does not match k-space width {n}",
            m.n()
        )));
    }
    let mut out = ks.clone();
    for r in 0..n {
        for c in 0..n {
            if !m.cols[c] {
                out.set(r, c, num_complex::Complex64::new(0.0, 0.0));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn ramp(n: usize) -> ComplexKSpace {
        let v = (0..n * n)
            .map(|i| Complex64::new(i as f64 + 1.0, -(i as f64)))
            .collect();
        ComplexKSpace::new(n, v).unwrap()
    }

    #[test]
    fn identity_and_empty_masks() {
        let ks = ramp(4);
        assert_eq!(apply_mask(&ks, &ColumnMask::full(4)).unwrap(), ks);
        let z = apply_mask(&ks, &ColumnMask::empty(4)).unwrap();
        assert!(z.as_slice().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn single_column_kept() {
        let ks = ramp(4);
        let m = ColumnMask::from_bits(&[1, 0, 0, 0]).unwrap();
        let out = apply_mask(&ks, &m).unwrap();
        for r in 0..4 {
            assert_eq!(out.get(r, 0), ks.get(r, 0));
            for c in 1..4 {
                assert_eq!(out.get(r, c).norm(), 0.0);
            }
        }
    }

    #[test]
    fn union_examples() {
        let m = ColumnMask::from_bits(&[1, 0, 0]).unwrap();
        assert_eq!(mask_union(&m, 1).unwrap().bits(), vec![1, 1, 0]);
        assert_eq!(mask_union(&m, 0).unwrap().bits(), vec![1, 0, 0]);
        let full = ColumnMask::full(3);
        assert_eq!(mask_union(&full, 2).unwrap(), full);
        assert!(mask_union(&m, 3).is_err());
    }

    #[test]
    fn width_mismatch_is_rejected() {
        assert!(apply_mask(&ramp(4), &ColumnMask::full(3)).is_err());
        assert!(ColumnMask::from_bits(&[0, 2]).is_err());
    }

    proptest! {
        #[test]
        fn apply_mask_is_idempotent(bits in proptest::collection::vec(0u8..2, 5)) {
            let m = ColumnMask::from_bits(&bits).unwrap();
            let once = apply_mask(&ramp(5), &m).unwrap();
            let twice = apply_mask(&once, &m).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn union_depends_only_on_action_set(actions in proptest::collection::vec(0usize..6, 0..10)) {
            let start = ColumnMask::from_bits(&[0, 1, 0, 0, 0, 0]).unwrap();
            let mut fwd = start.clone();
            let mut prev = fwd.count();
            for &a in &actions {
                fwd = mask_union(&fwd, a).unwrap();
                prop_assert!(fwd.count() >= prev);
                prev = fwd.count();
            }
            let mut rev = start.clone();
            for &a in actions.iter().rev() {
                rev = mask_union(&rev, a).unwrap();
            }
            prop_assert_eq!(fwd, rev);
        }
    }
}
