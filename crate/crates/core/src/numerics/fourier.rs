//! Unitary two-dimensional DFT.
//!
//! Forward: `y[k, l] = (1/N) * sum_{r, c} x[r, c] * exp(-2*pi*i*(k*r + l*c)/N)`.
//! The inverse uses the conjugate kernel with the same `1/N` factor, so
//! `||dft2(x)||_2 == ||x||_2`. Frequencies use natural (unshifted) ordering:
//! column 0 is DC, column `N-1` is frequency `-1`.
//!
//! The transform is a plain separable O(N^3) evaluation with a twiddle table.

use num_complex::Complex64;

use super::image::{ComplexKSpace, RealImage};
use crate::error::{invalid_input, Result};

fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let theta = sign * 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect()
}

/// Transforms every row in place (along the column index), optionally
/// skipping input columns known to be zero.
fn transform_rows(data: &mut [Complex64], n: usize, w: &[Complex64], active: Option<&[usize]>) {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for r in 0..n {
        let row = &data[r * n..(r + 1) * n];
        for (l, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            match active {
                Some(cols) => {
                    for &c in cols {
                        acc += row[c] * w[(l * c) % n];
                    }
                }
                None => {
                    for (c, v) in row.iter().enumerate() {
                        acc += v * w[(l * c) % n];
                    }
                }
            }
            *o = acc;
        }
        data[r * n..(r + 1) * n].copy_from_slice(&out);
    }
}

fn transform_cols(data: &mut [Complex64], n: usize, w: &[Complex64]) {
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for (r, v) in col.iter_mut().enumerate() {
            *v = data[r * n + c];
        }
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (r, v) in col.iter().enumerate() {
                acc += v * w[(k * r) % n];
            }
            data[k * n + c] = acc;
        }
    }
}

fn scale(data: &mut [Complex64], n: usize) {
    let s = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v *= s;
    }
}

pub fn dft2(img: &RealImage) -> Result<ComplexKSpace> {
    let n = img.n();
    if img.as_slice().len() != n * n {
        return Err(invalid_input("image is not square"));
    }
    if img.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(invalid_input("non-finite pixel passed to dft2"));
    }
    let mut data: Vec<Complex64> = img.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let w = twiddles(n, -1.0);
    transform_rows(&mut data, n, &w, None);
    transform_cols(&mut data, n, &w);
    scale(&mut data, n);
    Ok(ComplexKSpace::from_raw(n, data))
}

fn check_finite(ks: &ComplexKSpace) -> Result<()> {
    if ks.as_slice().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(invalid_input("non-finite k-space entry"));
    }
    Ok(())
}

pub fn idft2(ks: &ComplexKSpace) -> Result<ComplexKSpace> {
    check_finite(ks)?;
    Ok(idft2_inner(ks, None))
}

fn idft2_inner(ks: &ComplexKSpace, active: Option<&[usize]>) -> ComplexKSpace {
    let n = ks.n();
    let mut data = ks.as_slice().to_vec();
    let w = twiddles(n, 1.0);
    // Inverse along columns first so that skipping zero columns stays valid.
    transform_cols_sparse(&mut data, n, &w, active);
    transform_rows(&mut data, n, &w, active);
    scale(&mut data, n);
    ComplexKSpace::from_raw(n, data)
}

fn transform_cols_sparse(data: &mut [Complex64], n: usize, w: &[Complex64], active: Option<&[usize]>) {
    match active {
        None => transform_cols(data, n, w),
        Some(cols) => {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for &c in cols {
                for (r, v) in col.iter_mut().enumerate() {
                    *v = data[r * n + c];
                }
                for k in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (r, v) in col.iter().enumerate() {
                        acc += v * w[(k * r) % n];
                    }
                    data[k * n + c] = acc;
                }
            }
        }
    }
}

/// Magnitude of the inverse DFT: the zero-filled reconstruction.
pub fn zero_filled(ks: &ComplexKSpace) -> Result<RealImage> {
    Ok(idft2(ks)?.modulus())
}

/// Zero-filled reconstruction of k-space whose only non-zero columns are
/// `cols`. Equivalent to [`zero_filled`] but skips the empty columns.
pub fn zero_filled_cols(ks: &ComplexKSpace, cols: &[usize]) -> Result<RealImage> {
    check_finite(ks)?;
    Ok(idft2_inner(ks, Some(cols)).modulus())
}
