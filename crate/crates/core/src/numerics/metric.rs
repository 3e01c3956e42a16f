//! Image similarity metrics and their gradients with respect to the
//! reconstruction.
//!
//! SSIM uses a normalized Gaussian window evaluated over the valid region only
//! (no padding), and averages the local SSIM map. `NegMse` is the affine
//! rescaling `1 - mse / L^2`, which shares SSIM's "larger is better, at most
//! one" convention and has a closed-form best response (the conditional mean).

use serde::{Deserialize, Serialize};

use super::image::RealImage;
use crate::error::{invalid_config, invalid_input, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Ssim,
    NegMse,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Ssim => "ssim",
            MetricKind::NegMse => "neg_mse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// `None` uses the ground-truth maximum (1.0 if that is not positive).
    pub dynamic_range: Option<f64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            kind: MetricKind::Ssim,
            window: 7,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: None,
        }
    }
}

impl MetricConfig {
    pub fn neg_mse() -> Self {
        Self {
            kind: MetricKind::NegMse,
            ..Self::default()
        }
    }

    pub fn ssim_with_window(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.kind == MetricKind::Ssim {
            if self.window == 0 || self.window.is_multiple_of(2) {
                return Err(invalid_config(format!(
                    "SSIM window must be a positive odd integer, got {}",
                    self.window
                )));
            }
            if self.window > n {
                return Err(invalid_config(format!(
                    "SSIM window {} exceeds image width {n}",
                    self.window
                )));
            }
            if !(self.sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0) {
                return Err(invalid_config("SSIM sigma, k1 and k2 must be positive"));
            }
        }
        if let Some(l) = self.dynamic_range {
            if !(l > 0.0) {
                return Err(invalid_config("dynamic_range must be positive"));
            }
        }
        Ok(())
    }

    pub fn range_for(&self, x: &RealImage) -> f64 {
        match self.dynamic_range {
            Some(l) => l,
            None => {
                let m = x.max();
                if m > 0.0 {
                    m
                } else {
                    1.0
                }
            }
        }
    }
}

fn check_pair(xhat: &RealImage, x: &RealImage) -> Result<()> {
    if xhat.n() != x.n() {
        return Err(invalid_input(format!("image widths differ: {} vs {}", xhat.n(), x.n())));
    }
    Ok(())
}

pub(crate) fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let raw: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable valid-region correlation of an `n x n` buffer with `g (x) g`.
fn filter_valid(src: &[f64], n: usize, g: &[f64]) -> Vec<f64> {
    let w = g.len();
    let m = n - w + 1;
    let mut horiz = vec![0.0; n * m];
    for r in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                acc += gk * src[r * n + j + k];
            }
            horiz[r * m + j] = acc;
        }
    }
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                acc += gk * horiz[(i + k) * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an `m x m` map back onto `n x n`.
fn filter_adjoint(map: &[f64], n: usize, g: &[f64]) -> Vec<f64> {
    let w = g.len();
    let m = n - w + 1;
    let mut vert = vec![0.0; n * m];
    for i in 0..m {
        for (k, gk) in g.iter().enumerate() {
            for j in 0..m {
                vert[(i + k) * m + j] += gk * map[i * m + j];
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for j in 0..m {
            let v = vert[r * m + j];
            for (k, gk) in g.iter().enumerate() {
                out[r * n + j + k] += gk * v;
            }
        }
    }
    out
}

struct SsimTerms {
    map: Vec<f64>,
    d_mu: Vec<f64>,
    d_var: Vec<f64>,
    d_cov: Vec<f64>,
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
}

fn ssim_terms(a: &[f64], b: &[f64], n: usize, cfg: &MetricConfig, range: f64, want_grad: bool) -> SsimTerms {
    let g = gaussian_kernel(cfg.window, cfg.sigma);
    let c1 = (cfg.k1 * range).powi(2);
    let c2 = (cfg.k2 * range).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();
    let mu_a = filter_valid(a, n, &g);
    let mu_b = filter_valid(b, n, &g);
    let e_aa = filter_valid(&aa, n, &g);
    let e_bb = filter_valid(&bb, n, &g);
    let e_ab = filter_valid(&ab, n, &g);

    let len = mu_a.len();
    let mut map = Vec::with_capacity(len);
    let (mut d_mu, mut d_var, mut d_cov) = if want_grad {
        (vec![0.0; len], vec![0.0; len], vec![0.0; len])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for p in 0..len {
        let (ma, mb) = (mu_a[p], mu_b[p]);
        let var_a = e_aa[p] - ma * ma;
        let var_b = e_bb[p] - mb * mb;
        let cov = e_ab[p] - ma * mb;
        let a1 = 2.0 * ma * mb + c1;
        let a2 = 2.0 * cov + c2;
        let b1 = ma * ma + mb * mb + c1;
        let b2 = var_a + var_b + c2;
        let s = (a1 * a2) / (b1 * b2);
        map.push(s);
        if want_grad {
            d_mu[p] = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1;
            d_var[p] = -s / b2;
            d_cov[p] = 2.0 * a1 / (b1 * b2);
        }
    }
    SsimTerms {
        map,
        d_mu,
        d_var,
        d_cov,
        mu_a,
        mu_b,
    }
}

pub fn similarity(xhat: &RealImage, x: &RealImage, cfg: &MetricConfig) -> Result<f64> {
    check_pair(xhat, x)?;
    let n = x.n();
    cfg.validate(n)?;
    let range = cfg.range_for(x);
    match cfg.kind {
        MetricKind::NegMse => {
            let mse = mse(xhat, x);
            Ok(1.0 - mse / (range * range))
        }
        MetricKind::Ssim => {
            let t = ssim_terms(xhat.as_slice(), x.as_slice(), n, cfg, range, false);
            Ok(t.map.iter().sum::<f64>() / t.map.len() as f64)
        }
    }
}

/// Gradient of [`similarity`] with respect to `xhat`.
pub fn similarity_grad(xhat: &RealImage, x: &RealImage, cfg: &MetricConfig) -> Result<RealImage> {
    Ok(similarity_and_grad(xhat, x, cfg)?.1)
}

pub fn similarity_and_grad(xhat: &RealImage, x: &RealImage, cfg: &MetricConfig) -> Result<(f64, RealImage)> {
    check_pair(xhat, x)?;
    let n = x.n();
    cfg.validate(n)?;
    let range = cfg.range_for(x);
    match cfg.kind {
        MetricKind::NegMse => {
            let scale = 2.0 / ((n * n) as f64 * range * range);
            let grad = x
                .as_slice()
                .iter()
                .zip(xhat.as_slice())
                .map(|(b, a)| scale * (b - a))
                .collect();
            let value = 1.0 - mse(xhat, x) / (range * range);
            Ok((value, RealImage::from_raw(n, grad)))
        }
        MetricKind::Ssim => {
            let a = xhat.as_slice();
            let b = x.as_slice();
            let t = ssim_terms(a, b, n, cfg, range, true);
            let g = gaussian_kernel(cfg.window, cfg.sigma);
            let len = t.map.len() as f64;
            let value = t.map.iter().sum::<f64>() / len;
            let lin: Vec<f64> = (0..t.map.len())
                .map(|p| t.d_mu[p] - 2.0 * t.d_var[p] * t.mu_a[p] - t.d_cov[p] * t.mu_b[p])
                .collect();
            let lin = filter_adjoint(&lin, n, &g);
            let var = filter_adjoint(&t.d_var, n, &g);
            let cov = filter_adjoint(&t.d_cov, n, &g);
            let grad = (0..n * n)
                .map(|q| (lin[q] + 2.0 * a[q] * var[q] + b[q] * cov[q]) / len)
                .collect();
            Ok((value, RealImage::from_raw(n, grad)))
        }
    }
}

fn mse(xhat: &RealImage, x: &RealImage) -> f64 {
    let n2 = (x.n() * x.n()) as f64;
    xhat.as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n2
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the images match.
pub fn psnr(xhat: &RealImage, x: &RealImage, dynamic_range: f64) -> f64 {
    let err = mse(xhat, x);
    if err == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (dynamic_range * dynamic_range / err).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> RealImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealImage::from_fn(n, |_, _| rng.gen::<f64>())
    }

    /// Direct per-window SSIM with a non-separable 2-D window.
    fn ssim_direct(a: &RealImage, b: &RealImage, cfg: &MetricConfig) -> f64 {
        let n = a.n();
        let w = cfg.window;
        let half = (w / 2) as f64;
        let mut win = vec![0.0; w * w];
        let mut total = 0.0;
        for i in 0..w {
            for j in 0..w {
                let d2 = (i as f64 - half).powi(2) + (j as f64 - half).powi(2);
                win[i * w + j] = (-d2 / (2.0 * cfg.sigma * cfg.sigma)).exp();
                total += win[i * w + j];
            }
        }
        win.iter_mut().for_each(|v| *v /= total);
        let l = cfg.range_for(b);
        let c1 = (cfg.k1 * l).powi(2);
        let c2 = (cfg.k2 * l).powi(2);
        let m = n - w + 1;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let (mut ma, mut mb) = (0.0, 0.0);
                for u in 0..w {
                    for v in 0..w {
                        ma += win[u * w + v] * a.get(i + u, j + v);
                        mb += win[u * w + v] * b.get(i + u, j + v);
                    }
                }
                let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
                for u in 0..w {
                    for v in 0..w {
                        let da = a.get(i + u, j + v) - ma;
                        let db = b.get(i + u, j + v) - mb;
                        va += win[u * w + v] * da * da;
                        vb += win[u * w + v] * db * db;
                        cab += win[u * w + v] * da * db;
                    }
                }
                acc += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        acc / (m * m) as f64
    }

    fn fd_grad(xhat: &RealImage, x: &RealImage, cfg: &MetricConfig, h: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for q in 0..xhat.as_slice().len() {
            let mut p = xhat.clone();
            p.as_mut_slice()[q] += h;
            let mut m = xhat.clone();
            m.as_mut_slice()[q] -= h;
            let fp = similarity(&p, x, cfg).unwrap();
            let fm = similarity(&m, x, cfg).unwrap();
            out.push((fp - fm) / (2.0 * h));
        }
        out
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(p, q)| (p - q).abs() / p.abs().max(q.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn identical_images_score_exactly_one() {
        let x = random_image(8, 1);
        assert_eq!(similarity(&x, &x, &MetricConfig::default()).unwrap(), 1.0);
        assert_eq!(similarity(&x, &x, &MetricConfig::neg_mse()).unwrap(), 1.0);
    }

    #[test]
    fn neg_mse_constant_images() {
        let cfg = MetricConfig {
            dynamic_range: Some(1.0),
            ..MetricConfig::neg_mse()
        };
        let s = similarity(&RealImage::filled(4, 0.5), &RealImage::zeros(4), &cfg).unwrap();
        assert!((s - 0.75).abs() < 1e-15);
    }

    #[test]
    fn ssim_matches_direct_formula() {
        let a = random_image(8, 11);
        let b = random_image(8, 12);
        let cfg = MetricConfig::default();
        let fast = similarity(&a, &b, &cfg).unwrap();
        let slow = ssim_direct(&a, &b, &cfg);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
    }

    #[test]
    fn window_larger_than_image_is_config_error() {
        let x = random_image(4, 2);
        let err = similarity(&x, &x, &MetricConfig::default()).unwrap_err();
        assert!(matches!(err, crate::Error::InvalidConfig(_)));
    }

    #[test]
    fn transposition_invariance() {
        let a = random_image(8, 21);
        let b = random_image(8, 22);
        for cfg in [MetricConfig::default(), MetricConfig::neg_mse()] {
            let s = similarity(&a, &b, &cfg).unwrap();
            let t = similarity(&a.transpose(), &b.transpose(), &cfg).unwrap();
            assert!((s - t).abs() < 1e-12);
        }
    }

    #[test]
    fn neg_mse_gradient_closed_form() {
        let a = random_image(4, 3);
        let b = random_image(4, 4);
        let cfg = MetricConfig {
            dynamic_range: Some(2.0),
            ..MetricConfig::neg_mse()
        };
        let g = similarity_grad(&a, &b, &cfg).unwrap();
        for q in 0..16 {
            let expected = 2.0 * (b.as_slice()[q] - a.as_slice()[q]) / (16.0 * 4.0);
            assert!((g.as_slice()[q] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn ssim_gradient_vanishes_at_the_target() {
        let x = random_image(8, 5);
        let g = similarity_grad(&x, &x, &MetricConfig::default()).unwrap();
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let a = random_image(8, 31);
        let b = random_image(8, 32);
        for cfg in [MetricConfig::default(), MetricConfig::neg_mse()] {
            let g = similarity_grad(&a, &b, &cfg).unwrap();
            let fd = fd_grad(&a, &b, &cfg, 1e-5);
            let err = max_rel_err(g.as_slice(), &fd);
            assert!(err < 1e-4, "{:?}: {err}", cfg.kind);
        }
    }

    #[test]
    fn psnr_examples() {
        let x = RealImage::zeros(4);
        let xhat = RealImage::filled(4, 0.5);
        assert!((psnr(&xhat, &x, 1.0) - 6.0206).abs() < 1e-3);
        assert_eq!(psnr(&x, &x, 1.0), f64::INFINITY);
        let c = 3.7;
        let xs = RealImage::filled(4, 0.0);
        let xhs = RealImage::filled(4, 0.5 * c);
        assert!((psnr(&xhs, &xs, c) - psnr(&xhat, &x, 1.0)).abs() < 1e-12);
    }
}
