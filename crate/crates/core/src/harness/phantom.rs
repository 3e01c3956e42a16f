use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Provenance, Split};
use crate::error::{invalid_config, Result};
use crate::numerics::{gaussian_kernel, RealImage};
use crate::training::rng_stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.75,
            val: 0.0,
            test: 0.25,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(invalid_config("split fractions must lie in [0, 1]"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid_config("split fractions must sum to 1"));
        }
        Ok(())
    }

    /// Per-image split tags: a train block, then validation, then test.
    pub fn assign(&self, count: usize) -> Vec<Split> {
        let n_train = ((self.train * count as f64).round() as usize).min(count);
        let n_val = ((self.val * count as f64).round() as usize).min(count - n_train);
        (0..count)
            .map(|i| {
                if i < n_train {
                    Split::Train
                } else if i < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                }
            })
            .collect()
    }
}

/// Random filled-ellipse phantoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub n: usize,
    pub count: usize,
    pub ellipses_min: usize,
    pub ellipses_max: usize,
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub smooth_sigma: f64,
    pub seed: u64,
    pub splits: SplitFractions,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            n: 16,
            count: 64,
            ellipses_min: 2,
            ellipses_max: 5,
            intensity_min: 0.1,
            intensity_max: 0.6,
            smooth_sigma: 0.5,
            seed: 0,
            splits: SplitFractions::default(),
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid_config("phantom width must be at least 2"));
        }
        if self.count == 0 {
            return Err(invalid_config("phantom count must be positive"));
        }
        if self.ellipses_min > self.ellipses_max {
            return Err(invalid_config("ellipses_min exceeds ellipses_max"));
        }
        if !(0.0..=1.0).contains(&self.intensity_min)
            || !(0.0..=1.0).contains(&self.intensity_max)
            || self.intensity_min > self.intensity_max
        {
            return Err(invalid_config("intensity range must be an ordered subrange of [0, 1]"));
        }
        if !(self.smooth_sigma >= 0.0) {
            return Err(invalid_config("smooth_sigma must be nonnegative"));
        }
        self.splits.validate()
    }
}

fn draw_phantom(cfg: &PhantomConfig, index: u64) -> RealImage {
    let mut rng = rng_stream(cfg.seed, "phantom", index);
    let n = cfg.n;
    let nf = n as f64;
    let count = rng.gen_range(cfg.ellipses_min..=cfg.ellipses_max);
    let mut img = vec![0.0; n * n];
    for _ in 0..count {
        let cx = nf / 2.0 + rng.gen_range(-0.25..0.25) * nf;
        let cy = nf / 2.0 + rng.gen_range(-0.25..0.25) * nf;
        let a = rng.gen_range(0.08..0.4) * nf;
        let b = rng.gen_range(0.08..0.4) * nf;
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let value = if cfg.intensity_min == cfg.intensity_max {
            cfg.intensity_min
        } else {
            rng.gen_range(cfg.intensity_min..cfg.intensity_max)
        };
        let (st, ct) = theta.sin_cos();
        for r in 0..n {
            for c in 0..n {
                let dx = c as f64 + 0.5 - cx;
                let dy = r as f64 + 0.5 - cy;
                let u = (dx * ct + dy * st) / a;
                let v = (-dx * st + dy * ct) / b;
                if u * u + v * v <= 1.0 {
                    img[r * n + c] += value;
                }
            }
        }
    }
    if cfg.smooth_sigma > 0.0 {
        img = blur(&img, n, cfg.smooth_sigma);
    }
    for v in img.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    RealImage::new(n, img).expect("phantom pixels are finite")
}

/// Separable Gaussian blur with zero padding.
fn blur(img: &[f64], n: usize, sigma: f64) -> Vec<f64> {
    let half = ((3.0 * sigma).ceil() as usize).max(1);
    let k = gaussian_kernel(2 * half + 1, sigma);
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for (j, w) in k.iter().enumerate() {
                    let off = j as isize - half as isize;
                    let (rr, cc) = if horizontal {
                        (r as isize, c as isize + off)
                    } else {
                        (r as isize + off, c as isize)
                    };
                    if rr >= 0 && cc >= 0 && (rr as usize) < n && (cc as usize) < n {
                        acc += w * src[rr as usize * n + cc as usize];
                    }
                }
                out[r * n + c] = acc;
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

pub fn generate_phantoms(cfg: &PhantomConfig) -> Result<Dataset> {
    cfg.validate()?;
    let images = (0..cfg.count as u64).map(|i| draw_phantom(cfg, i)).collect();
    let splits = cfg.splits.assign(cfg.count);
    Dataset::new(
        cfg.n,
        images,
        splits,
        Provenance {
            phantom: Some(cfg.clone()),
            ..Provenance::default()
        },
    )
}
