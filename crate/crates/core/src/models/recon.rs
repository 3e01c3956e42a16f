//! Shallow residual reconstructor acting on the zero-filled image:
//! `out = z + conv3(tanh(conv2(tanh(conv1(z)))))`, `z = |F^-1(y_t)|`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{conv2d_same, conv2d_same_backward, tanh_backward, tanh_in_place};
use super::params::{BlockSpec, ParamSet};
use crate::envs::Reconstructor;
use crate::error::{invalid_input, Result};
use crate::numerics::{zero_filled, zero_filled_cols, ColumnMask, ComplexKSpace, RealImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconArch {
    pub n: usize,
    pub channels: usize,
    pub kernel: usize,
}

impl ReconArch {
    pub fn new(n: usize, channels: usize, kernel: usize) -> Self {
        Self { n, channels, kernel }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.channels == 0 || self.kernel.is_multiple_of(2) {
            return Err(invalid_input(format!("invalid reconstructor architecture {self:?}")));
        }
        Ok(())
    }

    fn specs(&self) -> Vec<BlockSpec> {
        let (c, k) = (self.channels, self.kernel);
        vec![
            BlockSpec::new("l1.w", &[c, 1, k, k]),
            BlockSpec::new("l1.b", &[c]),
            BlockSpec::new("l2.w", &[c, c, k, k]),
            BlockSpec::new("l2.b", &[c]),
            BlockSpec::new("out.w", &[1, c, k, k]),
            BlockSpec::new("out.b", &[1]),
        ]
    }
}

const L1_W: usize = 0;
const L1_B: usize = 1;
const L2_W: usize = 2;
const L2_B: usize = 3;
const OUT_W: usize = 4;
const OUT_B: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconParams {
    pub arch: ReconArch,
    pub params: ParamSet,
}

impl ReconParams {
    /// Every parameter zero: the network is exactly the zero-filled baseline.
    pub fn zeros(arch: ReconArch) -> Self {
        Self {
            arch,
            params: ParamSet::zeros(arch.specs()),
        }
    }

    /// Random hidden layers, zero output layer (zero residual at start).
    pub fn init(arch: ReconArch, rng: &mut impl Rng) -> Self {
        Self::random(arch, rng, 0.0)
    }

    /// Random hidden layers and an output layer scaled by `out_scale`.
    pub fn random(arch: ReconArch, rng: &mut impl Rng, out_scale: f64) -> Self {
        let mut p = Self::zeros(arch);
        let k2 = (arch.kernel * arch.kernel) as f64;
        let c = arch.channels as f64;
        p.params.fill_uniform(L1_W, 1.0 / k2.sqrt(), rng);
        p.params.fill_uniform(L2_W, 1.0 / (c * k2).sqrt(), rng);
        if out_scale > 0.0 {
            p.params.fill_uniform(OUT_W, out_scale / (c * k2).sqrt(), rng);
            p.params.fill_uniform(OUT_B, out_scale * 0.1, rng);
        }
        p
    }

    pub fn from_params(arch: ReconArch, params: ParamSet) -> Result<Self> {
        arch.validate()?;
        if params.specs() != arch.specs().as_slice() {
            return Err(invalid_input(
                "parameter layout does not match the reconstructor architecture",
            ));
        }
        Ok(Self { arch, params })
    }

    pub fn has_zero_residual(&self) -> bool {
        self.params.block(OUT_W).iter().all(|&v| v == 0.0) && self.params.block(OUT_B)[0] == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct ReconTrace {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub output: RealImage,
}

/// Forward pass from an already zero-filled image.
pub fn recon_forward_image(p: &ReconParams, z: &RealImage) -> Result<ReconTrace> {
    let a = p.arch;
    if z.n() != a.n {
        return Err(invalid_input(format!(
            "reconstructor expects width {}, got {}",
            a.n,
            z.n()
        )));
    }
    let n = a.n;
    let ps = &p.params;
    let input = z.as_slice().to_vec();
    let mut h1 = conv2d_same(&input, 1, n, ps.block(L1_W), ps.block(L1_B), a.kernel);
    tanh_in_place(&mut h1);
    let mut h2 = conv2d_same(&h1, a.channels, n, ps.block(L2_W), ps.block(L2_B), a.kernel);
    tanh_in_place(&mut h2);
    let res = conv2d_same(&h2, a.channels, n, ps.block(OUT_W), ps.block(OUT_B), a.kernel);
    let out: Vec<f64> = input.iter().zip(&res).map(|(z, r)| z + r).collect();
    Ok(ReconTrace {
        input,
        h1,
        h2,
        output: RealImage::new(n, out)
            .map_err(|_| crate::error::Error::TrainingDiverged("reconstructor produced a non-finite pixel".into()))?,
    })
}

pub fn recon_forward(p: &ReconParams, y_t: &ComplexKSpace) -> Result<RealImage> {
    check_width(p, y_t)?;
    Ok(recon_forward_image(p, &zero_filled(y_t)?)?.output)
}

fn check_width(p: &ReconParams, y_t: &ComplexKSpace) -> Result<()> {
    if y_t.n() != p.arch.n {
        return Err(invalid_input(format!(
            "reconstructor expects width {}, got {}",
            p.arch.n,
            y_t.n()
        )));
    }
    Ok(())
}

/// Accumulates `(d out / d theta)^T upstream` into `grad`.
pub fn recon_backward_trace(
    p: &ReconParams,
    trace: &ReconTrace,
    upstream: &RealImage,
    grad: &mut ParamSet,
) -> Result<()> {
    let a = p.arch;
    let n = a.n;
    if upstream.n() != n {
        return Err(invalid_input("upstream gradient has the wrong width"));
    }
    let ps = &p.params;
    let (gw, gb) = grad.blocks_mut2(OUT_W, OUT_B);
    let mut d_h2 = conv2d_same_backward(
        &trace.h2,
        a.channels,
        n,
        ps.block(OUT_W),
        a.kernel,
        upstream.as_slice(),
        gw,
        gb,
        true,
    )
    .expect("input gradient requested");
    tanh_backward(&trace.h2, &mut d_h2);
    let (gw, gb) = grad.blocks_mut2(L2_W, L2_B);
    let mut d_h1 = conv2d_same_backward(&trace.h1, a.channels, n, ps.block(L2_W), a.kernel, &d_h2, gw, gb, true)
        .expect("input gradient requested");
    tanh_backward(&trace.h1, &mut d_h1);
    let (gw, gb) = grad.blocks_mut2(L1_W, L1_B);
    conv2d_same_backward(&trace.input, 1, n, ps.block(L1_W), a.kernel, &d_h1, gw, gb, false);
    Ok(())
}

pub fn recon_backward(p: &ReconParams, y_t: &ComplexKSpace, upstream: &RealImage) -> Result<ParamSet> {
    check_width(p, y_t)?;
    let trace = recon_forward_image(p, &zero_filled(y_t)?)?;
    let mut grad = p.params.zeros_like();
    recon_backward_trace(p, &trace, upstream, &mut grad)?;
    Ok(grad)
}

/// Forward pass that skips unobserved columns in the inverse DFT.
pub fn recon_trace_masked(p: &ReconParams, y_t: &ComplexKSpace, mask: &ColumnMask) -> Result<ReconTrace> {
    check_width(p, y_t)?;
    recon_forward_image(p, &zero_filled_cols(y_t, &mask.sampled())?)
}

impl Reconstructor for ReconParams {
    fn reconstruct(&self, observed: &ComplexKSpace, mask: &ColumnMask) -> Result<RealImage> {
        Ok(recon_trace_masked(self, observed, mask)?.output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binio::{hex, sha256};
    use crate::numerics::{apply_mask, dft2, similarity, similarity_and_grad, MetricConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> RealImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealImage::from_fn(n, |_, _| rng.gen::<f64>())
    }

    fn random_recon(n: usize, seed: u64) -> ReconParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ReconParams::random(ReconArch::new(n, 3, 3), &mut rng, 1.0)
    }

    fn masked(x: &RealImage, cols: &[usize]) -> ComplexKSpace {
        let m = ColumnMask::from_indices(x.n(), cols).unwrap();
        apply_mask(&dft2(x).unwrap(), &m).unwrap()
    }

    #[test]
    fn zero_residual_is_zero_filled() {
        let x = random_image(8, 1);
        let y = masked(&x, &[0, 1, 7]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ReconParams::init(ReconArch::new(8, 4, 3), &mut rng);
        assert!(p.has_zero_residual());
        assert_eq!(recon_forward(&p, &y).unwrap(), zero_filled(&y).unwrap());
        let full = dft2(&x).unwrap();
        assert!(recon_forward(&p, &full).unwrap().max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn masked_path_matches_dense_path() {
        let x = random_image(8, 3);
        let cols = [0, 2, 5];
        let y = masked(&x, &cols);
        let p = random_recon(8, 4);
        let a = recon_forward(&p, &y).unwrap();
        let b = p.reconstruct(&y, &ColumnMask::from_indices(8, &cols).unwrap()).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn golden_output() {
        let x = random_image(8, 5);
        let y = masked(&x, &[0, 1, 6, 7]);
        let p = random_recon(8, 6);
        let out = recon_forward(&p, &y).unwrap();
        // Fingerprint of the output rounded to 1e-9, frozen from a first run.
        let mut bytes = Vec::new();
        for v in out.as_slice() {
            bytes.extend_from_slice(&((v * 1e9).round() as i64).to_le_bytes());
        }
        assert_eq!(hex(&sha256(&bytes)), GOLDEN_RECON);
    }

    const GOLDEN_RECON: &str = "eafe08698b6d73a3b8e58a3313820480c68c284f9e99e09ea31173512a0f7a06";

    #[test]
    fn zero_upstream_zero_gradient() {
        let x = random_image(8, 7);
        let y = masked(&x, &[0, 3]);
        let p = random_recon(8, 8);
        let g = recon_backward(&p, &y, &RealImage::zeros(8)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = random_image(8, 9);
        let y = masked(&x, &[0, 1, 4]);
        let p = random_recon(8, 10);
        let up = random_image(8, 11);
        let g = recon_backward(&p, &y, &up).unwrap();
        let scalar = |q: &ReconParams| -> f64 {
            recon_forward(q, &y)
                .unwrap()
                .as_slice()
                .iter()
                .zip(up.as_slice())
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..p.params.len() {
            let mut a = p.clone();
            a.params.values_mut()[i] += h;
            let mut b = p.clone();
            b.params.values_mut()[i] -= h;
            let fd = (scalar(&a) - scalar(&b)) / (2.0 * h);
            let an = g.values()[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn similarity_loss_end_to_end() {
        let x = random_image(8, 12);
        let y = masked(&x, &[0, 2, 6]);
        let p = random_recon(8, 13);
        let cfg = MetricConfig::ssim_with_window(3);
        let out = recon_forward(&p, &y).unwrap();
        let (_, gs) = similarity_and_grad(&out, &x, &cfg).unwrap();
        let mut neg = gs.clone();
        neg.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        let g = recon_backward(&p, &y, &neg).unwrap();
        let loss = |q: &ReconParams| -similarity(&recon_forward(q, &y).unwrap(), &x, &cfg).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..p.params.len() {
            let mut a = p.clone();
            a.params.values_mut()[i] += h;
            let mut b = p.clone();
            b.params.values_mut()[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            let an = g.values()[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
