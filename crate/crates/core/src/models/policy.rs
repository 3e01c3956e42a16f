//! Actor-critic sampler: a convolutional feature extractor with per-column
//! pooling, concatenated with the mask vector, feeding an actor head (one
//! logit per column) and a critic head (a scalar value).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{conv2d_same, conv2d_same_backward, dense, dense_backward, tanh_backward, tanh_in_place};
use super::params::{BlockSpec, ParamSet};
use crate::envs::{Sampler, SamplingState};
use crate::error::{invalid_input, Error, Result};
use crate::numerics::{zero_filled_cols, ColumnMask, RealImage};

/// A distribution over columns with zero mass on sampled ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    /// Validates that `probs` is on the simplex and vanishes on `mask`.
    pub fn new(probs: Vec<f64>, mask: &ColumnMask) -> Result<Self> {
        if probs.len() != mask.n() {
            return Err(invalid_input("distribution width differs from mask width"));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid_input("probabilities must be nonnegative"));
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid_input("probabilities must sum to one"));
        }
        if mask.sampled().iter().any(|&c| probs[c] != 0.0) {
            return Err(invalid_input("sampled columns must have zero probability"));
        }
        Ok(Self { probs })
    }

    pub fn uniform(mask: &ColumnMask) -> Result<Self> {
        let free = mask.unsampled();
        if free.is_empty() {
            return Err(Error::NoAction);
        }
        let mut probs = vec![0.0; mask.n()];
        let w = 1.0 / free.len() as f64;
        for c in free {
            probs[c] = w;
        }
        Ok(Self { probs })
    }

    /// Masked softmax: sampled columns get logit `-inf`.
    pub fn from_logits(logits: &[f64], mask: &ColumnMask) -> Result<Self> {
        let free = mask.unsampled();
        if free.is_empty() {
            return Err(Error::NoAction);
        }
        let max = free.iter().map(|&c| logits[c]).fold(f64::NEG_INFINITY, f64::max);
        let mut probs = vec![0.0; logits.len()];
        let mut total = 0.0;
        for &c in &free {
            let e = (logits[c] - max).exp();
            probs[c] = e;
            total += e;
        }
        for &c in &free {
            probs[c] /= total;
        }
        Ok(Self { probs })
    }

    /// Highest-probability column; ties go to the lower index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 && best.is_none_or(|b| p > self.probs[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Inverse-CDF draw using one uniform variate.
    pub fn sample(&self, rng: &mut impl Rng) -> Option<usize> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
        last
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Features come from `zero_filled(y_t)` (sparse formulation).
    ObsKspace,
    /// Features come from a supplied reconstruction `x_t` (dense formulation).
    ReconImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyArch {
    pub n: usize,
    pub channels: usize,
    pub kernel: usize,
    pub hidden: usize,
}

impl PolicyArch {
    pub fn new(n: usize, channels: usize, kernel: usize, hidden: usize) -> Self {
        Self {
            n,
            channels,
            kernel,
            hidden,
        }
    }

    fn feature_len(&self) -> usize {
        self.channels * self.n + self.n
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.channels == 0 || self.hidden == 0 || self.kernel.is_multiple_of(2) {
            return Err(invalid_input(format!("invalid policy architecture {self:?}")));
        }
        Ok(())
    }

    fn specs(&self) -> Vec<BlockSpec> {
        let (n, c, k, h, f) = (self.n, self.channels, self.kernel, self.hidden, self.feature_len());
        vec![
            BlockSpec::new("feat.w", &[c, 1, k, k]),
            BlockSpec::new("feat.b", &[c]),
            BlockSpec::new("actor.w1", &[h, f]),
            BlockSpec::new("actor.b1", &[h]),
            BlockSpec::new("actor.w2", &[n, h]),
            BlockSpec::new("actor.b2", &[n]),
            BlockSpec::new("critic.w1", &[h, f]),
            BlockSpec::new("critic.b1", &[h]),
            BlockSpec::new("critic.w2", &[1, h]),
            BlockSpec::new("critic.b2", &[1]),
        ]
    }
}

const FEAT_W: usize = 0;
const FEAT_B: usize = 1;
const ACT_W1: usize = 2;
const ACT_B1: usize = 3;
const ACT_W2: usize = 4;
const ACT_B2: usize = 5;
const CRT_W1: usize = 6;
const CRT_B1: usize = 7;
const CRT_W2: usize = 8;
const CRT_B2: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub arch: PolicyArch,
    pub params: ParamSet,
}

impl PolicyParams {
    pub fn zeros(arch: PolicyArch) -> Self {
        Self {
            arch,
            params: ParamSet::zeros(arch.specs()),
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` weights, zero biases; the actor's output
    /// layer is shrunk so the initial policy is close to uniform.
    pub fn init(arch: PolicyArch, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(arch);
        let k2 = (arch.kernel * arch.kernel) as f64;
        let f = arch.feature_len() as f64;
        let h = arch.hidden as f64;
        p.params.fill_uniform(FEAT_W, 1.0 / k2.sqrt(), rng);
        p.params.fill_uniform(ACT_W1, 1.0 / f.sqrt(), rng);
        p.params.fill_uniform(ACT_W2, 0.01 / h.sqrt(), rng);
        p.params.fill_uniform(CRT_W1, 1.0 / f.sqrt(), rng);
        p.params.fill_uniform(CRT_W2, 1.0 / h.sqrt(), rng);
        p
    }

    pub fn from_params(arch: PolicyArch, params: ParamSet) -> Result<Self> {
        arch.validate()?;
        if params.specs() != arch.specs().as_slice() {
            return Err(invalid_input("parameter layout does not match the policy architecture"));
        }
        Ok(Self { arch, params })
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct PolicyTrace {
    input: Vec<f64>,
    conv: Vec<f64>,
    features: Vec<f64>,
    actor_hidden: Vec<f64>,
    critic_hidden: Vec<f64>,
    pub dist: ActionDistribution,
    pub value: f64,
}

/// The feature image the policy looks at in a given mode.
pub fn policy_input(s: &SamplingState, mode: InputMode, recon_image: Option<&RealImage>) -> Result<RealImage> {
    match mode {
        InputMode::ObsKspace => zero_filled_cols(&s.observed, &s.mask.sampled()),
        InputMode::ReconImage => recon_image
            .cloned()
            .ok_or_else(|| invalid_input("reconstruction input mode needs a reconstruction image")),
    }
}

pub fn policy_forward_image(p: &PolicyParams, image: &RealImage, mask: &ColumnMask) -> Result<PolicyTrace> {
    let a = p.arch;
    if image.n() != a.n || mask.n() != a.n {
        return Err(invalid_input(format!(
            "policy expects width {}, got image {} and mask {}",
            a.n,
            image.n(),
            mask.n()
        )));
    }
    let n = a.n;
    let ps = &p.params;
    let input = image.as_slice().to_vec();
    let mut conv = conv2d_same(&input, 1, n, ps.block(FEAT_W), ps.block(FEAT_B), a.kernel);
    tanh_in_place(&mut conv);
    let mut features = Vec::with_capacity(a.feature_len());
    let inv_n = 1.0 / n as f64;
    for c in 0..a.channels {
        let plane = &conv[c * n * n..(c + 1) * n * n];
        for s in 0..n {
            features.push((0..n).map(|r| plane[r * n + s]).sum::<f64>() * inv_n);
        }
    }
    features.extend(mask.as_f64());
    let mut actor_hidden = dense(&features, ps.block(ACT_W1), ps.block(ACT_B1));
    tanh_in_place(&mut actor_hidden);
    let logits = dense(&actor_hidden, ps.block(ACT_W2), ps.block(ACT_B2));
    let mut critic_hidden = dense(&features, ps.block(CRT_W1), ps.block(CRT_B1));
    tanh_in_place(&mut critic_hidden);
    let value = dense(&critic_hidden, ps.block(CRT_W2), ps.block(CRT_B2))[0];
    let dist = ActionDistribution::from_logits(&logits, mask)?;
    Ok(PolicyTrace {
        input,
        conv,
        features,
        actor_hidden,
        critic_hidden,
        dist,
        value,
    })
}

pub fn policy_forward(
    p: &PolicyParams,
    s: &SamplingState,
    mode: InputMode,
    recon_image: Option<&RealImage>,
) -> Result<(ActionDistribution, f64)> {
    let img = policy_input(s, mode, recon_image)?;
    let t = policy_forward_image(p, &img, &s.mask)?;
    Ok((t.dist, t.value))
}

/// Weights of the A2C loss
/// `-advantage * log pi(a) + value_coef * (v - target)^2 - entropy_coef * H(pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cTerms {
    pub advantage: f64,
    pub value_target: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl A2cTerms {
    pub fn loss(&self, trace: &PolicyTrace, action: usize) -> f64 {
        let d = trace.value - self.value_target;
        -self.advantage * trace.dist.probs[action].ln() + self.value_coef * d * d
            - self.entropy_coef * trace.dist.entropy()
    }
}

/// Accumulates the A2C loss gradient for one step into `grad`.
pub fn policy_backward_trace(
    p: &PolicyParams,
    trace: &PolicyTrace,
    action: usize,
    terms: &A2cTerms,
    grad: &mut ParamSet,
) -> Result<()> {
    let a = p.arch;
    let n = a.n;
    let probs = &trace.dist.probs;
    if action >= n || probs[action] <= 0.0 {
        return Err(invalid_input(format!("action {action} has zero probability")));
    }
    let ps = &p.params;
    let h_ent = trace.dist.entropy();
    let mut d_logits = vec![0.0; n];
    for i in 0..n {
        let pi = probs[i];
        if pi <= 0.0 {
            continue;
        }
        let ind = if i == action { 1.0 } else { 0.0 };
        d_logits[i] = -terms.advantage * (ind - pi) + terms.entropy_coef * pi * (pi.ln() + h_ent);
    }
    let d_value = 2.0 * terms.value_coef * (trace.value - terms.value_target);

    let (gw, gb) = grad.blocks_mut2(ACT_W2, ACT_B2);
    let mut d_ah = dense_backward(&trace.actor_hidden, ps.block(ACT_W2), &d_logits, gw, gb);
    tanh_backward(&trace.actor_hidden, &mut d_ah);
    let (gw, gb) = grad.blocks_mut2(ACT_W1, ACT_B1);
    let mut d_feat = dense_backward(&trace.features, ps.block(ACT_W1), &d_ah, gw, gb);

    let (gw, gb) = grad.blocks_mut2(CRT_W2, CRT_B2);
    let mut d_ch = dense_backward(&trace.critic_hidden, ps.block(CRT_W2), &[d_value], gw, gb);
    tanh_backward(&trace.critic_hidden, &mut d_ch);
    let (gw, gb) = grad.blocks_mut2(CRT_W1, CRT_B1);
    let d_feat_c = dense_backward(&trace.features, ps.block(CRT_W1), &d_ch, gw, gb);
    for (d, e) in d_feat.iter_mut().zip(&d_feat_c) {
        *d += e;
    }

    // Per-column mean pooling, then tanh, then the convolution.
    let inv_n = 1.0 / n as f64;
    let mut d_conv = vec![0.0; a.channels * n * n];
    for c in 0..a.channels {
        for r in 0..n {
            for s in 0..n {
                d_conv[c * n * n + r * n + s] = d_feat[c * n + s] * inv_n;
            }
        }
    }
    tanh_backward(&trace.conv, &mut d_conv);
    let (gw, gb) = grad.blocks_mut2(FEAT_W, FEAT_B);
    conv2d_same_backward(&trace.input, 1, n, ps.block(FEAT_W), a.kernel, &d_conv, gw, gb, false);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn policy_backward(
    p: &PolicyParams,
    s: &SamplingState,
    mode: InputMode,
    recon_image: Option<&RealImage>,
    action: usize,
    terms: &A2cTerms,
) -> Result<ParamSet> {
    let img = policy_input(s, mode, recon_image)?;
    let trace = policy_forward_image(p, &img, &s.mask)?;
    let mut grad = p.params.zeros_like();
    policy_backward_trace(p, &trace, action, terms, &mut grad)?;
    Ok(grad)
}

impl Sampler for PolicyParams {
    fn distribution(&self, state: &SamplingState, recon_image: Option<&RealImage>) -> Result<ActionDistribution> {
        let mode = if recon_image.is_some() {
            InputMode::ReconImage
        } else {
            InputMode::ObsKspace
        };
        Ok(policy_forward(self, state, mode, recon_image)?.0)
    }
}
