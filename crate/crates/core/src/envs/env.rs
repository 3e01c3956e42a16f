use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;

use super::config::{centered_columns, EnvConfig, RewardMode};
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::models::ActionDistribution;
use crate::numerics::{dft2, mask_union, similarity, zero_filled_cols, ColumnMask, ComplexKSpace, RealImage};

/// Maps a partial observation to an image. The mask is passed alongside the
/// masked k-space so implementations can skip empty columns.
pub trait Reconstructor: Send + Sync {
    fn reconstruct(&self, observed: &ComplexKSpace, mask: &ColumnMask) -> Result<RealImage>;
}

impl<R: Reconstructor + ?Sized> Reconstructor for &R {
    fn reconstruct(&self, observed: &ComplexKSpace, mask: &ColumnMask) -> Result<RealImage> {
        (**self).reconstruct(observed, mask)
    }
}

/// `|F^-1(y_t)|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFilled;

impl Reconstructor for ZeroFilled {
    fn reconstruct(&self, observed: &ComplexKSpace, mask: &ColumnMask) -> Result<RealImage> {
        zero_filled_cols(observed, &mask.sampled())
    }
}

/// A sampling policy. In dense mode the caller supplies the current
/// reconstruction `x_t`; in sparse mode `recon_image` is `None` and the policy
/// reads the observation directly.
pub trait Sampler: Send + Sync {
    fn distribution(&self, state: &SamplingState, recon_image: Option<&RealImage>) -> Result<ActionDistribution>;
}

impl<S: Sampler + ?Sized> Sampler for &S {
    fn distribution(&self, state: &SamplingState, recon_image: Option<&RealImage>) -> Result<ActionDistribution> {
        (**self).distribution(state, recon_image)
    }
}

/// Uniform over unsampled columns.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformSampler;

impl Sampler for UniformSampler {
    fn distribution(&self, state: &SamplingState, _: Option<&RealImage>) -> Result<ActionDistribution> {
        ActionDistribution::uniform(&state.mask)
    }
}

/// Counts calls through to an inner reconstructor.
#[derive(Debug, Default)]
pub struct CountingReconstructor<R> {
    pub inner: R,
    calls: AtomicUsize,
}

impl<R> CountingReconstructor<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<R: Reconstructor> Reconstructor for CountingReconstructor<R> {
    fn reconstruct(&self, observed: &ComplexKSpace, mask: &ColumnMask) -> Result<RealImage> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.reconstruct(observed, mask)
    }
}

#[derive(Debug, Default)]
pub struct CountingSampler<P> {
    pub inner: P,
    calls: AtomicUsize,
}

impl<P> CountingSampler<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<P: Sampler> Sampler for CountingSampler<P> {
    fn distribution(&self, state: &SamplingState, recon_image: Option<&RealImage>) -> Result<ActionDistribution> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.distribution(state, recon_image)
    }
}

/// The cumulative mask, the masked observation and the step counter.
///
/// The state also holds a shared handle to the fully sampled k-space so that
/// transitions can copy newly acquired columns; policies only see `observed`.
#[derive(Debug, Clone)]
pub struct SamplingState {
    pub mask: ColumnMask,
    pub observed: ComplexKSpace,
    pub step: usize,
    full: Arc<ComplexKSpace>,
    /// Reconstruction of `observed` and its similarity to the ground truth.
    cache: Option<Arc<(RealImage, f64)>>,
}

impl SamplingState {
    /// Reconstruction of the current observation, if one has been computed.
    pub fn cached_recon(&self) -> Option<&RealImage> {
        self.cache.as_ref().map(|c| &c.0)
    }

    pub fn cached_score(&self) -> Option<f64> {
        self.cache.as_ref().map(|c| c.1)
    }

    /// The state reached by acquiring column `a`, without any reward logic.
    pub fn advanced(&self, a: usize) -> Result<SamplingState> {
        let mask = mask_union(&self.mask, a)?;
        let mut observed = self.observed.clone();
        if !self.mask.is_sampled(a) {
            let n = self.full.n();
            for r in 0..n {
                observed.set(r, a, self.full.get(r, a));
            }
        }
        Ok(SamplingState {
            mask,
            observed,
            step: self.step + 1,
            full: self.full.clone(),
            cache: None,
        })
    }

    pub(crate) fn with_cache(mut self, recon: RealImage, score: f64) -> Self {
        self.cache = Some(Arc::new((recon, score)));
        self
    }

    /// Computes (once) and caches the reconstruction of the current state.
    pub fn ensure_recon(
        &mut self,
        x: &RealImage,
        recon: &dyn Reconstructor,
        cfg: &EnvConfig,
    ) -> Result<(&RealImage, f64)> {
        if self.cache.is_none() {
            let img = recon.reconstruct(&self.observed, &self.mask)?;
            let s = similarity(&img, x, &cfg.metric)?;
            self.cache = Some(Arc::new((img, s)));
        }
        let c = self.cache.as_ref().unwrap();
        Ok((&c.0, c.1))
    }
}

pub fn init_state(x: &RealImage, cfg: &EnvConfig) -> Result<SamplingState> {
    init_state_from_kspace(Arc::new(dft2(x)?), cfg)
}

/// [`init_state`] for a precomputed `y = dft2(x)`.
pub fn init_state_from_kspace(y: Arc<ComplexKSpace>, cfg: &EnvConfig) -> Result<SamplingState> {
    let n = y.n();
    if cfg.n != n {
        return Err(invalid_input(format!(
            "image width {n} does not match configured width {}",
            cfg.n
        )));
    }
    let k = cfg.initial_count()?;
    if k == 0 {
        return Err(invalid_config("initial mask would be empty"));
    }
    if k > n {
        return Err(invalid_config("initial mask wider than the image"));
    }
    let mask = ColumnMask::from_indices(n, &centered_columns(n, k))?;
    let mut observed = ComplexKSpace::zeros(n);
    for c in mask.sampled() {
        for r in 0..n {
            observed.set(r, c, y.get(r, c));
        }
    }
    Ok(SamplingState {
        mask,
        observed,
        step: 0,
        full: y,
        cache: None,
    })
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: SamplingState,
    pub reward: f64,
    pub done: bool,
}

fn check_step(s: &SamplingState, cfg: &EnvConfig) -> Result<usize> {
    let t = cfg.t_horizon()?;
    if s.step >= t {
        return Err(Error::EpisodeFinished(s.step));
    }
    Ok(t)
}

/// Dense-reward transition: `r = S(R(y_{t+1}), x) - S(R(y_t), x)`.
///
/// The reconstruction of the incoming state is reused when cached, so an
/// episode started from [`init_state`] costs exactly `T + 1` reconstructor
/// calls.
pub fn dense_step(
    s: &SamplingState,
    a: usize,
    x: &RealImage,
    recon: &dyn Reconstructor,
    cfg: &EnvConfig,
) -> Result<StepOutcome> {
    let t = check_step(s, cfg)?;
    let prev = match s.cached_score() {
        Some(v) => v,
        None => {
            let img = recon.reconstruct(&s.observed, &s.mask)?;
            similarity(&img, x, &cfg.metric)?
        }
    };
    let next = s.advanced(a)?;
    let img = recon.reconstruct(&next.observed, &next.mask)?;
    let score = similarity(&img, x, &cfg.metric)?;
    let done = next.step == t;
    Ok(StepOutcome {
        state: next.with_cache(img, score),
        reward: score - prev,
        done,
    })
}

/// Sparse-reward transition: zero reward until the last step, which pays
/// `S(R(y_T), x)`. One reconstructor call per episode.
pub fn sparse_step(
    s: &SamplingState,
    a: usize,
    x: &RealImage,
    recon: &dyn Reconstructor,
    cfg: &EnvConfig,
) -> Result<StepOutcome> {
    let t = check_step(s, cfg)?;
    let next = s.advanced(a)?;
    if next.step < t {
        return Ok(StepOutcome {
            state: next,
            reward: 0.0,
            done: false,
        });
    }
    let img = recon.reconstruct(&next.observed, &next.mask)?;
    let score = similarity(&img, x, &cfg.metric)?;
    Ok(StepOutcome {
        state: next.with_cache(img, score),
        reward: score,
        done: true,
    })
}

pub fn step(
    s: &SamplingState,
    a: usize,
    x: &RealImage,
    recon: &dyn Reconstructor,
    cfg: &EnvConfig,
) -> Result<StepOutcome> {
    match cfg.reward_mode {
        RewardMode::Dense => dense_step(s, a, x, recon, cfg),
        RewardMode::Sparse => sparse_step(s, a, x, recon, cfg),
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// `states[t]` is the state before action `t`; the last entry is terminal.
    pub states: Vec<SamplingState>,
    pub terminal_recon: RealImage,
}

impl Trajectory {
    pub fn terminal_state(&self) -> &SamplingState {
        self.states.last().expect("trajectory has an initial state")
    }

    pub fn terminal_score(&self) -> Option<f64> {
        self.terminal_state().cached_score()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionRule {
    Sample,
    Argmax,
}

pub fn rollout(
    policy: &dyn Sampler,
    x: &RealImage,
    cfg: &EnvConfig,
    recon: &dyn Reconstructor,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let s0 = init_state(x, cfg)?;
    rollout_from(policy, s0, x, cfg, recon, ActionRule::Sample, rng)
}

/// Runs a full episode from `s0`. Dense mode feeds the policy `x_t`; sparse
/// mode feeds it nothing beyond the state.
pub fn rollout_from(
    policy: &dyn Sampler,
    s0: SamplingState,
    x: &RealImage,
    cfg: &EnvConfig,
    recon: &dyn Reconstructor,
    rule: ActionRule,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let t_max = cfg.t_horizon()?;
    let mut states = Vec::with_capacity(t_max + 1);
    let mut actions = Vec::with_capacity(t_max);
    let mut rewards = Vec::with_capacity(t_max);
    let mut s = s0;
    while s.step < t_max {
        let dist = match cfg.reward_mode {
            RewardMode::Dense => {
                s.ensure_recon(x, recon, cfg)?;
                policy.distribution(&s, s.cached_recon())?
            }
            RewardMode::Sparse => policy.distribution(&s, None)?,
        };
        let a = match rule {
            ActionRule::Sample => dist.sample(rng),
            ActionRule::Argmax => dist.argmax(),
        }
        .ok_or(Error::NoAction)?;
        let out = step(&s, a, x, recon, cfg)?;
        states.push(s);
        actions.push(a);
        rewards.push(out.reward);
        s = out.state;
    }
    if t_max == 0 {
        s.ensure_recon(x, recon, cfg)?;
    }
    let terminal_recon = s.cached_recon().cloned().expect("terminal step always reconstructs");
    states.push(s);
    Ok(Trajectory {
        actions,
        rewards,
        states,
        terminal_recon,
    })
}

/// `sum_t gamma^(t-1) r_t`.
pub fn episode_return(traj: &Trajectory, gamma: f64) -> f64 {
    let mut g = 0.0;
    let mut w = 1.0;
    for r in &traj.rewards {
        g += w * r;
        w *= gamma;
    }
    g
}
