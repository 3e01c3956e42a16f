//! Backward induction over (mask, observation-equivalence group) states.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tabular::best_response_image;
use crate::envs::{centered_columns, EnvConfig, Reconstructor};
use crate::error::{invalid_input, Error, Result};
use crate::harness::Dataset;
use crate::numerics::{apply_mask, dft2, mask_union, similarity, ColumnMask, ComplexKSpace, MetricConfig, RealImage};

/// Two observations (or reconstructions) closer than this in every entry are
/// treated as identical.
pub const GROUP_TOL: f64 = 1e-9;

/// Default cap on memoized DP states.
pub const DEFAULT_STATE_LIMIT: usize = 2_000_000;

/// All masks of width `n` with exactly `k` sampled columns, in lexicographic
/// order of their sorted column lists.
pub fn enumerate_masks(n: usize, k: usize) -> Result<Vec<ColumnMask>> {
    if k > n {
        return Err(invalid_input(format!("cannot sample {k} of {n} columns")));
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(ColumnMask::from_indices(n, &idx)?);
        // Advance to the next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// A mask together with the dataset images still consistent with every
/// observation made so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeliefState {
    pub mask: ColumnMask,
    pub group: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObservationMode {
    /// Each image solved on its own: an upper bound on any realizable policy.
    PerImage,
    /// One action per observation-equivalence group.
    Belief,
}

/// What the sampler sees before each intermediate decision.
#[derive(Clone, Copy)]
pub enum Information<'a> {
    /// The masked k-space itself.
    Observation,
    /// Only the output of this reconstructor on the masked k-space.
    Reconstruction(&'a dyn Reconstructor),
}

/// How the terminal observation is scored.
#[derive(Clone, Copy)]
pub enum TerminalRecon<'a> {
    /// The similarity-maximizing table: the conditional mean of each
    /// terminal group (negative MSE only).
    BestResponse,
    Fixed(&'a dyn Reconstructor),
}

/// Result of one backward induction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    /// Mean terminal similarity over the dataset.
    pub value: f64,
    pub states: usize,
    /// Optimal first action for each root group, in root-group order.
    pub root_actions: Vec<Option<usize>>,
    pub root_groups: Vec<Vec<usize>>,
}

/// A finite sampling problem: targets, their k-space, the initial mask and
/// the horizon.
#[derive(Debug, Clone)]
pub struct BeliefProblem {
    pub images: Vec<RealImage>,
    pub kspaces: Vec<ComplexKSpace>,
    pub initial: ColumnMask,
    pub horizon: usize,
    pub metric: MetricConfig,
    pub state_limit: usize,
}

impl BeliefProblem {
    pub fn new(
        images: Vec<RealImage>,
        kspaces: Vec<ComplexKSpace>,
        initial: ColumnMask,
        horizon: usize,
        metric: MetricConfig,
    ) -> Result<Self> {
        if images.is_empty() || images.len() != kspaces.len() {
            return Err(invalid_input("need one k-space per image and at least one image"));
        }
        let n = initial.n();
        if images.iter().any(|x| x.n() != n) || kspaces.iter().any(|y| y.n() != n) {
            return Err(invalid_input("image, k-space and mask widths differ"));
        }
        if n > 64 {
            return Err(invalid_input("belief DP supports at most 64 columns"));
        }
        if initial.count() + horizon > n {
            return Err(invalid_input("horizon exceeds the unsampled columns"));
        }
        metric.validate(n)?;
        Ok(Self {
            images,
            kspaces,
            initial,
            horizon,
            metric,
            state_limit: DEFAULT_STATE_LIMIT,
        })
    }

    /// Every image of `data` under the environment's initial mask and horizon.
    pub fn from_dataset(data: &Dataset, env: &EnvConfig) -> Result<Self> {
        env.check(true)?;
        if data.n != env.n {
            return Err(invalid_input("dataset width does not match the environment"));
        }
        let kspaces = data.images.iter().map(dft2).collect::<Result<Vec<_>>>()?;
        let initial = ColumnMask::from_indices(env.n, &centered_columns(env.n, env.initial_count()?))?;
        Self::new(
            data.images.clone(),
            kspaces,
            initial,
            env.t_horizon()?,
            env.metric.clone(),
        )
    }

    pub fn with_state_limit(mut self, limit: usize) -> Self {
        self.state_limit = limit;
        self
    }

    pub fn observation(&self, i: usize, mask: &ColumnMask) -> Result<ComplexKSpace> {
        apply_mask(&self.kspaces[i], mask)
    }

    fn same_on_cols(&self, i: usize, j: usize, cols: &[usize]) -> bool {
        let (a, b) = (&self.kspaces[i], &self.kspaces[j]);
        let n = a.n();
        cols.iter()
            .all(|&c| (0..n).all(|r| (a.get(r, c) - b.get(r, c)).norm() <= GROUP_TOL))
    }

    /// Splits `group` into classes with identical observations on `cols`,
    /// ordered by first member.
    pub fn split_by_columns(&self, group: &[usize], cols: &[usize]) -> Vec<Vec<usize>> {
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for &i in group {
            match classes.iter_mut().find(|c| self.same_on_cols(c[0], i, cols)) {
                Some(c) => c.push(i),
                None => classes.push(vec![i]),
            }
        }
        classes
    }

    /// Mean terminal similarity of `group` under the best response, summed
    /// (not averaged) over members.
    fn best_response_total(&self, group: &[usize], mask: &ColumnMask) -> Result<f64> {
        let mut total = 0.0;
        for class in self.split_by_columns(group, &mask.sampled()) {
            let members: Vec<&RealImage> = class.iter().map(|&i| &self.images[i]).collect();
            let r = best_response_image(&members, &self.metric)?;
            for x in members {
                total += similarity(&r, x, &self.metric)?;
            }
        }
        Ok(total)
    }

    pub fn solve(
        &self,
        info: Information<'_>,
        terminal: TerminalRecon<'_>,
        mode: ObservationMode,
    ) -> Result<DpSolution> {
        if matches!(terminal, TerminalRecon::BestResponse) {
            super::tabular::require_neg_mse(&self.metric)?;
        }
        let solver = Solver {
            p: self,
            info,
            terminal,
            memo: RefCell::new(HashMap::new()),
            recon_cache: RefCell::new(HashMap::new()),
        };
        let all: Vec<usize> = (0..self.images.len()).collect();
        let roots = match mode {
            ObservationMode::PerImage => all.iter().map(|&i| vec![i]).collect(),
            ObservationMode::Belief => solver.split_info(&all, &self.initial, None)?,
        };
        let mut total = 0.0;
        let mut root_actions = Vec::with_capacity(roots.len());
        for g in &roots {
            let (v, a) = solver.value(&self.initial, g, 0)?;
            total += v;
            root_actions.push(a);
        }
        let states = solver.memo.borrow().len();
        Ok(DpSolution {
            value: total / self.images.len() as f64,
            states,
            root_actions,
            root_groups: roots,
        })
    }
}

type StateKey = (u64, Vec<usize>);

struct Solver<'a> {
    p: &'a BeliefProblem,
    info: Information<'a>,
    terminal: TerminalRecon<'a>,
    memo: RefCell<HashMap<StateKey, (f64, Option<usize>)>>,
    recon_cache: RefCell<HashMap<(u64, usize), RealImage>>,
}

fn mask_key(m: &ColumnMask) -> u64 {
    m.sampled().iter().fold(0u64, |acc, &c| acc | (1u64 << c))
}

impl Solver<'_> {
    fn recon(&self, r: &dyn Reconstructor, i: usize, mask: &ColumnMask) -> Result<RealImage> {
        let key = (mask_key(mask), i);
        if let Some(img) = self.recon_cache.borrow().get(&key) {
            return Ok(img.clone());
        }
        let img = r.reconstruct(&self.p.observation(i, mask)?, mask)?;
        self.recon_cache.borrow_mut().insert(key, img.clone());
        Ok(img)
    }

    /// Refines `group` by what the sampler learns on reaching `mask`; `added`
    /// is the newly acquired column, if any.
    fn split_info(&self, group: &[usize], mask: &ColumnMask, added: Option<usize>) -> Result<Vec<Vec<usize>>> {
        match self.info {
            Information::Observation => {
                let cols = match added {
                    Some(a) => vec![a],
                    None => mask.sampled(),
                };
                Ok(self.p.split_by_columns(group, &cols))
            }
            Information::Reconstruction(r) => {
                let mut classes: Vec<(RealImage, Vec<usize>)> = Vec::new();
                for &i in group {
                    let img = self.recon(r, i, mask)?;
                    match classes.iter_mut().find(|(rep, _)| rep.max_abs_diff(&img) <= GROUP_TOL) {
                        Some((_, c)) => c.push(i),
                        None => classes.push((img, vec![i])),
                    }
                }
                Ok(classes.into_iter().map(|c| c.1).collect())
            }
        }
    }

    fn terminal_total(&self, group: &[usize], mask: &ColumnMask) -> Result<f64> {
        match self.terminal {
            TerminalRecon::BestResponse => self.p.best_response_total(group, mask),
            TerminalRecon::Fixed(r) => {
                let mut total = 0.0;
                for &i in group {
                    total += similarity(&self.recon(r, i, mask)?, &self.p.images[i], &self.p.metric)?;
                }
                Ok(total)
            }
        }
    }

    /// Summed optimal value of `group` at `mask` after `t` actions, and the
    /// optimal action (lowest index among ties).
    fn value(&self, mask: &ColumnMask, group: &[usize], t: usize) -> Result<(f64, Option<usize>)> {
        let key = (mask_key(mask), group.to_vec());
        if let Some(&v) = self.memo.borrow().get(&key) {
            return Ok(v);
        }
        let out = if t == self.p.horizon {
            (self.terminal_total(group, mask)?, None)
        } else {
            let mut best: Option<(f64, usize)> = None;
            for a in mask.unsampled() {
                let next = mask_union(mask, a)?;
                // The last action is followed only by the terminal
                // reconstruction, which sees the observation itself.
                let children = if t + 1 == self.p.horizon {
                    vec![group.to_vec()]
                } else {
                    self.split_info(group, &next, Some(a))?
                };
                let mut v = 0.0;
                for c in &children {
                    v += self.value(&next, c, t + 1)?.0;
                }
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, a));
                }
            }
            let (v, a) = best.ok_or(Error::NoAction)?;
            (v, Some(a))
        };
        let mut memo = self.memo.borrow_mut();
        if memo.len() >= self.p.state_limit {
            return Err(Error::Resource {
                states: memo.len() + 1,
                limit: self.p.state_limit,
            });
        }
        memo.insert(key, out);
        Ok(out)
    }
}

/// Optimal mean terminal similarity reachable by a sampler on `data` with
/// the reconstructor `recon` fixed. `Belief` gives the optimum over
/// observation-respecting adaptive samplers, `PerImage` the clairvoyant
/// per-image optimum.
pub fn dp_optimal_value(
    data: &Dataset,
    env: &EnvConfig,
    recon: &dyn Reconstructor,
    mode: ObservationMode,
) -> Result<f64> {
    let p = BeliefProblem::from_dataset(data, env)?;
    Ok(p.solve(Information::Observation, TerminalRecon::Fixed(recon), mode)?
        .value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{RewardMode, ZeroFilled};
    use crate::harness::{generate_phantoms, PhantomConfig, Split};

    #[test]
    fn mask_enumeration_counts() {
        let m = enumerate_masks(4, 0).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].count(), 0);
        assert_eq!(enumerate_masks(4, 2).unwrap().len(), 6);
        let m = enumerate_masks(6, 3).unwrap();
        assert_eq!(m.len(), 20);
        assert!(m.iter().all(|x| x.count() == 3));
        assert_eq!(m[0].sampled(), vec![0, 1, 2]);
        assert_eq!(m[1].sampled(), vec![0, 1, 3]);
        assert_eq!(m[19].sampled(), vec![3, 4, 5]);
        assert_eq!(enumerate_masks(3, 3).unwrap().len(), 1);
        assert!(enumerate_masks(3, 4).is_err());
    }

    fn tiny(count: usize, seed: u64) -> (Dataset, EnvConfig) {
        let d = generate_phantoms(&PhantomConfig {
            n: 6,
            count,
            seed,
            ..PhantomConfig::default()
        })
        .unwrap();
        let d = Dataset::from_images(d.images, Split::Train).unwrap();
        let env = EnvConfig::custom(6, 2.0, 6.0, RewardMode::Sparse).with_metric(MetricConfig::neg_mse());
        (d, env)
    }

    #[test]
    fn zero_horizon_is_plain_expectation() {
        let (d, _) = tiny(3, 1);
        let env = EnvConfig::custom(6, 3.0, 3.0, RewardMode::Sparse).with_metric(MetricConfig::neg_mse());
        let v = dp_optimal_value(&d, &env, &ZeroFilled, ObservationMode::Belief).unwrap();
        let m0 = ColumnMask::from_indices(6, &centered_columns(6, 2)).unwrap();
        let direct: f64 = d
            .images
            .iter()
            .map(|x| {
                let y = apply_mask(&dft2(x).unwrap(), &m0).unwrap();
                similarity(&ZeroFilled.reconstruct(&y, &m0).unwrap(), x, &env.metric).unwrap()
            })
            .sum::<f64>()
            / 3.0;
        assert!((v - direct).abs() < 1e-15);
    }

    #[test]
    fn singleton_dataset_modes_agree() {
        let (d, env) = tiny(1, 2);
        let a = dp_optimal_value(&d, &env, &ZeroFilled, ObservationMode::Belief).unwrap();
        let b = dp_optimal_value(&d, &env, &ZeroFilled, ObservationMode::PerImage).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn state_budget_is_enforced() {
        let (d, env) = tiny(3, 3);
        let p = BeliefProblem::from_dataset(&d, &env).unwrap().with_state_limit(2);
        let r = p.solve(
            Information::Observation,
            TerminalRecon::Fixed(&ZeroFilled),
            ObservationMode::Belief,
        );
        assert!(matches!(r, Err(Error::Resource { limit: 2, .. })));
    }

    #[test]
    fn per_image_is_max_over_terminal_masks() {
        // Independent check: brute force over all terminal masks per image.
        let (d, env) = tiny(3, 4);
        let v = dp_optimal_value(&d, &env, &ZeroFilled, ObservationMode::PerImage).unwrap();
        let mut direct = 0.0;
        for x in &d.images {
            let y = dft2(x).unwrap();
            let best = enumerate_masks(6, 3)
                .unwrap()
                .into_iter()
                .filter(|m| m.is_sampled(0))
                .map(|m| {
                    let obs = apply_mask(&y, &m).unwrap();
                    similarity(&ZeroFilled.reconstruct(&obs, &m).unwrap(), x, &env.metric).unwrap()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            direct += best;
        }
        assert!((v - direct / 3.0).abs() < 1e-14);
    }
}
