use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::belief::{enumerate_masks, GROUP_TOL};
use crate::envs::{centered_columns, EnvConfig, HeuristicKind, HeuristicPolicyCfg, Reconstructor};
use crate::error::{invalid_input, Error, Result};
use crate::harness::Dataset;
use crate::numerics::{apply_mask, dft2, ColumnMask, ComplexKSpace, MetricConfig, MetricKind, RealImage};

pub(crate) fn require_neg_mse(metric: &MetricConfig) -> Result<()> {
    match metric.kind {
        MetricKind::NegMse => Ok(()),
        MetricKind::Ssim => Err(Error::UnsupportedMetric("ssim")),
    }
}

/// Maximizer of `sum_i S(r, x_i)` under negative MSE. Each image's error is
/// scaled by its own dynamic range, so the maximizer is the mean weighted by
/// `1 / L_i^2`; with a fixed range it is the plain mean.
pub fn best_response_image(members: &[&RealImage], metric: &MetricConfig) -> Result<RealImage> {
    require_neg_mse(metric)?;
    let first = members.first().ok_or_else(|| invalid_input("empty group"))?;
    let n = first.n();
    let mut acc = vec![0.0; n * n];
    let mut wsum = 0.0;
    for x in members {
        let l = metric.range_for(x);
        let w = 1.0 / (l * l);
        wsum += w;
        for (a, v) in acc.iter_mut().zip(x.as_slice()) {
            *a += w * v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= wsum);
    RealImage::new(n, acc)
}

#[derive(Debug, Clone)]
struct Entry {
    observation: ComplexKSpace,
    members: Vec<usize>,
    image: RealImage,
}

/// Reconstruction looked up by mask and observation class. Observations that
/// match no stored class fall back to the best response over the whole
/// dataset.
#[derive(Debug, Clone)]
pub struct TabularReconstructor {
    n: usize,
    table: BTreeMap<Vec<u8>, Vec<Entry>>,
    fallback: RealImage,
}

impl TabularReconstructor {
    pub fn masks(&self) -> Vec<ColumnMask> {
        self.table
            .keys()
            .map(|b| ColumnMask::from_bits(b).expect("stored masks are valid"))
            .collect()
    }

    pub fn fallback(&self) -> &RealImage {
        &self.fallback
    }

    /// Stored groups for `mask`, as dataset indices.
    pub fn groups(&self, mask: &ColumnMask) -> Vec<Vec<usize>> {
        self.table
            .get(&mask.bits())
            .map(|es| es.iter().map(|e| e.members.clone()).collect())
            .unwrap_or_default()
    }

    /// The stored reconstruction for the group containing `member`.
    pub fn lookup(&self, mask: &ColumnMask, member: usize) -> Option<&RealImage> {
        self.table
            .get(&mask.bits())?
            .iter()
            .find(|e| e.members.contains(&member))
            .map(|e| &e.image)
    }
}

impl Reconstructor for TabularReconstructor {
    fn reconstruct(&self, observed: &ComplexKSpace, mask: &ColumnMask) -> Result<RealImage> {
        if observed.n() != self.n || mask.n() != self.n {
            return Err(invalid_input("observation width does not match the table"));
        }
        let cols = mask.sampled();
        let hit = self.table.get(&mask.bits()).and_then(|es| {
            es.iter()
                .find(|e| observed.max_abs_diff_on_cols(&e.observation, &cols) <= GROUP_TOL)
        });
        Ok(hit.map_or_else(|| self.fallback.clone(), |e| e.image.clone()))
    }
}

/// Best-response table over `masks`: for every mask, the dataset is split into
/// observation classes and each class maps to its conditional mean.
pub fn best_response_reconstructor(
    data: &Dataset,
    masks: &[ColumnMask],
    metric: &MetricConfig,
) -> Result<TabularReconstructor> {
    require_neg_mse(metric)?;
    if data.is_empty() {
        return Err(invalid_input("empty dataset"));
    }
    let kspaces = data.images.iter().map(dft2).collect::<Result<Vec<_>>>()?;
    let all: Vec<&RealImage> = data.images.iter().collect();
    let fallback = best_response_image(&all, metric)?;
    let mut table = BTreeMap::new();
    for m in masks {
        if m.n() != data.n {
            return Err(invalid_input("mask width does not match the dataset"));
        }
        let cols = m.sampled();
        let mut entries: Vec<Entry> = Vec::new();
        for (i, y) in kspaces.iter().enumerate() {
            let obs = apply_mask(y, m)?;
            match entries
                .iter_mut()
                .find(|e| obs.max_abs_diff_on_cols(&e.observation, &cols) <= GROUP_TOL)
            {
                Some(e) => e.members.push(i),
                None => entries.push(Entry {
                    observation: obs,
                    members: vec![i],
                    image: fallback.clone(),
                }),
            }
        }
        for e in &mut entries {
            let members: Vec<&RealImage> = e.members.iter().map(|&i| &data.images[i]).collect();
            e.image = best_response_image(&members, metric)?;
        }
        table.insert(m.bits(), entries);
    }
    Ok(TabularReconstructor {
        n: data.n,
        table,
        fallback,
    })
}

/// Returns the same image whatever it observes.
#[derive(Debug, Clone)]
pub struct ConstantReconstructor(pub RealImage);

impl Reconstructor for ConstantReconstructor {
    fn reconstruct(&self, _: &ComplexKSpace, _: &ColumnMask) -> Result<RealImage> {
        Ok(self.0.clone())
    }
}

/// A finite distribution over masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDistribution {
    pub entries: Vec<(ColumnMask, f64)>,
}

impl MaskDistribution {
    /// The exact mask law of a heuristic policy: for each target count, the
    /// initial mask plus a uniformly chosen set of extra columns.
    pub fn from_heuristic(hp: &HeuristicPolicyCfg, env: &EnvConfig) -> Result<Self> {
        hp.validate(env)?;
        let n = env.n;
        let k0 = env.initial_count()?;
        let m0 = ColumnMask::from_indices(n, &centered_columns(n, k0))?;
        let weights: Vec<f64> = match hp.kind {
            HeuristicKind::Terminal => vec![1.0],
            HeuristicKind::Mixture => hp.weights.clone(),
        };
        let mut entries = Vec::new();
        for (&c, &w) in hp.target_counts.iter().zip(&weights) {
            if w <= 0.0 {
                continue;
            }
            let masks: Vec<ColumnMask> = enumerate_masks(n, c)?.into_iter().filter(|m| m.contains(&m0)).collect();
            let each = w / masks.len() as f64;
            entries.extend(masks.into_iter().map(|m| (m, each)));
        }
        Ok(Self { entries })
    }

    pub fn support(&self) -> Vec<ColumnMask> {
        self.entries.iter().filter(|e| e.1 > 0.0).map(|e| e.0.clone()).collect()
    }

    pub fn weight(&self, m: &ColumnMask) -> f64 {
        self.entries.iter().filter(|e| &e.0 == m).map(|e| e.1).sum()
    }
}
