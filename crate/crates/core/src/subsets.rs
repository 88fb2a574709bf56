//! Relational class subsets: shot bands, region groups, and signature
//! clusters, plus materialization of per-subset training data.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{ClassMeta, ClassStats, Dataset, Instance, RegionTag};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ShotBased,
    RegionBased,
    FeatureBased,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", content = "parameters", rename_all = "snake_case")]
pub enum SubsetStrategy {
    /// Rank bands `[0, b0)`, `[b0, b1)`, `[b1, n)` by descending count;
    /// `None` means rank tertiles.
    ShotBased {
        boundaries: Option<[usize; 2]>,
    },
    RegionBased,
    FeatureBased {
        n_groups: usize,
    },
}

impl SubsetStrategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            SubsetStrategy::ShotBased { .. } => StrategyKind::ShotBased,
            SubsetStrategy::RegionBased => StrategyKind::RegionBased,
            SubsetStrategy::FeatureBased { .. } => StrategyKind::FeatureBased,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub subset_id: usize,
    pub class_ids: Vec<usize>,
}

/// One strategy's complete partition of the classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPlan {
    #[serde(flatten)]
    pub strategy: SubsetStrategy,
    pub subsets: Vec<SubsetSpec>,
}

impl SubsetPlan {
    pub fn build(strategy: SubsetStrategy, stats: &ClassStats, meta: &[ClassMeta]) -> Result<Self> {
        let subsets = match &strategy {
            SubsetStrategy::ShotBased { boundaries } => partition_shot(stats, *boundaries)?,
            SubsetStrategy::RegionBased => group_region(meta),
            SubsetStrategy::FeatureBased { n_groups } => group_feature(meta, *n_groups)?,
        };
        let plan = Self { strategy, subsets };
        plan.check_partition(meta.len())?;
        Ok(plan)
    }

    /// Every class in `0..n_classes` in exactly one non-empty, sorted subset.
    pub fn check_partition(&self, n_classes: usize) -> Result<()> {
        let mut owner = vec![None; n_classes];
        for s in &self.subsets {
            if s.class_ids.is_empty() {
                return Err(Error::Validation(format!(
                    "subset {} is empty",
                    s.subset_id
                )));
            }
            if s.class_ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!(
                    "subset {} class ids are not strictly increasing",
                    s.subset_id
                )));
            }
            for &c in &s.class_ids {
                match owner.get_mut(c) {
                    None => {
                        return Err(Error::Validation(format!(
                            "subset {} names class {c} of {n_classes}",
                            s.subset_id
                        )))
                    }
                    Some(Some(other)) => {
                        return Err(Error::Validation(format!(
                            "class {c} in subsets {other} and {}",
                            s.subset_id
                        )))
                    }
                    Some(slot) => *slot = Some(s.subset_id),
                }
            }
        }
        let orphans: Vec<usize> = (0..n_classes).filter(|&c| owner[c].is_none()).collect();
        if orphans.is_empty() {
            Ok(())
        } else {
            Err(Error::Coverage(orphans))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn specs(groups: Vec<Vec<usize>>) -> Vec<SubsetSpec> {
    groups
        .into_iter()
        .enumerate()
        .map(|(k, mut class_ids)| {
            class_ids.sort_unstable();
            SubsetSpec {
                subset_id: k,
                class_ids,
            }
        })
        .collect()
}

/// Classes ordered by descending count, ties by ascending id.
pub fn rank_by_count(counts: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
}

pub fn tertile_boundaries(n: usize) -> [usize; 2] {
    let cut = |k: f64| (k * n as f64 / 3.0).round() as usize;
    [cut(1.0), cut(2.0)]
}

/// Many / medium / few rank bands.
pub fn partition_shot(
    stats: &ClassStats,
    boundaries: Option<[usize; 2]>,
) -> Result<Vec<SubsetSpec>> {
    let n = stats.n_classes();
    if n < 3 {
        return Err(Error::Config(format!(
            "shot-based split needs >= 3 classes, got {n}"
        )));
    }
    let [b0, b1] = boundaries.unwrap_or_else(|| tertile_boundaries(n));
    if !(0 < b0 && b0 < b1 && b1 < n) {
        return Err(Error::Config(format!(
            "rank boundaries [{b0}, {b1}] do not give three non-empty bands of {n}"
        )));
    }
    let order = rank_by_count(&stats.counts);
    Ok(specs(vec![
        order[..b0].to_vec(),
        order[b0..b1].to_vec(),
        order[b1..].to_vec(),
    ]))
}

/// One subset per occupied region, in the fixed region order.
pub fn group_region(meta: &[ClassMeta]) -> Vec<SubsetSpec> {
    let mut by_region: BTreeMap<RegionTag, Vec<usize>> = BTreeMap::new();
    for (c, m) in meta.iter().enumerate() {
        by_region.entry(m.region_tag).or_default().push(c);
    }
    specs(by_region.into_values().collect())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Average-linkage agglomerative clustering of the class signatures on
/// cosine similarity, down to `n_groups` clusters. Among equally similar
/// pairs the one with the smallest class ids merges first.
pub fn group_feature(meta: &[ClassMeta], n_groups: usize) -> Result<Vec<SubsetSpec>> {
    let n = meta.len();
    if n_groups == 0 || n_groups > n {
        return Err(Error::Config(format!(
            "feature grouping needs 1 <= n_groups <= {n}, got {n_groups}"
        )));
    }
    let sim: Vec<Vec<f64>> = meta
        .iter()
        .map(|a| {
            meta.iter()
                .map(|b| cosine(&a.feature_signature, &b.feature_signature))
                .collect()
        })
        .collect();
    // clusters stay sorted internally and ordered by their smallest member
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|c| vec![c]).collect();
    while clusters.len() > n_groups {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let total: f64 = clusters[i]
                    .iter()
                    .flat_map(|&a| clusters[j].iter().map(move |&b| (a, b)))
                    .map(|(a, b)| sim[a][b])
                    .sum();
                let avg = total / (clusters[i].len() * clusters[j].len()) as f64;
                if best.is_none_or(|(s, _, _)| avg > s) {
                    best = Some((avg, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least two clusters");
        let merged = clusters.remove(j);
        clusters[i].extend(merged);
        clusters[i].sort_unstable();
    }
    Ok(specs(clusters))
}

/// Training data for one subset: every instance with a positive among the
/// subset's classes (labels projected onto them) plus a seeded sample of
/// instances with none, sized `negative_fraction` × positives.
///
/// Label columns of `dataset` are identified by `class_meta[k].class_id`, so
/// a materialized subset can be materialized again with the same spec.
pub fn materialize_subset(
    dataset: &Dataset,
    spec: &SubsetSpec,
    negative_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&negative_fraction) {
        return Err(Error::Config(format!(
            "negative fraction must lie in [0, 1], got {negative_fraction}"
        )));
    }
    let columns = columns_for(dataset, &spec.class_ids)?;

    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| columns.iter().any(|&k| dataset.instances[i].labels[k]));
    if pos.is_empty() {
        return Err(Error::EmptySubset {
            subset_id: spec.subset_id,
        });
    }
    let want = ((negative_fraction * pos.len() as f64).round() as usize).min(neg.len());
    let mut r = rng::stream(seed, &format!("subset/{}/negatives", spec.subset_id));
    let mut chosen: Vec<usize> = index::sample(&mut r, neg.len(), want)
        .into_iter()
        .map(|k| neg[k])
        .collect();
    chosen.extend(pos);
    chosen.sort_unstable();

    let instances = chosen
        .into_iter()
        .map(|i| {
            let src = &dataset.instances[i];
            Instance {
                features: src.features.clone(),
                labels: columns.iter().map(|&k| src.labels[k]).collect(),
            }
        })
        .collect();
    Ok(Dataset {
        instances,
        class_meta: columns
            .iter()
            .map(|&k| dataset.class_meta[k].clone())
            .collect(),
        n_classes: columns.len(),
        d_in: dataset.d_in,
        generator_config: dataset.generator_config.clone(),
        seed: dataset.seed,
    })
}

/// All instances of `dataset` with labels restricted to `class_ids`
/// (original class ids). Used for teacher validation data.
pub fn project_labels(dataset: &Dataset, class_ids: &[usize]) -> Result<Dataset> {
    let columns = columns_for(dataset, class_ids)?;
    Ok(Dataset {
        instances: dataset
            .instances
            .iter()
            .map(|src| Instance {
                features: src.features.clone(),
                labels: columns.iter().map(|&k| src.labels[k]).collect(),
            })
            .collect(),
        class_meta: columns
            .iter()
            .map(|&k| dataset.class_meta[k].clone())
            .collect(),
        n_classes: columns.len(),
        d_in: dataset.d_in,
        generator_config: dataset.generator_config.clone(),
        seed: dataset.seed,
    })
}

fn columns_for(dataset: &Dataset, class_ids: &[usize]) -> Result<Vec<usize>> {
    class_ids
        .iter()
        .map(|&id| {
            dataset
                .class_meta
                .iter()
                .position(|m| m.class_id == id)
                .ok_or_else(|| Error::Validation(format!("class {id} not in dataset")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetBalance {
    pub imbalance_ratio: f64,
    /// `max p_i - min p_i` within the subset.
    pub probability_gap: f64,
    /// Off-diagonal co-occurrence count retained in the subset.
    pub cooccurrence_mass: usize,
    pub exceeds_original: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub original_ratio: f64,
    pub original_gap: f64,
    pub original_cooccurrence_mass: usize,
    pub subsets: Vec<SubsetBalance>,
}

impl BalanceReport {
    pub fn total_subset_cooccurrence(&self) -> usize {
        self.subsets.iter().map(|s| s.cooccurrence_mass).sum()
    }
}

fn prob_gap(stats: &ClassStats) -> f64 {
    let max = stats
        .sampling_probs
        .iter()
        .copied()
        .fold(f64::MIN, f64::max);
    let min = stats
        .sampling_probs
        .iter()
        .copied()
        .fold(f64::MAX, f64::min);
    max - min
}

pub fn balance_report(original: &ClassStats, subsets: &[ClassStats]) -> BalanceReport {
    BalanceReport {
        original_ratio: original.imbalance_ratio,
        original_gap: prob_gap(original),
        original_cooccurrence_mass: original.off_diagonal_mass(),
        subsets: subsets
            .iter()
            .map(|s| SubsetBalance {
                imbalance_ratio: s.imbalance_ratio,
                probability_gap: prob_gap(s),
                cooccurrence_mass: s.off_diagonal_mass(),
                exceeds_original: s.imbalance_ratio > original.imbalance_ratio,
            })
            .collect(),
    }
}
