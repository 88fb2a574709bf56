use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    /// Number of instances (not labels).
    pub n_all: usize,
    /// `N_i / N_all`; may sum above 1 under multi-label data.
    pub sampling_probs: Vec<f64>,
    /// Symmetric pair counts; the diagonal equals `counts`.
    pub cooccurrence: Vec<Vec<usize>>,
    /// `max N_i / min N_i` (infinite if some class has no positives).
    pub imbalance_ratio: f64,
}

impl ClassStats {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    /// Sum of the off-diagonal co-occurrence entries (each pair counted twice).
    pub fn off_diagonal_mass(&self) -> usize {
        self.cooccurrence
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &v)| v)
                    .sum::<usize>()
            })
            .sum()
    }
}

pub fn class_stats(dataset: &Dataset) -> Result<ClassStats> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput(
            "class statistics need at least one instance".into(),
        ));
    }
    let n = dataset.n_classes;
    let mut counts = vec![0usize; n];
    let mut cooc = vec![vec![0usize; n]; n];
    for inst in &dataset.instances {
        let pos: Vec<usize> = inst.positives().collect();
        for &a in &pos {
            counts[a] += 1;
            for &b in &pos {
                cooc[a][b] += 1;
            }
        }
    }
    let n_all = dataset.len();
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().min().unwrap_or(0);
    let imbalance_ratio = if min == 0 {
        f64::INFINITY
    } else {
        max as f64 / min as f64
    };
    Ok(ClassStats {
        sampling_probs: counts.iter().map(|&c| c as f64 / n_all as f64).collect(),
        counts,
        n_all,
        cooccurrence: cooc,
        imbalance_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassMeta, Instance, RegionTag};

    pub(crate) fn toy(labels: &[&[usize]], n: usize) -> Dataset {
        Dataset {
            instances: labels
                .iter()
                .map(|ls| Instance {
                    features: vec![0.0],
                    labels: (0..n).map(|c| ls.contains(&c)).collect(),
                })
                .collect(),
            class_meta: (0..n)
                .map(|c| ClassMeta {
                    class_id: c,
                    region_tag: RegionTag::Global,
                    feature_signature: vec![1.0],
                    target_count: 1,
                })
                .collect(),
            n_classes: n,
            d_in: 1,
            generator_config: None,
            seed: None,
        }
    }

    #[test]
    fn hand_counted_example() {
        let s = class_stats(&toy(&[&[0], &[0], &[1]], 2)).unwrap();
        assert_eq!(s.counts, vec![2, 1]);
        assert_eq!(s.n_all, 3);
        assert!((s.sampling_probs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.sampling_probs[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.imbalance_ratio, 2.0);
    }

    #[test]
    fn pair_counts() {
        let s = class_stats(&toy(&[&[0, 1]], 2)).unwrap();
        assert_eq!(s.cooccurrence, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(s.off_diagonal_mass(), 2);
    }

    #[test]
    fn all_labels_everywhere() {
        let s = class_stats(&toy(&[&[0, 1, 2], &[0, 1, 2]], 3)).unwrap();
        assert!(s.sampling_probs.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(matches!(
            class_stats(&toy(&[], 2)),
            Err(Error::EmptyInput(_))
        ));
    }
}
