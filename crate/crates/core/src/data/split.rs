use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config(format!(
                "split ratios must be positive: {r:?}"
            )));
        }
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1: {r:?}")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Indices into the source dataset, per split, in ascending order.
    pub indices: [Vec<usize>; 3],
    pub warnings: Vec<String>,
}

/// Stratified train/val/test split for multi-label data.
///
/// Classes are processed rarest first. Each class first seeds any split that
/// still lacks one of its positives, then its remaining instances go to the
/// split with the largest unmet share of that class. Split sizes are fixed
/// up front (`round(N · ratio)` for val and test) and never exceeded.
/// A class with fewer positives than splits goes entirely to train.
pub fn split(dataset: &Dataset, ratios: SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let n_inst = dataset.len();
    let r = ratios.as_array();
    let val = (n_inst as f64 * r[1]).round() as usize;
    let test = ((n_inst as f64 * r[2]).round() as usize).min(n_inst - val.min(n_inst));
    let mut capacity = [n_inst - val - test, val, test];

    let n = dataset.n_classes;
    let mut assigned: Vec<Option<usize>> = vec![None; n_inst];
    let mut per_class = vec![[0usize; 3]; n];
    let mut warnings = Vec::new();
    let mut order_rng = rng::stream(seed, "split/order");

    let totals: Vec<usize> = (0..n)
        .map(|c| dataset.instances.iter().filter(|x| x.labels[c]).count())
        .collect();
    let mut classes: Vec<usize> = (0..n).collect();
    classes.sort_by_key(|&c| (totals[c], c));

    let place = |i: usize,
                 s: usize,
                 assigned: &mut Vec<Option<usize>>,
                 per_class: &mut Vec<[usize; 3]>,
                 capacity: &mut [usize; 3]| {
        assigned[i] = Some(s);
        capacity[s] -= 1;
        for c in dataset.instances[i].positives() {
            per_class[c][s] += 1;
        }
    };

    for &c in &classes {
        let mut pool: Vec<usize> = (0..n_inst)
            .filter(|&i| assigned[i].is_none() && dataset.instances[i].labels[c])
            .collect();
        pool.shuffle(&mut order_rng);
        if totals[c] < 3 {
            if totals[c] > 0 {
                warnings.push(format!(
                    "class {c} has {} positive instance(s); kept in train",
                    totals[c]
                ));
            }
            for i in pool {
                let s = if capacity[0] > 0 {
                    0
                } else {
                    pick_by_capacity(&capacity)
                };
                place(i, s, &mut assigned, &mut per_class, &mut capacity);
            }
            continue;
        }
        let mut rest = Vec::with_capacity(pool.len());
        let mut it = pool.into_iter();
        for s in [1, 2, 0] {
            if per_class[c][s] == 0 && capacity[s] > 0 {
                if let Some(i) = it.next() {
                    place(i, s, &mut assigned, &mut per_class, &mut capacity);
                }
            }
        }
        rest.extend(it);
        for i in rest {
            let s = (0..3)
                .filter(|&s| capacity[s] > 0)
                .max_by(|&a, &b| {
                    let da = totals[c] as f64 * r[a] - per_class[c][a] as f64;
                    let db = totals[c] as f64 * r[b] - per_class[c][b] as f64;
                    da.total_cmp(&db)
                        .then(capacity[a].cmp(&capacity[b]))
                        .then(b.cmp(&a))
                })
                .expect("total capacity equals instance count");
            place(i, s, &mut assigned, &mut per_class, &mut capacity);
        }
    }

    let mut leftovers: Vec<usize> = (0..n_inst).filter(|&i| assigned[i].is_none()).collect();
    leftovers.shuffle(&mut order_rng);
    for i in leftovers {
        let s = pick_by_capacity(&capacity);
        place(i, s, &mut assigned, &mut per_class, &mut capacity);
    }

    let mut indices: [Vec<usize>; 3] = Default::default();
    for (i, s) in assigned.iter().enumerate() {
        indices[s.expect("every instance placed")].push(i);
    }
    Ok(Split {
        train: dataset.subset(&indices[0]),
        val: dataset.subset(&indices[1]),
        test: dataset.subset(&indices[2]),
        indices,
        warnings,
    })
}

fn pick_by_capacity(capacity: &[usize; 3]) -> usize {
    (0..3)
        .max_by(|&a, &b| capacity[a].cmp(&capacity[b]).then(b.cmp(&a)))
        .expect("three splits")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GeneratorConfig, Instance};

    fn single_label(n_inst: usize, n_classes: usize) -> Dataset {
        let cfg = GeneratorConfig {
            n_classes,
            head_count: 10,
            imbalance_ratio: 1.0,
            cooccurrence: 0.0,
            ..Default::default()
        };
        let mut ds = generate_synthetic(&cfg, 1).unwrap();
        ds.instances = (0..n_inst)
            .map(|i| Instance {
                features: vec![0.0; ds.d_in],
                labels: (0..n_classes).map(|c| c == i % n_classes).collect(),
            })
            .collect();
        ds
    }

    #[test]
    fn sizes_follow_ratios() {
        let ds = single_label(100, 5);
        let s = split(&ds, SplitRatios::default(), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
        for c in 0..5 {
            for part in [&s.train, &s.val, &s.test] {
                assert!(part.instances.iter().any(|x| x.labels[c]));
            }
        }
    }

    #[test]
    fn zero_ratio_rejected() {
        let ds = single_label(10, 3);
        let r = SplitRatios {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        };
        assert!(matches!(split(&ds, r, 1), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_membership() {
        let ds = generate_synthetic(
            &GeneratorConfig {
                head_count: 200,
                ..Default::default()
            },
            4,
        )
        .unwrap();
        let a = split(&ds, SplitRatios::default(), 11).unwrap();
        let b = split(&ds, SplitRatios::default(), 11).unwrap();
        assert_eq!(a.indices, b.indices);
        let total: usize = a.indices.iter().map(Vec::len).sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn rare_class_stays_in_train() {
        let mut ds = single_label(30, 3);
        // class 2 now appears exactly twice
        let mut seen = 0;
        for x in &mut ds.instances {
            if x.labels[2] {
                seen += 1;
                if seen > 2 {
                    x.labels = vec![true, false, false];
                }
            }
        }
        let s = split(&ds, SplitRatios::default(), 2).unwrap();
        assert_eq!(s.train.instances.iter().filter(|x| x.labels[2]).count(), 2);
        assert_eq!(s.warnings.len(), 1);
    }
}
