use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ClassMeta, Dataset, Instance, RegionTag};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_classes: usize,
    /// Signature width; the feature vector holds one block of this width per region.
    pub d_sig: usize,
    /// Target count of the largest class.
    pub head_count: usize,
    pub imbalance_ratio: f64,
    /// Co-occurrence strength κ in [0, 1].
    pub cooccurrence: f64,
    /// Per-feature Gaussian noise σ.
    pub noise: f64,
    /// Amplitude of a class's signature in its region block.
    pub signal_scale: f64,
    /// Number of signature families (classes sharing a prototype).
    pub n_families: usize,
    /// Spread of class signatures around their family prototype.
    pub family_spread: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_classes: 20,
            d_sig: 16,
            head_count: 1140,
            imbalance_ratio: 100.0,
            cooccurrence: 0.3,
            noise: 0.25,
            signal_scale: 1.0,
            n_families: 5,
            family_spread: 1.0,
        }
    }
}

impl GeneratorConfig {
    pub fn d_in(&self) -> usize {
        RegionTag::ALL.len() * self.d_sig
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_classes < 3 {
            return fail(format!("need at least 3 classes, got {}", self.n_classes));
        }
        if self.d_sig == 0 || self.head_count == 0 || self.n_families == 0 {
            return fail("d_sig, head_count and n_families must be positive".into());
        }
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return fail(format!(
                "imbalance ratio must be >= 1, got {}",
                self.imbalance_ratio
            ));
        }
        if !(0.0..=1.0).contains(&self.cooccurrence) {
            return fail(format!(
                "co-occurrence must lie in [0, 1], got {}",
                self.cooccurrence
            ));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("signal_scale", self.signal_scale),
            ("family_spread", self.family_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// `round(head · ρ^(−i/(n−1)))` for each class rank `i`.
pub fn target_counts(cfg: &GeneratorConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = cfg.n_classes;
    let counts: Vec<usize> = (0..n)
        .map(|i| {
            let decay = cfg.imbalance_ratio.powf(-(i as f64) / (n - 1) as f64);
            (cfg.head_count as f64 * decay).round() as usize
        })
        .collect();
    if counts[n - 1] == 0 {
        return Err(Error::Config(format!(
            "tail class count rounds to 0 (head {}, ratio {})",
            cfg.head_count, cfg.imbalance_ratio
        )));
    }
    Ok(counts)
}

fn unit_gaussian(r: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max(cos(sig_i, sig_j), 0.5 · same_region)` clipped to [0, 1].
fn affinity(a: &ClassMeta, b: &ClassMeta) -> f64 {
    let region = if a.region_tag == b.region_tag {
        0.5
    } else {
        0.0
    };
    cosine(&a.feature_signature, &b.feature_signature)
        .max(region)
        .clamp(0.0, 1.0)
}

fn class_meta(cfg: &GeneratorConfig, counts: &[usize], seed: u64) -> Vec<ClassMeta> {
    let n = cfg.n_classes;
    let mut regions: Vec<RegionTag> = (0..n).map(|i| RegionTag::ALL[i % 4]).collect();
    regions.shuffle(&mut rng::stream(seed, "data/regions"));
    let mut families: Vec<usize> = (0..n).map(|i| i % cfg.n_families).collect();
    families.shuffle(&mut rng::stream(seed, "data/families"));

    let mut sig_rng = rng::stream(seed, "data/signatures");
    let prototypes: Vec<Vec<f64>> = (0..cfg.n_families)
        .map(|_| unit_gaussian(&mut sig_rng, cfg.d_sig))
        .collect();
    let spread = cfg.family_spread / (cfg.d_sig as f64).sqrt();
    (0..n)
        .map(|c| {
            let proto = &prototypes[families[c]];
            let raw: Vec<f64> = proto
                .iter()
                .map(|p| p + spread * sig_rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            ClassMeta {
                class_id: c,
                region_tag: regions[c],
                feature_signature: raw.iter().map(|x| x / norm).collect(),
                target_count: counts[c],
            }
        })
        .collect()
}

/// Generates a long-tailed multi-label dataset whose per-class positive
/// counts equal the exponential target profile exactly.
///
/// Each class `j` splits its target into primary instances and co-occurring
/// labels attached to other classes' instances. The co-occurring share is
/// `κ · max_i affinity(i, j)`, and hosts are drawn with probability
/// proportional to the affinity between their primary class and `j`.
pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<Dataset> {
    let counts = target_counts(cfg)?;
    let n = cfg.n_classes;
    let meta = class_meta(cfg, &counts, seed);

    let aff: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        affinity(&meta[i], &meta[j])
                    }
                })
                .collect()
        })
        .collect();
    let extra: Vec<usize> = (0..n)
        .map(|j| {
            let share = cfg.cooccurrence * aff.iter().map(|row| row[j]).fold(0.0, f64::max);
            ((counts[j] as f64 * share).round() as usize).min(counts[j] - 1)
        })
        .collect();

    // primary class per instance
    let mut primary: Vec<usize> = (0..n)
        .flat_map(|j| std::iter::repeat_n(j, counts[j] - extra[j]))
        .collect();
    primary.shuffle(&mut rng::stream(seed, "data/order"));
    let mut labels: Vec<Vec<bool>> = primary
        .iter()
        .map(|&p| (0..n).map(|c| c == p).collect())
        .collect();

    let mut host_rng = rng::stream(seed, "data/cooccurrence");
    for j in 0..n {
        if extra[j] == 0 {
            continue;
        }
        // weighted sampling without replacement via exponential keys
        let mut keyed: Vec<(f64, usize)> = primary
            .iter()
            .enumerate()
            .filter(|&(i, &p)| !labels[i][j] && aff[p][j] > 0.0)
            .map(|(i, &p)| {
                let u: f64 = host_rng.random_range(f64::EPSILON..1.0);
                (u.ln() / aff[p][j], i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let hosts = keyed.len().min(extra[j]);
        for &(_, i) in &keyed[..hosts] {
            labels[i][j] = true;
        }
        // not enough hosts: the shortfall becomes primary instances
        for _ in hosts..extra[j] {
            primary.push(j);
            labels.push((0..n).map(|c| c == j).collect());
        }
    }

    let d_sig = cfg.d_sig;
    let mut noise_rng = rng::stream(seed, "data/noise");
    let instances = labels
        .into_iter()
        .map(|lab| {
            let mut features: Vec<f64> = (0..cfg.d_in())
                .map(|_| cfg.noise * noise_rng.sample::<f64, _>(StandardNormal))
                .collect();
            for c in (0..n).filter(|&c| lab[c]) {
                let block = meta[c].region_tag.index() * d_sig;
                for (k, s) in meta[c].feature_signature.iter().enumerate() {
                    features[block + k] += cfg.signal_scale * s;
                }
            }
            Instance {
                features,
                labels: lab,
            }
        })
        .collect();

    let ds = Dataset {
        instances,
        class_meta: meta,
        n_classes: n,
        d_in: cfg.d_in(),
        generator_config: Some(cfg.clone()),
        seed: Some(seed),
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::class_stats;

    #[test]
    fn target_profile_spans_the_ratio() {
        let cfg = GeneratorConfig {
            n_classes: 10,
            head_count: 1000,
            ..Default::default()
        };
        let c = target_counts(&cfg).unwrap();
        assert_eq!(c[0], 1000);
        assert_eq!(c[9], 10);
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
        // 1000 · 100^(−1/9) = 599.48
        assert_eq!(c[1], 599);
    }

    #[test]
    fn infeasible_ratio_is_rejected() {
        let cfg = GeneratorConfig {
            head_count: 10,
            imbalance_ratio: 1000.0,
            ..Default::default()
        };
        assert!(matches!(target_counts(&cfg), Err(Error::Config(_))));
        let bad = GeneratorConfig {
            imbalance_ratio: 0.5,
            ..Default::default()
        };
        assert!(generate_synthetic(&bad, 1).is_err());
        let two = GeneratorConfig {
            n_classes: 2,
            ..Default::default()
        };
        assert!(generate_synthetic(&two, 1).is_err());
    }

    #[test]
    fn realized_counts_match_targets() {
        let cfg = GeneratorConfig::default();
        let ds = generate_synthetic(&cfg, 3).unwrap();
        let stats = class_stats(&ds).unwrap();
        let targets = target_counts(&cfg).unwrap();
        for (c, (&got, &want)) in stats.counts.iter().zip(&targets).enumerate() {
            let tol = 0.2 * want as f64;
            assert!(
                (got as f64 - want as f64).abs() <= tol,
                "class {c}: {got} vs {want}"
            );
        }
        assert!(stats.imbalance_ratio >= 80.0 && stats.imbalance_ratio <= 125.0);
        for m in &ds.class_meta {
            let norm: f64 = m
                .feature_signature
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
        assert!(ds.instances.iter().all(|x| x.n_positive() >= 1));
        assert!(ds.instances.iter().any(|x| x.n_positive() >= 2));
    }

    #[test]
    fn zero_cooccurrence_gives_single_labels() {
        let cfg = GeneratorConfig {
            cooccurrence: 0.0,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg, 5).unwrap();
        assert!(ds.instances.iter().all(|x| x.n_positive() == 1));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig {
            head_count: 200,
            ..Default::default()
        };
        assert_eq!(
            generate_synthetic(&cfg, 9).unwrap(),
            generate_synthetic(&cfg, 9).unwrap()
        );
        assert_ne!(
            generate_synthetic(&cfg, 9).unwrap(),
            generate_synthetic(&cfg, 10).unwrap()
        );
    }
}
