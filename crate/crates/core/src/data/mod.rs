//! Synthetic long-tailed multi-label data.

mod generate;
mod io;
mod split;
mod stats;

use serde::{Deserialize, Serialize};

pub use generate::{generate_synthetic, target_counts, GeneratorConfig};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_VERSION};
pub use split::{split, Split, SplitRatios};
pub use stats::{class_stats, ClassStats};

use crate::error::{Error, Result};
use crate::nnet::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    OpticDisc,
    Macula,
    Vessels,
    Global,
}

impl RegionTag {
    /// Fixed ordering; also the order of feature blocks.
    pub const ALL: [RegionTag; 4] = [
        RegionTag::OpticDisc,
        RegionTag::Macula,
        RegionTag::Vessels,
        RegionTag::Global,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMeta {
    pub class_id: usize,
    pub region_tag: RegionTag,
    pub feature_signature: Vec<f64>,
    pub target_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<f64>,
    /// One flag per class.
    pub labels: Vec<bool>,
}

impl Instance {
    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(c, &on)| on.then_some(c))
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub class_meta: Vec<ClassMeta>,
    pub n_classes: usize,
    pub d_in: usize,
    pub generator_config: Option<GeneratorConfig>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Checks widths, finiteness, and metadata consistency.
    pub fn validate(&self) -> Result<()> {
        if self.class_meta.len() != self.n_classes {
            return Err(Error::Validation(format!(
                "{} class records for {} classes",
                self.class_meta.len(),
                self.n_classes
            )));
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.labels.len() != self.n_classes {
                return Err(Error::Validation(format!(
                    "instance {i}: label width {} != {}",
                    inst.labels.len(),
                    self.n_classes
                )));
            }
            if inst.features.len() != self.d_in {
                return Err(Error::Validation(format!(
                    "instance {i}: {} features, expected {}",
                    inst.features.len(),
                    self.d_in
                )));
            }
            if inst.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "instance {i}: non-finite feature"
                )));
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            ..self.without_instances()
        }
    }

    pub(crate) fn without_instances(&self) -> Dataset {
        Dataset {
            instances: Vec::new(),
            class_meta: self.class_meta.clone(),
            n_classes: self.n_classes,
            d_in: self.d_in,
            generator_config: self.generator_config.clone(),
            seed: self.seed,
        }
    }

    /// Features of the given rows as a `[rows, d_in]` tensor.
    pub fn feature_batch(&self, indices: &[usize]) -> Tensor {
        let mut values = Vec::with_capacity(indices.len() * self.d_in);
        for &i in indices {
            values.extend_from_slice(&self.instances[i].features);
        }
        Tensor::new(vec![indices.len(), self.d_in], values).expect("validated widths")
    }

    /// Row-major `[rows, n_classes]` label flags.
    pub fn label_batch(&self, indices: &[usize]) -> Vec<bool> {
        indices
            .iter()
            .flat_map(|&i| self.instances[i].labels.iter().copied())
            .collect()
    }

    pub fn all_features(&self) -> Tensor {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.feature_batch(&idx)
    }

    /// Labels of one class across all instances.
    pub fn class_column(&self, class: usize) -> Vec<bool> {
        self.instances.iter().map(|x| x.labels[class]).collect()
    }
}
