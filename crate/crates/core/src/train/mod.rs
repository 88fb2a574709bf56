//! Two-stage training: one teacher per class subset, then a unified student
//! distilled from all of them with per-class weights refreshed every epoch.

mod run_io;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use run_io::{
    load_run, parse_weights_csv, read_manifest, read_verified, save_run, save_teachers, sha256_hex,
    RunManifest, RunRecord, WeightRow, RUN_FORMAT_VERSION,
};

use crate::data::Dataset;
use crate::distill::{
    assemble_teacher_logits, bce_batch, composite_loss, KdWeights, KlDirection, LossOptions,
    Temperature, WeightMode,
};
use crate::error::{Error, Result};
use crate::eval::per_class_ap;
use crate::nnet::{AdamState, MlpNetwork, PlateauSchedule, Tensor};
use crate::subsets::SubsetSpec;
use crate::{par, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub floor_lr: f64,
    pub patience: usize,
    pub factor: f64,
    pub batch_size: usize,
    pub hidden_dims: Vec<usize>,
    pub temperature: Temperature,
    pub delta: f64,
    pub weight_mode: WeightMode,
    pub kl_direction: KlDirection,
    pub scale_kd_by_t_squared: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            initial_lr: 1e-4,
            floor_lr: 1e-7,
            patience: 5,
            factor: 0.1,
            batch_size: 4,
            hidden_dims: vec![32],
            temperature: Temperature::new(10.0).expect("positive"),
            delta: 0.6,
            weight_mode: WeightMode::Dynamic,
            kl_direction: KlDirection::StudentFirst,
            scale_kd_by_t_squared: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.initial_lr > 0.0 && self.floor_lr > 0.0 && self.initial_lr >= self.floor_lr) {
            return fail(format!(
                "learning rates must satisfy 0 < floor ({}) <= initial ({})",
                self.floor_lr, self.initial_lr
            ));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return fail(format!(
                "plateau factor must lie in (0, 1), got {}",
                self.factor
            ));
        }
        if self.patience == 0 || self.batch_size == 0 {
            return fail("patience and batch size must be positive".into());
        }
        if self.hidden_dims.contains(&0) {
            return fail(format!(
                "hidden dims must be positive: {:?}",
                self.hidden_dims
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        Ok(())
    }

    pub fn layer_dims(&self, d_in: usize, n_classes: usize) -> Vec<usize> {
        let mut dims = vec![d_in];
        dims.extend(&self.hidden_dims);
        dims.push(2 * n_classes);
        dims
    }

    fn loss_options(&self) -> LossOptions {
        LossOptions {
            temperature: self.temperature,
            direction: self.kl_direction,
            scale_by_t_squared: self.scale_kd_by_t_squared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherRun {
    pub subset: SubsetSpec,
    pub model: MlpNetwork,
    /// Validation AP per subset class, in `subset.class_ids` order.
    pub per_class_val_acc: Vec<f64>,
    pub curve: Vec<EpochRecord>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentRun {
    pub model: MlpNetwork,
    pub mode: WeightMode,
    /// Weights in force during each trained epoch.
    pub weight_history: Vec<KdWeights>,
    pub curve: Vec<EpochRecord>,
    pub seed: u64,
}

/// Teacher seed for subset `k`, independent of training order.
pub fn teacher_seed(master_seed: u64, subset_id: usize) -> u64 {
    rng::derive_seed(master_seed, &format!("teacher/{subset_id}"))
}

pub fn student_seed(master_seed: u64) -> u64 {
    rng::derive_seed(master_seed, "student")
}

/// Per-class AP with undefined entries (no positives) mapped to 0.
fn ap_or_zero(model: &MlpNetwork, data: &Dataset) -> Result<(Vec<f64>, Vec<usize>)> {
    let ap = per_class_ap(model, data)?;
    let missing = (0..ap.len()).filter(|&c| ap[c].is_none()).collect();
    Ok((ap.into_iter().map(|a| a.unwrap_or(0.0)).collect(), missing))
}

fn val_bce(model: &MlpNetwork, val: &Dataset) -> Result<f64> {
    if val.is_empty() {
        return Ok(0.0);
    }
    let idx: Vec<usize> = (0..val.len()).collect();
    let logits = model.forward(&val.feature_batch(&idx))?;
    Ok(bce_batch(&logits, &val.label_batch(&idx))?.0)
}

/// Teacher logits for every training row, in student class order.
struct TeacherCache {
    logits: Tensor,
}

impl TeacherCache {
    fn build(teachers: &[TeacherRun], train: &Dataset) -> Result<Self> {
        let feats = train.all_features();
        let outs = par::map_indexed(teachers.len(), |k| teachers[k].model.forward(&feats));
        let outs = outs.into_iter().collect::<Result<Vec<_>>>()?;
        let parts: Vec<(&[usize], &Tensor)> = teachers
            .iter()
            .zip(&outs)
            .map(|(t, o)| (t.subset.class_ids.as_slice(), o))
            .collect();
        Ok(Self {
            logits: assemble_teacher_logits(train.n_classes, &parts)?,
        })
    }

    fn rows(&self, idx: &[usize]) -> Tensor {
        let w = self.logits.cols();
        let mut v = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            v.extend_from_slice(self.logits.row(i));
        }
        Tensor::new(vec![idx.len(), w], v).expect("sized")
    }
}

struct Distillation<'a> {
    cache: Option<TeacherCache>,
    weights: KdWeights,
    mode: WeightMode,
    history: &'a mut Vec<KdWeights>,
}

/// Minibatch Adam with a plateau schedule on validation BCE. With a
/// `Distillation`, weights are refreshed from validation AP at the start of
/// every epoch and the composite objective is optimized.
fn fit(
    net: &mut MlpNetwork,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
    mut kd: Option<Distillation<'_>>,
) -> Result<Vec<EpochRecord>> {
    let mut adam = AdamState::new(net);
    let mut schedule = PlateauSchedule::new(cfg.initial_lr, cfg.floor_lr, cfg.patience, cfg.factor);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = rng::stream(seed, "train/shuffle");
    let opts = cfg.loss_options();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if let Some(kd) = kd.as_mut() {
            let (acc, _) = ap_or_zero(net, val)?;
            kd.weights.update(&acc, kd.mode);
            kd.history.push(kd.weights.clone());
        }
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let batch = train.feature_batch(idx);
            let labels = train.label_batch(idx);
            let trace = net.forward_trace(&batch)?;
            let (loss, upstream) = match kd.as_ref() {
                Some(kd) if kd.weights.weights.iter().any(|&w| w != 0.0) => {
                    let teacher = kd.cache.as_ref().map(|c| c.rows(idx));
                    composite_loss(
                        trace.logits(),
                        &labels,
                        teacher.as_ref(),
                        &kd.weights.weights,
                        &opts,
                    )?
                }
                _ => bce_batch(trace.logits(), &labels)?,
            };
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    layer: net.layers().len() - 1,
                    detail: format!("non-finite training loss at epoch {epoch}"),
                });
            }
            let grads = net.backward_trace(&trace, &upstream)?;
            adam.step(net, &grads, schedule.current_lr)?;
            loss_sum += loss;
            batches += 1;
        }
        let val_loss = val_bce(net, val)?;
        curve.push(EpochRecord {
            epoch,
            train_loss: if batches > 0 {
                loss_sum / batches as f64
            } else {
                0.0
            },
            val_loss,
            lr: schedule.current_lr,
        });
        if schedule.update(val_loss) {
            log::debug!("plateau floor reached after epoch {epoch}");
            break;
        }
    }
    Ok(curve)
}

fn check_compatible(train: &Dataset, val: &Dataset) -> Result<()> {
    if train.n_classes != val.n_classes || train.d_in != val.d_in {
        return Err(Error::Shape(format!(
            "train is {}x{} but validation is {}x{}",
            train.d_in, train.n_classes, val.d_in, val.n_classes
        )));
    }
    if train.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    Ok(())
}

/// Trains one teacher with BCE over its subset's classes.
///
/// `train` is the materialized subset; `val` is the validation split
/// projected onto the same classes. The returned accuracies are the
/// per-class validation APs, frozen from here on.
pub fn train_teacher(
    subset: &SubsetSpec,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TeacherRun> {
    cfg.validate()?;
    check_compatible(train, val)?;
    let mut model = MlpNetwork::init(&cfg.layer_dims(train.d_in, train.n_classes), seed)?;
    let curve = fit(&mut model, train, val, cfg, seed, None)?;
    let (acc, missing) = ap_or_zero(&model, val)?;
    let warnings: Vec<String> = missing
        .iter()
        .map(|&k| {
            format!(
                "teacher {}: class {} has no validation positives; accuracy set to 0",
                subset.subset_id, subset.class_ids[k]
            )
        })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(TeacherRun {
        subset: subset.clone(),
        model,
        per_class_val_acc: acc,
        curve,
        seed,
        warnings,
    })
}

/// Trains every teacher of a plan, concurrently when the `parallel` feature
/// is on. Results are in subset order and do not depend on scheduling.
pub fn train_teachers(
    jobs: &[(SubsetSpec, Dataset, Dataset)],
    cfg: &TrainConfig,
    master_seed: u64,
) -> Result<Vec<TeacherRun>> {
    par::map_indexed(jobs.len(), |k| {
        let (spec, train, val) = &jobs[k];
        train_teacher(
            spec,
            train,
            val,
            cfg,
            teacher_seed(master_seed, spec.subset_id),
        )
    })
    .into_iter()
    .collect()
}

/// Plain BCE training over all classes.
pub fn train_student_erm(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<StudentRun> {
    run_student(train, val, &[], cfg, WeightMode::Off, seed)
}

/// Trains the unified student against frozen teachers whose subsets must
/// partition the classes. Uses `cfg.weight_mode` for the per-class weights.
pub fn distill_student(
    train: &Dataset,
    val: &Dataset,
    teachers: &[TeacherRun],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<StudentRun> {
    run_student(train, val, teachers, cfg, cfg.weight_mode, seed)
}

fn run_student(
    train: &Dataset,
    val: &Dataset,
    teachers: &[TeacherRun],
    cfg: &TrainConfig,
    mode: WeightMode,
    seed: u64,
) -> Result<StudentRun> {
    cfg.validate()?;
    check_compatible(train, val)?;
    let n = train.n_classes;
    let mut teacher_acc = vec![0.0; n];
    let cache = if mode == WeightMode::Off {
        None
    } else {
        for t in teachers {
            if t.model.input_dim() != train.d_in {
                return Err(Error::Shape(format!(
                    "teacher {} takes {} inputs, student data has {}",
                    t.subset.subset_id,
                    t.model.input_dim(),
                    train.d_in
                )));
            }
            for (&c, &a) in t.subset.class_ids.iter().zip(&t.per_class_val_acc) {
                if c < n {
                    teacher_acc[c] = a;
                }
            }
        }
        Some(TeacherCache::build(teachers, train)?)
    };

    let mut model = MlpNetwork::init(&cfg.layer_dims(train.d_in, n), seed)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let kd = Distillation {
        cache,
        weights: KdWeights::new(teacher_acc, cfg.delta)?,
        mode,
        history: &mut history,
    };
    let curve = fit(&mut model, train, val, cfg, seed, Some(kd))?;
    Ok(StudentRun {
        model,
        mode,
        weight_history: history,
        curve,
        seed,
    })
}
