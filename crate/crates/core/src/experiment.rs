//! End-to-end experiments: split, subset generation, teacher training,
//! distillation, evaluation against an ERM baseline, and run directories.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{self, class_stats, Dataset, GeneratorConfig, Split, SplitRatios};
use crate::distill::WeightMode;
use crate::error::{Error, Result};
use crate::eval::{compare_runs, evaluate, Comparison, EvalReport, GroupAssignment, Provenance};
use crate::nnet::MlpNetwork;
use crate::rng;
use crate::subsets::{
    balance_report, materialize_subset, BalanceReport, StrategyKind, SubsetPlan, SubsetStrategy,
};
use crate::train::{
    distill_student, load_run, read_manifest, read_verified, save_run, save_teachers, sha256_hex,
    student_seed, train_student_erm, train_teachers, RunRecord, StudentRun, TeacherRun,
    TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: GeneratorConfig,
    pub split: SplitRatios,
    pub strategy: StrategyKind,
    /// Rank cut points for the shot rule; rank tertiles when absent.
    pub shot_boundaries: Option<[usize; 2]>,
    pub feature_groups: usize,
    pub negative_fraction: f64,
    /// `false` trains the ERM baseline only.
    pub kd: bool,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: GeneratorConfig::default(),
            split: SplitRatios::default(),
            strategy: StrategyKind::ShotBased,
            shot_boundaries: None,
            feature_groups: 5,
            negative_fraction: 0.25,
            kd: true,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.negative_fraction) {
            return Err(Error::Config(format!(
                "negative fraction must lie in [0, 1], got {}",
                self.negative_fraction
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_json()?.as_bytes()))
    }

    pub fn subset_strategy(&self) -> SubsetStrategy {
        match self.strategy {
            StrategyKind::ShotBased => SubsetStrategy::ShotBased {
                boundaries: self.shot_boundaries,
            },
            StrategyKind::RegionBased => SubsetStrategy::RegionBased,
            StrategyKind::FeatureBased => SubsetStrategy::FeatureBased {
                n_groups: self.feature_groups,
            },
        }
    }

    /// Row label used in comparison tables.
    pub fn run_label(&self) -> String {
        let rule = match self.strategy {
            StrategyKind::ShotBased => "shot",
            StrategyKind::RegionBased => "region",
            StrategyKind::FeatureBased => "feature",
        };
        let t = self.train.temperature.get();
        match (self.kd, self.train.weight_mode) {
            (false, _) | (true, WeightMode::Off) => "erm".to_string(),
            (true, WeightMode::Fixed) => format!("kd-fixed T={t} ({rule})"),
            (true, WeightMode::Dynamic) => format!("weighted T={t} ({rule})"),
        }
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name,
            source: Box::new(e),
        },
    })
}

/// Generates a dataset file and returns it together with its content hash.
pub fn gen_data(cfg: &GeneratorConfig, seed: u64, out: &Path) -> Result<(Dataset, String)> {
    let ds = data::generate_synthetic(cfg, seed)?;
    let mut bytes = Vec::new();
    data::write_dataset(&ds, &mut bytes)?;
    std::fs::write(out, &bytes).map_err(|e| Error::io(out, e))?;
    Ok((ds, sha256_hex(&bytes)))
}

/// Loads a dataset file, returning it with the SHA-256 of its bytes.
pub fn load_dataset_hashed(path: &Path) -> Result<(Dataset, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ds = data::read_dataset(bytes.as_slice())?;
    Ok((ds, sha256_hex(&bytes)))
}

/// Stage-one products shared by every student trained on the same split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: Split,
    pub groups: GroupAssignment,
    pub plan: Option<SubsetPlan>,
    pub balance: Option<BalanceReport>,
    pub teachers: Vec<TeacherRun>,
    pub provenance: Provenance,
}

/// Splits the data and, when distillation is on, builds the subsets and
/// trains their teachers.
pub fn prepare(dataset: &Dataset, dataset_hash: &str, cfg: &ExperimentConfig) -> Result<Prepared> {
    stage("config", cfg.validate())?;
    let split = stage(
        "split",
        data::split(dataset, cfg.split, rng::derive_seed(cfg.seed, "split")),
    )?;
    for w in &split.warnings {
        log::warn!("{w}");
    }
    let train_stats = stage("split", class_stats(&split.train))?;
    let groups = stage("split", GroupAssignment::from_train_stats(&train_stats))?;
    let provenance = Provenance {
        seed: cfg.seed,
        config_hash: cfg.config_hash()?,
        dataset_hash: dataset_hash.to_string(),
        split: "test".into(),
    };
    if !cfg.kd {
        return Ok(Prepared {
            split,
            groups,
            plan: None,
            balance: None,
            teachers: Vec::new(),
            provenance,
        });
    }

    let plan = stage(
        "subsets",
        SubsetPlan::build(cfg.subset_strategy(), &train_stats, &split.train.class_meta),
    )?;
    let subset_seed = rng::derive_seed(cfg.seed, "subsets");
    let val_seed = rng::derive_seed(cfg.seed, "subsets/val");
    let jobs = stage(
        "subsets",
        plan.subsets
            .iter()
            .map(|spec| {
                Ok((
                    spec.clone(),
                    materialize_subset(&split.train, spec, cfg.negative_fraction, subset_seed)?,
                    materialize_subset(&split.val, spec, cfg.negative_fraction, val_seed)?,
                ))
            })
            .collect::<Result<Vec<_>>>(),
    )?;
    // positives-only view for the balance diagnostics
    let subset_stats = stage(
        "subsets",
        plan.subsets
            .iter()
            .map(|spec| class_stats(&materialize_subset(&split.train, spec, 0.0, subset_seed)?))
            .collect::<Result<Vec<_>>>(),
    )?;
    let balance = balance_report(&train_stats, &subset_stats);
    let teachers = stage("teachers", train_teachers(&jobs, &cfg.train, cfg.seed))?;
    Ok(Prepared {
        split,
        groups,
        plan: Some(plan),
        balance: Some(balance),
        teachers,
        provenance,
    })
}

impl Prepared {
    pub fn student_seed(&self) -> u64 {
        student_seed(self.provenance.seed)
    }

    pub fn train_erm(&self, cfg: &TrainConfig) -> Result<StudentRun> {
        stage(
            "erm",
            train_student_erm(&self.split.train, &self.split.val, cfg, self.student_seed()),
        )
    }

    pub fn train_student(&self, cfg: &TrainConfig, mode: WeightMode) -> Result<StudentRun> {
        let cfg = TrainConfig {
            weight_mode: mode,
            ..cfg.clone()
        };
        stage(
            "distill",
            distill_student(
                &self.split.train,
                &self.split.val,
                &self.teachers,
                &cfg,
                self.student_seed(),
            ),
        )
    }

    pub fn evaluate(&self, model: &MlpNetwork) -> Result<EvalReport> {
        stage(
            "evaluate",
            evaluate(
                model,
                &self.split.test,
                &self.groups,
                self.provenance.clone(),
            ),
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub label: String,
    pub report: EvalReport,
    pub baseline: Option<EvalReport>,
    pub comparison: Comparison,
}

const REPORT: &str = "report.json";
const COMPARISON_JSON: &str = "comparison.json";
const COMPARISON_TXT: &str = "comparison.txt";

/// Runs the full pipeline and writes a self-describing run directory.
/// With distillation on, an ERM baseline trained under the same seed is
/// written to `<out>/erm`. Teacher checkpoints are written as soon as they
/// exist; the manifest only once everything else is in place.
pub fn run(
    dataset: &Dataset,
    dataset_hash: &str,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<RunOutcome> {
    let prepared = prepare(dataset, dataset_hash, cfg)?;
    stage(
        "write",
        save_teachers(&prepared.teachers, &prepared.provenance.config_hash, out),
    )?;
    let label = cfg.run_label();
    let erm = prepared.train_erm(&cfg.train)?;
    let erm_model = erm.clone();
    let erm_report = prepared.evaluate(&erm.model)?;

    let (student, report, baseline) = if cfg.kd && cfg.train.weight_mode != WeightMode::Off {
        let student = prepared.train_student(&cfg.train, cfg.train.weight_mode)?;
        let report = prepared.evaluate(&student.model)?;
        (student, report, Some(erm_report))
    } else {
        (erm, erm_report, None)
    };

    let mut rows = Vec::new();
    if let Some(b) = &baseline {
        rows.push(("erm".to_string(), b.clone()));
    }
    rows.push((label.clone(), report.clone()));
    let comparison = stage("report", compare_runs(&rows))?;

    stage(
        "write",
        (|| {
            if let Some(b) = &baseline {
                let erm_cfg = ExperimentConfig {
                    kd: false,
                    ..cfg.clone()
                };
                let mut extras = BTreeMap::new();
                extras.insert(REPORT.to_string(), b.to_json()?);
                let rec = run_record(
                    &erm_cfg,
                    &prepared,
                    dataset_hash,
                    Vec::new(),
                    erm_model,
                    extras,
                )?;
                save_run(&rec, &out.join("erm"))?;
            }
            let mut extras = BTreeMap::new();
            extras.insert(REPORT.to_string(), report.to_json()?);
            extras.insert(COMPARISON_JSON.to_string(), comparison.to_json()?);
            extras.insert(COMPARISON_TXT.to_string(), comparison.to_text());
            if let Some(plan) = &prepared.plan {
                extras.insert("subsets.json".to_string(), plan.to_json()?);
            }
            if let Some(bal) = &prepared.balance {
                extras.insert(
                    "balance.json".to_string(),
                    serde_json::to_string_pretty(bal)?,
                );
            }
            let rec = run_record(
                cfg,
                &prepared,
                dataset_hash,
                prepared.teachers.clone(),
                student,
                extras,
            )?;
            save_run(&rec, out)?;
            Ok(())
        })(),
    )?;

    Ok(RunOutcome {
        label,
        report,
        baseline,
        comparison,
    })
}

fn run_record(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    dataset_hash: &str,
    teachers: Vec<TeacherRun>,
    student: StudentRun,
    extras: BTreeMap<String, String>,
) -> Result<RunRecord> {
    let strategy = if cfg.kd {
        serde_json::to_value(cfg.strategy)?
            .as_str()
            .map(String::from)
    } else {
        None
    };
    Ok(RunRecord {
        config: serde_json::to_value(cfg)?,
        config_hash: cfg.config_hash()?,
        master_seed: prepared.provenance.seed,
        dataset_hash: dataset_hash.to_string(),
        strategy,
        teachers,
        student,
        extras,
    })
}

/// Loads one run directory's evaluation report and row label, verifying
/// the manifest and report digests.
pub fn read_report(dir: &Path) -> Result<(String, EvalReport)> {
    let manifest = read_manifest(dir)?;
    let cfg: ExperimentConfig = serde_json::from_value(manifest.config.clone())
        .map_err(|e| Error::Integrity(format!("manifest config: {e}")))?;
    let text = read_verified(dir, &manifest, REPORT)?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("{REPORT}: {e}")))?;
    if report.provenance.dataset_hash != manifest.dataset_hash {
        return Err(Error::Integrity(format!(
            "{} reports dataset {} but its manifest says {}",
            dir.display(),
            report.provenance.dataset_hash,
            manifest.dataset_hash
        )));
    }
    Ok((cfg.run_label(), report))
}

/// Comparison table over several run directories.
pub fn report(dirs: &[&Path]) -> Result<Comparison> {
    let mut rows: Vec<(String, EvalReport)> = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let (mut label, rep) = read_report(dir)?;
        if rows.iter().any(|(l, _)| *l == label) {
            label = format!("{label} #{}", rows.len() + 1);
        }
        rows.push((label, rep));
    }
    compare_runs(&rows)
}

/// Loads a full run directory (checkpoints, histories, curves).
pub fn load(dir: &Path) -> Result<RunRecord> {
    load_run(dir)
}
