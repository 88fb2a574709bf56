//! Run directories: checkpoints, weight histories, and curves, tied together
//! by a manifest that records a SHA-256 digest of every file.
//!
//! ```text
//! manifest.json
//! teachers/<k>.json
//! student.json
//! weights_history.csv   epoch,class_id,acc_teacher,acc_student,w
//! curves.csv            run,epoch,train_loss,val_loss,lr
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EpochRecord, StudentRun, TeacherRun};
use crate::distill::{KdWeights, WeightMode};
use crate::error::{Error, Result};
use crate::nnet::Checkpoint;
use crate::subsets::SubsetSpec;

pub const RUN_FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const STUDENT: &str = "student.json";
const WEIGHTS: &str = "weights_history.csv";
const CURVES: &str = "curves.csv";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub master_seed: u64,
    pub student_seed: u64,
    pub teacher_seeds: Vec<u64>,
    pub dataset_hash: String,
    pub strategy: Option<String>,
    /// Relative path → SHA-256 of the file's bytes.
    pub files: BTreeMap<String, String>,
    /// SHA-256 of this manifest serialized with an empty `digest`.
    pub digest: String,
}

impl RunManifest {
    fn compute_digest(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.digest.clear();
        Ok(sha256_hex(serde_json::to_string(&copy)?.as_bytes()))
    }
}

/// Everything a run directory holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: serde_json::Value,
    pub config_hash: String,
    pub master_seed: u64,
    pub dataset_hash: String,
    pub strategy: Option<String>,
    pub teachers: Vec<TeacherRun>,
    pub student: StudentRun,
    /// Further artifacts stored verbatim (relative path → contents).
    pub extras: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TeacherFile {
    subset: SubsetSpec,
    per_class_val_acc: Vec<f64>,
    warnings: Vec<String>,
    checkpoint: Checkpoint,
}

#[derive(Serialize, Deserialize)]
struct StudentFile {
    mode: WeightMode,
    delta: f64,
    checkpoint: Checkpoint,
}

/// One line of `weights_history.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub epoch: usize,
    pub class_id: usize,
    pub acc_teacher: f64,
    pub acc_student: f64,
    pub w: f64,
}

fn weights_csv(history: &[KdWeights]) -> String {
    let mut out = String::from("epoch,class_id,acc_teacher,acc_student,w\n");
    for (e, kd) in history.iter().enumerate() {
        for c in 0..kd.weights.len() {
            let _ = writeln!(
                out,
                "{e},{c},{},{},{}",
                kd.teacher_acc[c], kd.student_acc[c], kd.weights[c]
            );
        }
    }
    out
}

pub fn parse_weights_csv(text: &str) -> Result<Vec<WeightRow>> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let bad = |d: &str| Error::Parse {
            line: k + 1,
            detail: format!("{WEIGHTS}: {d}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(&e.to_string()));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(&e.to_string()));
        rows.push(WeightRow {
            epoch: int(f[0])?,
            class_id: int(f[1])?,
            acc_teacher: num(f[2])?,
            acc_student: num(f[3])?,
            w: num(f[4])?,
        });
    }
    Ok(rows)
}

fn curves_csv(teachers: &[TeacherRun], student: &StudentRun) -> String {
    let mut out = String::from("run,epoch,train_loss,val_loss,lr\n");
    let mut emit = |name: &str, curve: &[EpochRecord]| {
        for r in curve {
            let _ = writeln!(
                out,
                "{name},{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.lr
            );
        }
    };
    for t in teachers {
        emit(&format!("teacher/{}", t.subset.subset_id), &t.curve);
    }
    emit("student", &student.curve);
    out
}

fn parse_curves(text: &str) -> Result<BTreeMap<String, Vec<EpochRecord>>> {
    let mut out: BTreeMap<String, Vec<EpochRecord>> = BTreeMap::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let bad = |d: String| Error::Parse {
            line: k + 1,
            detail: format!("{CURVES}: {d}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
        out.entry(f[0].to_string()).or_default().push(EpochRecord {
            epoch: f[1]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            train_loss: num(f[2])?,
            val_loss: num(f[3])?,
            lr: num(f[4])?,
        });
    }
    Ok(out)
}

fn teacher_path(subset_id: usize) -> String {
    format!("teachers/{subset_id}.json")
}

fn write_file(
    dir: &Path,
    rel: &str,
    contents: &str,
    files: &mut BTreeMap<String, String>,
) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.insert(rel.to_string(), sha256_hex(contents.as_bytes()));
    Ok(())
}

/// Writes teacher checkpoints only, as `save_run` would. Lets a failed
/// second stage leave the first stage's output behind.
pub fn save_teachers(teachers: &[TeacherRun], config_hash: &str, dir: &Path) -> Result<()> {
    write_teachers(teachers, config_hash, dir).map(|_| ())
}

fn write_teachers(
    teachers: &[TeacherRun],
    config_hash: &str,
    dir: &Path,
) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    for t in teachers {
        let tf = TeacherFile {
            subset: t.subset.clone(),
            per_class_val_acc: t.per_class_val_acc.clone(),
            warnings: t.warnings.clone(),
            checkpoint: Checkpoint::from_network(&t.model, t.seed, config_hash),
        };
        write_file(
            dir,
            &teacher_path(t.subset.subset_id),
            &serde_json::to_string(&tf)?,
            &mut files,
        )?;
    }
    Ok(files)
}

pub fn save_run(run: &RunRecord, dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = write_teachers(&run.teachers, &run.config_hash, dir)?;
    let delta = run.student.weight_history.first().map_or(0.0, |w| w.delta);
    let sf = StudentFile {
        mode: run.student.mode,
        delta,
        checkpoint: Checkpoint::from_network(
            &run.student.model,
            run.student.seed,
            &run.config_hash,
        ),
    };
    write_file(dir, STUDENT, &serde_json::to_string(&sf)?, &mut files)?;
    write_file(
        dir,
        WEIGHTS,
        &weights_csv(&run.student.weight_history),
        &mut files,
    )?;
    write_file(
        dir,
        CURVES,
        &curves_csv(&run.teachers, &run.student),
        &mut files,
    )?;
    for (rel, text) in &run.extras {
        write_file(dir, rel, text, &mut files)?;
    }

    let mut manifest = RunManifest {
        format_version: RUN_FORMAT_VERSION,
        config: run.config.clone(),
        config_hash: run.config_hash.clone(),
        master_seed: run.master_seed,
        student_seed: run.student.seed,
        teacher_seeds: run.teachers.iter().map(|t| t.seed).collect(),
        dataset_hash: run.dataset_hash.clone(),
        strategy: run.strategy.clone(),
        files,
        digest: String::new(),
    };
    manifest.digest = manifest.compute_digest()?;
    let path = dir.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads and verifies a manifest without loading the rest of the run.
pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::PartialRun(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    if manifest.format_version != RUN_FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: RUN_FORMAT_VERSION,
        });
    }
    if manifest.compute_digest()? != manifest.digest {
        return Err(Error::Integrity(format!(
            "{} digest mismatch",
            path.display()
        )));
    }
    Ok(manifest)
}

/// Reads a file listed in the manifest, checking its digest.
pub fn read_verified(dir: &Path, manifest: &RunManifest, rel: &str) -> Result<String> {
    let expected = manifest
        .files
        .get(rel)
        .ok_or_else(|| Error::Integrity(format!("manifest does not list {rel}")))?;
    let path: PathBuf = dir.join(rel);
    if !path.exists() {
        return Err(Error::PartialRun(path));
    }
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if &sha256_hex(&bytes) != expected {
        return Err(Error::Integrity(format!(
            "{} does not match its manifest digest",
            path.display()
        )));
    }
    String::from_utf8(bytes).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))
}

pub fn load_run(dir: &Path) -> Result<RunRecord> {
    let manifest = read_manifest(dir)?;
    // existence before content, so a missing file is reported as such
    for rel in manifest.files.keys() {
        let p = dir.join(rel);
        if !p.exists() {
            return Err(Error::PartialRun(p));
        }
    }
    let curves = parse_curves(&read_verified(dir, &manifest, CURVES)?)?;

    let mut teachers = Vec::with_capacity(manifest.teacher_seeds.len());
    for k in 0..manifest.teacher_seeds.len() {
        let tf: TeacherFile =
            serde_json::from_str(&read_verified(dir, &manifest, &teacher_path(k))?)?;
        teachers.push(TeacherRun {
            model: tf.checkpoint.to_network()?,
            seed: tf.checkpoint.seed,
            curve: curves
                .get(&format!("teacher/{}", tf.subset.subset_id))
                .cloned()
                .unwrap_or_default(),
            subset: tf.subset,
            per_class_val_acc: tf.per_class_val_acc,
            warnings: tf.warnings,
        });
    }

    let sf: StudentFile = serde_json::from_str(&read_verified(dir, &manifest, STUDENT)?)?;
    let rows = parse_weights_csv(&read_verified(dir, &manifest, WEIGHTS)?)?;
    let mut history: Vec<KdWeights> = Vec::new();
    for r in rows {
        if r.epoch == history.len() {
            history.push(KdWeights {
                weights: Vec::new(),
                teacher_acc: Vec::new(),
                student_acc: Vec::new(),
                delta: sf.delta,
            });
        }
        let kd = history
            .get_mut(r.epoch)
            .ok_or_else(|| Error::Integrity(format!("{WEIGHTS}: epochs out of order")))?;
        kd.weights.push(r.w);
        kd.teacher_acc.push(r.acc_teacher);
        kd.student_acc.push(r.acc_student);
    }
    let student = StudentRun {
        model: sf.checkpoint.to_network()?,
        mode: sf.mode,
        weight_history: history,
        curve: curves.get("student").cloned().unwrap_or_default(),
        seed: sf.checkpoint.seed,
    };

    let fixed = [STUDENT, WEIGHTS, CURVES];
    let mut extras = BTreeMap::new();
    for rel in manifest.files.keys() {
        if fixed.contains(&rel.as_str()) || rel.starts_with("teachers/") {
            continue;
        }
        extras.insert(rel.clone(), read_verified(dir, &manifest, rel)?);
    }

    Ok(RunRecord {
        config: manifest.config,
        config_hash: manifest.config_hash,
        master_seed: manifest.master_seed,
        dataset_hash: manifest.dataset_hash,
        strategy: manifest.strategy,
        teachers,
        student,
        extras,
    })
}
