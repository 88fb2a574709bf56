//! Multi-label evaluation: per-class average precision, mAP, and
//! head/medium/tail group means.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ClassStats, Dataset};
use crate::distill::{tempered_binary_softmax, Temperature};
use crate::error::{Error, Result};
use crate::nnet::{MlpNetwork, Tensor};
use crate::par;
use crate::subsets::partition_shot;

/// Precision averaged over the ranks of the positives (no interpolation).
///
/// Scores are ranked descending with ties broken by original index.
/// Returns `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(
        scores.len(),
        labels.len(),
        "scores and labels differ in length"
    );
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Head,
    Medium,
    Tail,
}

/// Class → group, from shot tertiles of the training counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub groups: Vec<Group>,
}

impl GroupAssignment {
    pub fn from_train_stats(train: &ClassStats) -> Result<Self> {
        let bands = partition_shot(train, None)?;
        let mut groups = vec![Group::Head; train.n_classes()];
        for (spec, g) in bands.iter().zip([Group::Head, Group::Medium, Group::Tail]) {
            for &c in &spec.class_ids {
                groups[c] = g;
            }
        }
        Ok(Self { groups })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` for classes without positives in the evaluated data.
    pub per_class_ap: Vec<Option<f64>>,
    pub map_total: f64,
    pub map_head: Option<f64>,
    pub map_medium: Option<f64>,
    pub map_tail: Option<f64>,
    pub n_eval_instances: usize,
    pub skipped_classes: Vec<usize>,
    pub groups: GroupAssignment,
    pub provenance: Provenance,
}

impl EvalReport {
    pub fn group_map(&self, g: Group) -> Option<f64> {
        match g {
            Group::Head => self.map_head,
            Group::Medium => self.map_medium,
            Group::Tail => self.map_tail,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `p_present` at unit temperature for every class, `[rows, n_classes]`.
pub fn class_scores(logits: &Tensor) -> Vec<Vec<f64>> {
    let n = logits.cols() / 2;
    let unit = Temperature::new(1.0).expect("positive");
    (0..n)
        .map(|c| {
            (0..logits.rows())
                .map(|r| {
                    let z = logits.row(r);
                    tempered_binary_softmax(z[2 * c], z[2 * c + 1], unit).p_present
                })
                .collect()
        })
        .collect()
}

/// Per-class AP of a model on a dataset.
pub fn per_class_ap(model: &MlpNetwork, dataset: &Dataset) -> Result<Vec<Option<f64>>> {
    check_width(model, dataset)?;
    let scores = class_scores(&model.forward(&dataset.all_features())?);
    Ok(ap_by_class(&scores, dataset))
}

fn ap_by_class(scores_by_class: &[Vec<f64>], dataset: &Dataset) -> Vec<Option<f64>> {
    par::map_indexed(dataset.n_classes, |c| {
        average_precision(&scores_by_class[c], &dataset.class_column(c))
    })
}

fn check_width(model: &MlpNetwork, dataset: &Dataset) -> Result<()> {
    if model.n_classes() != dataset.n_classes {
        return Err(Error::Shape(format!(
            "model scores {} classes, dataset has {}",
            model.n_classes(),
            dataset.n_classes
        )));
    }
    Ok(())
}

pub fn evaluate(
    model: &MlpNetwork,
    dataset: &Dataset,
    groups: &GroupAssignment,
    provenance: Provenance,
) -> Result<EvalReport> {
    check_width(model, dataset)?;
    let scores = class_scores(&model.forward(&dataset.all_features())?);
    evaluate_scores(&scores, dataset, groups, provenance)
}

/// Report from precomputed per-class scores (`scores[class][instance]`).
pub fn evaluate_scores(
    scores_by_class: &[Vec<f64>],
    dataset: &Dataset,
    groups: &GroupAssignment,
    provenance: Provenance,
) -> Result<EvalReport> {
    if groups.len() != dataset.n_classes || scores_by_class.len() != dataset.n_classes {
        return Err(Error::Shape(format!(
            "{} groups / {} score columns for {} classes",
            groups.len(),
            scores_by_class.len(),
            dataset.n_classes
        )));
    }
    let per_class_ap = ap_by_class(scores_by_class, dataset);
    let skipped_classes: Vec<usize> = (0..dataset.n_classes)
        .filter(|&c| per_class_ap[c].is_none())
        .collect();
    let mean_of = |filter: &dyn Fn(usize) -> bool| -> Option<f64> {
        let vals: Vec<f64> = (0..dataset.n_classes)
            .filter(|&c| filter(c))
            .filter_map(|c| per_class_ap[c])
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let map_total = mean_of(&|_| true).ok_or_else(|| {
        Error::EmptyInput("no class has a positive instance in the evaluation data".into())
    })?;
    Ok(EvalReport {
        map_head: mean_of(&|c| groups.groups[c] == Group::Head),
        map_medium: mean_of(&|c| groups.groups[c] == Group::Medium),
        map_tail: mean_of(&|c| groups.groups[c] == Group::Tail),
        map_total,
        per_class_ap,
        n_eval_instances: dataset.len(),
        skipped_classes,
        groups: groups.clone(),
        provenance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub head: Option<f64>,
    pub medium: Option<f64>,
    pub tail: Option<f64>,
    pub total: f64,
    pub delta_head: Option<f64>,
    pub delta_medium: Option<f64>,
    pub delta_tail: Option<f64>,
    pub delta_total: f64,
    /// Per-class AP change against the baseline row.
    pub per_class_delta: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub dataset_hash: String,
    pub rows: Vec<ComparisonRow>,
}

/// Tabulates reports against a baseline: the row labelled `erm` if there is
/// one, otherwise the first row.
pub fn compare_runs(reports: &[(String, EvalReport)]) -> Result<Comparison> {
    let (_, first) = reports
        .first()
        .ok_or_else(|| Error::Comparison("nothing to compare".into()))?;
    for (label, r) in reports {
        if r.provenance.dataset_hash != first.provenance.dataset_hash {
            return Err(Error::Comparison(format!(
                "run {label} used dataset {} but {} was expected",
                r.provenance.dataset_hash, first.provenance.dataset_hash
            )));
        }
        if r.groups != first.groups {
            return Err(Error::Comparison(format!(
                "run {label} uses a different head/medium/tail grouping"
            )));
        }
    }
    let base_idx = reports.iter().position(|(l, _)| l == "erm").unwrap_or(0);
    let (base_label, base) = &reports[base_idx];
    let diff = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    let rows = reports
        .iter()
        .map(|(label, r)| ComparisonRow {
            label: label.clone(),
            head: r.map_head,
            medium: r.map_medium,
            tail: r.map_tail,
            total: r.map_total,
            delta_head: diff(r.map_head, base.map_head),
            delta_medium: diff(r.map_medium, base.map_medium),
            delta_tail: diff(r.map_tail, base.map_tail),
            delta_total: r.map_total - base.map_total,
            per_class_delta: r
                .per_class_ap
                .iter()
                .zip(&base.per_class_ap)
                .map(|(&a, &b)| diff(a, b))
                .collect(),
        })
        .collect();
    Ok(Comparison {
        baseline: base_label.clone(),
        dataset_hash: first.provenance.dataset_hash.clone(),
        rows,
    })
}

impl Comparison {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table with mAP in percent.
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
        let signed = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:+.2}", 100.0 * x));
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .chain(["run".len()])
            .max()
            .unwrap_or(3);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>7} {:>7} {:>7} {:>7}  {:>7} {:>7} {:>7} {:>7}",
            "run", "head", "medium", "tail", "total", "d_head", "d_med", "d_tail", "d_total"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7} {:>7} {:>7} {:>7}  {:>7} {:>7} {:>7} {:>7}",
                r.label,
                pct(r.head),
                pct(r.medium),
                pct(r.tail),
                pct(Some(r.total)),
                signed(r.delta_head),
                signed(r.delta_medium),
                signed(r.delta_tail),
                signed(Some(r.delta_total)),
            );
        }
        let _ = writeln!(out, "baseline: {}", self.baseline);
        out
    }
}
