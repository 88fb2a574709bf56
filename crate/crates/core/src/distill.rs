//! Distillation loss math on per-class logit pairs.
//!
//! Every class owns two logits, `present` (column `2c`) and `absent`
//! (column `2c + 1`). Soft targets are the two-outcome softmax of a pair at
//! temperature `T`; the distillation term is `KL(student ‖ teacher)` per
//! class, scaled by a per-class weight that shrinks as the student catches
//! up with its teacher.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::Tensor;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Self(t))
        } else {
            Err(Error::Config(format!(
                "temperature must be positive, got {t}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;
    fn try_from(t: f64) -> Result<Self> {
        Self::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftTarget {
    pub p_present: f64,
    pub p_absent: f64,
}

impl SoftTarget {
    pub fn new(p_present: f64, p_absent: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&p_present)
            && (0.0..=1.0).contains(&p_absent)
            && (p_present + p_absent - 1.0).abs() <= 1e-12;
        if ok {
            Ok(Self {
                p_present,
                p_absent,
            })
        } else {
            Err(Error::Validation(format!(
                "({p_present}, {p_absent}) is not a two-outcome distribution"
            )))
        }
    }
}

pub fn tempered_binary_softmax(z_present: f64, z_absent: f64, t: Temperature) -> SoftTarget {
    let a = z_present / t.0;
    let b = z_absent / t.0;
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let s = ea + eb;
    SoftTarget {
        p_present: ea / s,
        p_absent: eb / s,
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `Σ q̂ ln(q̂ / q)` over the two outcomes, with `0 ln 0 = 0`.
pub fn kd_loss(q_hat: SoftTarget, q: SoftTarget) -> f64 {
    let term = |a: f64, b: f64| {
        if a == 0.0 {
            0.0
        } else {
            let a = clamp_prob(a);
            a * (a / clamp_prob(b)).ln()
        }
    };
    (term(q_hat.p_present, q.p_present) + term(q_hat.p_absent, q.p_absent)).max(0.0)
}

pub fn bce_loss(student: SoftTarget, label: bool) -> f64 {
    let p = if label {
        student.p_present
    } else {
        student.p_absent
    };
    -clamp_prob(p).ln()
}

/// Per-class distillation weight from teacher and student accuracy.
///
/// Full weight while the student is below `delta` of the teacher, then a
/// linear decay reaching zero when the student matches the teacher.
/// Values past that point are clamped to zero.
pub fn kd_weight(acc_teacher: f64, acc_student: f64, delta: f64) -> f64 {
    if acc_teacher <= 0.0 {
        return 0.0;
    }
    if delta * acc_teacher >= acc_student {
        return 1.0;
    }
    ((acc_teacher - acc_student) / (acc_teacher * (1.0 - delta))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Recompute weights from the accuracy gap every epoch.
    Dynamic,
    /// Every class distilled with weight 1.
    Fixed,
    /// No distillation (weights 0); plain BCE training.
    Off,
}

/// Per-class KD weights with frozen teacher and running student accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdWeights {
    pub weights: Vec<f64>,
    pub teacher_acc: Vec<f64>,
    pub student_acc: Vec<f64>,
    pub delta: f64,
}

impl KdWeights {
    pub fn new(teacher_acc: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if let Some(bad) = teacher_acc.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Validation(format!(
                "teacher accuracy {bad} outside [0, 1]"
            )));
        }
        let n = teacher_acc.len();
        Ok(Self {
            weights: vec![0.0; n],
            teacher_acc,
            student_acc: vec![0.0; n],
            delta,
        })
    }

    /// Records the student's per-class accuracy and recomputes the weights.
    pub fn update(&mut self, student_acc: &[f64], mode: WeightMode) {
        assert_eq!(student_acc.len(), self.teacher_acc.len());
        self.student_acc = student_acc.to_vec();
        for (c, w) in self.weights.iter_mut().enumerate() {
            *w = match mode {
                WeightMode::Dynamic => kd_weight(self.teacher_acc[c], student_acc[c], self.delta),
                WeightMode::Fixed => 1.0,
                WeightMode::Off => 0.0,
            };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(student ‖ teacher)`
    StudentFirst,
    /// `KL(teacher ‖ student)`, the classical distillation direction.
    TeacherFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    pub temperature: Temperature,
    pub direction: KlDirection,
    /// Multiply the distillation term by `T²`.
    pub scale_by_t_squared: bool,
}

impl LossOptions {
    pub fn new(temperature: Temperature) -> Self {
        Self {
            temperature,
            direction: KlDirection::StudentFirst,
            scale_by_t_squared: false,
        }
    }
}

fn check_logits(logits: &Tensor, labels: &[bool]) -> Result<(usize, usize)> {
    if logits.shape().len() != 2 || logits.cols() % 2 != 0 {
        return Err(Error::Shape(format!(
            "logits must be [batch, 2 * classes], got {:?}",
            logits.shape()
        )));
    }
    let (rows, n) = (logits.rows(), logits.cols() / 2);
    if labels.len() != rows * n {
        return Err(Error::Shape(format!(
            "{} labels for a {rows}x{n} batch",
            labels.len()
        )));
    }
    Ok((rows, n))
}

/// Batch-mean of the per-class BCE summed over classes, with its gradient
/// with respect to the logits. `labels` is row-major `[batch, classes]`.
pub fn bce_batch(logits: &Tensor, labels: &[bool]) -> Result<(f64, Tensor)> {
    let (rows, n) = check_logits(logits, labels)?;
    let unit = Temperature(1.0);
    let inv_b = 1.0 / rows as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; rows * 2 * n];
    for r in 0..rows {
        let z = logits.row(r);
        for c in 0..n {
            let y = labels[r * n + c];
            let s = tempered_binary_softmax(z[2 * c], z[2 * c + 1], unit);
            total += bce_loss(s, y);
            let target = if y { 1.0 } else { 0.0 };
            // d/dz_present = p_present - y, d/dz_absent = p_absent - (1 - y)
            grad[r * 2 * n + 2 * c] = (s.p_present - target) * inv_b;
            grad[r * 2 * n + 2 * c + 1] = (s.p_absent - (1.0 - target)) * inv_b;
        }
    }
    Ok((
        total * inv_b,
        Tensor::new(vec![rows, 2 * n], grad).expect("sized"),
    ))
}

/// Teacher logits gathered into student column order.
///
/// `parts` pairs each teacher's class list with its `[batch, 2 * |classes|]`
/// logits. Every class in `0..n_classes` must be owned by exactly one part.
pub fn assemble_teacher_logits(n_classes: usize, parts: &[(&[usize], &Tensor)]) -> Result<Tensor> {
    let rows = parts
        .first()
        .map(|(_, t)| t.rows())
        .ok_or_else(|| Error::Coverage((0..n_classes).collect()))?;
    let mut owner = vec![None; n_classes];
    for (k, (classes, logits)) in parts.iter().enumerate() {
        if logits.rows() != rows || logits.cols() != 2 * classes.len() {
            return Err(Error::Shape(format!(
                "teacher {k} logits {:?} do not fit {} classes x {rows} rows",
                logits.shape(),
                classes.len()
            )));
        }
        for (j, &c) in classes.iter().enumerate() {
            if c >= n_classes {
                return Err(Error::Validation(format!(
                    "teacher {k} owns unknown class {c}"
                )));
            }
            if owner[c].is_some() {
                return Err(Error::Validation(format!(
                    "class {c} owned by two teachers"
                )));
            }
            owner[c] = Some((k, j));
        }
    }
    let orphans: Vec<usize> = (0..n_classes).filter(|&c| owner[c].is_none()).collect();
    if !orphans.is_empty() {
        return Err(Error::Coverage(orphans));
    }
    let mut out = vec![0.0; rows * 2 * n_classes];
    for r in 0..rows {
        for (c, o) in owner.iter().enumerate() {
            let (k, j) = o.expect("checked");
            let src = parts[k].1.row(r);
            out[r * 2 * n_classes + 2 * c] = src[2 * j];
            out[r * 2 * n_classes + 2 * c + 1] = src[2 * j + 1];
        }
    }
    Ok(Tensor::new(vec![rows, 2 * n_classes], out).expect("sized"))
}

/// `mean_batch[ Σ_c bce_c + Σ_c w_c · KL_c(T) ]` and its gradient with
/// respect to the student logits. Classes with `w_c == 0` contribute
/// nothing, so all-zero weights reproduce [`bce_batch`] exactly.
pub fn composite_loss(
    student_logits: &Tensor,
    labels: &[bool],
    teacher_logits: Option<&Tensor>,
    weights: &[f64],
    opts: &LossOptions,
) -> Result<(f64, Tensor)> {
    let (rows, n) = check_logits(student_logits, labels)?;
    if weights.len() != n {
        return Err(Error::Shape(format!(
            "{} weights for {n} classes",
            weights.len()
        )));
    }
    let (bce, mut grad) = bce_batch(student_logits, labels)?;
    if weights.iter().all(|&w| w == 0.0) {
        return Ok((bce, grad));
    }
    let teacher = teacher_logits
        .ok_or_else(|| Error::Coverage((0..n).filter(|&c| weights[c] != 0.0).collect()))?;
    if !teacher.same_shape(student_logits) {
        return Err(Error::Shape(format!(
            "teacher logits {:?} vs student {:?}",
            teacher.shape(),
            student_logits.shape()
        )));
    }

    let t = opts.temperature.get();
    let scale = if opts.scale_by_t_squared { t * t } else { 1.0 };
    let inv_b = 1.0 / rows as f64;
    let g = grad.values_mut();
    let mut kd_total = 0.0;
    for r in 0..rows {
        let zs = student_logits.row(r);
        let zt = teacher.row(r);
        for (c, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let s = tempered_binary_softmax(zs[2 * c], zs[2 * c + 1], opts.temperature);
            let q = tempered_binary_softmax(zt[2 * c], zt[2 * c + 1], opts.temperature);
            // derivative with respect to u = z_present - z_absent
            let (value, d_du) = match opts.direction {
                KlDirection::StudentFirst => {
                    let (sp, sa) = (clamp_prob(s.p_present), clamp_prob(s.p_absent));
                    let (qp, qa) = (clamp_prob(q.p_present), clamp_prob(q.p_absent));
                    let d_ds = (sp / qp).ln() - (sa / qa).ln();
                    (kd_loss(s, q), d_ds * s.p_present * s.p_absent / t)
                }
                KlDirection::TeacherFirst => (kd_loss(q, s), (s.p_present - q.p_present) / t),
            };
            kd_total += w * scale * value;
            let d = w * scale * d_du * inv_b;
            g[r * 2 * n + 2 * c] += d;
            g[r * 2 * n + 2 * c + 1] -= d;
        }
    }
    Ok((bce + kd_total * inv_b, grad))
}
