//! Training objective: multi-label BCE plus `alpha` times a distance between
//! the student's embedding and the cached teacher embedding.

mod similarity;

pub use similarity::{similarity, similarity_registry, CosineDistance, L1Distance, L2Distance, Similarity};

use serde::{Deserialize, Serialize};

use crate::nn::{Matrix, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Registered similarity name: `l1`, `l2` or `cosine`.
    pub sim: String,
    pub alpha: f64,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            sim: "l2".into(),
            alpha: 1.0,
            reduction: Reduction::Mean,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be a non-negative number, got {}", self.alpha)));
        }
        similarity(&self.sim).map(|_| ())
    }
}

/// The two terms of the objective and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub sim: f64,
    pub total: f64,
}

fn check_targets<T: Scalar>(logits: &Matrix<T>, targets: &Matrix<T>) -> Result<()> {
    if (logits.rows, logits.cols) != (targets.rows, targets.cols) {
        return Err(Error::shape(format!(
            "logits {}x{} vs targets {}x{}",
            logits.rows, logits.cols, targets.rows, targets.cols
        )));
    }
    if targets.data.iter().any(|&y| y != T::zero() && y != T::one()) {
        return Err(Error::invalid("targets must be 0 or 1"));
    }
    if logits.data.is_empty() {
        return Err(Error::shape("empty batch"));
    }
    Ok(())
}

/// Mean over batch and classes of `BCE(sigmoid(x), y)`, evaluated as
/// `max(x, 0) - x y + ln(1 + exp(-|x|))`.
pub fn classification_loss<T: Scalar>(logits: &Matrix<T>, targets: &Matrix<T>) -> Result<f64> {
    check_targets(logits, targets)?;
    let sum: f64 = logits
        .data
        .iter()
        .zip(&targets.data)
        .map(|(&x, &y)| {
            let (x, y) = (x.as_f64(), y.as_f64());
            x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
        })
        .sum();
    Ok(sum / logits.data.len() as f64)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient of [`classification_loss`] w.r.t. the logits.
pub fn classification_grad<T: Scalar>(logits: &Matrix<T>, targets: &Matrix<T>) -> Result<Matrix<T>> {
    check_targets(logits, targets)?;
    let scale = 1.0 / logits.data.len() as f64;
    let data = logits
        .data
        .iter()
        .zip(&targets.data)
        .map(|(&x, &y)| T::lit((sigmoid(x.as_f64()) - y.as_f64()) * scale))
        .collect();
    Ok(Matrix::from_vec(logits.rows, logits.cols, data))
}

fn row_f64<T: Scalar>(m: &Matrix<T>, r: usize) -> Vec<f64> {
    m.row(r).iter().map(|v| v.as_f64()).collect()
}

fn check_pair<T: Scalar>(teacher: &Matrix<T>, student: &Matrix<T>) -> Result<()> {
    if (teacher.rows, teacher.cols) != (student.rows, student.cols) {
        return Err(Error::shape(format!(
            "teacher embeddings {}x{} vs student {}x{}",
            teacher.rows, teacher.cols, student.rows, student.cols
        )));
    }
    if teacher.rows == 0 {
        return Err(Error::shape("empty batch"));
    }
    Ok(())
}

/// Batch mean of the per-sample distance.
pub fn batch_similarity<T: Scalar>(teacher: &Matrix<T>, student: &Matrix<T>, sim: &dyn Similarity) -> Result<f64> {
    check_pair(teacher, student)?;
    let total: f64 = (0..teacher.rows)
        .map(|r| sim.distance(&row_f64(teacher, r), &row_f64(student, r)))
        .sum();
    Ok(total / teacher.rows as f64)
}

/// Gradient of [`batch_similarity`] w.r.t. the student embeddings.
pub fn batch_similarity_grad<T: Scalar>(teacher: &Matrix<T>, student: &Matrix<T>, sim: &dyn Similarity) -> Result<Matrix<T>> {
    check_pair(teacher, student)?;
    let scale = 1.0 / teacher.rows as f64;
    let mut out = Matrix::zeros(student.rows, student.cols);
    let mut g = vec![0.0; student.cols];
    for r in 0..student.rows {
        sim.gradient(&row_f64(teacher, r), &row_f64(student, r), &mut g);
        for (o, v) in out.row_mut(r).iter_mut().zip(&g) {
            *o = T::lit(v * scale);
        }
    }
    Ok(out)
}

/// `classification_loss + alpha * batch_similarity`.
pub fn total_loss<T: Scalar>(
    logits: &Matrix<T>,
    targets: &Matrix<T>,
    teacher: &Matrix<T>,
    student: &Matrix<T>,
    alpha: f64,
    sim: &dyn Similarity,
) -> Result<LossBreakdown> {
    let cls = classification_loss(logits, targets)?;
    let s = batch_similarity(teacher, student, sim)?;
    Ok(LossBreakdown {
        cls,
        sim: s,
        total: cls + alpha * s,
    })
}

/// The objective bound to a configuration, producing loss values and the
/// gradients the model needs.
pub struct Objective {
    pub alpha: f64,
    pub sim: Box<dyn Similarity>,
}

/// Loss values plus gradients w.r.t. logits and (when aligned) embeddings.
pub struct ObjectiveGrad<T> {
    pub loss: LossBreakdown,
    pub d_logits: Matrix<T>,
    pub d_embeddings: Option<Matrix<T>>,
}

impl Objective {
    pub fn from_config(config: &LossConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            alpha: config.alpha,
            sim: similarity(&config.sim)?,
        })
    }

    /// Without a teacher the similarity term is absent (reported as 0).
    pub fn evaluate<T: Scalar>(
        &self,
        logits: &Matrix<T>,
        targets: &Matrix<T>,
        teacher: Option<&Matrix<T>>,
        student: &Matrix<T>,
    ) -> Result<ObjectiveGrad<T>> {
        let d_logits = classification_grad(logits, targets)?;
        match teacher {
            Some(teacher) => {
                let loss = total_loss(logits, targets, teacher, student, self.alpha, self.sim.as_ref())?;
                let mut d_emb = batch_similarity_grad(teacher, student, self.sim.as_ref())?;
                let alpha = T::lit(self.alpha);
                d_emb.data.iter_mut().for_each(|v| *v *= alpha);
                Ok(ObjectiveGrad {
                    loss,
                    d_logits,
                    d_embeddings: Some(d_emb),
                })
            }
            None => {
                let cls = classification_loss(logits, targets)?;
                Ok(ObjectiveGrad {
                    loss: LossBreakdown { cls, sim: 0.0, total: cls },
                    d_logits,
                    d_embeddings: None,
                })
            }
        }
    }
}
