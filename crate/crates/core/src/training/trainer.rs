use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FoldRole;
use crate::loss::Objective;
use crate::metrics::{macro_auc, EvalReport};
use crate::model::ModelBundle;
use crate::nn::{Matrix, Mode, Param};
use crate::optim::{optimizer_registry, OptimizerState};
use crate::training::{
    Alignment, ArmContext, ArmPlan, Checkpoint, CheckpointManifest, PreparedData, TrainingArm,
};
use crate::{Error, Result, N_CLASSES};

const EVAL_BATCH: usize = 256;

/// Loss values of one optimization step. `total = cls + alpha * sim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub batch_size: usize,
    pub cls: f64,
    pub sim: f64,
    pub total: f64,
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_cls: f64,
    pub train_sim: f64,
    pub train_total: f64,
    pub eval_macro_auc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    /// Parameters from the epoch with the best eval macro-AUC.
    pub checkpoint: Checkpoint,
    /// Eval report of the untrained initialization.
    pub initial: EvalReport,
    pub epochs: Vec<EpochLog>,
    pub steps: Vec<StepLog>,
}

pub fn write_epoch_log(path: &Path, rows: &[EpochLog]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["epoch", "train_cls", "train_sim", "train_total", "eval_macro_auc"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Eval-mode macro-AUC of `bundle` over the records at `idx`.
pub fn evaluate_indices(bundle: &mut ModelBundle<f32>, data: &PreparedData, idx: &[usize]) -> Result<EvalReport> {
    if idx.is_empty() {
        return Err(Error::invalid("empty split: nothing to evaluate"));
    }
    let mut scores = Vec::with_capacity(idx.len() * N_CLASSES);
    let mut labels = Vec::with_capacity(idx.len() * N_CLASSES);
    for chunk in idx.chunks(EVAL_BATCH) {
        let batch = data.batch(chunk, &bundle.subset);
        let pass = bundle.forward(batch.signals, &batch.meta, Mode::Eval)?;
        scores.extend(pass.logits.data.iter().map(|&x| 1.0 / (1.0 + (-(x as f64)).exp())));
        labels.extend_from_slice(&batch.labels);
    }
    let mut report = macro_auc(&scores, &labels, idx.len())?;
    report.subset = bundle.subset.size();
    Ok(report)
}

/// Evaluates a checkpoint on the eval fold and stamps the report with the
/// checkpoint's identity.
pub fn evaluate_checkpoint(checkpoint: &Checkpoint, data: &PreparedData) -> Result<EvalReport> {
    let mut bundle = checkpoint.bundle.clone();
    let mut report = evaluate_indices(&mut bundle, data, &data.indices(FoldRole::Eval))?;
    report.pseudo = checkpoint.manifest.role.pseudo();
    report.seed = Some(checkpoint.manifest.seed);
    report.config_hash = Some(checkpoint.manifest.config_hash.clone());
    Ok(report)
}

struct Snapshot {
    epoch: usize,
    bundle: ModelBundle<f32>,
    optimizer: OptimizerState<f32>,
    report: EvalReport,
}

fn classifier_params(bundle: &ModelBundle<f32>) -> Vec<(String, Vec<f32>)> {
    let mut out = Vec::new();
    bundle.visit(&mut |name, p: &Param<f32>| {
        if name.starts_with("classifier.") {
            out.push((name.to_string(), p.value.clone()));
        }
    });
    out
}

/// Name of the first classifier tensor whose bits differ from `before`.
fn drifted(before: &[(String, Vec<f32>)], bundle: &ModelBundle<f32>) -> Option<String> {
    let after = classifier_params(bundle);
    before.iter().zip(&after).find_map(|((name, a), (_, b))| {
        let same = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        (!same).then(|| name.clone())
    })
}

fn targets_for(
    alignment: &mut Alignment<'_>,
    data: &PreparedData,
    chunk: &[usize],
    meta: &Matrix<f32>,
) -> Result<Option<Matrix<f32>>> {
    match alignment {
        Alignment::None => Ok(None),
        Alignment::Cached(cache) => Ok(Some(cache.gather(chunk.iter().map(|&i| data.records()[i].ecg_id))?)),
        Alignment::Live(teacher) => {
            let full = data.batch(chunk, &teacher.subset);
            Ok(Some(teacher.forward(full.signals, meta, Mode::Eval)?.embeddings))
        }
    }
}

/// Runs one arm to completion: shuffled mini-batches, Adam (or the
/// configured optimizer), per-epoch eval and early stopping on eval
/// macro-AUC. Returns the best epoch's checkpoint.
pub fn run_arm(arm: &dyn TrainingArm, ctx: &ArmContext<'_>) -> Result<TrainingOutcome> {
    let config = ctx.config;
    let data = ctx.data;
    config.validate()?;
    if data.meta_len() != config.metadata.encoded_len() {
        return Err(Error::shape(format!(
            "data carries {}-wide metadata, config encodes {}",
            data.meta_len(),
            config.metadata.encoded_len()
        )));
    }
    let train_idx = data.indices(FoldRole::Train);
    let eval_idx = data.indices(FoldRole::Eval);
    if train_idx.is_empty() {
        return Err(Error::invalid("empty split: no records in the training folds"));
    }
    if eval_idx.is_empty() {
        return Err(Error::invalid("empty split: no records in the eval fold"));
    }

    let role = arm.role();
    let ArmPlan {
        mut bundle,
        mut alignment,
        teacher_hash,
    } = arm.plan(ctx)?;
    let frozen_before = bundle.classifier.frozen.then(|| classifier_params(&bundle));
    let objective = Objective::from_config(&config.loss)?;
    let mut optimizer = optimizer_registry::<f32>().create(&config.optimizer.kind, &config.optimizer.settings())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.derived_seed("shuffle"));
    let batch_size = config.optimizer.batch_size;

    let initial = evaluate_indices(&mut bundle, data, &eval_idx)?;
    log::info!(
        "{role} {}-lead seed {}: initial eval macro-AUC {:.4}",
        bundle.subset.size(),
        config.seed,
        initial.macro_auc
    );
    let mut best = Snapshot {
        epoch: 0,
        bundle: bundle.clone(),
        optimizer: optimizer.state(),
        report: initial.clone(),
    };
    let mut epochs = Vec::new();
    let mut steps = Vec::new();
    let mut stale = 0;

    for epoch in 1..=config.optimizer.max_epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let (mut cls_sum, mut sim_sum, mut total_sum) = (0.0, 0.0, 0.0);
        for (step, chunk) in order.chunks(batch_size).enumerate() {
            let batch = data.batch(chunk, &bundle.subset);
            let teacher = targets_for(&mut alignment, data, chunk, &batch.meta)?;
            bundle.zero_grad();
            let pass = bundle.forward(batch.signals, &batch.meta, Mode::Train)?;
            let grad = objective.evaluate(&pass.logits, &batch.targets, teacher.as_ref(), &pass.embeddings)?;
            let loss = grad.loss;
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: format!("loss is {} (cls {}, sim {})", loss.total, loss.cls, loss.sim),
                });
            }
            bundle.backward(&pass, &grad.d_logits, grad.d_embeddings.as_ref());
            optimizer.begin_step();
            bundle.visit_trainable_mut(&mut |name, p| optimizer.update(name, p));

            let w = chunk.len() as f64;
            cls_sum += loss.cls * w;
            sim_sum += loss.sim * w;
            total_sum += loss.total * w;
            steps.push(StepLog {
                epoch,
                step,
                batch_size: chunk.len(),
                cls: loss.cls,
                sim: loss.sim,
                total: loss.total,
            });
        }
        let report = evaluate_indices(&mut bundle, data, &eval_idx)?;
        let n = train_idx.len() as f64;
        let row = EpochLog {
            epoch,
            train_cls: cls_sum / n,
            train_sim: sim_sum / n,
            train_total: total_sum / n,
            eval_macro_auc: report.macro_auc,
        };
        log::info!(
            "{role} {}-lead seed {} epoch {epoch}: cls {:.4} sim {:.4} total {:.4} eval macro-AUC {:.4}",
            bundle.subset.size(),
            config.seed,
            row.train_cls,
            row.train_sim,
            row.train_total,
            row.eval_macro_auc
        );
        epochs.push(row);
        if report.macro_auc > best.report.macro_auc {
            best = Snapshot {
                epoch,
                bundle: bundle.clone(),
                optimizer: optimizer.state(),
                report,
            };
            stale = 0;
        } else {
            stale += 1;
            if config.optimizer.patience > 0 && stale >= config.optimizer.patience {
                log::info!("{role}: no eval improvement for {stale} epochs, stopping");
                break;
            }
        }
    }

    if let Some(before) = &frozen_before {
        for b in [&bundle, &best.bundle] {
            if let Some(name) = drifted(before, b) {
                return Err(Error::FrozenDrift(name));
            }
        }
    }

    let mut report = best.report;
    report.pseudo = role.pseudo();
    report.seed = Some(config.seed);
    report.config_hash = Some(config.content_hash());
    let mut checkpoint = Checkpoint {
        manifest: CheckpointManifest {
            role,
            subset: best.bundle.subset.clone(),
            bundle: best.bundle.config.clone(),
            config: config.clone(),
            config_hash: config.content_hash(),
            seed: config.seed,
            epoch: best.epoch,
            best_metric: report.macro_auc,
            report: Some(report),
            frozen_classifier: best.bundle.classifier.frozen,
            optimizer: optimizer.name().to_string(),
            optimizer_step: best.optimizer.step,
            teacher_hash,
            content_hash: String::new(),
        },
        bundle: best.bundle,
        optimizer: best.optimizer,
    };
    checkpoint.manifest.content_hash = checkpoint.content_hash()?;
    Ok(TrainingOutcome {
        checkpoint,
        initial,
        epochs,
        steps,
    })
}
