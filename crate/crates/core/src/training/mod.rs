//! The two-step protocol: a 12-lead teacher trained on classification alone,
//! its embeddings exported to a cache, then reduced-lead students trained
//! under the teacher's frozen pseudo-classifier with the aligned loss. The
//! baseline arm trains reduced-lead models end to end for comparison.

mod arms;
mod checkpoint;
mod config;
mod data;
mod embeddings;
mod trainer;

pub use arms::{arm, arm_registry, Alignment, ArmContext, ArmPlan, BaselineArm, Role, StudentArm, TeacherArm, TrainingArm};
pub use checkpoint::{blob_hash, Checkpoint, CheckpointManifest, MANIFEST_FILE, PARAMS_FILE};
pub use config::{derive_seed, ModelConfig, OptimizerConfig, RunConfig, RunPaths};
pub use data::{Batch, PreparedData, PreparedRecord};
pub use embeddings::{export_teacher_embeddings, TeacherEmbeddingCache, CACHE_MAGIC};
pub use trainer::{evaluate_checkpoint, evaluate_indices, run_arm, write_epoch_log, EpochLog, StepLog, TrainingOutcome};

use crate::Result;

pub fn train_teacher(config: &RunConfig, data: &PreparedData) -> Result<TrainingOutcome> {
    run_arm(
        &TeacherArm,
        &ArmContext {
            config,
            data,
            teacher: None,
            cache: None,
        },
    )
}

/// `cache` may be `None` only when `config.live_teacher` is set.
pub fn train_student(
    config: &RunConfig,
    data: &PreparedData,
    cache: Option<&TeacherEmbeddingCache>,
    teacher: &Checkpoint,
) -> Result<TrainingOutcome> {
    run_arm(
        &StudentArm,
        &ArmContext {
            config,
            data,
            teacher: Some(teacher),
            cache,
        },
    )
}

pub fn train_baseline(config: &RunConfig, data: &PreparedData) -> Result<TrainingOutcome> {
    run_arm(
        &BaselineArm,
        &ArmContext {
            config,
            data,
            teacher: None,
            cache: None,
        },
    )
}
