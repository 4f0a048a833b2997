//! The three ways a bundle gets trained, behind one trait so the trainer and
//! the command line can select them by name.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dataset::{FoldRole, LeadSubset};
use crate::model::{init_bundle, ModelBundle};
use crate::registry::Registry;
use crate::training::{Checkpoint, PreparedData, RunConfig, TeacherEmbeddingCache};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
    Baseline,
}

impl Role {
    /// Whether results count as `pseudo = True` (two-step training).
    pub fn pseudo(self) -> bool {
        !matches!(self, Role::Baseline)
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
            Role::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inputs available to an arm when it sets up a run.
#[derive(Clone, Copy)]
pub struct ArmContext<'a> {
    pub config: &'a RunConfig,
    pub data: &'a PreparedData,
    pub teacher: Option<&'a Checkpoint>,
    pub cache: Option<&'a TeacherEmbeddingCache>,
}

/// Where alignment targets come from, if the arm has any.
pub enum Alignment<'a> {
    None,
    Cached(&'a TeacherEmbeddingCache),
    /// Teacher forward pass in eval mode on every batch.
    Live(Box<ModelBundle<f32>>),
}

/// A ready-to-train bundle plus its alignment source.
pub struct ArmPlan<'a> {
    pub bundle: ModelBundle<f32>,
    pub alignment: Alignment<'a>,
    pub teacher_hash: Option<String>,
}

pub trait TrainingArm: Send + Sync {
    fn role(&self) -> Role;

    fn plan<'a>(&self, ctx: &ArmContext<'a>) -> Result<ArmPlan<'a>>;
}

fn fresh_bundle(config: &RunConfig, subset: &LeadSubset) -> Result<ModelBundle<f32>> {
    init_bundle(&config.bundle_config(), subset, config.derived_seed("init"))
}

fn reduced_subset(config: &RunConfig, role: Role) -> Result<LeadSubset> {
    if config.subset.is_full() {
        return Err(Error::invalid(format!(
            "{role} runs need a reduced lead subset, got all 12 leads"
        )));
    }
    Ok(config.subset.clone())
}

/// Step 1: all 12 leads, classification loss only.
pub struct TeacherArm;

impl TrainingArm for TeacherArm {
    fn role(&self) -> Role {
        Role::Teacher
    }

    fn plan<'a>(&self, ctx: &ArmContext<'a>) -> Result<ArmPlan<'a>> {
        Ok(ArmPlan {
            bundle: fresh_bundle(ctx.config, &LeadSubset::full())?,
            alignment: Alignment::None,
            teacher_hash: None,
        })
    }
}

/// "pseudo = False": reduced leads trained end to end, nothing frozen.
pub struct BaselineArm;

impl TrainingArm for BaselineArm {
    fn role(&self) -> Role {
        Role::Baseline
    }

    fn plan<'a>(&self, ctx: &ArmContext<'a>) -> Result<ArmPlan<'a>> {
        let subset = reduced_subset(ctx.config, self.role())?;
        Ok(ArmPlan {
            bundle: fresh_bundle(ctx.config, &subset)?,
            alignment: Alignment::None,
            teacher_hash: None,
        })
    }
}

/// Step 2: fresh reduced-lead encoder and projection under the teacher's
/// frozen pseudo-classifier, pulled toward the teacher's embeddings.
///
/// The encoder and projection start from the same initialization as the
/// baseline arm with the same seed, so the two arms differ only in the
/// classifier and the loss.
pub struct StudentArm;

impl TrainingArm for StudentArm {
    fn role(&self) -> Role {
        Role::Student
    }

    fn plan<'a>(&self, ctx: &ArmContext<'a>) -> Result<ArmPlan<'a>> {
        let config = ctx.config;
        let subset = reduced_subset(config, self.role())?;
        let teacher = ctx
            .teacher
            .ok_or_else(|| Error::invalid("student training needs a teacher checkpoint"))?;
        if !teacher.bundle.subset.is_full() {
            return Err(Error::invalid("teacher checkpoint was not trained on 12 leads"));
        }
        if teacher.bundle.embedding_dim() != config.model.embedding_dim {
            return Err(Error::shape(format!(
                "teacher embedding dimension {} differs from configured {}",
                teacher.bundle.embedding_dim(),
                config.model.embedding_dim
            )));
        }
        let mut bundle = fresh_bundle(config, &subset)?;
        bundle.copy_classifier_from(&teacher.bundle)?;
        bundle.classifier.frozen = true;

        let teacher_hash = teacher.manifest.content_hash.clone();
        let alignment = if config.live_teacher {
            Alignment::Live(Box::new(teacher.bundle.clone()))
        } else {
            let cache = ctx
                .cache
                .ok_or_else(|| Error::invalid("student training needs a teacher embedding cache"))?;
            if cache.dim() != config.model.embedding_dim {
                return Err(Error::shape(format!(
                    "cache dimension {} differs from embedding dimension {}",
                    cache.dim(),
                    config.model.embedding_dim
                )));
            }
            if cache.teacher_hash() != teacher_hash {
                return Err(Error::invalid(format!(
                    "embedding cache comes from teacher {}, not {teacher_hash}",
                    cache.teacher_hash()
                )));
            }
            if let Some(i) = ctx
                .data
                .indices(FoldRole::Train)
                .into_iter()
                .find(|&i| cache.row(ctx.data.records()[i].ecg_id).is_none())
            {
                return Err(Error::invalid(format!(
                    "teacher embedding cache has no row for training record {}",
                    ctx.data.records()[i].ecg_id
                )));
            }
            Alignment::Cached(cache)
        };
        Ok(ArmPlan {
            bundle,
            alignment,
            teacher_hash: Some(teacher_hash),
        })
    }
}

/// `teacher`, `student` and `baseline`.
pub fn arm_registry() -> &'static Registry<dyn TrainingArm> {
    static REGISTRY: OnceLock<Registry<dyn TrainingArm>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn TrainingArm> = Registry::new("training arm");
        reg.register("teacher", |_| Box::new(TeacherArm))
            .register("student", |_| Box::new(StudentArm))
            .register("baseline", |_| Box::new(BaselineArm));
        reg
    })
}

pub fn arm(name: &str) -> Result<Box<dyn TrainingArm>> {
    arm_registry().create(name, &())
}
