use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{LeadSubset, SplitSpec};
use crate::loss::LossConfig;
use crate::metadata::MetadataEncoderConfig;
use crate::model::{BundleConfig, EncoderConfig};
use crate::optim::OptimizerSettings;
use crate::{Error, Result, N_CLASSES};

/// Architecture widths shared by teacher and students. The metadata width is
/// derived from the metadata encoder, not configured separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub embedding_dim: usize,
    pub classifier_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            embedding_dim: 128,
            classifier_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: String,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without eval improvement before stopping; 0 disables.
    pub patience: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: "adam".into(),
            lr: 1e-3,
            weight_decay: 0.0,
            batch_size: 128,
            max_epochs: 50,
            patience: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            lr: self.lr,
            weight_decay: self.weight_decay,
        }
    }
}

/// Filesystem locations. Excluded from the content hash so that moving a run
/// does not change its identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPaths {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Complete description of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub split: SplitSpec,
    pub sampling_rate: u32,
    /// Leads seen by students and baselines; the teacher always uses all 12.
    pub subset: LeadSubset,
    pub model: ModelConfig,
    pub metadata: MetadataEncoderConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Recompute teacher embeddings every batch instead of reading the cache.
    pub live_teacher: bool,
    pub student_arch: String,
    pub min_likelihood: f64,
    pub paths: RunPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            sampling_rate: 100,
            subset: LeadSubset::standard(2).expect("standard subset"),
            model: ModelConfig::default(),
            metadata: MetadataEncoderConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
            live_teacher: false,
            student_arch: "inception".into(),
            min_likelihood: 0.0,
            paths: RunPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.metadata.validate()?;
        self.loss.validate()?;
        self.model.encoder.validate()?;
        if self.sampling_rate == 0 {
            return Err(Error::invalid("sampling_rate must be positive"));
        }
        if self.model.embedding_dim == 0 || self.model.classifier_hidden == 0 {
            return Err(Error::invalid("embedding_dim and classifier_hidden must be positive"));
        }
        if self.optimizer.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.optimizer.lr)));
        }
        if self.optimizer.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if !self.student_arch.eq_ignore_ascii_case("inception") {
            return Err(Error::UnknownStrategy {
                kind: "student_arch",
                name: self.student_arch.clone(),
                known: "inception".into(),
            });
        }
        Ok(())
    }

    pub fn bundle_config(&self) -> BundleConfig {
        BundleConfig {
            encoder: self.model.encoder.clone(),
            embedding_dim: self.model.embedding_dim,
            classifier_hidden: self.model.classifier_hidden,
            n_classes: N_CLASSES,
            metadata_len: self.metadata.encoded_len(),
        }
    }

    /// Canonical JSON (sorted keys, paths removed).
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("paths");
        }
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// A stream seed for `purpose`, derived from the root seed.
    pub fn derived_seed(&self, purpose: &str) -> u64 {
        derive_seed(self.seed, purpose)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_subset(&self, subset: LeadSubset) -> Self {
        Self {
            subset,
            ..self.clone()
        }
    }
}

pub fn derive_seed(root: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_partial_documents() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let partial: RunConfig = serde_json::from_str(r#"{"seed": 7, "optimizer": {"lr": 0.01}}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.optimizer.lr, 0.01);
        assert_eq!(partial.optimizer.batch_size, 128);
    }

    #[test]
    fn hash_ignores_paths_but_not_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = Some("/elsewhere".into());
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), a.with_seed(1).content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }

    #[test]
    fn derived_seeds_differ_by_purpose_and_root() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.derived_seed("init"), cfg.derived_seed("shuffle"));
        assert_ne!(cfg.derived_seed("init"), cfg.with_seed(1).derived_seed("init"));
        assert_eq!(cfg.derived_seed("init"), cfg.derived_seed("init"));
    }

    #[test]
    fn rejects_other_architectures() {
        let cfg = RunConfig {
            student_arch: "xresnet".into(),
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::UnknownStrategy { .. })));
        RunConfig::default().validate().unwrap();
    }
}
