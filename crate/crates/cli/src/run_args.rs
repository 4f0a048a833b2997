//! Configuration shared by the training subcommands: a JSON document, then
//! flag overrides, echoed and hashed before any work starts.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use ecgcl::dataset::{read_corpus, LeadSubset};
use ecgcl::training::{PreparedData, RunConfig};
use serde_json::json;

use crate::exit::usage;

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags below override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Prepared corpus directory (from `prepare` or `synth`).
    #[arg(long, env = "ECGCL_DATA_DIR", value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    /// Output root (checkpoints/, embeddings/, logs/ ...).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Number of leads for student/baseline runs: 6, 4, 3 or 2.
    #[arg(long)]
    pub subset: Option<usize>,

    /// Weight of the similarity term.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Similarity kind: l1, l2 or cosine.
    #[arg(long)]
    pub sim: Option<String>,

    /// Optimizer: adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Maximum training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Early-stopping patience in epochs (0 disables).
    #[arg(long)]
    pub patience: Option<usize>,

    /// Recompute teacher embeddings every batch instead of using the cache.
    #[arg(long)]
    pub live_teacher: bool,
}

/// The effective configuration of a run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub data_dir: PathBuf,
    pub out: PathBuf,
}

pub fn load_config_file(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))
        }
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let mut c = load_config_file(self.config.as_deref())?;
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.subset {
            c.subset = LeadSubset::standard(v).map_err(|e| usage(e.to_string()))?;
        }
        if let Some(v) = self.alpha {
            c.loss.alpha = v;
        }
        if let Some(v) = &self.sim {
            c.loss.sim = v.clone();
        }
        if let Some(v) = &self.optimizer {
            c.optimizer.kind = v.clone();
        }
        if let Some(v) = self.lr {
            c.optimizer.lr = v;
        }
        if let Some(v) = self.batch_size {
            c.optimizer.batch_size = v;
        }
        if let Some(v) = self.epochs {
            c.optimizer.max_epochs = v;
        }
        if let Some(v) = self.patience {
            c.optimizer.patience = v;
        }
        if self.live_teacher {
            c.live_teacher = true;
        }
        if let Some(d) = &self.data_dir {
            c.paths.data_dir = Some(d.clone());
        }
        if let Some(o) = &self.out {
            c.paths.out_dir = Some(o.clone());
        }
        c.validate().map_err(|e| usage(e.to_string()))?;
        let data_dir = c
            .paths
            .data_dir
            .clone()
            .ok_or_else(|| usage("no data directory: pass --data-dir or set ECGCL_DATA_DIR"))?;
        let out = c.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok(Resolved {
            config: c,
            data_dir,
            out,
        })
    }
}

impl Resolved {
    /// Logs the effective configuration and its hash and writes both to
    /// `logs/<tag>.config.json`.
    pub fn echo(&self, tag: &str) -> Result<()> {
        let hash = self.config.content_hash();
        let doc = json!({ "config_hash": hash, "config": self.config });
        let text = serde_json::to_string_pretty(&doc)?;
        log::info!("effective config (hash {hash}):\n{text}");
        let logs = self.out.join("logs");
        std::fs::create_dir_all(&logs).with_context(|| format!("creating {}", logs.display()))?;
        std::fs::write(logs.join(format!("{tag}.config.json")), text)?;
        Ok(())
    }

    pub fn load_data(&self) -> Result<PreparedData> {
        load_data(&self.data_dir, &self.config)
    }
}

pub fn load_data(dir: &Path, config: &RunConfig) -> Result<PreparedData> {
    let corpus = read_corpus(dir).with_context(|| format!("reading corpus from {}", dir.display()))?;
    Ok(PreparedData::new(&corpus, config)?)
}

/// First 12 hex digits of a hash, for directory names.
pub fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}
