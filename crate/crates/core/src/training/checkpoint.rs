//! On-disk checkpoints: a directory holding `params.bin` (named float32
//! tensors: model parameters, buffers and optimizer slots) and a
//! human-readable `manifest.json`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::LeadSubset;
use crate::metrics::EvalReport;
use crate::model::{init_bundle, BundleConfig, ModelBundle};
use crate::optim::OptimizerState;
use crate::training::{Role, RunConfig};
use crate::{Error, Result};

pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
const MAGIC: &[u8; 7] = b"ECGCKP1";
const PARAM_PREFIX: &str = "param/";
const OPTIM_PREFIX: &str = "optim/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub role: Role,
    pub subset: LeadSubset,
    pub bundle: BundleConfig,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    /// Epoch the parameters were taken from (0 = initialization).
    pub epoch: usize,
    pub best_metric: f64,
    pub report: Option<EvalReport>,
    pub frozen_classifier: bool,
    pub optimizer: String,
    pub optimizer_step: u64,
    /// Hash of the teacher checkpoint a student was aligned to.
    pub teacher_hash: Option<String>,
    /// Git-style blob hash of the tensor payload; filled in on save.
    #[serde(default)]
    pub content_hash: String,
}

/// A trained (or freshly initialized) bundle with its optimizer state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub bundle: ModelBundle<f32>,
    pub optimizer: OptimizerState<f32>,
}

/// SHA-256 over `blob <len>\0<payload>`, as git hashes objects.
pub fn blob_hash(payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", payload.len()).as_bytes());
    h.update(payload);
    hex::encode(h.finalize())
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f32]) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len())?;
    for &d in shape {
        put_u32(out, d)?;
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("truncated checkpoint payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

type Tensors = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

fn parse_tensors(buf: &[u8]) -> Result<Tensors> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a checkpoint payload (bad magic)".into()));
    }
    let count = c.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = c.u32()?;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = c.u32()?;
        let shape = (0..ndim).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = c
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        if out.insert(name.clone(), (shape, values)).is_some() {
            return Err(Error::Format(format!("duplicate tensor `{name}`")));
        }
    }
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes after checkpoint tensors".into()));
    }
    Ok(out)
}

impl Checkpoint {
    /// The serialized tensor payload (deterministic for a given state).
    pub fn payload(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        self.bundle.visit(&mut |name, p| {
            tensors.push((format!("{PARAM_PREFIX}{name}"), p.shape.clone(), p.value.clone()));
        });
        for (slot, values) in &self.optimizer.slots {
            tensors.push((format!("{OPTIM_PREFIX}{slot}"), vec![values.len()], values.clone()));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, tensors.len())?;
        for (name, shape, values) in &tensors {
            put_tensor(&mut out, name, shape, values)?;
        }
        Ok(out)
    }

    pub fn content_hash(&self) -> Result<String> {
        Ok(blob_hash(&self.payload()?))
    }

    /// Writes `dir/params.bin` and `dir/manifest.json`, filling in the
    /// manifest's content hash. Returns that hash.
    pub fn save(&mut self, dir: &Path) -> Result<String> {
        std::fs::create_dir_all(dir)?;
        let payload = self.payload()?;
        self.manifest.content_hash = blob_hash(&payload);
        self.manifest.optimizer_step = self.optimizer.step;
        let mut f = std::fs::File::create(dir.join(PARAMS_FILE))?;
        f.write_all(&payload)?;
        f.sync_all()?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(self.manifest.content_hash.clone())
    }

    pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Loads and verifies a checkpoint directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Self::read_manifest(dir)?;
        let path = dir.join(PARAMS_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let mut payload = Vec::new();
        std::fs::File::open(&path)?.read_to_end(&mut payload)?;
        let actual = blob_hash(&payload);
        if actual != manifest.content_hash {
            return Err(Error::Format(format!(
                "checkpoint {} is corrupt: hash {actual} does not match manifest {}",
                dir.display(),
                manifest.content_hash
            )));
        }
        let mut tensors = parse_tensors(&payload)?;

        let mut bundle: ModelBundle<f32> = init_bundle(&manifest.bundle, &manifest.subset, 0)?;
        bundle.classifier.frozen = manifest.frozen_classifier;
        let mut problem = None;
        bundle.visit_mut(&mut |name, p| {
            if problem.is_some() {
                return;
            }
            match tensors.remove(&format!("{PARAM_PREFIX}{name}")) {
                Some((shape, values)) if shape == p.shape => p.value = values,
                Some((shape, _)) => {
                    problem = Some(format!("tensor `{name}` has shape {shape:?}, model expects {:?}", p.shape))
                }
                None => problem = Some(format!("tensor `{name}` missing from checkpoint")),
            }
        });
        if let Some(msg) = problem {
            return Err(Error::Format(msg));
        }

        let mut optimizer = OptimizerState {
            step: manifest.optimizer_step,
            slots: BTreeMap::new(),
        };
        for (name, (_, values)) in tensors {
            match name.strip_prefix(OPTIM_PREFIX) {
                Some(slot) => {
                    optimizer.slots.insert(slot.to_string(), values);
                }
                None => return Err(Error::Format(format!("unexpected tensor `{name}` in checkpoint"))),
            }
        }
        Ok(Self {
            manifest,
            bundle,
            optimizer,
        })
    }
}
