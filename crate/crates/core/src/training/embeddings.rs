use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::FoldRole;
use crate::nn::{Matrix, Mode};
use crate::training::{Checkpoint, PreparedData};
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 7] = b"ECGEMB1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheManifest {
    record_ids: Vec<u32>,
    dim: usize,
    teacher_hash: String,
}

/// Frozen-teacher embeddings `v12`, one row per train/eval record in
/// ascending ecg_id order.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherEmbeddingCache {
    record_ids: Vec<u32>,
    dim: usize,
    data: Vec<f32>,
    teacher_hash: String,
    index: HashMap<u32, usize>,
}

impl TeacherEmbeddingCache {
    pub fn new(record_ids: Vec<u32>, dim: usize, data: Vec<f32>, teacher_hash: String) -> Result<Self> {
        if data.len() != record_ids.len() * dim {
            return Err(Error::shape(format!(
                "{} rows of dimension {dim} need {} values, got {}",
                record_ids.len(),
                record_ids.len() * dim,
                data.len()
            )));
        }
        if record_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("cache record ids must be strictly ascending".into()));
        }
        let index = record_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(Self {
            record_ids,
            dim,
            data,
            teacher_hash,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn record_ids(&self) -> &[u32] {
        &self.record_ids
    }

    pub fn teacher_hash(&self) -> &str {
        &self.teacher_hash
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, ecg_id: u32) -> Option<&[f32]> {
        self.index
            .get(&ecg_id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Rows for `ids`, stacked; errors on the first id without a row.
    pub fn gather(&self, ids: impl IntoIterator<Item = u32>) -> Result<Matrix<f32>> {
        let mut out = Vec::new();
        let mut rows = 0;
        for id in ids {
            let row = self
                .row(id)
                .ok_or_else(|| Error::invalid(format!("teacher embedding cache has no row for record {id}")))?;
            out.extend_from_slice(row);
            rows += 1;
        }
        Ok(Matrix::from_vec(rows, self.dim, out))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        for v in [self.record_ids.len(), self.dim] {
            let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))?;
            w.write_all(&v.to_le_bytes())?;
        }
        let mut body = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            body.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&body)?;
        let manifest = CacheManifest {
            record_ids: self.record_ids.clone(),
            dim: self.dim,
            teacher_hash: self.teacher_hash.clone(),
        };
        serde_json::to_writer(&mut w, &manifest)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 15];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("embedding cache shorter than its header".into()))?;
        if &header[..7] != CACHE_MAGIC {
            return Err(Error::Format("not an embedding cache (bad magic)".into()));
        }
        let n = u32::from_le_bytes(header[7..11].try_into().expect("4 bytes")) as usize;
        let d = u32::from_le_bytes(header[11..15].try_into().expect("4 bytes")) as usize;
        let mut body = vec![0u8; n * d * 4];
        r.read_exact(&mut body)
            .map_err(|_| Error::Format(format!("embedding cache truncated: expected {n}x{d} values")))?;
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let mut rest = String::new();
        r.read_to_string(&mut rest)?;
        let manifest: CacheManifest = serde_json::from_str(&rest)?;
        if manifest.record_ids.len() != n || manifest.dim != d {
            return Err(Error::Format(format!(
                "embedding cache header says {n}x{d}, manifest says {}x{}",
                manifest.record_ids.len(),
                manifest.dim
            )));
        }
        Self::new(manifest.record_ids, d, data, manifest.teacher_hash)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Runs the teacher in eval mode over every train and eval record.
pub fn export_teacher_embeddings(teacher: &Checkpoint, data: &PreparedData) -> Result<TeacherEmbeddingCache> {
    if !teacher.bundle.subset.is_full() {
        return Err(Error::invalid(format!(
            "teacher must see all 12 leads, checkpoint has {}",
            teacher.bundle.subset.size()
        )));
    }
    if teacher.manifest.content_hash.is_empty() {
        return Err(Error::invalid("teacher checkpoint must be saved before exporting embeddings"));
    }
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| matches!(data.records()[i].role, Some(FoldRole::Train) | Some(FoldRole::Eval)))
        .collect();
    let mut bundle = teacher.bundle.clone();
    let dim = bundle.embedding_dim();
    let batch_size = teacher.manifest.config.optimizer.batch_size.max(1);
    let mut out = Vec::with_capacity(idx.len() * dim);
    for chunk in idx.chunks(batch_size) {
        let batch = data.batch(chunk, &bundle.subset);
        let pass = bundle.forward(batch.signals, &batch.meta, Mode::Eval)?;
        out.extend_from_slice(&pass.embeddings.data);
    }
    let ids = idx.iter().map(|&i| data.records()[i].ecg_id).collect();
    TeacherEmbeddingCache::new(ids, dim, out, teacher.manifest.content_hash.clone())
}
