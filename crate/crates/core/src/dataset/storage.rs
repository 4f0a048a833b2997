//! On-disk corpus layout: `signals.bin` (float32 tensor) + `manifest.csv`,
//! optionally `normalization.json` when the signals are already z-scored.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EcgRecord, NormalizationStats, Sex, Signal};
use crate::{Error, Result, N_CLASSES};

pub const SIGNAL_MAGIC: [u8; 7] = *b"ECGSIG1";
pub const SIGNALS_FILE: &str = "signals.bin";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const NORMALIZATION_FILE: &str = "normalization.json";

/// A 3-D float32 tensor: 7-byte magic, three little-endian `u32` dims, then
/// row-major little-endian `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub magic: [u8; 7],
    pub dims: [u32; 3],
    pub data: Vec<f32>,
}

impl TensorFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.magic)?;
        for d in self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, magic: [u8; 7]) -> Result<Self> {
        let mut head = [0u8; 7];
        r.read_exact(&mut head)?;
        if head != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&head),
                String::from_utf8_lossy(&magic)
            )));
        }
        let mut dims = [0u32; 3];
        for d in &mut dims {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b);
        }
        let len = dims.iter().map(|&d| d as usize).product::<usize>();
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { magic, dims, data })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    ecg_id: u32,
    /// Label bits in superclass order, e.g. `01001`.
    label: String,
    fold: u8,
    sampling_rate: u32,
    age: Option<f32>,
    sex: Option<Sex>,
    height: Option<f32>,
    weight: Option<f32>,
    /// JSON object of SCP code likelihoods.
    scp_codes: String,
}

/// Records plus the normalization already applied to them, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<EcgRecord>,
    pub normalization: Option<NormalizationStats>,
}

pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    let first = corpus
        .records
        .first()
        .ok_or_else(|| Error::invalid("refusing to write an empty corpus"))?;
    let (leads, samples) = (first.signal.n_leads, first.signal.n_samples);
    std::fs::create_dir_all(dir)?;

    let mut data = Vec::with_capacity(corpus.records.len() * leads * samples);
    let mut manifest = csv::Writer::from_path(dir.join(MANIFEST_FILE))?;
    for r in &corpus.records {
        if (r.signal.n_leads, r.signal.n_samples) != (leads, samples) {
            return Err(Error::shape(format!("record {} differs in shape", r.ecg_id)));
        }
        data.extend_from_slice(&r.signal.data);
        manifest.serialize(ManifestRow {
            ecg_id: r.ecg_id,
            label: r.label.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect(),
            fold: r.fold,
            sampling_rate: r.sampling_rate,
            age: r.age,
            sex: r.sex,
            height: r.height,
            weight: r.weight,
            scp_codes: serde_json::to_string(&r.scp_codes)?,
        })?;
    }
    manifest.flush()?;

    let tensor = TensorFile {
        magic: SIGNAL_MAGIC,
        dims: [corpus.records.len() as u32, leads as u32, samples as u32],
        data,
    };
    let file = std::fs::File::create(dir.join(SIGNALS_FILE))?;
    tensor.write_to(std::io::BufWriter::new(file))?;

    let norm_path = dir.join(NORMALIZATION_FILE);
    match &corpus.normalization {
        Some(stats) => std::fs::write(norm_path, serde_json::to_string_pretty(stats)?)?,
        None if norm_path.exists() => std::fs::remove_file(norm_path)?,
        None => {}
    }
    Ok(())
}

/// SHA-256 over the corpus files (signals, manifest, normalization if
/// present), each prefixed by its name and length.
pub fn corpus_hash(dir: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for name in [SIGNALS_FILE, MANIFEST_FILE, NORMALIZATION_FILE] {
        let path = dir.join(name);
        if !path.is_file() {
            if name == NORMALIZATION_FILE {
                continue;
            }
            return Err(Error::MissingFile(path));
        }
        let bytes = std::fs::read(&path)?;
        h.update(format!("{name} {}\0", bytes.len()).as_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let sig_path = dir.join(SIGNALS_FILE);
    let man_path = dir.join(MANIFEST_FILE);
    for p in [&sig_path, &man_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let tensor = TensorFile::read_from(
        std::io::BufReader::new(std::fs::File::open(&sig_path)?),
        SIGNAL_MAGIC,
    )?;
    let [n, leads, samples] = tensor.dims.map(|d| d as usize);
    let mut rdr = csv::Reader::from_path(&man_path)?;
    let rows: Vec<ManifestRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.len() != n {
        return Err(Error::Format(format!(
            "manifest lists {} records, signal tensor holds {n}",
            rows.len()
        )));
    }
    let stride = leads * samples;
    let mut records = Vec::with_capacity(n);
    for (i, row) in rows.into_iter().enumerate() {
        let bits: Vec<u8> = row
            .label
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Format(format!("bad label bits `{}`", row.label))),
            })
            .collect::<Result<_>>()?;
        let label: [u8; N_CLASSES] = bits
            .try_into()
            .map_err(|_| Error::Format(format!("label `{}` is not {N_CLASSES} bits", row.label)))?;
        let scp_codes: BTreeMap<String, f64> = serde_json::from_str(&row.scp_codes)?;
        records.push(EcgRecord {
            ecg_id: row.ecg_id,
            signal: Signal::new(leads, samples, tensor.data[i * stride..(i + 1) * stride].to_vec())?,
            sampling_rate: row.sampling_rate,
            age: row.age,
            sex: row.sex,
            height: row.height,
            weight: row.weight,
            label,
            fold: row.fold,
            scp_codes,
        });
    }
    let norm_path = dir.join(NORMALIZATION_FILE);
    let normalization = if norm_path.is_file() {
        Some(serde_json::from_str(&std::fs::read_to_string(norm_path)?)?)
    } else {
        None
    };
    Ok(Corpus {
        records,
        normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_synthetic_corpus, SyntheticSpec};

    #[test]
    fn corpus_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = make_synthetic_corpus(&SyntheticSpec::new(12, 5)).unwrap();
        records[3].scp_codes.insert("NORM".into(), 100.0);
        let corpus = Corpus {
            records,
            normalization: None,
        };
        write_corpus(dir.path(), &corpus).unwrap();
        assert_eq!(read_corpus(dir.path()).unwrap(), corpus);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let t = TensorFile {
            magic: *b"ECGEMB1",
            dims: [1, 1, 2],
            data: vec![1.0, 2.0],
        };
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert!(TensorFile::read_from(&buf[..], SIGNAL_MAGIC).is_err());
        assert_eq!(TensorFile::read_from(&buf[..], *b"ECGEMB1").unwrap(), t);
    }
}
