use crate::dataset::{fit_normalizer, Corpus, FoldRole, LeadSubset, NormalizationStats, LEAD_NAMES};
use crate::metadata::encode_record;
use crate::nn::{Matrix, Tensor3};
use crate::training::RunConfig;
use crate::{Error, Result, N_CLASSES};

/// Per-record bookkeeping kept alongside the signal buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRecord {
    pub ecg_id: u32,
    pub fold: u8,
    pub role: Option<FoldRole>,
    pub label: [u8; N_CLASSES],
    pub meta: Vec<f32>,
}

/// A corpus made ready for training: z-scored 12-lead signals in one
/// contiguous buffer, encoded metadata and float targets, ordered by ecg_id.
#[derive(Debug, Clone)]
pub struct PreparedData {
    records: Vec<PreparedRecord>,
    signals: Vec<f32>,
    n_samples: usize,
    meta_len: usize,
    normalization: NormalizationStats,
}

/// One mini-batch in model layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub signals: Tensor3<f32>,
    pub meta: Matrix<f32>,
    pub targets: Matrix<f32>,
    pub labels: Vec<u8>,
}

impl PreparedData {
    /// Normalizes with the corpus's stored statistics when present, else fits
    /// them on the configured training folds. Records without any positive
    /// label are dropped.
    pub fn new(corpus: &Corpus, config: &RunConfig) -> Result<Self> {
        config.split.validate()?;
        config.metadata.validate()?;
        let normalization = match &corpus.normalization {
            Some(stats) => stats.clone(),
            None => fit_normalizer(&corpus.records, &config.split)?,
        };
        let already_normalized = corpus.normalization.is_some();

        let mut order: Vec<usize> = (0..corpus.records.len())
            .filter(|&i| corpus.records[i].has_positive())
            .collect();
        order.sort_by_key(|&i| corpus.records[i].ecg_id);
        if order.is_empty() {
            return Err(Error::invalid("corpus has no labelled records"));
        }
        let n_samples = corpus.records[order[0]].signal.n_samples;

        let mut records = Vec::with_capacity(order.len());
        let mut signals = Vec::with_capacity(order.len() * LEAD_NAMES.len() * n_samples);
        for &i in &order {
            let r = &corpus.records[i];
            if r.n_leads() != LEAD_NAMES.len() || r.signal.n_samples != n_samples {
                return Err(Error::shape(format!(
                    "record {} is {}x{}, expected {}x{n_samples}",
                    r.ecg_id,
                    r.n_leads(),
                    r.signal.n_samples,
                    LEAD_NAMES.len()
                )));
            }
            if records.last().is_some_and(|p: &PreparedRecord| p.ecg_id == r.ecg_id) {
                return Err(Error::invalid(format!("duplicate ecg_id {}", r.ecg_id)));
            }
            if already_normalized {
                signals.extend_from_slice(&r.signal.data);
            } else {
                for lead in 0..LEAD_NAMES.len() {
                    let (m, s) = (normalization.mean[lead], normalization.std[lead]);
                    signals.extend(r.signal.lead(lead).iter().map(|&v| ((v as f64 - m) / s) as f32));
                }
            }
            records.push(PreparedRecord {
                ecg_id: r.ecg_id,
                fold: r.fold,
                role: config.split.role(r.fold),
                label: r.label,
                meta: encode_record(r, &config.metadata).values().iter().map(|&v| v as f32).collect(),
            });
        }
        Ok(Self {
            records,
            signals,
            n_samples,
            meta_len: config.metadata.encoded_len(),
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PreparedRecord] {
        &self.records
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn meta_len(&self) -> usize {
        self.meta_len
    }

    pub fn normalization(&self) -> &NormalizationStats {
        &self.normalization
    }

    /// Positions of the records in `role`, ascending by ecg_id.
    pub fn indices(&self, role: FoldRole) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].role == Some(role)).collect()
    }

    /// Normalized lead `lead` of record position `i`.
    pub fn lead(&self, i: usize, lead: usize) -> &[f32] {
        let start = (i * LEAD_NAMES.len() + lead) * self.n_samples;
        &self.signals[start..start + self.n_samples]
    }

    pub fn batch(&self, idx: &[usize], subset: &LeadSubset) -> Batch {
        let (n, c, t) = (idx.len(), subset.size(), self.n_samples);
        let mut signals = Vec::with_capacity(n * c * t);
        let mut meta = Vec::with_capacity(n * self.meta_len);
        let mut targets = Vec::with_capacity(n * N_CLASSES);
        let mut labels = Vec::with_capacity(n * N_CLASSES);
        for &i in idx {
            for &lead in subset.indices() {
                signals.extend_from_slice(self.lead(i, lead));
            }
            let r = &self.records[i];
            meta.extend_from_slice(&r.meta);
            targets.extend(r.label.iter().map(|&b| b as f32));
            labels.extend_from_slice(&r.label);
        }
        Batch {
            signals: Tensor3::from_vec(n, c, t, signals),
            meta: Matrix::from_vec(n, self.meta_len, meta),
            targets: Matrix::from_vec(n, N_CLASSES, targets),
            labels,
        }
    }
}
