//! ECG records, lead subsets, fold splits and the PTB-XL / synthetic sources
//! that produce them.

mod normalize;
mod ptbxl;
mod storage;
mod superclass;
mod synthetic;
pub mod wfdb;

pub use normalize::{apply_normalizer, fit_normalizer, invert_normalizer, normalize_corpus, NormalizationStats};
pub use ptbxl::{load_ptbxl, IngestReport, LoadOptions, PtbXl};
pub use storage::{
    corpus_hash, read_corpus, write_corpus, Corpus, TensorFile, MANIFEST_FILE, NORMALIZATION_FILE, SIGNALS_FILE,
    SIGNAL_MAGIC,
};
pub use superclass::{aggregate_superclasses, parse_scp_codes, ScpStatements};
pub use synthetic::{make_synthetic_corpus, SyntheticSpec};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, N_CLASSES};

/// Canonical 12-lead order.
pub const LEAD_NAMES: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

/// Records are ten seconds long.
pub const RECORD_SECONDS: usize = 10;

pub fn lead_index(name: &str) -> Option<usize> {
    LEAD_NAMES.iter().position(|l| l.eq_ignore_ascii_case(name.trim()))
}

/// Multi-hot superclass label in [`crate::SUPERCLASSES`] order.
pub type Label = [u8; N_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

/// Lead-major signal matrix in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub n_leads: usize,
    pub n_samples: usize,
    pub data: Vec<f32>,
}

impl Signal {
    pub fn new(n_leads: usize, n_samples: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_leads * n_samples {
            return Err(Error::shape(format!(
                "signal buffer has {} values, expected {n_leads}x{n_samples}",
                data.len()
            )));
        }
        Ok(Self {
            n_leads,
            n_samples,
            data,
        })
    }

    pub fn lead(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn lead_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }
}

/// One ten-second recording with its metadata, label and fold.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub ecg_id: u32,
    pub signal: Signal,
    pub sampling_rate: u32,
    pub age: Option<f32>,
    pub sex: Option<Sex>,
    pub height: Option<f32>,
    pub weight: Option<f32>,
    pub label: Label,
    pub fold: u8,
    /// Raw SCP statement codes with likelihoods; empty for synthetic records.
    pub scp_codes: BTreeMap<String, f64>,
}

impl EcgRecord {
    pub fn n_leads(&self) -> usize {
        self.signal.n_leads
    }

    pub fn has_positive(&self) -> bool {
        self.label.contains(&1)
    }
}

/// An ordered selection of leads from the canonical 12.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LeadSubset {
    indices: Vec<usize>,
}

impl LeadSubset {
    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("lead subset is empty"));
        }
        if indices.iter().any(|&i| i >= LEAD_NAMES.len()) {
            return Err(Error::invalid(format!("lead index out of range in {indices:?}")));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "lead indices must be strictly increasing: {indices:?}"
            )));
        }
        Ok(Self { indices })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut indices = names
            .iter()
            .map(|n| {
                lead_index(n.as_ref())
                    .ok_or_else(|| Error::invalid(format!("unknown lead `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        indices.sort_unstable();
        Self::from_indices(indices)
    }

    /// The reduced-lead sets of the PhysioNet 2021 challenge plus the full set:
    /// 6 = limb leads, 4 = {I, II, III, V2}, 3 = {I, II, V2}, 2 = {I, II}.
    pub fn standard(size: usize) -> Result<Self> {
        let indices = match size {
            12 => (0..12).collect(),
            6 => vec![0, 1, 2, 3, 4, 5],
            4 => vec![0, 1, 2, 7],
            3 => vec![0, 1, 7],
            2 => vec![0, 1],
            other => {
                return Err(Error::invalid(format!(
                    "no standard lead subset of size {other} (expected 12, 6, 4, 3 or 2)"
                )))
            }
        };
        Self::from_indices(indices)
    }

    pub fn full() -> Self {
        Self::standard(12).expect("12-lead subset")
    }

    /// Subset name: the number of leads.
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == LEAD_NAMES.len()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.indices.iter().map(|&i| LEAD_NAMES[i]).collect()
    }
}

impl TryFrom<Vec<String>> for LeadSubset {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::from_names(&names)
    }
}

impl From<LeadSubset> for Vec<String> {
    fn from(s: LeadSubset) -> Self {
        s.names().into_iter().map(String::from).collect()
    }
}

/// Returns a copy of a 12-lead `record` restricted to `subset`'s rows.
pub fn select_leads(record: &EcgRecord, subset: &LeadSubset) -> Result<EcgRecord> {
    if record.n_leads() != LEAD_NAMES.len() {
        return Err(Error::shape(format!(
            "record {} has {} leads, lead selection needs 12",
            record.ecg_id,
            record.n_leads()
        )));
    }
    let n = record.signal.n_samples;
    let mut data = Vec::with_capacity(subset.size() * n);
    for &i in subset.indices() {
        data.extend_from_slice(record.signal.lead(i));
    }
    Ok(EcgRecord {
        signal: Signal::new(subset.size(), n, data)?,
        ..record.clone()
    })
}

/// Which role a fold plays in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldRole {
    Train,
    Eval,
    Holdout,
}

/// Fold assignment: training folds, the reported evaluation fold and a
/// held-out fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_folds: Vec<u8>,
    pub eval_fold: u8,
    pub holdout_fold: u8,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_folds: (1..=8).collect(),
            eval_fold: 9,
            holdout_fold: 10,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .train_folds
            .iter()
            .chain([&self.eval_fold, &self.holdout_fold]);
        let mut seen = [false; 11];
        for &f in all {
            if !(1..=10).contains(&f) {
                return Err(Error::invalid(format!("fold {f} outside 1..10")));
            }
            if seen[f as usize] {
                return Err(Error::invalid(format!("fold {f} assigned to more than one role")));
            }
            seen[f as usize] = true;
        }
        if self.train_folds.is_empty() {
            return Err(Error::invalid("no training folds"));
        }
        Ok(())
    }

    pub fn role(&self, fold: u8) -> Option<FoldRole> {
        if self.train_folds.contains(&fold) {
            Some(FoldRole::Train)
        } else if fold == self.eval_fold {
            Some(FoldRole::Eval)
        } else if fold == self.holdout_fold {
            Some(FoldRole::Holdout)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_12() -> EcgRecord {
        let n = 1000;
        let data = (0..12 * n).map(|i| (i / n) as f32 + (i % n) as f32 * 1e-3).collect();
        EcgRecord {
            ecg_id: 1,
            signal: Signal::new(12, n, data).unwrap(),
            sampling_rate: 100,
            age: Some(50.0),
            sex: Some(Sex::Female),
            height: None,
            weight: Some(70.0),
            label: [1, 0, 0, 0, 0],
            fold: 3,
            scp_codes: BTreeMap::new(),
        }
    }

    #[test]
    fn two_lead_subset_takes_rows_zero_and_one() {
        let r = record_12();
        let s = select_leads(&r, &LeadSubset::standard(2).unwrap()).unwrap();
        assert_eq!(s.signal.n_leads, 2);
        assert_eq!(s.signal.n_samples, 1000);
        assert_eq!(s.signal.lead(0), r.signal.lead(0));
        assert_eq!(s.signal.lead(1), r.signal.lead(1));
        assert_eq!(s.label, r.label);
        assert_eq!(s.age, r.age);
    }

    #[test]
    fn three_lead_subset_is_i_ii_v2() {
        let subset = LeadSubset::standard(3).unwrap();
        assert_eq!(subset.indices(), &[0, 1, 7]);
        assert_eq!(subset.names(), vec!["I", "II", "V2"]);
        let r = record_12();
        let s = select_leads(&r, &subset).unwrap();
        assert_eq!(s.signal.lead(2), r.signal.lead(7));
    }

    #[test]
    fn full_subset_is_identity() {
        let r = record_12();
        assert_eq!(select_leads(&r, &LeadSubset::full()).unwrap(), r);
    }

    #[test]
    fn selection_requires_twelve_leads() {
        let r = select_leads(&record_12(), &LeadSubset::standard(2).unwrap()).unwrap();
        assert!(select_leads(&r, &LeadSubset::standard(2).unwrap()).is_err());
    }

    #[test]
    fn standard_subsets_satisfy_invariants() {
        for size in [12, 6, 4, 3, 2] {
            let s = LeadSubset::standard(size).unwrap();
            assert_eq!(s.size(), size);
            assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
        }
        assert!(LeadSubset::standard(5).is_err());
        assert!(LeadSubset::from_indices(vec![1, 0]).is_err());
        assert!(LeadSubset::from_indices(vec![0, 12]).is_err());
    }

    #[test]
    fn subset_serializes_as_lead_names() {
        let s = LeadSubset::standard(4).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"["I","II","III","V2"]"#);
        let back: LeadSubset = serde_json::from_str(r#"["v2","I","ii"]"#).unwrap();
        assert_eq!(back, LeadSubset::standard(3).unwrap());
    }

    #[test]
    fn split_validation() {
        assert!(SplitSpec::default().validate().is_ok());
        let overlapping = SplitSpec {
            train_folds: vec![1, 2, 9],
            eval_fold: 9,
            holdout_fold: 10,
        };
        assert!(overlapping.validate().is_err());
        let out_of_range = SplitSpec {
            train_folds: vec![0],
            eval_fold: 9,
            holdout_fold: 10,
        };
        assert!(out_of_range.validate().is_err());
        let split = SplitSpec::default();
        assert_eq!(split.role(4), Some(FoldRole::Train));
        assert_eq!(split.role(9), Some(FoldRole::Eval));
        assert_eq!(split.role(10), Some(FoldRole::Holdout));
    }
}
