use serde::{Deserialize, Serialize};

use super::{Corpus, EcgRecord, FoldRole, SplitSpec, LEAD_NAMES};
use crate::{Error, Result};

/// Per-lead z-score statistics (population std) from the training folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_normalizer(records: &[EcgRecord], split: &SplitSpec) -> Result<NormalizationStats> {
    let train: Vec<&EcgRecord> = records
        .iter()
        .filter(|r| split.role(r.fold) == Some(FoldRole::Train))
        .collect();
    let first = train
        .first()
        .ok_or_else(|| Error::invalid("no records in the training folds"))?;
    let n_leads = first.n_leads();

    // Welford update per lead, record by record.
    let mut count = vec![0u64; n_leads];
    let mut mean = vec![0f64; n_leads];
    let mut m2 = vec![0f64; n_leads];
    for r in &train {
        if r.n_leads() != n_leads {
            return Err(Error::shape(format!(
                "record {} has {} leads, expected {n_leads}",
                r.ecg_id,
                r.n_leads()
            )));
        }
        for lead in 0..n_leads {
            for &v in r.signal.lead(lead) {
                count[lead] += 1;
                let x = v as f64;
                let delta = x - mean[lead];
                mean[lead] += delta / count[lead] as f64;
                m2[lead] += delta * (x - mean[lead]);
            }
        }
    }
    let mut std = Vec::with_capacity(n_leads);
    for lead in 0..n_leads {
        let s = (m2[lead] / count[lead] as f64).sqrt();
        if !(s > 1e-12) {
            let name = if n_leads == LEAD_NAMES.len() {
                LEAD_NAMES[lead].to_string()
            } else {
                format!("#{lead}")
            };
            return Err(Error::ZeroVariance { lead: name });
        }
        std.push(s);
    }
    Ok(NormalizationStats { mean, std })
}

fn check(record: &EcgRecord, stats: &NormalizationStats) -> Result<()> {
    if record.n_leads() != stats.mean.len() {
        return Err(Error::shape(format!(
            "normalizer fitted on {} leads, record {} has {}",
            stats.mean.len(),
            record.ecg_id,
            record.n_leads()
        )));
    }
    Ok(())
}

pub fn apply_normalizer(record: &EcgRecord, stats: &NormalizationStats) -> Result<EcgRecord> {
    check(record, stats)?;
    let mut out = record.clone();
    for lead in 0..out.n_leads() {
        let (m, s) = (stats.mean[lead], stats.std[lead]);
        for v in out.signal.lead_mut(lead) {
            *v = ((*v as f64 - m) / s) as f32;
        }
    }
    Ok(out)
}

pub fn invert_normalizer(record: &EcgRecord, stats: &NormalizationStats) -> Result<EcgRecord> {
    check(record, stats)?;
    let mut out = record.clone();
    for lead in 0..out.n_leads() {
        let (m, s) = (stats.mean[lead], stats.std[lead]);
        for v in out.signal.lead_mut(lead) {
            *v = (*v as f64 * s + m) as f32;
        }
    }
    Ok(out)
}

/// Fits statistics on the training folds of `records` and z-scores every
/// record with them.
pub fn normalize_corpus(records: Vec<EcgRecord>, split: &SplitSpec) -> Result<Corpus> {
    let stats = fit_normalizer(&records, split)?;
    let records = records
        .iter()
        .map(|r| apply_normalizer(r, &stats))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        records,
        normalization: Some(stats),
    })
}
