use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::superclass::{aggregate_superclasses, parse_scp_codes, ScpStatements};
use super::wfdb::read_record;
use super::{lead_index, EcgRecord, Label, Sex, Signal, LEAD_NAMES, RECORD_SECONDS};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadOptions {
    /// 100 (the `records100` set) or 500 (`records500`).
    pub sampling_rate: u32,
    /// SCP codes listed with a lower likelihood are ignored. 0 keeps all.
    pub min_likelihood: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            sampling_rate: 100,
            min_likelihood: 0.0,
        }
    }
}

/// Ingestion counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub database_rows: usize,
    pub loaded: usize,
    /// Rows whose codes map to no superclass.
    pub excluded_no_superclass: Vec<u32>,
    /// Rows skipped because their waveform could not be read.
    pub skipped: Vec<(u32, String)>,
}

#[derive(Debug, Clone)]
pub struct PtbXl {
    pub records: Vec<EcgRecord>,
    pub report: IngestReport,
}

struct Row {
    ecg_id: u32,
    age: Option<f32>,
    sex: Option<Sex>,
    height: Option<f32>,
    weight: Option<f32>,
    fold: u8,
    scp_codes: BTreeMap<String, f64>,
    label: Label,
    filename: String,
}

fn opt_f32(v: Option<&str>) -> Option<f32> {
    v.map(str::trim)
        .filter(|s| !s.is_empty())
        .and_then(|s| s.parse::<f32>().ok())
        .filter(|x| x.is_finite())
}

/// Loads every PTB-XL row with a non-empty superclass label, ordered by
/// `ecg_id`.
pub fn load_ptbxl(data_dir: &Path, options: &LoadOptions) -> Result<PtbXl> {
    let db_path = data_dir.join("ptbxl_database.csv");
    let stmt_path = data_dir.join("scp_statements.csv");
    for p in [&db_path, &stmt_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let filename_col = match options.sampling_rate {
        100 => "filename_lr",
        500 => "filename_hr",
        other => return Err(Error::invalid(format!("unsupported sampling rate {other} Hz"))),
    };
    let statements = ScpStatements::from_path(&stmt_path)?;

    let mut rdr = csv::Reader::from_path(&db_path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingest(format!("ptbxl_database.csv lacks column `{name}`")))
    };
    let (c_id, c_codes, c_fold, c_file) = (col("ecg_id")?, col("scp_codes")?, col("strat_fold")?, col(filename_col)?);
    let optional = |name: &str| headers.iter().position(|h| h == name);
    let (c_age, c_sex, c_height, c_weight) = (optional("age"), optional("sex"), optional("height"), optional("weight"));

    let mut report = IngestReport::default();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        report.database_rows += 1;
        let field = |c: Option<usize>| c.and_then(|c| rec.get(c));
        let ecg_id = field(Some(c_id))
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|v| *v >= 1.0)
            .map(|v| v as u32)
            .ok_or_else(|| Error::Ingest(format!("bad ecg_id in row {}", report.database_rows)))?;
        let fold = field(Some(c_fold))
            .and_then(|s| s.trim().parse::<f64>().ok())
            .map(|v| v as u8)
            .filter(|f| (1..=10).contains(f))
            .ok_or_else(|| Error::Ingest(format!("bad strat_fold for ecg_id {ecg_id}")))?;
        let scp_codes = parse_scp_codes(field(Some(c_codes)).unwrap_or("{}"))?;
        let label = aggregate_superclasses(&scp_codes, &statements, options.min_likelihood);
        if label.iter().all(|&b| b == 0) {
            report.excluded_no_superclass.push(ecg_id);
            continue;
        }
        let sex = match opt_f32(field(c_sex)) {
            Some(v) if v == 0.0 => Some(Sex::Male),
            Some(v) if v == 1.0 => Some(Sex::Female),
            _ => None,
        };
        rows.push(Row {
            ecg_id,
            age: opt_f32(field(c_age)),
            sex,
            height: opt_f32(field(c_height)),
            weight: opt_f32(field(c_weight)),
            fold,
            scp_codes,
            label,
            filename: field(Some(c_file)).unwrap_or("").trim().to_string(),
        });
    }

    let expected_samples = options.sampling_rate as usize * RECORD_SECONDS;
    let results: Vec<std::result::Result<EcgRecord, (u32, String)>> = rows
        .into_par_iter()
        .map(|row| {
            read_signal(data_dir, &row.filename, expected_samples)
                .map(|signal| EcgRecord {
                    ecg_id: row.ecg_id,
                    signal,
                    sampling_rate: options.sampling_rate,
                    age: row.age,
                    sex: row.sex,
                    height: row.height,
                    weight: row.weight,
                    label: row.label,
                    fold: row.fold,
                    scp_codes: row.scp_codes,
                })
                .map_err(|e| (row.ecg_id, e.to_string()))
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err((id, reason)) => {
                warn!("skipping ecg_id {id}: {reason}");
                report.skipped.push((id, reason));
            }
        }
    }
    records.sort_by_key(|r| r.ecg_id);
    report.loaded = records.len();
    info!(
        "loaded {} of {} PTB-XL rows ({} without a superclass, {} unreadable)",
        report.loaded,
        report.database_rows,
        report.excluded_no_superclass.len(),
        report.skipped.len()
    );
    Ok(PtbXl { records, report })
}

/// Reads one record and returns its 12 leads in canonical order.
fn read_signal(data_dir: &Path, filename: &str, expected_samples: usize) -> Result<Signal> {
    if filename.is_empty() {
        return Err(Error::Format("empty waveform filename".into()));
    }
    let rec = read_record(&data_dir.join(filename))?;
    let h = &rec.header;
    if h.signals.len() != LEAD_NAMES.len() {
        return Err(Error::Format(format!("{} leads, expected 12", h.signals.len())));
    }
    if h.n_samples < expected_samples {
        return Err(Error::Format(format!(
            "short signal: {} samples, expected {expected_samples}",
            h.n_samples
        )));
    }
    // Reorder by lead name when every description is recognized.
    let order: Vec<usize> = match h
        .signals
        .iter()
        .map(|s| lead_index(&s.description))
        .collect::<Option<Vec<_>>>()
    {
        Some(idx) if is_permutation(&idx) => idx,
        _ => (0..LEAD_NAMES.len()).collect(),
    };
    let n = h.n_samples;
    let mut data = vec![0f32; LEAD_NAMES.len() * expected_samples];
    for (src, &dst) in order.iter().enumerate() {
        let lead = &rec.data[src * n..src * n + expected_samples];
        if lead.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite sample".into()));
        }
        data[dst * expected_samples..(dst + 1) * expected_samples].copy_from_slice(lead);
    }
    Signal::new(LEAD_NAMES.len(), expected_samples, data)
}

fn is_permutation(idx: &[usize]) -> bool {
    let mut seen = vec![false; idx.len()];
    idx.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
}
