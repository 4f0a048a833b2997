use std::path::Path;

use ecgcl::dataset::wfdb::write_record;
use ecgcl::dataset::{load_ptbxl, LoadOptions, Sex, LEAD_NAMES};
use ecgcl::Error;

const STATEMENTS: &str = "\
,description,diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass
NORM,normal ECG,1.0,,,NORM,NORM
IMI,inferior myocardial infarction,1.0,,,MI,IMI
LVH,left ventricular hypertrophy,1.0,,,HYP,LVH
NDT,non-diagnostic T abnormalities,1.0,1.0,,STTC,STTC
AFIB,atrial fibrillation,,,1.0,,
SR,sinus rhythm,,,1.0,,
";

/// Value of canonical lead `lead` at sample `t`, exactly representable at
/// gain 1000.
fn value(id: u32, lead: usize, t: usize) -> f32 {
    ((id as i32 * 100 + lead as i32 * 10 + (t % 50) as i32) as f32) / 1000.0
}

fn write_signal(dir: &Path, id: u32, n_samples: usize) {
    // Stored in reverse lead order; the loader must restore canonical order.
    let leads: Vec<&str> = LEAD_NAMES.iter().rev().copied().collect();
    let mut data = Vec::with_capacity(12 * n_samples);
    for stored in 0..12 {
        for t in 0..n_samples {
            data.push(value(id, 11 - stored, t));
        }
    }
    let base = dir.join(format!("records100/00000/{id:05}_lr"));
    write_record(&base, 100.0, &leads, 1000.0, &data, n_samples).unwrap();
}

/// Rows: `(ecg_id, scp_codes, fold, samples)`.
fn fixture(dir: &Path, rows: &[(u32, &str, u8, usize)]) {
    std::fs::write(dir.join("scp_statements.csv"), STATEMENTS).unwrap();
    let mut db = String::from("ecg_id,patient_id,age,sex,height,weight,scp_codes,strat_fold,filename_lr,filename_hr\n");
    for &(id, codes, fold, samples) in rows {
        let height = if id == 1 { "172.0" } else { "" };
        db.push_str(&format!(
            "{id},{}.0,{}.0,{},{height},70.0,\"{codes}\",{fold},records100/00000/{id:05}_lr,records500/00000/{id:05}_hr\n",
            id + 100,
            40 + id,
            id % 2,
        ));
        write_signal(dir, id, samples);
    }
    std::fs::write(dir.join("ptbxl_database.csv"), db).unwrap();
}

#[test]
fn miniature_directory_keeps_exactly_the_labelled_records() {
    let dir = tempfile::tempdir().unwrap();
    fixture(
        dir.path(),
        &[
            (2, "{'IMI': 80.0, 'AFIB': 0.0}", 9, 1000),
            (1, "{'NORM': 100.0, 'SR': 0.0}", 1, 1000),
            (3, "{'SR': 0.0}", 4, 1000),
        ],
    );
    let out = load_ptbxl(dir.path(), &LoadOptions::default()).unwrap();

    // Manual lookup: NORM -> NORM, IMI -> MI, SR is a rhythm statement.
    let ids: Vec<u32> = out.records.iter().map(|r| r.ecg_id).collect();
    assert_eq!(ids, vec![1, 2]);
    assert_eq!(out.records[0].label, [1, 0, 0, 0, 0]);
    assert_eq!(out.records[1].label, [0, 1, 0, 0, 0]);
    assert_eq!(out.report.database_rows, 3);
    assert_eq!(out.report.loaded, 2);
    assert_eq!(out.report.excluded_no_superclass, vec![3]);
    assert!(out.report.skipped.is_empty());

    let r = &out.records[0];
    assert_eq!((r.signal.n_leads, r.signal.n_samples), (12, 1000));
    assert_eq!(r.fold, 1);
    assert_eq!(r.sampling_rate, 100);
    assert_eq!(r.age, Some(41.0));
    assert_eq!(r.sex, Some(Sex::Female));
    assert_eq!(r.height, Some(172.0));
    assert_eq!(out.records[1].height, None);
    assert_eq!(out.records[1].sex, Some(Sex::Male));
    for lead in 0..12 {
        for t in [0, 17, 999] {
            let got = r.signal.lead(lead)[t];
            assert!((got - value(1, lead, t)).abs() < 1e-6, "lead {lead} t {t}: {got}");
        }
    }
}

#[test]
fn short_signals_are_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    fixture(
        dir.path(),
        &[(1, "{'NORM': 100.0}", 1, 1000), (4, "{'LVH': 100.0, 'NDT': 50.0}", 10, 600)],
    );
    let out = load_ptbxl(dir.path(), &LoadOptions::default()).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.report.skipped.len(), 1);
    assert_eq!(out.report.skipped[0].0, 4);
    assert!(out.report.skipped[0].1.contains("short"));
}

#[test]
fn likelihood_threshold_drops_weak_codes() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &[(4, "{'LVH': 100.0, 'NDT': 50.0}", 10, 1000)]);
    let all = load_ptbxl(dir.path(), &LoadOptions::default()).unwrap();
    assert_eq!(all.records[0].label, [0, 0, 1, 0, 1]);
    let strict = load_ptbxl(
        dir.path(),
        &LoadOptions {
            min_likelihood: 60.0,
            ..LoadOptions::default()
        },
    )
    .unwrap();
    assert_eq!(strict.records[0].label, [0, 0, 0, 0, 1]);
}

#[test]
fn missing_database_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("scp_statements.csv"), STATEMENTS).unwrap();
    let err = load_ptbxl(dir.path(), &LoadOptions::default()).unwrap_err();
    assert!(matches!(err, Error::MissingFile(ref p) if p.ends_with("ptbxl_database.csv")), "{err}");
}
