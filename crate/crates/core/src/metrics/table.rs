use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use serde::Serialize;

use super::EvalReport;
use crate::SUPERCLASSES;

/// Lead counts in table order.
const ROW_ORDER: [usize; 5] = [12, 6, 4, 3, 2];

pub const RESULTS_CSV_HEADER: &str =
    "subset,pseudo,macro_auc,auc_NORM,auc_MI,auc_STTC,auc_CD,auc_HYP,seed,config_hash";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub leads: usize,
    /// Seed-mean macro AUC of the aligned (two-step) run.
    pub pseudo_true: Option<f64>,
    /// Seed-mean macro AUC of the single-step baseline.
    pub pseudo_false: Option<f64>,
    pub n_seeds_true: usize,
    pub n_seeds_false: usize,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ResultsTable {
    pub rows: Vec<TableRow>,
    /// Every report, sorted, for the per-seed CSV.
    #[serde(skip)]
    pub reports: Vec<EvalReport>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.4}"))
}

/// Groups reports by (lead count, pseudo), averages over seeds and lays the
/// result out as rows 12, 6, 4, 3, 2 with pseudo True/False columns. The
/// 12-lead baseline cell is always N/A. Input order does not matter.
pub fn assemble_table(reports: &[EvalReport]) -> ResultsTable {
    if reports.is_empty() {
        warn!("no reports to tabulate");
        return ResultsTable::default();
    }
    let mut groups: BTreeMap<(usize, bool), Vec<f64>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.subset, r.pseudo)).or_default().push(r.macro_auc);
    }
    let mean = |v: &Vec<f64>| {
        // order-insensitive: sum in sorted order
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        s.iter().sum::<f64>() / s.len() as f64
    };
    let mut rows = Vec::new();
    for leads in ROW_ORDER {
        let t = groups.get(&(leads, true));
        let f = if leads == 12 { None } else { groups.get(&(leads, false)) };
        if t.is_none() {
            warn!("missing cell: {leads} leads, pseudo=True");
        }
        if f.is_none() && leads != 12 {
            warn!("missing cell: {leads} leads, pseudo=False");
        }
        let pseudo_true = t.map(mean);
        let pseudo_false = f.map(mean);
        rows.push(TableRow {
            leads,
            pseudo_true,
            pseudo_false,
            n_seeds_true: t.map_or(0, Vec::len),
            n_seeds_false: f.map_or(0, Vec::len),
            improved: matches!((pseudo_true, pseudo_false), (Some(a), Some(b)) if a > b),
        });
    }
    let mut sorted = reports.to_vec();
    sorted.sort_by(|a, b| {
        b.subset
            .cmp(&a.subset)
            .then(b.pseudo.cmp(&a.pseudo))
            .then(a.seed.cmp(&b.seed))
            .then(a.config_hash.cmp(&b.config_hash))
            .then(a.macro_auc.total_cmp(&b.macro_auc))
    });
    ResultsTable { rows, reports: sorted }
}

impl ResultsTable {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| No. of leads | pseudo = True | pseudo = False | improved |\n|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} |",
                r.leads,
                cell(r.pseudo_true),
                cell(r.pseudo_false),
                r.improved
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("leads,pseudo_true,pseudo_false,improved\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.leads, cell(r.pseudo_true), cell(r.pseudo_false), r.improved);
        }
        s
    }

    /// Per-run rows with the `results.csv` columns.
    pub fn results_csv(&self) -> String {
        let mut s = format!("{RESULTS_CSV_HEADER}\n");
        for r in &self.reports {
            let per_class: Vec<String> = (0..SUPERCLASSES.len())
                .map(|c| r.per_class.get(c).copied().flatten().map_or(String::new(), |v| format!("{v:.6}")))
                .collect();
            let _ = writeln!(
                s,
                "{},{},{:.6},{},{},{}",
                r.subset,
                if r.pseudo { "True" } else { "False" },
                r.macro_auc,
                per_class.join(","),
                r.seed.map_or(String::new(), |v| v.to_string()),
                r.config_hash.clone().unwrap_or_default()
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(subset: usize, pseudo: bool, auc: f64, seed: u64) -> EvalReport {
        EvalReport {
            per_class: vec![Some(auc); 5],
            macro_auc: auc,
            n_eval: 10,
            skipped: vec![],
            subset,
            pseudo,
            seed: Some(seed),
            config_hash: Some("abc".into()),
        }
    }

    fn sweep() -> Vec<EvalReport> {
        let mut v = vec![report(12, true, 0.93, 0)];
        for (i, leads) in [6, 4, 3, 2].into_iter().enumerate() {
            for seed in 0..2 {
                v.push(report(leads, true, 0.90 + 0.01 * i as f64 + 0.001 * seed as f64, seed));
                v.push(report(leads, false, 0.90 + 0.01 * i as f64, seed));
            }
        }
        v
    }

    #[test]
    fn full_sweep_gives_five_rows_with_na_baseline_for_twelve() {
        let t = assemble_table(&sweep());
        assert_eq!(t.rows.len(), 5);
        assert_eq!(t.rows.iter().map(|r| r.leads).collect::<Vec<_>>(), vec![12, 6, 4, 3, 2]);
        assert_eq!(t.rows[0].pseudo_false, None);
        assert!(!t.rows[0].improved);
        assert!(t.rows[1..].iter().all(|r| r.improved && r.n_seeds_true == 2));
        assert!((t.rows[1].pseudo_true.unwrap() - 0.9005).abs() < 1e-12);
        let md = t.to_markdown();
        assert!(md.contains("| 12 | 0.9300 | N/A | false |"));
        assert!(t.to_csv().starts_with("leads,pseudo_true,pseudo_false,improved\n12,0.9300,N/A,false\n"));
        let results = t.results_csv();
        assert!(results.starts_with(RESULTS_CSV_HEADER));
        assert_eq!(results.lines().count(), 1 + 17);
    }

    #[test]
    fn empty_input_gives_empty_table() {
        let t = assemble_table(&[]);
        assert!(t.rows.is_empty());
    }

    #[test]
    fn missing_cells_are_na() {
        let t = assemble_table(&[report(2, true, 0.8, 0)]);
        assert_eq!(t.rows[4].pseudo_false, None);
        assert_eq!(t.rows[1].pseudo_true, None);
        assert!(t.to_markdown().contains("| 6 | N/A | N/A | false |"));
    }

    #[test]
    fn order_insensitive() {
        let a = sweep();
        let mut b = a.clone();
        b.reverse();
        b.swap(1, 5);
        let (ta, tb) = (assemble_table(&a), assemble_table(&b));
        assert_eq!(ta.rows, tb.rows);
        assert_eq!(ta.to_markdown(), tb.to_markdown());
        assert_eq!(ta.results_csv(), tb.results_csv());
    }
}
