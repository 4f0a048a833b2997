use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;

use super::Label;
use crate::{Error, Result, SUPERCLASSES};

/// Code table from `scp_statements.csv`: which statement codes are
/// diagnostic and the superclass each one aggregates to.
#[derive(Debug, Clone, Default)]
pub struct ScpStatements {
    /// code -> superclass index, for diagnostic codes.
    diagnostic: HashMap<String, usize>,
    /// Every code in the table, diagnostic or not.
    known: HashMap<String, bool>,
}

impl ScpStatements {
    pub fn from_path(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Parses the CSV: first column is the code, `diagnostic_class` the
    /// superclass, and `diagnostic` (when present) flags diagnostic rows.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let class_col = headers
            .iter()
            .position(|h| h.trim() == "diagnostic_class")
            .ok_or_else(|| Error::Ingest("scp_statements.csv lacks a diagnostic_class column".into()))?;
        let diag_col = headers.iter().position(|h| h.trim() == "diagnostic");

        let mut table = Self::default();
        for row in rdr.records() {
            let row = row?;
            let code = row.get(0).unwrap_or("").trim().to_string();
            if code.is_empty() {
                continue;
            }
            let flagged = match diag_col {
                Some(c) => row
                    .get(c)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .is_some_and(|v| v == 1.0),
                None => true,
            };
            let class = row
                .get(class_col)
                .and_then(|c| SUPERCLASSES.iter().position(|s| *s == c.trim()));
            let diagnostic = flagged && class.is_some();
            if let (true, Some(class)) = (diagnostic, class) {
                table.diagnostic.insert(code.clone(), class);
            }
            table.known.insert(code, diagnostic);
        }
        Ok(table)
    }

    pub fn insert(&mut self, code: &str, class: Option<&str>) {
        let class = class.and_then(|c| SUPERCLASSES.iter().position(|s| *s == c));
        if let Some(idx) = class {
            self.diagnostic.insert(code.to_string(), idx);
        }
        self.known.insert(code.to_string(), class.is_some());
    }

    pub fn superclass_of(&self, code: &str) -> Option<usize> {
        self.diagnostic.get(code).copied()
    }

    pub fn is_known(&self, code: &str) -> bool {
        self.known.contains_key(code)
    }
}

/// Multi-hot superclass vector for a record's SCP codes. Codes with
/// likelihood below `min_likelihood` are dropped; rhythm and form codes are
/// ignored; codes absent from the table are ignored with a warning.
pub fn aggregate_superclasses(
    scp_codes: &BTreeMap<String, f64>,
    statements: &ScpStatements,
    min_likelihood: f64,
) -> Label {
    let mut label = [0u8; SUPERCLASSES.len()];
    for (code, &likelihood) in scp_codes {
        if !statements.is_known(code) {
            warn!("unknown SCP code `{code}` ignored");
            continue;
        }
        if likelihood < min_likelihood {
            continue;
        }
        if let Some(class) = statements.superclass_of(code) {
            label[class] = 1;
        }
    }
    label
}

/// Parses the `scp_codes` column, a Python dict literal such as
/// `{'NORM': 100.0, 'SR': 0.0}`.
pub fn parse_scp_codes(text: &str) -> Result<BTreeMap<String, f64>> {
    let bad = || Error::Format(format!("unparseable scp_codes `{text}`"));
    let inner = text
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(bad)?;
    let mut codes = BTreeMap::new();
    for entry in inner.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        let (key, value) = entry.split_once(':').ok_or_else(bad)?;
        let key = key.trim().trim_matches(|c| c == '\'' || c == '"');
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        codes.insert(key.to_string(), value);
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Rows copied from the PTB-XL scp_statements.csv layout.
    const STATEMENTS: &str = "\
,description,diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass
NDT,non-diagnostic T abnormalities,1.0,1.0,,STTC,STTC
NORM,normal ECG,1.0,,,NORM,NORM
IMI,inferior myocardial infarction,1.0,,,MI,IMI
LVH,left ventricular hypertrophy,1.0,,,HYP,LVH
CLBBB,complete left bundle branch block,1.0,,,CD,CLBBB
AFIB,atrial fibrillation,,,1.0,,
SR,sinus rhythm,,,1.0,,
LVOLT,low QRS voltages in the frontal and horizontal leads,,1.0,,,
";

    fn table() -> ScpStatements {
        ScpStatements::from_reader(STATEMENTS.as_bytes()).unwrap()
    }

    fn codes(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn norm_maps_to_first_class() {
        assert_eq!(aggregate_superclasses(&codes(&[("NORM", 100.0)]), &table(), 0.0), [1, 0, 0, 0, 0]);
    }

    #[test]
    fn empty_codes_give_empty_label() {
        assert_eq!(aggregate_superclasses(&BTreeMap::new(), &table(), 0.0), [0; 5]);
    }

    #[test]
    fn rhythm_codes_are_ignored() {
        let label = aggregate_superclasses(&codes(&[("IMI", 100.0), ("AFIB", 100.0)]), &table(), 0.0);
        assert_eq!(label, [0, 1, 0, 0, 0]);
    }

    #[test]
    fn unknown_codes_and_low_likelihoods() {
        let t = table();
        let label = aggregate_superclasses(&codes(&[("XYZ", 100.0), ("LVH", 0.0), ("NDT", 50.0)]), &t, 0.0);
        assert_eq!(label, [0, 0, 1, 0, 1]);
        let label = aggregate_superclasses(&codes(&[("LVH", 0.0), ("NDT", 50.0)]), &t, 15.0);
        assert_eq!(label, [0, 0, 1, 0, 0]);
    }

    #[test]
    fn parses_python_dict_literals() {
        let parsed = parse_scp_codes("{'NORM': 100.0, 'LVOLT': 0.0, 'SR': 0.0}").unwrap();
        assert_eq!(parsed, codes(&[("NORM", 100.0), ("LVOLT", 0.0), ("SR", 0.0)]));
        assert!(parse_scp_codes("{}").unwrap().is_empty());
        assert!(parse_scp_codes("NORM").is_err());
        assert!(parse_scp_codes("{'NORM': x}").is_err());
    }
}
