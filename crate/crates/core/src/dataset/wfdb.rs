//! Reader for the subset of the WFDB format used by PTB-XL: a `.hea` text
//! header and format-16 (little-endian `i16`, frame-interleaved) sample files.

use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// One signal specification line of a header.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: u16,
    /// ADC units per physical unit.
    pub gain: f64,
    /// ADC value corresponding to 0 physical units.
    pub baseline: i32,
    pub units: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub record_name: String,
    pub sampling_frequency: f64,
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
}

const DEFAULT_GAIN: f64 = 200.0;

fn header_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Record {
        id: path.display().to_string(),
        reason: reason.into(),
    }
}

impl Header {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let record_line = lines.next().ok_or_else(|| header_err(origin, "empty header"))?;
        let fields: Vec<&str> = record_line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(header_err(origin, "record line needs a name and signal count"));
        }
        let record_name = fields[0].split('/').next().unwrap_or(fields[0]).to_string();
        let n_signals: usize = fields[1]
            .parse()
            .map_err(|_| header_err(origin, "bad signal count"))?;
        let sampling_frequency = match fields.get(2) {
            Some(f) => f
                .split('/')
                .next()
                .unwrap_or(f)
                .parse()
                .map_err(|_| header_err(origin, "bad sampling frequency"))?,
            None => 250.0,
        };
        let n_samples = match fields.get(3) {
            Some(n) => n.parse().map_err(|_| header_err(origin, "bad sample count"))?,
            None => 0,
        };

        let mut signals = Vec::with_capacity(n_signals);
        for line in lines.take(n_signals) {
            signals.push(parse_signal_line(line, origin)?);
        }
        if signals.len() != n_signals {
            return Err(header_err(
                origin,
                format!("header declares {n_signals} signals but lists {}", signals.len()),
            ));
        }
        Ok(Self {
            record_name,
            sampling_frequency,
            n_samples,
            signals,
        })
    }
}

fn parse_signal_line(line: &str, origin: &Path) -> Result<SignalSpec> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() < 2 {
        return Err(header_err(origin, format!("short signal line `{line}`")));
    }
    let format: u16 = f[1]
        .split(['x', ':', '+'])
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| header_err(origin, format!("bad format in `{line}`")))?;
    let adc_zero: i32 = f.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);

    // gain[(baseline)][/units]
    let (mut gain, mut baseline, mut units) = (DEFAULT_GAIN, adc_zero, String::from("mV"));
    if let Some(g) = f.get(2) {
        let (value, unit) = match g.split_once('/') {
            Some((v, u)) => (v, Some(u)),
            None => (*g, None),
        };
        let (gain_str, base_str) = match value.split_once('(') {
            Some((gs, rest)) => (gs, Some(rest.trim_end_matches(')'))),
            None => (value, None),
        };
        gain = gain_str
            .parse()
            .map_err(|_| header_err(origin, format!("bad gain in `{line}`")))?;
        if gain == 0.0 {
            gain = DEFAULT_GAIN;
        }
        if let Some(b) = base_str {
            baseline = b
                .parse()
                .map_err(|_| header_err(origin, format!("bad baseline in `{line}`")))?;
        }
        if let Some(u) = unit {
            units = u.to_string();
        }
    }
    let description = if f.len() > 8 { f[8..].join(" ") } else { String::new() };
    Ok(SignalSpec {
        file_name: f[0].to_string(),
        format,
        gain,
        baseline,
        units,
        description,
    })
}

/// Physical-unit samples of one record, lead-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WfdbRecord {
    pub header: Header,
    pub data: Vec<f32>,
}

/// Reads `<base>.hea` and its sample files. `base` is the record path
/// without extension (as in PTB-XL's `filename_lr`).
pub fn read_record(base: &Path) -> Result<WfdbRecord> {
    let hea = with_extension(base, "hea");
    let text = std::fs::read_to_string(&hea).map_err(|e| header_err(&hea, e.to_string()))?;
    let header = Header::parse(&text, &hea)?;
    let dir = base.parent().unwrap_or_else(|| Path::new("."));
    let n = header.n_samples;
    let mut data = vec![0f32; header.signals.len() * n];

    // Signals sharing a file are interleaved frame by frame, in header order.
    let mut files: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, s) in header.signals.iter().enumerate() {
        if s.format != 16 {
            return Err(header_err(&hea, format!("unsupported signal format {}", s.format)));
        }
        match files.iter_mut().find(|(name, _)| *name == s.file_name) {
            Some((_, members)) => members.push(i),
            None => files.push((&s.file_name, vec![i])),
        }
    }
    for (name, members) in files {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| header_err(&path, e.to_string()))?;
        let width = members.len();
        let frames = bytes.len() / (2 * width);
        if frames < n {
            return Err(header_err(
                &path,
                format!("short signal: {frames} frames, header expects {n}"),
            ));
        }
        for t in 0..n {
            for (slot, &sig) in members.iter().enumerate() {
                let off = 2 * (t * width + slot);
                let adc = i16::from_le_bytes([bytes[off], bytes[off + 1]]);
                let spec = &header.signals[sig];
                data[sig * n + t] = ((adc as f64 - spec.baseline as f64) / spec.gain) as f32;
            }
        }
    }
    Ok(WfdbRecord { header, data })
}

fn with_extension(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes a format-16 record (used for fixtures and round-trip tests).
pub fn write_record(base: &Path, fs: f64, leads: &[&str], gain: f64, data: &[f32], n_samples: usize) -> Result<()> {
    let name = base
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::invalid("record path has no file name"))?
        .to_string();
    if let Some(parent) = base.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let dat_name = format!("{name}.dat");
    let mut header = format!("{name} {} {fs} {n_samples}\n", leads.len());
    for lead in leads {
        header.push_str(&format!("{dat_name} 16 {gain}(0)/mV 16 0 0 0 0 {lead}\n"));
    }
    std::fs::write(with_extension(base, "hea"), header)?;
    let mut bytes = Vec::with_capacity(leads.len() * n_samples * 2);
    for t in 0..n_samples {
        for l in 0..leads.len() {
            let adc = (data[l * n_samples + t] as f64 * gain).round() as i16;
            bytes.extend_from_slice(&adc.to_le_bytes());
        }
    }
    std::fs::write(with_extension(base, "dat"), bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ptbxl_style_header() {
        let text = "00001_lr 12 100 1000\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 -119 1508 0 I\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 -55 723 0 II\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 64 64758 0 III\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 86 64423 0 AVR\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 -91 1211 0 AVL\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 4 7 0 AVF\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 -69 63827 0 V1\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 -31 6999 0 V2\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 0 63759 0 V3\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 -26 61447 0 V4\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 -39 64979 0 V5\n\
            00001_lr.dat 16 1000.0(0)/mV 16 0 -79 832 0 V6\n";
        let h = Header::parse(text, Path::new("00001_lr.hea")).unwrap();
        assert_eq!(h.signals.len(), 12);
        assert_eq!(h.sampling_frequency, 100.0);
        assert_eq!(h.n_samples, 1000);
        assert_eq!(h.signals[3].description, "AVR");
        assert_eq!(h.signals[0].gain, 1000.0);
        assert_eq!(h.signals[0].baseline, 0);
        assert_eq!(h.signals[0].units, "mV");
    }

    #[test]
    fn baseline_defaults_to_adc_zero() {
        let s = parse_signal_line("a.dat 16 200/mV 12 1024 0 0 0 MLII", Path::new("x")).unwrap();
        assert_eq!(s.baseline, 1024);
        assert_eq!(s.gain, 200.0);
    }

    #[test]
    fn write_then_read_recovers_quantized_samples() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("records100/00000/00007_lr");
        let n = 50;
        let data: Vec<f32> = (0..2 * n).map(|i| (i as f32 * 0.1).sin()).collect();
        write_record(&base, 100.0, &["I", "II"], 1000.0, &data, n).unwrap();
        let rec = read_record(&base).unwrap();
        assert_eq!(rec.header.n_samples, n);
        for (a, b) in rec.data.iter().zip(&data) {
            assert!((a - b).abs() <= 0.5e-3 + 1e-7);
        }
    }

    #[test]
    fn truncated_sample_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("00002_lr");
        write_record(&base, 100.0, &["I"], 1000.0, &[0.0; 20], 20).unwrap();
        let dat = dir.path().join("00002_lr.dat");
        let bytes = std::fs::read(&dat).unwrap();
        std::fs::write(&dat, &bytes[..10]).unwrap();
        let err = read_record(&base).unwrap_err();
        assert!(err.to_string().contains("short signal"));
    }
}
