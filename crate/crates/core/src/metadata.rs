//! Soft-label encoding of patient metadata.
//!
//! Each numeric attribute (age, height, weight) becomes a block of Gaussian
//! weights over bin centres, normalized to sum to one. Sex is one-hot. A
//! missing attribute yields an all-zero block and, when enabled, a set
//! missing flag. Layout: `[age | height | weight | male, female | flags]`
//! with flags ordered age, sex, height, weight.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::{EcgRecord, Sex};
use crate::{Error, Result};

/// Bin edges and smoothing width for one numeric attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBins {
    pub edges: Vec<f64>,
    pub sigma: f64,
}

impl AttributeBins {
    /// `bins` equal-width bins spanning `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize, sigma: f64) -> Self {
        let width = (hi - lo) / bins as f64;
        Self {
            edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
            sigma,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len().saturating_sub(1)
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::invalid(format!("{name}: need at least two bin edges")));
        }
        if self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(format!("{name}: bin edges must be strictly increasing")));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("{name}: sigma must be positive")));
        }
        Ok(())
    }

    /// Normalized Gaussian weights of `value` over the bin centres.
    fn weights(&self, value: f64, out: &mut [f64]) {
        let centers = self.centers();
        let sq: Vec<f64> = centers.iter().map(|c| (value - c) * (value - c)).collect();
        // Shift by the smallest distance so the nearest bin has weight 1
        // before normalization and nothing underflows to an all-zero block.
        let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let denom = 2.0 * self.sigma * self.sigma;
        for (o, d) in out.iter_mut().zip(&sq) {
            *o = (-(d - min) / denom).exp();
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|o| *o /= total);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataEncoderConfig {
    pub age: AttributeBins,
    pub height: AttributeBins,
    pub weight: AttributeBins,
    pub include_missing_flag: bool,
}

impl Default for MetadataEncoderConfig {
    fn default() -> Self {
        Self {
            age: AttributeBins::uniform(0.0, 100.0, 10, 10.0),
            height: AttributeBins::uniform(140.0, 200.0, 10, 6.0),
            weight: AttributeBins::uniform(40.0, 140.0, 10, 10.0),
            include_missing_flag: true,
        }
    }
}

pub const AGE_RANGE: (f64, f64) = (0.0, 120.0);
pub const HEIGHT_RANGE: (f64, f64) = (50.0, 250.0);
pub const WEIGHT_RANGE: (f64, f64) = (20.0, 300.0);

impl MetadataEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.age.validate("age")?;
        self.height.validate("height")?;
        self.weight.validate("weight")
    }

    pub fn encoded_len(&self) -> usize {
        self.age.n_bins()
            + self.height.n_bins()
            + self.weight.n_bins()
            + 2
            + if self.include_missing_flag { 4 } else { 0 }
    }
}

/// Encoded metadata; all entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataVector(pub Vec<f64>);

impl MetadataVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

fn present(name: &str, v: Option<f64>, range: (f64, f64)) -> Option<f64> {
    match v {
        Some(x) if x.is_finite() => Some(x.clamp(range.0, range.1)),
        Some(x) => {
            warn!("non-finite {name} {x} treated as missing");
            None
        }
        None => None,
    }
}

pub fn soft_encode(
    age: Option<f64>,
    sex: Option<Sex>,
    height: Option<f64>,
    weight: Option<f64>,
    config: &MetadataEncoderConfig,
) -> MetadataVector {
    let mut out = vec![0.0; config.encoded_len()];
    let mut offset = 0;
    let mut flags = [0.0; 4];
    let numeric = [
        (&config.age, present("age", age, AGE_RANGE), 0),
        (&config.height, present("height", height, HEIGHT_RANGE), 2),
        (&config.weight, present("weight", weight, WEIGHT_RANGE), 3),
    ];
    for (bins, value, flag) in numeric {
        let block = &mut out[offset..offset + bins.n_bins()];
        match value {
            Some(v) => bins.weights(v, block),
            None => flags[flag] = 1.0,
        }
        offset += bins.n_bins();
    }
    match sex {
        Some(Sex::Male) => out[offset] = 1.0,
        Some(Sex::Female) => out[offset + 1] = 1.0,
        None => flags[1] = 1.0,
    }
    offset += 2;
    if config.include_missing_flag {
        out[offset..offset + 4].copy_from_slice(&flags);
    }
    MetadataVector(out)
}

pub fn encode_record(record: &EcgRecord, config: &MetadataEncoderConfig) -> MetadataVector {
    soft_encode(
        record.age.map(f64::from),
        record.sex,
        record.height.map(f64::from),
        record.weight.map(f64::from),
        config,
    )
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn cfg() -> MetadataEncoderConfig {
        MetadataEncoderConfig::default()
    }

    #[test]
    fn default_layout_and_length() {
        let c = cfg();
        assert_eq!(c.encoded_len(), 36);
        assert_eq!(c.age.centers(), (0..10).map(|i| 5.0 + 10.0 * i as f64).collect::<Vec<_>>());
        assert!(c.validate().is_ok());
        let no_flags = MetadataEncoderConfig {
            include_missing_flag: false,
            ..cfg()
        };
        assert_eq!(no_flags.encoded_len(), 32);
    }

    #[test]
    fn everything_missing() {
        let v = soft_encode(None, None, None, None, &cfg());
        assert!(v.0[..32].iter().all(|&x| x == 0.0));
        assert_eq!(&v.0[32..], &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn narrow_sigma_concentrates_on_the_bin() {
        let c = MetadataEncoderConfig {
            age: AttributeBins::uniform(0.0, 100.0, 10, 0.01),
            ..cfg()
        };
        let v = soft_encode(Some(35.0), Some(Sex::Male), Some(170.0), Some(70.0), &c);
        assert!((v.0[3] - 1.0).abs() < 1e-12);
        assert!(v.0[..10].iter().enumerate().all(|(i, &x)| i == 3 || x < 1e-12));
    }

    #[test]
    fn age_47_matches_scalar_oracle() {
        // Independent evaluation: unshifted Gaussian weights, normalized.
        let centers: Vec<f64> = (0..10).map(|k| 5.0 + 10.0 * k as f64).collect();
        let raw: Vec<f64> = centers
            .iter()
            .map(|c| (-(47.0 - c) * (47.0 - c) / (2.0 * 10.0 * 10.0)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        let v = soft_encode(Some(47.0), None, None, None, &cfg());
        for k in 0..10 {
            assert!((v.0[k] - raw[k] / total).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_range_values_are_clamped_and_nan_is_missing() {
        let a = soft_encode(Some(300.0), None, None, None, &cfg());
        let b = soft_encode(Some(120.0), None, None, None, &cfg());
        assert_eq!(a, b);
        let n = soft_encode(Some(f64::NAN), Some(Sex::Female), None, None, &cfg());
        assert!(n.0[..10].iter().all(|&x| x == 0.0));
        assert_eq!(n.0[32], 1.0);
        assert_eq!(n.0[31], 1.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg();
        c.height.edges = vec![150.0, 150.0, 160.0];
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.weight.sigma = 0.0;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn present_blocks_are_normalized_and_peak_at_nearest_centre(
            age in 0.0f64..120.0, height in 50.0f64..250.0, weight in 20.0f64..300.0, male in any::<bool>()
        ) {
            let c = cfg();
            let sex = if male { Sex::Male } else { Sex::Female };
            let v = soft_encode(Some(age), Some(sex), Some(height), Some(weight), &c);
            prop_assert!(v.0.iter().all(|&x| (0.0..=1.0).contains(&x)));
            for (block, bins, value) in [(0, &c.age, age), (10, &c.height, height), (20, &c.weight, weight)] {
                let w = &v.0[block..block + 10];
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let centers = bins.centers();
                let mut nearest = 0;
                for k in 1..centers.len() {
                    if (value - centers[k]).powi(2) < (value - centers[nearest]).powi(2) {
                        nearest = k;
                    }
                }
                let mut arg = 0;
                for k in 1..w.len() {
                    if w[k] > w[arg] {
                        arg = k;
                    }
                }
                prop_assert_eq!(arg, nearest);
            }
            prop_assert_eq!(&v.0[32..], &[0.0, 0.0, 0.0, 0.0]);
            let again = soft_encode(Some(age), Some(sex), Some(height), Some(weight), &c);
            prop_assert_eq!(v, again);
        }
    }
}
