//! Trial design: the dividing value, stopping thresholds and the
//! precision-calibrated sample-size bounds.
//!
//! The minimum size makes the confidence interval no wider than `2Δ`, so it
//! cannot straddle Δ in both directions at once; the maximum makes it no
//! wider than Δ, below which further precision buys nothing.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, FieldError, Result};

pub const DEFAULT_LR_UPPER: f64 = 20.0;
pub const DEFAULT_Z_CRIT: f64 = 1.96;
/// Critical value under which the maximum size for Δ = 0.5 is 64.
pub const REFERENCE_Z_CRIT: f64 = 2.0;
/// Designs whose maximum size exceeds this are rejected.
pub const MAX_SAMPLE_CAP: u64 = 100_000_000;

/// User-supplied design parameters before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub delta: f64,
    #[serde(default = "default_lr_upper")]
    pub lr_upper: f64,
    /// Defaults to `1 / lr_upper`.
    #[serde(default)]
    pub lr_lower: Option<f64>,
    #[serde(default = "default_z_crit")]
    pub z_crit: f64,
    #[serde(default)]
    pub label: String,
}

fn default_lr_upper() -> f64 {
    DEFAULT_LR_UPPER
}

fn default_z_crit() -> f64 {
    DEFAULT_Z_CRIT
}

impl DesignParams {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            lr_upper: DEFAULT_LR_UPPER,
            lr_lower: None,
            z_crit: DEFAULT_Z_CRIT,
            label: String::new(),
        }
    }

    pub fn z_crit(mut self, z_crit: f64) -> Self {
        self.z_crit = z_crit;
        self
    }

    pub fn thresholds(mut self, lr_upper: f64, lr_lower: Option<f64>) -> Self {
        self.lr_upper = lr_upper;
        self.lr_lower = lr_lower;
        self
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn build(self) -> Result<TrialDesign> {
        TrialDesign::new(self)
    }
}

/// The validated, immutable contract of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignParams")]
pub struct TrialDesign {
    delta: f64,
    lr_upper: f64,
    lr_lower: f64,
    z_crit: f64,
    n_min: u64,
    n_max: u64,
    label: String,
}

impl TrialDesign {
    pub fn new(params: DesignParams) -> Result<Self> {
        let mut errors = Vec::new();
        let DesignParams {
            delta,
            lr_upper,
            lr_lower,
            z_crit,
            label,
        } = params;
        let lr_lower = lr_lower.unwrap_or(1.0 / lr_upper);

        if !(delta.is_finite() && delta > 0.0) {
            errors.push(FieldError::new(
                "delta",
                format!("must be a positive finite number, got {delta}"),
            ));
        }
        if !(lr_upper.is_finite() && lr_upper > 1.0) {
            errors.push(FieldError::new(
                "lr_upper",
                format!("must be greater than 1, got {lr_upper}"),
            ));
        }
        if !(lr_lower > 0.0 && lr_lower < 1.0) {
            errors.push(FieldError::new(
                "lr_lower",
                format!("must lie in (0, 1), got {lr_lower}"),
            ));
        }
        if !(z_crit.is_finite() && z_crit > 0.0) {
            errors.push(FieldError::new(
                "z_crit",
                format!("must be a positive finite number, got {z_crit}"),
            ));
        }
        if !errors.is_empty() {
            return Err(Error::InvalidDesign(errors));
        }

        let n_min = min_sample_size(delta, z_crit)?;
        let n_max = max_sample_size(delta, z_crit)?;
        if n_max > MAX_SAMPLE_CAP {
            return Err(Error::InvalidDesign(vec![FieldError::new(
                "delta",
                format!("maximum sample size {n_max} exceeds the cap of {MAX_SAMPLE_CAP}"),
            )]));
        }
        Ok(Self {
            delta,
            lr_upper,
            lr_lower,
            z_crit,
            n_min,
            n_max,
            label,
        })
    }

    /// Δ = 0.5 with critical value 2.0: sizes 16 and 64, thresholds 20 / 0.05.
    pub fn reference_preset() -> Self {
        DesignParams::new(0.5)
            .z_crit(REFERENCE_Z_CRIT)
            .build()
            .expect("preset design is valid")
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lr_upper(&self) -> f64 {
        self.lr_upper
    }

    pub fn lr_lower(&self) -> f64 {
        self.lr_lower
    }

    pub fn z_crit(&self) -> f64 {
        self.z_crit
    }

    pub fn n_min(&self) -> u64 {
        self.n_min
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> DesignParams {
        DesignParams {
            delta: self.delta,
            lr_upper: self.lr_upper,
            lr_lower: Some(self.lr_lower),
            z_crit: self.z_crit,
            label: self.label.clone(),
        }
    }
}

impl TryFrom<DesignParams> for TrialDesign {
    type Error = Error;

    fn try_from(params: DesignParams) -> Result<Self> {
        Self::new(params)
    }
}

/// `ceil((z_crit / delta)²)`: the smallest n whose interval width
/// `2·z_crit/√n` is at most `2Δ`.
pub fn min_sample_size(delta: f64, z_crit: f64) -> Result<u64> {
    sized(z_crit / delta, delta, z_crit)
}

/// `ceil((2·z_crit / delta)²)`: the smallest n whose interval width is at
/// most Δ.
pub fn max_sample_size(delta: f64, z_crit: f64) -> Result<u64> {
    sized(2.0 * z_crit / delta, delta, z_crit)
}

fn sized(ratio: f64, delta: f64, z_crit: f64) -> Result<u64> {
    if !(delta.is_finite() && delta > 0.0) || !(z_crit.is_finite() && z_crit > 0.0) {
        return Err(domain(format!(
            "delta and z_crit must be positive and finite, got {delta} and {z_crit}"
        )));
    }
    let n = ratio * ratio;
    if !n.is_finite() || n > 1e18 {
        return Err(domain(format!("sample size {n} is not representable")));
    }
    // Squared ratios that are integers in exact arithmetic can land one ulp
    // high; shave that off before taking the ceiling.
    let n = (n * (1.0 - 4.0 * f64::EPSILON)).ceil();
    Ok((n as u64).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_examples() {
        assert_eq!(min_sample_size(0.5, 1.96).unwrap(), 16);
        assert_eq!(min_sample_size(0.5, 2.0).unwrap(), 16);
        assert_eq!(min_sample_size(1.96, 1.96).unwrap(), 1);
        assert_eq!(max_sample_size(0.5, 2.0).unwrap(), 64);
        assert_eq!(max_sample_size(0.5, 1.96).unwrap(), 62);
        assert_eq!(max_sample_size(3.92, 1.96).unwrap(), 1);
    }

    #[test]
    fn sizes_reject_non_positive() {
        assert!(min_sample_size(0.0, 1.96).is_err());
        assert!(min_sample_size(0.5, -1.0).is_err());
        assert!(max_sample_size(f64::NAN, 1.96).is_err());
        assert!(max_sample_size(0.5, 0.0).is_err());
    }

    #[test]
    fn max_is_ceiling_of_four_times_unrounded_min() {
        for d in [0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0] {
            for z in [1.0, 1.645, 1.96, 2.0, 2.576, 3.0] {
                let exact = 4.0 * (z / d) * (z / d);
                let got = max_sample_size(d, z).unwrap();
                assert!((got as f64 - exact.ceil()).abs() <= 1.0, "{d} {z}");
                assert!(got as f64 >= exact * (1.0 - 1e-12));
                assert!(got >= min_sample_size(d, z).unwrap());
            }
        }
    }

    #[test]
    fn defaults_and_preset() {
        let d = DesignParams::new(0.5).build().unwrap();
        assert_eq!(d.lr_upper(), 20.0);
        assert_eq!(d.lr_lower(), 0.05);
        assert_eq!(d.z_crit(), 1.96);
        assert_eq!((d.n_min(), d.n_max()), (16, 62));
        let p = TrialDesign::reference_preset();
        assert_eq!((p.n_min(), p.n_max()), (16, 64));
    }

    #[test]
    fn validation_lists_every_violation() {
        let err = DesignParams::new(0.0)
            .thresholds(1.0, Some(1.5))
            .z_crit(-2.0)
            .build()
            .unwrap_err();
        let Error::InvalidDesign(fields) = err else {
            panic!("expected InvalidDesign");
        };
        let names: Vec<_> = fields.iter().map(|f| f.field.as_str()).collect();
        assert_eq!(names, ["delta", "lr_upper", "lr_lower", "z_crit"]);
    }

    #[test]
    fn lower_threshold_independent_of_upper() {
        let d = DesignParams::new(0.5).thresholds(20.0, Some(0.1)).build().unwrap();
        assert_eq!(d.lr_lower(), 0.1);
        assert!(DesignParams::new(0.5).thresholds(1.0, None).build().is_err());
    }

    #[test]
    fn tiny_delta_hits_cap() {
        assert!(DesignParams::new(1e-5).build().is_err());
    }

    #[test]
    fn deserialization_revalidates() {
        let d: TrialDesign = serde_json::from_str(r#"{"delta":0.5,"z_crit":2.0}"#).unwrap();
        assert_eq!(d.n_max(), 64);
        let json = serde_json::to_string(&d).unwrap();
        let back: TrialDesign = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<TrialDesign>(r#"{"delta":0}"#).is_err());
    }
}
