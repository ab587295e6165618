use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A kind of moving object and its kinematic envelope.
///
/// `mean_block_duration_ms` is the class-level blockage-severity index: the
/// mean time an object of this class keeps the link blocked. The built-in
/// classes are sized so that `length / speed`, averaged over the uniform speed
/// range, reproduces the catalog duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectClass {
    pub name: String,
    pub width_m: f64,
    pub length_m: f64,
    pub speed_range_mps: [f64; 2],
    pub severity_level: u8,
    pub mean_block_duration_ms: f64,
}

impl ObjectClass {
    pub fn human() -> Self {
        Self {
            name: "human".into(),
            width_m: 0.5,
            length_m: 0.5,
            speed_range_mps: [1.48, 2.9],
            severity_level: 1,
            mean_block_duration_ms: 237.0,
        }
    }

    pub fn sedan() -> Self {
        Self {
            name: "sedan".into(),
            width_m: 1.8,
            length_m: 4.6,
            speed_range_mps: [10.0, 17.15],
            severity_level: 2,
            mean_block_duration_ms: 347.0,
        }
    }

    pub fn suv() -> Self {
        Self {
            name: "suv".into(),
            width_m: 2.0,
            length_m: 5.0,
            speed_range_mps: [9.76, 16.0],
            severity_level: 2,
            mean_block_duration_ms: 396.0,
        }
    }

    pub fn bus() -> Self {
        Self {
            name: "bus".into(),
            width_m: 2.5,
            length_m: 12.0,
            speed_range_mps: [8.0, 14.0],
            severity_level: 3,
            mean_block_duration_ms: 1119.0,
        }
    }

    /// Vehicle-only catalog used by the default scenario.
    pub fn default_catalog() -> Vec<Self> {
        vec![Self::sedan(), Self::suv(), Self::bus()]
    }

    /// Mean of `length / v` for `v` uniform over the speed range, in ms.
    pub fn expected_block_duration_ms(&self) -> f64 {
        let [lo, hi] = self.speed_range_mps;
        let mean_inv_speed = if (hi - lo).abs() < 1e-12 {
            1.0 / lo
        } else {
            (hi / lo).ln() / (hi - lo)
        };
        1000.0 * self.length_m * mean_inv_speed
    }

    pub(crate) fn validate(&self, field: &str, dt_s: f64) -> Result<()> {
        if !(self.width_m > 0.0) {
            return Err(Error::config(format!("{field}.width_m"), "must be > 0"));
        }
        if !(self.length_m > 0.0) {
            return Err(Error::config(format!("{field}.length_m"), "must be > 0"));
        }
        let [lo, hi] = self.speed_range_mps;
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::config(
                format!("{field}.speed_range_mps"),
                "need 0 < lower <= upper",
            ));
        }
        // Every crossing must cover at least one sampling instant.
        if self.length_m / hi < dt_s {
            return Err(Error::config(
                format!("{field}.speed_range_mps"),
                format!(
                    "fastest crossing ({:.3} s) is shorter than one instance ({dt_s} s)",
                    self.length_m / hi
                ),
            ));
        }
        if !(self.mean_block_duration_ms >= 0.0) {
            return Err(Error::config(
                format!("{field}.mean_block_duration_ms"),
                "must be >= 0",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_classes_match_their_nominal_durations() {
        for class in [
            ObjectClass::human(),
            ObjectClass::sedan(),
            ObjectClass::suv(),
            ObjectClass::bus(),
        ] {
            let expected = class.expected_block_duration_ms();
            assert!(
                (expected - class.mean_block_duration_ms).abs() < 2.0,
                "{}: {expected} vs {}",
                class.name,
                class.mean_block_duration_ms
            );
        }
    }

    #[test]
    fn zero_width_is_rejected() {
        let mut c = ObjectClass::sedan();
        c.width_m = 0.0;
        let err = c.validate("object_catalog[0]", 0.1).unwrap_err();
        assert!(err.to_string().contains("object_catalog[0].width_m"));
    }
}
