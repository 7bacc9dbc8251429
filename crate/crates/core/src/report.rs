//! Repeatability reports and their canonical JSON form.
//!
//! Canonical JSON has keys sorted at every level, two-space indentation and
//! every float written as `{:.16e}` (17 significant digits).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::evaluate::EvalSettings;
use crate::repeatability::{LimitsOfAgreement, NormalityGate};
use crate::stats::BootstrapResult;
use crate::types::ModelKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub model_label: String,
    pub model_kind: ModelKind,
    pub n_records: usize,
    pub n_images: usize,
    pub n_patients: usize,
    pub n_paired_patients: usize,
    pub skipped_single_image_patients: usize,
    pub mc_aggregated_images: usize,
    /// Samples per aggregated image when every image has the same count.
    pub mc_samples_per_image: Option<usize>,
    pub clamped_scores: usize,
    pub loa: LimitsOfAgreement,
    /// Only present when the normality gate says normal.
    pub loa_parametric: Option<LimitsOfAgreement>,
    pub loa_ci: BootstrapResult,
    pub accuracy: f64,
    pub accuracy_ci: BootstrapResult,
    pub normality: NormalityGate,
    pub small_cohort_warning: bool,
    pub comparison_procedure: String,
    pub config: EvalSettings,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report field {0} is not finite")]
    NonFinite(String),
    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}

impl RepeatabilityReport {
    /// Names of float fields that are NaN or infinite.
    pub fn non_finite_fields(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut check = |name: &str, v: f64| {
            if !v.is_finite() {
                bad.push(name.to_string());
            }
        };
        let loa = |prefix: &str, l: &LimitsOfAgreement, check: &mut dyn FnMut(&str, f64)| {
            check(&format!("{prefix}.lower"), l.lower);
            check(&format!("{prefix}.upper"), l.upper);
            check(&format!("{prefix}.width"), l.width);
            check(&format!("{prefix}.width_fraction"), l.width_fraction);
        };
        loa("loa", &self.loa, &mut check);
        if let Some(p) = &self.loa_parametric {
            loa("loa_parametric", p, &mut check);
        }
        check("accuracy", self.accuracy);
        for (name, b) in [("loa_ci", &self.loa_ci), ("accuracy_ci", &self.accuracy_ci)] {
            check(&format!("{name}.point_estimate"), b.point_estimate);
            check(&format!("{name}.ci_low"), b.ci_low);
            check(&format!("{name}.ci_high"), b.ci_high);
            if b.replicates.iter().any(|v| !v.is_finite()) {
                check(&format!("{name}.replicates"), f64::NAN);
            }
        }
        for (name, v) in [
            ("normality.w", self.normality.w),
            ("normality.p_value", self.normality.p_value),
        ] {
            if let Some(v) = v {
                check(name, v);
            }
        }
        check("config.alpha", self.config.alpha);
        bad
    }

    /// Canonical JSON of the report.
    pub fn to_json(&self) -> Result<String, ReportError> {
        if let Some(first) = self.non_finite_fields().into_iter().next() {
            return Err(ReportError::NonFinite(first));
        }
        to_canonical_json(self)
    }
}

/// Canonical JSON text of any serializable value, newline-terminated.
///
/// serde_json maps NaN and infinities to `null`; callers holding floats that
/// may be non-finite must check them first.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, &mut out)?;
    out.push('\n');
    Ok(out)
}

fn write_value(v: &Value, depth: usize, out: &mut String) -> Result<(), ReportError> {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                write!(out, "{f:.16e}").unwrap();
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return Ok(());
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_value(item, depth + 1, out)?;
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return Ok(());
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&serde_json::to_string(key)?);
                out.push_str(": ");
                write_value(&map[*key], depth + 1, out)?;
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_floats_fixed() {
        let v = json!({"b": 1, "a": {"z": 0.5, "y": [1.0, -2]}, "c": null});
        let s = to_canonical_json(&v).unwrap();
        let expected = "{\n  \"a\": {\n    \"y\": [\n      1.0000000000000000e0,\n      -2\n    ],\n    \"z\": 5.0000000000000000e-1\n  },\n  \"b\": 1,\n  \"c\": null\n}\n";
        assert_eq!(s, expected);
    }

    #[test]
    fn floats_round_trip() {
        let x = [0.1, 1.0 / 3.0, 6.02e23, -1e-300, 0.0];
        let s = to_canonical_json(&x).unwrap();
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }
}
