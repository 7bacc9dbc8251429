use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::StatsError;

/// Label attached to every verdict so the unpaired procedure is explicit.
pub const COMPARISON_PROCEDURE: &str =
    "Welch two-sided t-test between the two models' bootstrap replicate distributions \
     (unpaired; not a per-patient paired test)";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    /// `None` when both samples have zero variance.
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest, StatsError> {
    for x in [a, b] {
        if x.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(WelchTest {
            t: None,
            df: None,
            p_value: if ma == mb { 1.0 } else { 0.0 },
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| StatsError::Distribution(e.to_string()))?;
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchTest {
        t: Some(t),
        df: Some(df),
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceVerdict {
    pub metric_name: String,
    pub model_a: String,
    pub model_b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t_statistic: Option<f64>,
    pub degrees_of_freedom: Option<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
    pub procedure: String,
}

/// Compares two models through their bootstrap replicates of one metric.
pub fn compare_models(
    metric_name: &str,
    model_a: &str,
    model_b: &str,
    replicates_a: &[f64],
    replicates_b: &[f64],
    alpha: f64,
) -> Result<SignificanceVerdict, StatsError> {
    if replicates_a.len() != replicates_b.len() {
        return Err(StatsError::ReplicateCountMismatch {
            a: replicates_a.len(),
            b: replicates_b.len(),
        });
    }
    let test = welch_t_test(replicates_a, replicates_b)?;
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(SignificanceVerdict {
        metric_name: metric_name.to_string(),
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        mean_a: mean(replicates_a),
        mean_b: mean(replicates_b),
        t_statistic: test.t,
        degrees_of_freedom: test.df,
        p_value: test.p_value,
        alpha,
        significant: test.p_value < alpha,
        procedure: COMPARISON_PROCEDURE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_lists_are_not_significant() {
        let a = [0.1, 0.4, 0.2, 0.3];
        let v = compare_models("m", "a", "b", &a, &a, 0.05).unwrap();
        assert_eq!(v.p_value, 1.0);
        assert!(!v.significant);
        let c = [0.5; 4];
        let v = compare_models("m", "a", "b", &c, &c, 0.05).unwrap();
        assert_eq!(v.p_value, 1.0);
        assert!(v.t_statistic.is_none());
    }

    #[test]
    fn separated_lists_are_significant() {
        let a: Vec<f64> = (0..500).map(|i| 1e-6 * (i % 7) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 1.0 + v).collect();
        let v = compare_models("m", "a", "b", &a, &b, 0.05).unwrap();
        assert!(v.p_value < 1e-12);
        assert!(v.significant);
    }

    #[test]
    fn symmetric_in_arguments() {
        let a = [0.31, 0.29, 0.35, 0.30, 0.28];
        let b = [0.36, 0.38, 0.33, 0.40, 0.37];
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.t.unwrap(), -ba.t.unwrap());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        assert!(compare_models("m", "a", "b", &[0.1, 0.2], &[0.1, 0.2, 0.3], 0.05).is_err());
        assert!(welch_t_test(&[0.1], &[0.1, 0.2]).is_err());
    }
}
