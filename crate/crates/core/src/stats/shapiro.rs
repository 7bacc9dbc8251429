//! Shapiro-Wilk W test with Royston's AS R94 approximation.
//!
//! The weights come from Royston's polynomial correction of the normalised
//! expected normal order statistics, and `ln(1 - W)` is mapped to an
//! approximate normal deviate to produce the p-value. Valid for
//! `3 <= n <= 5000`.

use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

pub const MIN_SAMPLES: usize = 3;
pub const MAX_SAMPLES: usize = 5000;

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

/// `c[0] + c[1] x + c[2] x^2 + ...`
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &coef| acc * x + coef)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal parameters are valid")
}

/// Weights for the upper half of the order statistics, largest first.
fn weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let normal = standard_normal();
    let an = n as f64;
    let m: Vec<f64> = (1..=half)
        .map(|i| normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first_scaled, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    for i in first_scaled..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// W statistic and its p-value.
pub fn shapiro_wilk(samples: &[f64]) -> Result<ShapiroWilk, StatsError> {
    let n = samples.len();
    if !(MIN_SAMPLES..=MAX_SAMPLES).contains(&n) {
        return Err(StatsError::SampleSize {
            n,
            min: MIN_SAMPLES,
            max: MAX_SAMPLES,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    // scale by the range first; W is invariant and this keeps the sums tame
    x.iter_mut().for_each(|v| *v /= range);
    let mean = x.iter().sum::<f64>() / n as f64;
    let ssx: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();

    let a = weights(n);
    let ssa = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
    let sax: f64 = a
        .iter()
        .enumerate()
        .map(|(i, ai)| ai * (x[n - 1 - i] - x[i]))
        .sum();
    let ssassx = (ssa * ssx).sqrt();
    // 1 - W, computed without cancellation
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    let normal = standard_normal();
    let an = n as f64;
    if n == 3 {
        const PI6: f64 = 6.0 / std::f64::consts::PI;
        const STQR: f64 = std::f64::consts::FRAC_PI_3;
        if w < 0.75 {
            return Ok(ShapiroWilk {
                w: 0.75,
                p_value: 0.0,
            });
        }
        let p = (PI6 * (w.sqrt().asin() - STQR)).max(0.0);
        return Ok(ShapiroWilk { w, p_value: p });
    }

    let y = w1.ln();
    let p_value = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            1e-99
        } else {
            let y = -(gamma - y).ln();
            let m = poly(&C3, an);
            let s = poly(&C4, an).exp();
            normal.sf((y - m) / s)
        }
    } else {
        let xx = an.ln();
        let m = poly(&C5, xx);
        let s = poly(&C6, xx).exp();
        normal.sf((y - m) / s)
    };
    Ok(ShapiroWilk { w, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            shapiro_wilk(&[1.0, 2.0]),
            Err(StatsError::SampleSize { n: 2, .. })
        ));
        assert!(matches!(
            shapiro_wilk(&[3.0; 10]),
            Err(StatsError::ZeroVariance)
        ));
        assert!(shapiro_wilk(&vec![0.0; 5001]).is_err());
        assert!(shapiro_wilk(&[1.0, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn weights_are_normalised() {
        for n in [4, 5, 6, 11, 12, 50, 999, 1000, 5000] {
            let a = weights(n);
            let ss = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
            assert!((ss - 1.0).abs() < 1e-12, "n = {n}: {ss}");
            assert!(a.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn symmetric_three_points() {
        let r = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.w - 1.0).abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn location_scale_invariant(
            v in prop::collection::vec(-10.0f64..10.0, 3..200),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let base = match shapiro_wilk(&v) {
                Ok(r) => r,
                Err(_) => return Ok(()),
            };
            let moved: Vec<f64> = v.iter().map(|x| scale * x + shift).collect();
            let r = shapiro_wilk(&moved).unwrap();
            prop_assert!((r.w - base.w).abs() <= 1e-10);
            prop_assert!(r.w > 0.0 && r.w <= 1.0 + 1e-12);
        }
    }
}
