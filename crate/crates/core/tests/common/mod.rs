#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::Value;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> Value {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

pub fn f(v: &Value, key: &str) -> f64 {
    v[key]
        .as_f64()
        .unwrap_or_else(|| panic!("missing float {key}"))
}

/// Type-7 percentile by sort and interpolate.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Resample indices of bootstrap replicate `i`, drawn straight from ChaCha8.
pub fn resample(seed: u64, i: u64, n: usize) -> Vec<usize> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap replicates of the LoA width fraction over `diffs`.
pub fn loa_replicates(diffs: &[f64], range_max: f64, iterations: usize, seed: u64) -> Vec<f64> {
    (0..iterations as u64)
        .map(|i| {
            let s: Vec<f64> = resample(seed, i, diffs.len())
                .iter()
                .map(|&j| diffs[j])
                .collect();
            (percentile(&s, 97.5) - percentile(&s, 2.5)) / range_max
        })
        .collect()
}

/// Bootstrap replicates of accuracy with patients as units; each unit is
/// `(correct, images)`.
pub fn accuracy_replicates(units: &[(usize, usize)], iterations: usize, seed: u64) -> Vec<f64> {
    (0..iterations as u64)
        .map(|i| {
            let (c, n) = resample(seed, i, units.len())
                .iter()
                .fold((0, 0), |(c, n), &j| (c + units[j].0, n + units[j].1));
            c as f64 / n as f64
        })
        .collect()
}

/// Worst relative gap between analytic and central finite-difference
/// gradients of a small seeded net of every head, with one fixed dropout
/// mask per example.
pub fn worst_gradient_gap(eps: f64) -> Vec<(retest::ModelFamily, f64)> {
    use rand::{Rng, SeedableRng};
    use retest::toynet::{Example, NetConfig, Target, ToyNet};
    use retest::{ModelFamily, ModelKind};

    let heads = [
        (
            ModelKind::binary(),
            Target::Binary(1.0),
            Target::Binary(0.0),
        ),
        (
            ModelKind::new(ModelFamily::MultiClass, 4).unwrap(),
            Target::Class(2),
            Target::Class(0),
        ),
        (
            ModelKind::new(ModelFamily::Ordinal, 4).unwrap(),
            Target::Ordinal(vec![1.0, 1.0, 0.0]),
            Target::Ordinal(vec![1.0, 0.0, 0.0]),
        ),
        (
            ModelKind::new(ModelFamily::Regression, 4).unwrap(),
            Target::Value(2.0),
            Target::Value(0.5),
        ),
    ];
    let mut out = Vec::new();
    for (h, (kind, t0, t1)) in heads.into_iter().enumerate() {
        let net = ToyNet::new(
            NetConfig {
                input_dim: 5,
                hidden: vec![6, 4],
                dropout_rate: 0.25,
                kind,
            },
            40 + h as u64,
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(90 + h as u64);
        let batch: Vec<Example> = [t0, t1]
            .into_iter()
            .map(|target| Example {
                features: (0..5).map(|_| rng.random_range(-1.5..1.5)).collect(),
                target,
            })
            .collect();
        let refs: Vec<&Example> = batch.iter().collect();
        let dropout = Some(5);
        let (_, grad) = net.loss_and_gradient(&refs, dropout).unwrap();
        let mut worst = 0.0f64;
        for (i, &analytic) in grad.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[i] += eps;
            let mut minus = net.clone();
            minus.params_mut()[i] -= eps;
            let lp = plus.loss_and_gradient(&refs, dropout).unwrap().0;
            let lm = minus.loss_and_gradient(&refs, dropout).unwrap().0;
            let numeric = (lp - lm) / (2.0 * eps);
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
        out.push((kind.family(), worst));
    }
    out
}
