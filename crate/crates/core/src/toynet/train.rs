//! Minibatch SGD with a fixed learning rate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cohort::SyntheticPatient;
use super::net::{Example, Target, ToyNet};
use super::NetError;
use crate::rng::{self, tags};
use crate::severity::encode_ordinal_label;
use crate::types::{ModelFamily, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.05,
            batch_size: 32,
        }
    }
}

/// Deterministic (dropout off) mean losses before training and after every
/// epoch; index 0 is the initial loss. `val` is empty without a validation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

/// Class of a `k`-class patient under a binary head: positive from `k / 2` up.
pub fn binary_label(true_class: usize, k: usize) -> usize {
    usize::from(true_class >= k / 2)
}

/// Label a head of `kind` is trained and scored against.
pub fn head_label(kind: ModelKind, true_class: usize, cohort_classes: usize) -> usize {
    match kind.family() {
        ModelFamily::Binary => binary_label(true_class, cohort_classes),
        _ => true_class,
    }
}

pub fn target_for(kind: ModelKind, label: usize) -> Result<Target, NetError> {
    let bad = || NetError::TargetMismatch {
        kind,
        target: format!("class {label}"),
    };
    if label >= kind.num_classes() {
        return Err(bad());
    }
    Ok(match kind.family() {
        ModelFamily::Binary => Target::Binary(label as f64),
        ModelFamily::MultiClass => Target::Class(label),
        ModelFamily::Ordinal => Target::Ordinal(
            encode_ordinal_label(label, kind.num_classes())
                .map_err(|_| bad())?
                .as_reals(),
        ),
        ModelFamily::Regression => Target::Value(label as f64),
    })
}

/// One example per image.
pub fn examples_for(
    kind: ModelKind,
    patients: &[SyntheticPatient],
    cohort_classes: usize,
) -> Result<Vec<Example>, NetError> {
    let mut out = Vec::new();
    for p in patients {
        let target = target_for(kind, head_label(kind, p.true_class, cohort_classes))?;
        for image in &p.images {
            out.push(Example {
                features: image.clone(),
                target: target.clone(),
            });
        }
    }
    Ok(out)
}

/// Trains `net` in place. Epoch `e` shuffles with `rng::stream(seed, TRAIN + e)`
/// and batch `b` of that epoch samples dropout from the seed
/// `derive_seed(derive_seed(seed, e), b)`.
pub fn train(
    net: &mut ToyNet,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
    seed: u64,
) -> Result<LossCurve, NetError> {
    if train_set.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    if config.batch_size == 0 {
        return Err(NetError::InvalidConfig(
            "batch_size must be positive".into(),
        ));
    }
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(NetError::InvalidConfig(format!(
            "learning rate {} must be finite and non-negative",
            config.learning_rate
        )));
    }
    let check = |epoch: usize, loss: f64| {
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(NetError::Divergence { epoch, loss })
        }
    };
    let mut curve = LossCurve {
        train: vec![check(0, net.mean_loss(train_set)?)?],
        val: Vec::new(),
    };
    if !val_set.is_empty() {
        curve.val.push(net.mean_loss(val_set)?);
    }
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::stream(seed, tags::TRAIN + epoch as u64));
        let epoch_seed = rng::derive_seed(seed, epoch as u64);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let dropout = rng::derive_seed(epoch_seed, b as u64);
            let (loss, grad) = net.loss_and_gradient(&batch, Some(dropout))?;
            check(epoch, loss)?;
            for (p, g) in net.params_mut().iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        curve.train.push(check(epoch, net.mean_loss(train_set)?)?);
        if !val_set.is_empty() {
            curve.val.push(net.mean_loss(val_set)?);
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toynet::cohort::{generate_cohort, CohortConfig};
    use crate::toynet::net::NetConfig;

    #[test]
    fn binary_split() {
        assert_eq!(
            (0..3).map(|c| binary_label(c, 3)).collect::<Vec<_>>(),
            [0, 1, 1]
        );
        assert_eq!(
            (0..4).map(|c| binary_label(c, 4)).collect::<Vec<_>>(),
            [0, 0, 1, 1]
        );
    }

    #[test]
    fn targets() {
        let ord = ModelKind::new(ModelFamily::Ordinal, 3).unwrap();
        assert_eq!(target_for(ord, 1).unwrap(), Target::Ordinal(vec![1.0, 0.0]));
        assert!(target_for(ord, 3).is_err());
        let reg = ModelKind::new(ModelFamily::Regression, 3).unwrap();
        assert_eq!(target_for(reg, 2).unwrap(), Target::Value(2.0));
    }

    #[test]
    fn diverging_run_names_its_epoch() {
        let cohort = generate_cohort(
            &CohortConfig {
                train_patients: 20,
                val_patients: 0,
                test_patients: 0,
                ..CohortConfig::default()
            },
            1,
        )
        .unwrap();
        let kind = ModelKind::new(ModelFamily::Regression, 3).unwrap();
        let data = examples_for(kind, &cohort.train, 3).unwrap();
        let mut net = ToyNet::new(
            NetConfig {
                input_dim: 16,
                hidden: vec![64, 64],
                dropout_rate: 0.1,
                kind,
            },
            1,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 10.0,
            batch_size: 8,
        };
        match train(&mut net, &data, &[], &cfg, 1) {
            Err(NetError::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
