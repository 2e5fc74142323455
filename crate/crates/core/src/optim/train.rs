//! Reference fitting, preference training and pair accuracy.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{FeatureMap, SparseFeatures};
use super::loss::{accumulate_grad, dpo_loss};
use super::policy::{FeaturizedPair, Policy};
use crate::corpus::Item;
use crate::error::{Error, Result};
use crate::generators::Candidate;
use crate::pref::PreferencePair;
use crate::seed::{derive_seed, rng_from};

/// Which coefficients enter the pair weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// gain × confidence
    Ctrpo,
    /// every pair weighs 1
    DpoUnweighted,
    /// confidence only
    ConfidenceOnly,
}

impl WeightMode {
    pub const ALL: [WeightMode; 3] = [
        WeightMode::DpoUnweighted,
        WeightMode::ConfidenceOnly,
        WeightMode::Ctrpo,
    ];

    pub fn weight(self, pair: &PreferencePair) -> f64 {
        match self {
            WeightMode::Ctrpo => pair.weight,
            WeightMode::DpoUnweighted => 1.0,
            WeightMode::ConfidenceOnly => pair.confidence,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::Ctrpo => "ctrpo",
            WeightMode::DpoUnweighted => "dpo_unweighted",
            WeightMode::ConfidenceOnly => "confidence_only",
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ctrpo" => Ok(WeightMode::Ctrpo),
            "dpo_unweighted" => Ok(WeightMode::DpoUnweighted),
            "confidence_only" => Ok(WeightMode::ConfidenceOnly),
            other => Err(Error::Config(format!("unknown weight mode {other:?}"))),
        }
    }
}

/// How a mini-batch gradient is reduced before the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_mode: WeightMode,
    pub reduction: Reduction,
    /// Derived from the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub ref_learning_rate: f64,
    pub ref_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.1,
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 16,
            weight_mode: WeightMode::Ctrpo,
            reduction: Reduction::Sum,
            seed: None,
            ref_learning_rate: 1.0,
            ref_steps: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.learning_rate >= 0.0) || !(self.ref_learning_rate >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

struct Pool {
    features: Vec<SparseFeatures>,
    /// `(pool index, occurrences)` of each training target.
    targets: Vec<(usize, f64)>,
}

/// Supervised fit of the reference policy: full-batch gradient ascent on
/// the mean log-probability of every generated candidate within its item's
/// pool (the item's candidates plus its human text). Returns the policy and
/// the mean negative log-likelihood before each step and after the last.
pub fn fit_reference(
    candidates: &[Candidate],
    items: &[Item],
    features: FeatureMap,
    config: &TrainConfig,
) -> Result<(Policy, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::Invalid("cannot fit a reference on zero candidates".into()));
    }
    let index: HashMap<&str, &Item> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut grouped: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for c in candidates {
        if !index.contains_key(c.item_id.as_str()) {
            return Err(Error::UnknownItem(c.item_id.clone()));
        }
        *grouped
            .entry(c.item_id.as_str())
            .or_default()
            .entry(c.text.as_str())
            .or_insert(0.0) += 1.0;
    }

    let mut pools = Vec::with_capacity(grouped.len());
    let mut n_targets = 0.0;
    for (item_id, counts) in &grouped {
        let item = index[item_id];
        let mut texts: Vec<&str> = counts.keys().copied().collect();
        if !counts.contains_key(item.human_text.as_str()) {
            texts.push(item.human_text.as_str());
        }
        let targets: Vec<(usize, f64)> = texts
            .iter()
            .enumerate()
            .filter_map(|(i, t)| counts.get(t).map(|&n| (i, n)))
            .collect();
        n_targets += targets.iter().map(|t| t.1).sum::<f64>();
        pools.push(Pool {
            features: texts.iter().map(|t| features.sparse(item, t)).collect(),
            targets,
        });
    }

    let mut policy = Policy::zeros(features);
    let mut history = Vec::with_capacity(config.ref_steps + 1);
    for step in 0..=config.ref_steps {
        let mut grad = vec![0.0; features.dimension];
        let mut nll = 0.0;
        for pool in &pools {
            let scores: Vec<f64> = pool.features.iter().map(|f| policy.score_features(f)).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let lse = max + z.ln();
            let mass: f64 = pool.targets.iter().map(|t| t.1).sum();
            for &(i, n) in &pool.targets {
                nll -= n * (scores[i] - lse);
                pool.features[i].add_scaled_to(&mut grad, n);
            }
            for (f, e) in pool.features.iter().zip(&exps) {
                f.add_scaled_to(&mut grad, -mass * e / z);
            }
        }
        history.push(nll / n_targets);
        if step == config.ref_steps {
            break;
        }
        let lr = config.ref_learning_rate / n_targets;
        for (w, g) in policy.weights.iter_mut().zip(&grad) {
            *w += lr * g;
        }
    }
    Ok((policy, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub epoch: usize,
    pub batch: usize,
    pub pairs: usize,
    /// Weighted loss of the batch before its update.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub log: Vec<BatchLog>,
}

/// Mini-batch gradient descent on the weighted DPO objective, starting at
/// `reference`. Pair weights are taken as given; see
/// [`WeightMode::weight`] for building them.
pub fn train_ctrpo(
    reference: &Policy,
    pairs: &[FeaturizedPair],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Invalid(
            "no preference pairs to train on; simulate more items or traffic".into(),
        ));
    }
    if let Some(p) = pairs.iter().find(|p| !(p.weight >= 0.0)) {
        return Err(Error::Invalid(format!("negative pair weight {}", p.weight)));
    }

    let mut policy = reference.clone();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = rng_from(derive_seed(seed, &format!("epoch-{epoch}")));
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&FeaturizedPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let loss: f64 = batch
                .iter()
                .map(|p| p.weight * dpo_loss(&policy, reference, p, config.beta))
                .sum();
            let mut grad = vec![0.0; policy.weights.len()];
            accumulate_grad(&policy, reference, batch.iter().copied(), config.beta, &mut grad);
            let step = match config.reduction {
                Reduction::Sum => config.learning_rate,
                Reduction::Mean => config.learning_rate / batch.len() as f64,
            };
            for (w, g) in policy.weights.iter_mut().zip(&grad) {
                *w -= step * g;
            }
            log::debug!("epoch {epoch} batch {b}: loss {loss:.6}");
            log.push(BatchLog {
                epoch,
                batch: b,
                pairs: batch.len(),
                loss,
            });
        }
    }
    Ok(TrainOutcome { policy, log })
}

/// Fraction of pairs whose preferred text scores strictly higher.
pub fn pair_accuracy(policy: &Policy, pairs: &[FeaturizedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Invalid("pair accuracy needs at least one test pair".into()));
    }
    let correct = pairs
        .iter()
        .filter(|p| policy.score_features(&p.preferred) > policy.score_features(&p.dispreferred))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}
