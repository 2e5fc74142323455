use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::features::{FeatureMap, SparseFeatures};
use crate::corpus::Item;
use crate::error::{Error, Result};
use crate::pref::PreferencePair;

/// Linear scorer over the hashed feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub features: FeatureMap,
    pub weights: Vec<f64>,
}

impl Policy {
    pub fn zeros(features: FeatureMap) -> Self {
        Policy {
            weights: vec![0.0; features.dimension],
            features,
        }
    }

    pub fn from_weights(features: FeatureMap, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != features.dimension {
            return Err(Error::Invalid(format!(
                "policy has {} weights, feature map dimension is {}",
                weights.len(),
                features.dimension
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("policy weights must be finite".into()));
        }
        Ok(Policy { features, weights })
    }

    pub fn score_features(&self, phi: &SparseFeatures) -> f64 {
        phi.dot_dense(&self.weights)
    }

    pub fn score(&self, item: &Item, text: &str) -> f64 {
        self.score_features(&self.features.sparse(item, text))
    }

    /// `log π(text | item)` under the softmax over `pool`. `text` must be a
    /// member of `pool`.
    pub fn log_prob(&self, item: &Item, text: &str, pool: &[&str]) -> f64 {
        let scores: Vec<f64> = pool.iter().map(|t| self.score(item, t)).collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        self.score(item, text) - lse
    }

    /// Index of the highest-scoring text; ties go to the earliest.
    pub fn argmax<'t>(&self, item: &Item, texts: &[&'t str]) -> Option<&'t str> {
        let mut best: Option<(&str, f64)> = None;
        for &t in texts {
            let s = self.score(item, t);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((t, s));
            }
        }
        best.map(|(t, _)| t)
    }
}

/// A preference pair with its features precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedPair {
    pub item_id: String,
    pub preferred: SparseFeatures,
    pub dispreferred: SparseFeatures,
    pub weight: f64,
}

impl FeaturizedPair {
    pub fn new(features: &FeatureMap, item: &Item, y_w: &str, y_l: &str, weight: f64) -> Self {
        FeaturizedPair {
            item_id: item.id.clone(),
            preferred: features.sparse(item, y_w),
            dispreferred: features.sparse(item, y_l),
            weight,
        }
    }

    /// Featurizes `pairs`, taking each pair's weight from `weight_of`.
    pub fn from_pairs(
        features: &FeatureMap,
        items: &HashMap<&str, &Item>,
        pairs: &[PreferencePair],
        weight_of: impl Fn(&PreferencePair) -> f64,
    ) -> Result<Vec<FeaturizedPair>> {
        pairs
            .iter()
            .map(|p| {
                let item = items
                    .get(p.item_id.as_str())
                    .ok_or_else(|| Error::UnknownItem(p.item_id.clone()))?;
                Ok(FeaturizedPair::new(features, item, &p.y_w, &p.y_l, weight_of(p)))
            })
            .collect()
    }
}
