//! Weighted preference pairs from A/B/n feedback.
//!
//! Every candidate that beats its item's human text in the experimental
//! group becomes a winner and is paired against that human text. Each pair
//! carries a gain (its CTR lift normalized by the item's largest lift and
//! scaled by `m`) and a confidence (1.0 when the AA group reproduces the
//! order, 0.5 otherwise). The training weight is their product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{empirical_ctr, group_by_item, ArmStats, Group, ItemArms};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub item_id: String,
    pub y_w: String,
    pub y_l: String,
    pub delta: f64,
    pub gain: f64,
    pub confidence: f64,
    pub weight: f64,
}

impl PreferencePair {
    pub fn validate(&self) -> Result<()> {
        let ok = self.delta > 0.0
            && self.gain >= 0.0
            && (self.confidence == 0.5 || self.confidence == 1.0)
            && self.weight == self.gain * self.confidence;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "inconsistent pair for item {:?}: delta {}, gain {}, confidence {}, weight {}",
                self.item_id, self.delta, self.gain, self.confidence, self.weight
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrefConfig {
    pub m: f64,
    /// Arms below this exp-group page-view count are not eligible.
    pub min_pv: u64,
}

impl Default for PrefConfig {
    fn default() -> Self {
        PrefConfig { m: 2.5, min_pv: 0 }
    }
}

impl PrefConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::Config(format!("m must be positive, got {}", self.m)));
        }
        Ok(())
    }
}

/// A winning candidate arm with its lift over the human arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Winner<'a> {
    pub arm: &'a ArmStats,
    pub delta: f64,
}

/// Candidates whose exp-group CTR strictly exceeds the human arm's.
/// Returns `None` when the human arm is missing or was never shown.
pub fn select_winners<'a>(arms: &ItemArms<'a>, min_pv: u64) -> Option<Vec<Winner<'a>>> {
    let human = arms.human(Group::Exp)?;
    if human.pv == 0 || human.pv < min_pv {
        return None;
    }
    let human_ctr = empirical_ctr(human)?;
    let winners = arms
        .exp
        .values()
        .filter(|a| !a.human && a.pv > 0 && a.pv >= min_pv)
        .filter_map(|a| {
            let ctr = empirical_ctr(a)?;
            (ctr > human_ctr).then_some(Winner {
                arm: a,
                delta: ctr - human_ctr,
            })
        })
        .collect();
    Some(winners)
}

/// `delta_k / max(delta) * m` for one item's winning deltas.
pub fn gain_coefficients(deltas: &[f64], m: f64) -> Vec<f64> {
    let max = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    deltas
        .iter()
        .map(|&d| if d == max { m } else { d / max * m })
        .collect()
}

/// 1.0 when `y_w` beats `y_l` in both groups, 0.5 otherwise (ties,
/// reversals and missing or unshown arms included).
pub fn confidence_coefficient(y_w: &str, y_l: &str, arms: &ItemArms<'_>) -> f64 {
    let beats = |arms: &std::collections::BTreeMap<&str, &ArmStats>| -> bool {
        let ctr = |t: &str| arms.get(t).and_then(|a| empirical_ctr(a));
        matches!((ctr(y_w), ctr(y_l)), (Some(w), Some(l)) if w > l)
    };
    if beats(&arms.exp) && beats(&arms.aa) {
        1.0
    } else {
        0.5
    }
}

/// Builds all weighted pairs. Output is sorted by item id, then by `y_w`,
/// so the result does not depend on the order of `stats`.
pub fn build_pairs(stats: &[ArmStats], config: &PrefConfig) -> Result<Vec<PreferencePair>> {
    config.validate()?;
    let mut pairs = Vec::new();
    for (item_id, arms) in group_by_item(stats) {
        let Some(winners) = select_winners(&arms, config.min_pv) else {
            log::warn!("item {item_id}: human arm missing or unshown in exp group, skipped");
            continue;
        };
        if winners.is_empty() {
            continue;
        }
        let human = arms.human(Group::Exp).expect("select_winners found it");
        let deltas: Vec<f64> = winners.iter().map(|w| w.delta).collect();
        let gains = gain_coefficients(&deltas, config.m);
        for (w, gain) in winners.iter().zip(gains) {
            let confidence = confidence_coefficient(&w.arm.text, &human.text, &arms);
            pairs.push(PreferencePair {
                item_id: item_id.to_owned(),
                y_w: w.arm.text.clone(),
                y_l: human.text.clone(),
                delta: w.delta,
                gain,
                confidence,
                weight: gain * confidence,
            });
        }
    }
    Ok(pairs)
}

/// Every ordered pair of distinct generated arms of an item whose exp CTRs
/// differ, preferred side first. Used as held-out evaluation pairs: gain is
/// fixed at 1, confidence reflects the AA group as usual.
pub fn ranked_candidate_pairs(stats: &[ArmStats], min_pv: u64) -> Vec<PreferencePair> {
    let mut pairs = Vec::new();
    for (item_id, arms) in group_by_item(stats) {
        let shown: Vec<(&ArmStats, f64)> = arms
            .exp
            .values()
            .filter(|a| !a.human && a.pv > 0 && a.pv >= min_pv)
            .filter_map(|a| empirical_ctr(a).map(|c| (*a, c)))
            .collect();
        for (i, (a, ca)) in shown.iter().enumerate() {
            for (b, cb) in &shown[i + 1..] {
                let (w, l, delta) = if ca > cb {
                    (a, b, ca - cb)
                } else if cb > ca {
                    (b, a, cb - ca)
                } else {
                    continue;
                };
                let confidence = confidence_coefficient(&w.text, &l.text, &arms);
                pairs.push(PreferencePair {
                    item_id: item_id.to_owned(),
                    y_w: w.text.clone(),
                    y_l: l.text.clone(),
                    delta,
                    gain: 1.0,
                    confidence,
                    weight: confidence,
                });
            }
        }
    }
    pairs
}
