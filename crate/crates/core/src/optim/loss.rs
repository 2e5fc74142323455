//! DPO and gain/confidence-weighted DPO objectives.
//!
//! Under the discrete-choice policy, `log π(y | x) = s(x, y) - log Z(x)`
//! with `Z(x)` summed over the item's pool. Both texts of a pair come from
//! the same pool, so in
//!
//! ```text
//! [log π_θ(y_w) - log π_ref(y_w)] - [log π_θ(y_l) - log π_ref(y_l)]
//! ```
//!
//! the `log Z_θ` and `log Z_ref` terms appear once with each sign and
//! cancel, leaving `[s_θ(y_w) - s_θ(y_l)] - [s_ref(y_w) - s_ref(y_l)]`.

use super::policy::{FeaturizedPair, Policy};
use crate::corpus::Item;
use crate::error::{Error, Result};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn check_same_space(policy: &Policy, reference: &Policy) {
    assert_eq!(
        policy.features, reference.features,
        "policy and reference must share a feature map"
    );
}

/// Implicit-reward margin of a featurized pair.
pub fn pair_margin(policy: &Policy, reference: &Policy, pair: &FeaturizedPair) -> f64 {
    let theta = policy.score_features(&pair.preferred) - policy.score_features(&pair.dispreferred);
    let reference =
        reference.score_features(&pair.preferred) - reference.score_features(&pair.dispreferred);
    theta - reference
}

/// Log-ratio margin of `y_w` over `y_l` for one item.
pub fn logprob_margin(
    policy: &Policy,
    reference: &Policy,
    item: &Item,
    y_w: &str,
    y_l: &str,
) -> f64 {
    check_same_space(policy, reference);
    let pair = FeaturizedPair::new(&policy.features, item, y_w, y_l, 1.0);
    pair_margin(policy, reference, &pair)
}

/// `-log σ(β · margin)`.
pub fn dpo_loss_from_margin(margin: f64, beta: f64) -> f64 {
    softplus(-beta * margin)
}

pub fn dpo_loss(policy: &Policy, reference: &Policy, pair: &FeaturizedPair, beta: f64) -> f64 {
    check_same_space(policy, reference);
    dpo_loss_from_margin(pair_margin(policy, reference, pair), beta)
}

fn check_weights(pairs: &[FeaturizedPair]) -> Result<()> {
    match pairs.iter().find(|p| !(p.weight >= 0.0)) {
        Some(p) => Err(Error::Invalid(format!(
            "negative pair weight {} for item {:?}",
            p.weight, p.item_id
        ))),
        None => Ok(()),
    }
}

/// `Σ w · dpo_loss` over all pairs.
pub fn ctrpo_loss(
    policy: &Policy,
    reference: &Policy,
    pairs: &[FeaturizedPair],
    beta: f64,
) -> Result<f64> {
    check_weights(pairs)?;
    Ok(pairs
        .iter()
        .map(|p| p.weight * dpo_loss(policy, reference, p, beta))
        .sum())
}

/// Gradient of [`ctrpo_loss`] with respect to the policy weights:
/// `Σ w · β · (σ(β·m) - 1) · (φ(y_w) - φ(y_l))`.
pub fn grad_ctrpo(
    policy: &Policy,
    reference: &Policy,
    pairs: &[FeaturizedPair],
    beta: f64,
) -> Vec<f64> {
    check_same_space(policy, reference);
    let mut grad = vec![0.0; policy.weights.len()];
    accumulate_grad(policy, reference, pairs, beta, &mut grad);
    grad
}

pub(crate) fn accumulate_grad<'a>(
    policy: &Policy,
    reference: &Policy,
    pairs: impl IntoIterator<Item = &'a FeaturizedPair>,
    beta: f64,
    grad: &mut [f64],
) {
    for p in pairs {
        if p.weight == 0.0 {
            continue;
        }
        let m = pair_margin(policy, reference, p);
        // σ(βm) - 1 = -σ(-βm)
        let coef = -p.weight * beta * sigmoid(-beta * m);
        p.preferred.add_scaled_to(grad, coef);
        p.dispreferred.add_scaled_to(grad, -coef);
    }
}
