//! In-memory stage logic, shared by the file-based commands and by tests
//! that sweep seeds without touching the disk.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Item, Repository};
use crate::error::{Error, Result};
use crate::generators::{generate_candidates, Candidate, GeneratorConfig, Mode, ToyLm};
use crate::metrics::WinReport;
use crate::optim::features::FeatureMap;
use crate::optim::{
    fit_reference, pair_accuracy, train_ctrpo, FeaturizedPair, Policy, TrainConfig, TrainOutcome,
    WeightMode,
};
use crate::pref::{ranked_candidate_pairs, PreferencePair};
use crate::sim::{run_abn, ArmStats, PvDistConfig, WorldModel};

pub fn item_index(items: &[Item]) -> HashMap<&str, &Item> {
    items.iter().map(|i| (i.id.as_str(), i)).collect()
}

/// Candidates for every item, in item order.
pub fn sample_all(
    items: &[Item],
    repo: &Repository,
    lm: Option<&ToyLm>,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<Vec<Candidate>> {
    let mut out = Vec::with_capacity(items.len() * config.k);
    for item in items {
        out.extend(generate_candidates(item, repo, lm, config, seed)?);
    }
    Ok(out)
}

/// Fails when any held-out item id also appears among training items.
pub fn check_disjoint(train: &[Item], held_out: &[Item]) -> Result<()> {
    let ids: HashSet<&str> = train.iter().map(|i| i.id.as_str()).collect();
    let overlap: Vec<&str> = held_out
        .iter()
        .map(|i| i.id.as_str())
        .filter(|id| ids.contains(id))
        .collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "{} evaluation item(s) also appear in training, e.g. {:?}",
            overlap.len(),
            overlap[0]
        )))
    }
}

/// Reference fit plus one trained policy per requested weight mode.
pub struct Trained {
    pub reference: Policy,
    pub reference_nll: Vec<f64>,
    pub policies: BTreeMap<WeightMode, TrainOutcome>,
}

pub fn train_modes(
    items: &[Item],
    candidates: &[Candidate],
    pairs: &[PreferencePair],
    features: FeatureMap,
    config: &TrainConfig,
    modes: &[WeightMode],
    seed: u64,
) -> Result<Trained> {
    config.validate()?;
    let (reference, reference_nll) = fit_reference(candidates, items, features, config)?;
    let index = item_index(items);
    let mut policies = BTreeMap::new();
    for &mode in modes {
        let featurized = FeaturizedPair::from_pairs(&features, &index, pairs, |p| mode.weight(p))?;
        let outcome = train_ctrpo(&reference, &featurized, config, seed)?;
        policies.insert(mode, outcome);
    }
    Ok(Trained {
        reference,
        reference_nll,
        policies,
    })
}

/// Fresh candidate pools for held-out items, their high-traffic A/B/n
/// outcome, and the ranked candidate pairs derived from it.
#[derive(Debug, Clone)]
pub struct HeldOut {
    pub pools: Vec<Candidate>,
    pub stats: Vec<ArmStats>,
    pub pairs: Vec<PreferencePair>,
}

pub fn held_out(
    world: &WorldModel,
    items: &[Item],
    repo: &Repository,
    k: usize,
    test_pv: &PvDistConfig,
    seed: u64,
) -> Result<HeldOut> {
    let config = GeneratorConfig {
        mode: Mode::Diverse,
        k,
        ..GeneratorConfig::default()
    };
    let pools = sample_all(items, repo, None, &config, seed)?;
    let stats = run_abn(world, items, &pools, test_pv, seed)?;
    let pairs = ranked_candidate_pairs(&stats, 0);
    Ok(HeldOut { pools, stats, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEval {
    pub pair_accuracy: f64,
    pub held_out_pairs: usize,
    #[serde(flatten)]
    pub win: WinReport,
}

/// Pair accuracy on the held-out pairs, then a two-arm test of the
/// policy's top-scored pool candidate against each item's human text.
pub fn evaluate_policy(
    world: &WorldModel,
    policy: &Policy,
    items: &[Item],
    held_out: &HeldOut,
    ab_pv: &PvDistConfig,
    seed: u64,
) -> Result<(PolicyEval, Vec<Candidate>)> {
    let index = item_index(items);
    let pairs = FeaturizedPair::from_pairs(&policy.features, &index, &held_out.pairs, |_| 1.0)?;
    let accuracy = pair_accuracy(policy, &pairs)?;

    let mut pools: BTreeMap<&str, Vec<&Candidate>> = BTreeMap::new();
    for c in &held_out.pools {
        pools.entry(c.item_id.as_str()).or_default().push(c);
    }
    let mut chosen = Vec::with_capacity(items.len());
    for item in items {
        let Some(pool) = pools.get(item.id.as_str()) else {
            continue;
        };
        let texts: Vec<&str> = pool.iter().map(|c| c.text.as_str()).collect();
        if let Some(best) = policy.argmax(item, &texts) {
            let c = pool.iter().find(|c| c.text == best).expect("text from pool");
            chosen.push((*c).clone());
        }
    }
    let stats = run_abn(world, items, &chosen, ab_pv, seed)?;
    let win = WinReport::compute(&stats, &chosen)?;
    Ok((
        PolicyEval {
            pair_accuracy: accuracy,
            held_out_pairs: pairs.len(),
            win,
        },
        chosen,
    ))
}
