//! Simulated online A/B/n testing with a parallel AA group.
//!
//! The world scores every (item, text) with a hidden linear model over the
//! shared feature map, pushed through a sigmoid anchored at the item's base
//! CTR. Each item receives a heavy-tailed page-view budget that is split
//! evenly across its arms, and clicks are one binomial draw per arm. The AA
//! group repeats the exact arms and budgets with independent click noise.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::corpus::Item;
use crate::error::{Error, Result};
use crate::generators::Candidate;
use crate::optim::features::FeatureMap;
use crate::seed::{derive_seed, derive_seed_parts, rng_from};

/// Simulation-only ground truth attached to an item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCtrParams {
    pub base_ctr: f64,
    pub feature_weights_ref: String,
    pub noise_sd: f64,
}

impl LatentCtrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_ctr > 0.0 && self.base_ctr < 1.0) {
            return Err(Error::Invalid(format!(
                "base_ctr must lie in (0, 1), got {}",
                self.base_ctr
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Invalid(format!(
                "noise_sd must be non-negative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Exp,
    Aa,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Exp => "exp",
            Group::Aa => "aa",
        }
    }
}

/// Page views and clicks of one (item, text) arm in one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmStats {
    pub item_id: String,
    pub text: String,
    pub group: Group,
    /// True for the item's human-crafted text.
    pub human: bool,
    pub pv: u64,
    pub clicks: u64,
}

/// `clicks / pv`, or `None` when the arm was never shown.
pub fn empirical_ctr(stats: &ArmStats) -> Option<f64> {
    ratio(stats.clicks, stats.pv)
}

pub(crate) fn ratio(clicks: u64, pv: u64) -> Option<f64> {
    (pv > 0).then(|| clicks as f64 / pv as f64)
}

/// Pooled CTR over a set of arms.
pub fn aggregate_ctr<'a>(stats: impl IntoIterator<Item = &'a ArmStats>) -> Option<f64> {
    let (clicks, pv) = stats
        .into_iter()
        .fold((0u64, 0u64), |(c, p), s| (c + s.clicks, p + s.pv));
    ratio(clicks, pv)
}

/// Discretized, capped Pareto page-view distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvDistConfig {
    pub alpha: f64,
    pub pv_min: u64,
    pub pv_max: u64,
}

impl Default for PvDistConfig {
    fn default() -> Self {
        PvDistConfig {
            alpha: 1.2,
            pv_min: 20,
            pv_max: 50_000,
        }
    }
}

impl PvDistConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "pareto alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.pv_min == 0 {
            return Err(Error::Config("pv_min must be at least 1".into()));
        }
        if self.pv_max < self.pv_min {
            return Err(Error::Config(format!(
                "pv_max ({}) below pv_min ({})",
                self.pv_max, self.pv_min
            )));
        }
        Ok(())
    }

    /// Analytic `P(PV <= v)` of the discretized, capped distribution.
    pub fn cdf(&self, v: u64) -> f64 {
        if v < self.pv_min {
            0.0
        } else if v >= self.pv_max {
            1.0
        } else {
            // floor(X) <= v  <=>  X < v + 1
            1.0 - (self.pv_min as f64 / (v as f64 + 1.0)).powf(self.alpha)
        }
    }
}

/// `floor(X)` capped at `pv_max`, with `X ~ Pareto(scale = pv_min, shape = alpha)`.
pub fn draw_pv<R: Rng + ?Sized>(dist: &PvDistConfig, rng: &mut R) -> Result<u64> {
    dist.validate()?;
    if dist.pv_min == dist.pv_max {
        return Ok(dist.pv_min);
    }
    let pareto = Pareto::new(dist.pv_min as f64, dist.alpha)
        .map_err(|e| Error::Config(format!("pareto: {e}")))?;
    let x: f64 = pareto.sample(rng);
    let pv = if x >= dist.pv_max as f64 {
        dist.pv_max
    } else {
        (x.floor() as u64).max(dist.pv_min)
    };
    Ok(pv)
}

/// One binomial draw of clicks for `pv` impressions at rate `ctr`.
pub fn draw_clicks<R: Rng + ?Sized>(pv: u64, ctr: f64, rng: &mut R) -> u64 {
    if pv == 0 || ctr <= 0.0 {
        return 0;
    }
    if ctr >= 1.0 {
        return pv;
    }
    Binomial::new(pv, ctr)
        .expect("ctr checked to lie in (0, 1)")
        .sample(rng)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    /// Multiplier on the hidden linear score.
    pub scale: f64,
    pub offset: f64,
    /// Default per-(item, text) noise for items without latent parameters.
    pub noise_sd: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            scale: 0.3,
            offset: 0.0,
            noise_sd: 0.1,
        }
    }
}

/// Hidden ground truth of the simulator.
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub features: FeatureMap,
    pub hidden_weights: Vec<f64>,
    pub scale: f64,
    pub offset: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl WorldModel {
    /// Hidden weights are i.i.d. standard normal, drawn from `config.seed`.
    pub fn new(features: FeatureMap, config: &WorldConfig) -> Self {
        let mut rng = rng_from(derive_seed(config.seed, "hidden-weights"));
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let hidden_weights = (0..features.dimension)
            .map(|_| normal.sample(&mut rng))
            .collect();
        WorldModel {
            features,
            hidden_weights,
            scale: config.scale,
            offset: config.offset,
            noise_sd: config.noise_sd,
            seed: config.seed,
        }
    }

    pub fn with_weights(
        features: FeatureMap,
        hidden_weights: Vec<f64>,
        config: &WorldConfig,
    ) -> Self {
        assert_eq!(hidden_weights.len(), features.dimension);
        WorldModel {
            features,
            hidden_weights,
            scale: config.scale,
            offset: config.offset,
            noise_sd: config.noise_sd,
            seed: config.seed,
        }
    }

    /// Identifier items reference through `feature_weights_ref`.
    pub fn weights_ref(&self) -> String {
        format!("world-{:016x}", self.seed)
    }

    /// Frozen noise term for one (item, text).
    fn noise(&self, item: &Item, text: &str) -> f64 {
        let sd = item.latent.as_ref().map_or(self.noise_sd, |l| l.noise_sd);
        if sd <= 0.0 {
            return 0.0;
        }
        let mut rng = rng_from(derive_seed_parts(self.seed, &["noise", &item.id, text]));
        Normal::new(0.0, sd).expect("sd > 0").sample(&mut rng)
    }

    /// Latent logit before the sigmoid.
    pub fn logit(&self, item: &Item, text: &str) -> f64 {
        let anchor = item.latent.as_ref().map_or(0.0, |l| logit(l.base_ctr));
        let linear = self.features.sparse(item, text).dot_dense(&self.hidden_weights);
        anchor + self.offset + self.scale * linear + self.noise(item, text)
    }

    /// Ground-truth click probability, strictly inside (0, 1).
    pub fn true_ctr(&self, item: &Item, text: &str) -> f64 {
        sigmoid(self.logit(item, text)).clamp(1e-12, 1.0 - 1e-12)
    }
}

/// Splits `total` over `n` arms already in lexicographic order: every arm
/// gets `total / n`, the first `total % n` arms one extra view.
pub fn split_pv(total: u64, n: usize) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let base = total / n as u64;
    let rem = (total % n as u64) as usize;
    (0..n).map(|i| base + u64::from(i < rem)).collect()
}

/// Runs the experimental group and its AA mirror.
///
/// Output order: items in input order; per item all exp arms, then all aa
/// arms, each sorted by text. Duplicate texts within an item share one arm.
pub fn run_abn(
    world: &WorldModel,
    items: &[Item],
    candidates: &[Candidate],
    pv_config: &PvDistConfig,
    seed: u64,
) -> Result<Vec<ArmStats>> {
    pv_config.validate()?;
    let known: HashMap<&str, &Item> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut by_item: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for c in candidates {
        if !known.contains_key(c.item_id.as_str()) {
            return Err(Error::UnknownItem(c.item_id.clone()));
        }
        by_item
            .entry(c.item_id.as_str())
            .or_default()
            .insert(c.text.as_str());
    }

    let mut out = Vec::new();
    for item in items {
        let mut texts: BTreeSet<&str> = by_item.remove(item.id.as_str()).unwrap_or_default();
        texts.insert(item.human_text.as_str());
        let texts: Vec<&str> = texts.into_iter().collect();

        let mut pv_rng = rng_from(derive_seed_parts(seed, &["pv", &item.id]));
        let total = draw_pv(pv_config, &mut pv_rng)?;
        let split = split_pv(total, texts.len());
        let ctrs: Vec<f64> = texts.iter().map(|t| world.true_ctr(item, t)).collect();

        for group in [Group::Exp, Group::Aa] {
            for ((text, &pv), &ctr) in texts.iter().zip(&split).zip(&ctrs) {
                let mut rng = rng_from(derive_seed_parts(
                    seed,
                    &["clicks", group.as_str(), &item.id, text],
                ));
                out.push(ArmStats {
                    item_id: item.id.clone(),
                    text: (*text).to_owned(),
                    group,
                    human: *text == item.human_text,
                    pv,
                    clicks: draw_clicks(pv, ctr, &mut rng),
                });
            }
        }
    }
    Ok(out)
}

/// Arms of one item, split by group and keyed by text.
#[derive(Debug, Default, Clone)]
pub struct ItemArms<'a> {
    pub exp: BTreeMap<&'a str, &'a ArmStats>,
    pub aa: BTreeMap<&'a str, &'a ArmStats>,
}

impl<'a> ItemArms<'a> {
    pub fn human(&self, group: Group) -> Option<&'a ArmStats> {
        let arms = match group {
            Group::Exp => &self.exp,
            Group::Aa => &self.aa,
        };
        arms.values().copied().find(|a| a.human)
    }
}

/// Groups stats by item id, independent of input order.
pub fn group_by_item(stats: &[ArmStats]) -> BTreeMap<&str, ItemArms<'_>> {
    let mut out: BTreeMap<&str, ItemArms<'_>> = BTreeMap::new();
    for s in stats {
        let entry = out.entry(s.item_id.as_str()).or_default();
        let arms = match s.group {
            Group::Exp => &mut entry.exp,
            Group::Aa => &mut entry.aa,
        };
        arms.insert(s.text.as_str(), s);
    }
    out
}

/// Checks per-arm and cross-group invariants of a stats set.
pub fn validate_stats(stats: &[ArmStats]) -> Result<()> {
    for s in stats {
        if s.clicks > s.pv {
            return Err(Error::Invalid(format!(
                "arm {:?}/{:?}: clicks {} exceed pv {}",
                s.item_id, s.text, s.clicks, s.pv
            )));
        }
    }
    for (item, arms) in group_by_item(stats) {
        let exp: Vec<_> = arms.exp.keys().collect();
        let aa: Vec<_> = arms.aa.keys().collect();
        if exp != aa {
            return Err(Error::Invalid(format!(
                "item {item:?}: exp and aa groups hold different arms"
            )));
        }
    }
    Ok(())
}
