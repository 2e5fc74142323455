//! File-based stage commands. Each reads its inputs from the run's output
//! directory, checks their sidecar hashes and writes its own artifacts.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::*;
use super::experiment::{check_disjoint, evaluate_policy, held_out, sample_all, train_modes, PolicyEval};
use super::io::{check_input, read_json, read_jsonl, write_json, write_jsonl, write_meta};
use crate::corpus::{validate_items, Exemplar, Item, Repository};
use crate::error::{Error, Result};
use crate::generators::{Candidate, Mode, ToyLm};
use crate::metrics::DiversityReport;
use crate::optim::{Policy, WeightMode};
use crate::pref::{build_pairs, PreferencePair};
use crate::seed::derive_seed;
use crate::sim::{run_abn, validate_stats, ArmStats, WorldModel};
use crate::synth;

/// A validated config plus everything derived from it once.
pub struct Run {
    pub config: RunConfig,
    pub seeds: Seeds,
    pub hashes: StageHashes,
    /// Accept inputs whose recorded config hash differs.
    pub force: bool,
}

pub fn policy_file(mode: WeightMode) -> String {
    format!("policy-{}.json", mode.as_str())
}

/// Policy written for the configured weight mode under its plain name.
pub const POLICY_FILE: &str = "policy.json";

/// One line of `train_log.jsonl`. Reference rows log the mean NLL per
/// full-batch step; policy rows log the weighted loss of each mini-batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub model: String,
    pub epoch: usize,
    pub step: usize,
    pub examples: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutSummary {
    pub items: usize,
    pub candidates: usize,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seeds: Seeds,
    pub config: RunConfig,
    pub held_out: HeldOutSummary,
    /// Diversity of the freshly generated held-out pools.
    pub diversity: DiversityReport,
    /// The supervised reference policy, for comparison.
    pub reference: PolicyEval,
    pub results: BTreeMap<String, PolicyEval>,
}

impl Run {
    pub fn new(config: RunConfig, force: bool) -> Result<Self> {
        config.validate()?;
        // Policies are stored per weight mode, so the configured mode does
        // not invalidate training outputs.
        let mut hashed = config.clone();
        hashed.train.weight_mode = WeightMode::Ctrpo;
        Ok(Run {
            seeds: config.seeds(),
            hashes: StageHashes::new(&hashed),
            config,
            force,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out(name)
    }

    fn world(&self) -> WorldModel {
        WorldModel::new(self.config.simulator.features(), &self.config.world_config())
    }

    fn read_checked<T: serde::de::DeserializeOwned>(&self, path: &Path, hash: &str) -> Result<Vec<T>> {
        check_input(path, hash, self.force)?;
        read_jsonl(path)
    }

    fn write_staged<T: Serialize>(&self, path: &Path, rows: &[T], stage: &str, hash: &str) -> Result<()> {
        write_jsonl(path, rows)?;
        write_meta(path, stage, hash)?;
        log::info!("wrote {} ({} rows)", path.display(), rows.len());
        Ok(())
    }

    pub fn load_items(&self, path: &Path) -> Result<Vec<Item>> {
        let items: Vec<Item> = self.read_checked(path, &self.hashes.data)?;
        validate_items(&items)?;
        Ok(items)
    }

    pub fn load_repository(&self) -> Result<Repository> {
        let exemplars: Vec<Exemplar> = self.read_checked(&self.config.exemplars_path(), &self.hashes.data)?;
        Repository::new(exemplars)
    }

    fn load_candidates(&self, items: &[Item]) -> Result<Vec<Candidate>> {
        let candidates: Vec<Candidate> = self.read_checked(&self.out(CANDIDATES_FILE), &self.hashes.sample)?;
        let ids: HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
        for c in &candidates {
            c.validate()?;
            if !ids.contains(c.item_id.as_str()) {
                return Err(Error::UnknownItem(c.item_id.clone()));
            }
        }
        Ok(candidates)
    }

    /// Writes the synthetic item, held-out item and exemplar files.
    pub fn gen_data(&self) -> Result<()> {
        let world_ref = self.world().weights_ref();
        let data = synth::generate(&self.config.synth, self.seeds.dataset, &world_ref)?;
        let hash = &self.hashes.data;
        self.write_staged(&self.config.items_path(), &data.items, "gen-data", hash)?;
        self.write_staged(&self.config.eval_items_path(), &data.eval_items, "gen-data", hash)?;
        self.write_staged(&self.config.exemplars_path(), &data.exemplars, "gen-data", hash)
    }

    pub fn sample(&self) -> Result<Vec<Candidate>> {
        let items = self.load_items(&self.config.items_path())?;
        let repo = self.load_repository()?;
        let lm = match self.config.generator.mode {
            Mode::Baseline => Some(ToyLm::fit_items(&items)?),
            Mode::Diverse => None,
        };
        let candidates = sample_all(&items, &repo, lm.as_ref(), &self.config.generator, self.seeds.sample)?;
        self.write_staged(&self.out(CANDIDATES_FILE), &candidates, "sample", &self.hashes.sample)?;
        Ok(candidates)
    }

    pub fn simulate(&self) -> Result<Vec<ArmStats>> {
        let items = self.load_items(&self.config.items_path())?;
        let candidates = self.load_candidates(&items)?;
        let world = self.world();
        let world_ref = world.weights_ref();
        if let Some(other) = items
            .iter()
            .filter_map(|i| i.latent.as_ref())
            .find(|l| l.feature_weights_ref != world_ref)
        {
            log::warn!(
                "items reference hidden weights {:?} but the simulator uses {:?}",
                other.feature_weights_ref,
                world_ref
            );
        }
        let stats = run_abn(&world, &items, &candidates, &self.config.simulator.pv(), self.seeds.clicks)?;
        validate_stats(&stats)?;
        self.write_staged(&self.out(ARMSTATS_FILE), &stats, "simulate", &self.hashes.simulate)?;
        Ok(stats)
    }

    pub fn build_prefs(&self) -> Result<Vec<PreferencePair>> {
        let stats: Vec<ArmStats> = self.read_checked(&self.out(ARMSTATS_FILE), &self.hashes.simulate)?;
        validate_stats(&stats)?;
        let pairs = build_pairs(&stats, &self.config.pref)?;
        if pairs.is_empty() {
            log::warn!("no generated text beat its human text; the pairs file is empty");
        }
        self.write_staged(&self.out(PAIRS_FILE), &pairs, "build-prefs", &self.hashes.prefs)?;
        Ok(pairs)
    }

    pub fn train(&self, modes: &[WeightMode]) -> Result<()> {
        let items = self.load_items(&self.config.items_path())?;
        let candidates = self.load_candidates(&items)?;
        let pairs: Vec<PreferencePair> = self.read_checked(&self.out(PAIRS_FILE), &self.hashes.prefs)?;
        if pairs.is_empty() {
            return Err(Error::Invalid(
                "no preference pairs to train on; simulate more page views (raise simulator.pv_min or \
                 pv_max) or generate more candidates per item"
                    .into(),
            ));
        }
        let trained = train_modes(
            &items,
            &candidates,
            &pairs,
            self.config.simulator.features(),
            &self.config.train,
            modes,
            self.seeds.train,
        )?;

        let hash = &self.hashes.train;
        let mut log_rows: Vec<TrainLogRow> = trained
            .reference_nll
            .iter()
            .enumerate()
            .map(|(step, &loss)| TrainLogRow {
                model: "reference".into(),
                epoch: 0,
                step,
                examples: candidates.len(),
                loss,
            })
            .collect();
        self.write_policy(&self.out(REFERENCE_FILE), &trained.reference)?;
        for (mode, outcome) in &trained.policies {
            self.write_policy(&self.out(&policy_file(*mode)), &outcome.policy)?;
            if *mode == self.config.train.weight_mode {
                self.write_policy(&self.out(POLICY_FILE), &outcome.policy)?;
            }
            log_rows.extend(outcome.log.iter().map(|b| TrainLogRow {
                model: mode.as_str().into(),
                epoch: b.epoch,
                step: b.batch,
                examples: b.pairs,
                loss: b.loss,
            }));
        }
        self.write_staged(&self.out(TRAIN_LOG_FILE), &log_rows, "train", hash)
    }

    fn write_policy(&self, path: &Path, policy: &Policy) -> Result<()> {
        write_json(path, policy)?;
        write_meta(path, "train", &self.hashes.train)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn load_policy(&self, path: &Path) -> Result<Policy> {
        check_input(path, &self.hashes.train, self.force)?;
        let policy: Policy = read_json(path)?;
        Policy::from_weights(policy.features, policy.weights)
    }

    pub fn eval(&self, modes: &[WeightMode]) -> Result<Report> {
        let train_items = self.load_items(&self.config.items_path())?;
        let eval_items = self.load_items(&self.config.eval_items_path())?;
        check_disjoint(&train_items, &eval_items)?;
        let repo = self.load_repository()?;
        let world = self.world();
        let ev = &self.config.eval;
        let test_seed = derive_seed(self.seeds.eval, "eval-test");
        let ab_seed = derive_seed(self.seeds.eval, "eval-ab");

        let held = held_out(&world, &eval_items, &repo, ev.k, &ev.test_pv, test_seed)?;
        let diversity = DiversityReport::from_candidates(&held.pools)?;

        let reference = self.load_policy(&self.out(REFERENCE_FILE))?;
        let (reference, _) = evaluate_policy(&world, &reference, &eval_items, &held, &ev.ab_pv, ab_seed)?;
        let mut results = BTreeMap::new();
        for &mode in modes {
            let policy = self.load_policy(&self.out(&policy_file(mode)))?;
            let (result, _) = evaluate_policy(&world, &policy, &eval_items, &held, &ev.ab_pv, ab_seed)?;
            results.insert(mode.as_str().to_owned(), result);
        }
        let report = Report {
            config_hash: self.hashes.eval.clone(),
            seeds: self.seeds,
            config: self.config.clone(),
            held_out: HeldOutSummary {
                items: eval_items.len(),
                candidates: held.pools.len(),
                pairs: held.pairs.len(),
            },
            diversity,
            reference,
            results,
        };
        let path = self.out(REPORT_FILE);
        write_json(&path, &report)?;
        write_meta(&path, "eval", &self.hashes.eval)?;
        log::info!("wrote {}", path.display());
        Ok(report)
    }

    /// Every stage in order. Generates the synthetic data first when the
    /// config uses the default data locations and they are missing.
    pub fn run_all(&self, modes: &[WeightMode]) -> Result<Report> {
        let needs_data = [
            self.config.items_path(),
            self.config.eval_items_path(),
            self.config.exemplars_path(),
        ]
        .iter()
        .any(|p| !p.exists());
        if needs_data {
            if !self.config.uses_generated_data() {
                return Err(Error::Invalid(
                    "configured data files are missing; run gen-data or fix the [data] paths".into(),
                ));
            }
            self.gen_data()?;
        }
        self.sample()?;
        self.simulate()?;
        self.build_prefs()?;
        self.train(modes)?;
        self.eval(modes)
    }
}
