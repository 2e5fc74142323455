//! Run configuration, seed derivation and per-stage config hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generators::GeneratorConfig;
use crate::optim::features::{FeatureMap, DEFAULT_DIMENSION, DEFAULT_HASH_SEED};
use crate::optim::TrainConfig;
use crate::pref::PrefConfig;
use crate::seed::derive_seed;
use crate::sim::{PvDistConfig, WorldConfig};
use crate::synth::SynthConfig;

/// Input data locations. Unset paths fall back to files inside `out_dir`,
/// which is where `gen-data` writes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub items: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub eval_items: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub alpha: f64,
    pub pv_min: u64,
    pub pv_max: u64,
    pub scale: f64,
    pub offset: f64,
    /// Per-text logit noise for items without their own latent noise.
    pub noise_sd: f64,
    pub feature_dim: usize,
    pub hash_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub world_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub click_seed: Option<u64>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        let pv = PvDistConfig::default();
        let world = WorldConfig::default();
        SimulatorConfig {
            alpha: pv.alpha,
            pv_min: pv.pv_min,
            pv_max: pv.pv_max,
            scale: world.scale,
            offset: world.offset,
            noise_sd: world.noise_sd,
            feature_dim: DEFAULT_DIMENSION,
            hash_seed: DEFAULT_HASH_SEED,
            world_seed: None,
            click_seed: None,
        }
    }
}

impl SimulatorConfig {
    pub fn pv(&self) -> PvDistConfig {
        PvDistConfig {
            alpha: self.alpha,
            pv_min: self.pv_min,
            pv_max: self.pv_max,
        }
    }

    pub fn features(&self) -> FeatureMap {
        FeatureMap::new(self.feature_dim, self.hash_seed)
    }
}

fn high_traffic() -> PvDistConfig {
    PvDistConfig {
        alpha: 1.2,
        pv_min: 5_000,
        pv_max: 50_000,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Pool size generated for each held-out item.
    pub k: usize,
    /// Traffic of the test that orders held-out candidate pairs.
    pub test_pv: PvDistConfig,
    /// Traffic of the policy-versus-human test.
    pub ab_pv: PvDistConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            test_pv: high_traffic(),
            ab_pv: high_traffic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub generator: GeneratorConfig,
    pub simulator: SimulatorConfig,
    pub pref: PrefConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            generator: GeneratorConfig::default(),
            simulator: SimulatorConfig::default(),
            pref: PrefConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Every seed a run uses, after derivation and overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub dataset: u64,
    pub world: u64,
    pub sample: u64,
    pub clicks: u64,
    pub train: u64,
    pub eval: u64,
}

pub const ITEMS_FILE: &str = "items.jsonl";
pub const EXEMPLARS_FILE: &str = "exemplars.jsonl";
pub const EVAL_ITEMS_FILE: &str = "eval_items.jsonl";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const ARMSTATS_FILE: &str = "armstats.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const REFERENCE_FILE: &str = "reference.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const REPORT_FILE: &str = "report.json";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.simulator.pv().validate()?;
        self.eval.test_pv.validate()?;
        self.eval.ab_pv.validate()?;
        self.pref.validate()?;
        self.train.validate()?;
        if self.generator.k == 0 || self.eval.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.simulator.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(self.simulator.noise_sd >= 0.0) {
            return Err(Error::Config("noise_sd must be non-negative".into()));
        }
        Ok(())
    }

    /// Stage seeds: `derive_seed(run seed, stage name)` unless overridden.
    pub fn seeds(&self) -> Seeds {
        let s = self.seed;
        Seeds {
            run: s,
            dataset: crate::synth::dataset_seed(s),
            world: self.simulator.world_seed.unwrap_or_else(|| derive_seed(s, "world")),
            sample: self.generator.seed.unwrap_or_else(|| derive_seed(s, "sample")),
            clicks: self.simulator.click_seed.unwrap_or_else(|| derive_seed(s, "simulate")),
            train: self.train.seed.unwrap_or_else(|| derive_seed(s, "train")),
            eval: derive_seed(s, "eval"),
        }
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            seed: self.seeds().world,
            scale: self.simulator.scale,
            offset: self.simulator.offset,
            noise_sd: self.simulator.noise_sd,
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn items_path(&self) -> PathBuf {
        self.data.items.clone().unwrap_or_else(|| self.out(ITEMS_FILE))
    }

    pub fn exemplars_path(&self) -> PathBuf {
        self.data.exemplars.clone().unwrap_or_else(|| self.out(EXEMPLARS_FILE))
    }

    pub fn eval_items_path(&self) -> PathBuf {
        self.data.eval_items.clone().unwrap_or_else(|| self.out(EVAL_ITEMS_FILE))
    }

    /// True when all three data paths point inside `out_dir` by default.
    pub fn uses_generated_data(&self) -> bool {
        self.data == DataConfig::default()
    }
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(&h.finalize()[..12])
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("config types serialize")
}

/// Cumulative per-stage config hashes: each stage hashes its own section
/// together with the hash of the stage before it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageHashes {
    pub data: String,
    pub sample: String,
    pub simulate: String,
    pub prefs: String,
    pub train: String,
    pub eval: String,
}

impl StageHashes {
    pub fn new(config: &RunConfig) -> Self {
        let seeds = config.seeds();
        let data = digest(&["data", &json(&config.synth), &json(&seeds.dataset), &json(&seeds.world)]);
        let sample = digest(&[
            "sample",
            &data,
            &json(&config.data),
            &json(&config.generator),
            &json(&seeds.sample),
        ]);
        let simulate = digest(&[
            "simulate",
            &sample,
            &json(&config.simulator),
            &json(&seeds.world),
            &json(&seeds.clicks),
        ]);
        let prefs = digest(&["prefs", &simulate, &json(&config.pref)]);
        let train = digest(&["train", &prefs, &json(&config.train), &json(&seeds.train)]);
        let eval = digest(&["eval", &train, &json(&config.eval), &json(&seeds.eval)]);
        StageHashes {
            data,
            sample,
            simulate,
            prefs,
            train,
            eval,
        }
    }
}
