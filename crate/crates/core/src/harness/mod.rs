//! Experiment harness: config loading, dataset → weights → pool → env
//! preparation, rollouts and the experiment protocols.

mod experiments;
mod report;
mod rollout;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvError, MentorEnv, PoolIndex};
use crate::ingest::{
    generate_synthetic, top_contributors, ContributorPool, IngestError, MonthlyTrajectory,
    ProjectDataset, RankKey, SyntheticConfig,
};
use crate::metric::{annotate_pool, compute_weights, MetricError, ParentMap, WeightVector, WeightsFile, DEFAULT_BINS};
use crate::policy::PolicyError;
use crate::trainer::{TrainConfig, TrainError};

pub use experiments::{
    export_case_study, run_contribution_table, run_epsilon_sweep, run_intervention, CaseStudy,
    InterventionOutcome, Method,
};
pub use report::{CaseRow, ExperimentReport, MethodRow};
pub use rollout::{replay_real, rollout, Controller, MonthLog, RolloutLog, CONSERVATION_TOLERANCE};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("unknown contributor `{0}`")]
    UnknownContributor(String),
    #[error("disturb month {month} is outside the horizon {horizon}")]
    DisturbOutOfRange { month: usize, horizon: usize },
    #[error("cumulative contribution drifted from the metric prefix sums by {deviation} at month {month}")]
    Conservation { month: usize, deviation: f64 },
}

impl HarnessError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Either a dataset file or an inline synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Path(PathBuf),
    Synthetic {
        synthetic: SyntheticConfig,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    /// Developers sampled per seed for start states and the REAL replay.
    pub developers: usize,
    /// 0-based month indices whose observed state is reset.
    pub disturb_months: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub contributor_id: Option<String>,
    pub case_horizon: Option<usize>,
    /// Act with the policy mean instead of sampling (the default).
    pub greedy: bool,
    /// Pre-trained checkpoints by method name (`mentor`, `ppo_variant`);
    /// methods without one are trained.
    pub checkpoints: BTreeMap<String, PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seeds: vec![1, 2, 3],
            developers: 10,
            disturb_months: vec![7, 8, 9],
            epsilons: vec![0.1, 0.2, 0.3],
            contributor_id: None,
            case_horizon: None,
            greedy: true,
            checkpoints: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// A weights file; computed from the dataset when absent.
    #[serde(default)]
    pub weights: Option<PathBuf>,
    /// A `{"child": "parent"}` file; the default map when absent.
    #[serde(default)]
    pub parents: Option<PathBuf>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub rank_key: RankKey,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_pool_size() -> usize {
    120
}

impl ExperimentConfig {
    pub fn synthetic(config: SyntheticConfig, seed: u64) -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Synthetic { synthetic: config, seed },
            weights: None,
            parents: None,
            bins: DEFAULT_BINS,
            pool_size: default_pool_size(),
            rank_key: RankKey::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Loads a config; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::Path(p) = &mut cfg.dataset {
            resolve(p);
        }
        cfg.weights.iter_mut().for_each(resolve);
        cfg.parents.iter_mut().for_each(resolve);
        cfg.eval.checkpoints.values_mut().for_each(resolve);
        Ok(cfg)
    }

    /// Training horizon: the train override, else the env horizon.
    pub fn horizon(&self) -> usize {
        self.train.horizon.unwrap_or(self.env.horizon)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.train.validate()?;
        self.env.match_config()?;
        self.env.reward_params()?;
        if self.horizon() == 0 {
            return Err(HarnessError::Config("horizon must be at least 1".into()));
        }
        if self.eval.seeds.is_empty() {
            return Err(HarnessError::Config("eval.seeds must not be empty".into()));
        }
        if self.eval.developers == 0 {
            return Err(HarnessError::Config("eval.developers must be at least 1".into()));
        }
        if self.pool_size == 0 {
            return Err(HarnessError::Config("pool_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything derived from the dataset that experiments share.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: ProjectDataset,
    pub weights: WeightVector,
    pub pool: ContributorPool,
    pub index: Arc<PoolIndex>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let dataset = match &cfg.dataset {
            DatasetSource::Path(p) => ProjectDataset::load(p)?,
            DatasetSource::Synthetic { synthetic, seed } => generate_synthetic(synthetic, *seed)?,
        };
        Self::from_dataset(dataset, cfg)
    }

    pub fn from_dataset(dataset: ProjectDataset, cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let weights = match &cfg.weights {
            Some(path) => {
                let file = WeightsFile::load(path)?;
                if file.schema != dataset.schema {
                    return Err(HarnessError::Config(format!(
                        "weights file {} was computed for a different schema",
                        path.display()
                    )));
                }
                file.weight_vector()?
            }
            None => {
                let parents = match &cfg.parents {
                    Some(p) => ParentMap::load(p, &dataset.schema)?,
                    None => ParentMap::default_for(&dataset.schema),
                };
                compute_weights(&dataset, &parents, cfg.bins)?.weights
            }
        };
        let pool = annotate_pool(&top_contributors(&dataset, cfg.pool_size, cfg.rank_key)?, &weights)?;
        let index = Arc::new(PoolIndex::new(&pool)?);
        Ok(Prepared {
            dataset,
            weights,
            pool,
            index,
        })
    }

    pub fn env(&self, cfg: &EnvConfig, horizon: usize) -> Result<MentorEnv, HarnessError> {
        Ok(MentorEnv::new(
            Arc::clone(&self.index),
            self.weights.clone(),
            cfg.match_config()?,
            cfg.reward_params()?,
            horizon,
        )?)
    }

    /// `n` distinct contributors with at least one recorded month, drawn with
    /// a generator seeded by `seed`.
    pub fn sample_developers(&self, n: usize, seed: u64) -> Vec<&MonthlyTrajectory> {
        let candidates: Vec<&MonthlyTrajectory> =
            self.dataset.trajectories.iter().filter(|t| !t.months.is_empty()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, candidates.len(), n.min(candidates.len()))
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"synthetic": {"contributors": 20}, "seed": 4}}"#).unwrap();
        assert_eq!(cfg.pool_size, 120);
        assert_eq!(cfg.bins, DEFAULT_BINS);
        assert_eq!(cfg.eval.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.train.lr_actor, 0.01);
        assert_eq!(cfg.horizon(), 18);
        match cfg.dataset {
            DatasetSource::Synthetic { synthetic, seed } => {
                assert_eq!(synthetic.contributors, 20);
                assert_eq!(seed, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"dataset": "data.json"}"#).unwrap();
        assert_eq!(cfg.dataset, DatasetSource::Path("data.json".into()));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"dataset": "d.json", "eval": {"checkpoints": {"mentor": "m.json"}}}"#).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.dataset, DatasetSource::Path(dir.path().join("d.json")));
        assert_eq!(cfg.eval.checkpoints["mentor"], dir.path().join("m.json"));
    }

    #[test]
    fn prepared_pool_is_annotated_and_capped() {
        let syn = SyntheticConfig {
            contributors: 30,
            ..Default::default()
        };
        let mut cfg = ExperimentConfig::synthetic(syn, 2);
        cfg.pool_size = 10;
        let p = Prepared::new(&cfg).unwrap();
        assert_eq!(p.pool.len(), 10);
        assert!(p.pool.trajectories.iter().all(|t| t.is_annotated()));
        let sum: f64 = p.weights.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn developer_sampling_is_seeded_and_distinct() {
        let syn = SyntheticConfig {
            contributors: 30,
            ..Default::default()
        };
        let p = Prepared::new(&ExperimentConfig::synthetic(syn, 2)).unwrap();
        let a: Vec<_> = p.sample_developers(10, 5).iter().map(|t| t.contributor_id.clone()).collect();
        let b: Vec<_> = p.sample_developers(10, 5).iter().map(|t| t.contributor_id.clone()).collect();
        assert_eq!(a, b);
        let mut uniq = a.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 10);
        assert_eq!(p.sample_developers(100, 5).len(), 30);
    }
}
