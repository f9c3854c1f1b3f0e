//! The contributor-pool environment.
//!
//! A developer (the agent) submits a monthly action vector. The environment
//! looks up what pool contributors did at the developer's cumulative
//! contribution level, widening a ±K window until something matches, and
//! rewards the developer by `(W · a_d) * exp(-λ ‖(â_d - â_e) ⊙ W‖²)`, where
//! hats denote per-dimension normalization to `[0, 1]` by the pool's maximum
//! monthly count.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ingest::{ActionVector, ContributorPool};
use crate::metric::{contribution, MetricError, WeightVector};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("contributor pool is empty")]
    EmptyPool,
    #[error("trajectory `{0}` has no cumulative contribution annotation")]
    NotAnnotated(String),
    #[error("no contributor actions to average")]
    EmptyMatch,
    #[error("episode is done; reset before stepping")]
    EpisodeDone,
    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// K-degree relaxation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Initial half-width as a fraction of the pool's contribution range.
    pub k0: f64,
    /// Window multiplier applied after each empty round.
    pub growth: f64,
    pub max_rounds: u32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            k0: 0.05,
            growth: 2.0,
            max_rounds: 16,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.k0 > 0.0 && self.k0 <= 1.0) {
            return Err(EnvError::InvalidConfig(format!("k0 must lie in (0, 1], got {}", self.k0)));
        }
        if !(self.growth > 1.0 && self.growth.is_finite()) {
            return Err(EnvError::InvalidConfig(format!("growth must exceed 1, got {}", self.growth)));
        }
        Ok(())
    }
}

/// Width of the Gaussian similarity kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRewardParams", into = "RawRewardParams")]
pub struct RewardParams {
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRewardParams {
    sigma: f64,
}

impl TryFrom<RawRewardParams> for RewardParams {
    type Error = EnvError;

    fn try_from(value: RawRewardParams) -> Result<Self, Self::Error> {
        RewardParams::new(value.sigma)
    }
}

impl From<RewardParams> for RawRewardParams {
    fn from(value: RewardParams) -> Self {
        RawRewardParams { sigma: value.sigma }
    }
}

impl RewardParams {
    pub fn new(sigma: f64) -> Result<Self, EnvError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(EnvError::InvalidConfig(format!("sigma must be positive, got {sigma}")));
        }
        Ok(RewardParams { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `1 / (2σ²)`
    pub fn lambda(&self) -> f64 {
        1.0 / (2.0 * self.sigma * self.sigma)
    }
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { sigma: 0.5 }
    }
}

/// The `env` block of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub sigma: f64,
    pub k0: f64,
    pub growth: f64,
    pub max_rounds: u32,
    pub horizon: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let m = MatchConfig::default();
        EnvConfig {
            sigma: RewardParams::default().sigma,
            k0: m.k0,
            growth: m.growth,
            max_rounds: m.max_rounds,
            horizon: 18,
        }
    }
}

impl EnvConfig {
    pub fn match_config(&self) -> Result<MatchConfig, EnvError> {
        let cfg = MatchConfig {
            k0: self.k0,
            growth: self.growth,
            max_rounds: self.max_rounds,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn reward_params(&self) -> Result<RewardParams, EnvError> {
        RewardParams::new(self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PoolEntry {
    /// Cumulative contribution before this month: the level at which the
    /// contributor took this action.
    level: f64,
    action: ActionVector,
}

/// Contributor-month actions indexed by contribution level, plus the
/// normalization constants derived from the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndex {
    entries: Vec<PoolEntry>,
    dims: usize,
    range: f64,
    caps: Vec<f64>,
    cumulative_scale: f64,
    first_month_mean: Vec<f64>,
}

impl PoolIndex {
    /// Requires every trajectory to carry a cumulative contribution annotation.
    pub fn new(pool: &ContributorPool) -> Result<Self, EnvError> {
        if pool.trajectories.iter().all(|t| t.months.is_empty()) {
            return Err(EnvError::EmptyPool);
        }
        let dims = pool.schema.len();
        let mut entries = Vec::new();
        let mut caps = vec![0.0f64; dims];
        let mut cumulative_scale = 0.0f64;
        let mut first_sum = vec![0.0; dims];
        let mut first_count = 0usize;
        for t in pool.trajectories.iter().filter(|t| !t.months.is_empty()) {
            if !t.is_annotated() {
                return Err(EnvError::NotAnnotated(t.contributor_id.clone()));
            }
            for (i, rec) in t.months.iter().enumerate() {
                if rec.counts.len() != dims {
                    return Err(EnvError::LengthMismatch {
                        expected: dims,
                        found: rec.counts.len(),
                    });
                }
                let level = if i == 0 { 0.0 } else { t.cumulative_contribution[i - 1] };
                for (cap, &c) in caps.iter_mut().zip(rec.counts.counts()) {
                    *cap = cap.max(f64::from(c));
                }
                entries.push(PoolEntry {
                    level,
                    action: rec.counts.clone(),
                });
            }
            cumulative_scale = cumulative_scale.max(*t.cumulative_contribution.last().expect("annotated"));
            for (s, &c) in first_sum.iter_mut().zip(t.months[0].counts.counts()) {
                *s += f64::from(c);
            }
            first_count += 1;
        }
        entries.sort_by(|a, b| a.level.total_cmp(&b.level));
        let lo = entries.first().expect("non-empty").level;
        let hi = entries.last().expect("non-empty").level;
        let range = if hi > lo { hi - lo } else { 1.0 };
        Ok(PoolIndex {
            entries,
            dims,
            range,
            caps,
            cumulative_scale: if cumulative_scale > 0.0 { cumulative_scale } else { 1.0 },
            first_month_mean: first_sum.iter().map(|s| s / first_count as f64).collect(),
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Spread of contribution levels in the pool (1 when all levels coincide).
    pub fn contribution_range(&self) -> f64 {
        self.range
    }

    /// Per-dimension maximum monthly count, used to normalize actions.
    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    /// Largest final cumulative contribution in the pool, used to normalize
    /// the long-term state feature.
    pub fn cumulative_scale(&self) -> f64 {
        self.cumulative_scale
    }

    pub fn first_month_mean(&self) -> &[f64] {
        &self.first_month_mean
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        normalize(values, &self.caps)
    }
}

/// Divides by caps and clamps to `[0, 1]`; zero caps map to 0.
pub fn normalize(values: &[f64], caps: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(caps)
        .map(|(&v, &cap)| if cap > 0.0 { (v / cap).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<'a> {
    pub actions: Vec<&'a ActionVector>,
    /// Number of times the window was widened.
    pub rounds: u32,
    /// Half-width of the window that produced the match.
    pub window: f64,
    /// True when no window matched and the whole pool was returned.
    pub fallback: bool,
}

/// Pool actions taken at contribution levels within `[cumulative - K, cumulative + K]`.
///
/// `K` starts at `k0 × contribution_range` and is multiplied by `growth`
/// after each empty round; after `max_rounds` widenings the whole pool is
/// returned.
pub fn match_contributor_actions<'a>(
    cumulative: f64,
    pool: &'a PoolIndex,
    cfg: &MatchConfig,
) -> MatchResult<'a> {
    let mut window = cfg.k0 * pool.range;
    for round in 0..=cfg.max_rounds {
        let lo = pool.entries.partition_point(|e| e.level < cumulative - window);
        let hi = pool.entries.partition_point(|e| e.level <= cumulative + window);
        if hi > lo {
            return MatchResult {
                actions: pool.entries[lo..hi].iter().map(|e| &e.action).collect(),
                rounds: round,
                window,
                fallback: false,
            };
        }
        if round < cfg.max_rounds {
            window *= cfg.growth;
        }
    }
    MatchResult {
        actions: pool.entries.iter().map(|e| &e.action).collect(),
        rounds: cfg.max_rounds,
        window,
        fallback: true,
    }
}

/// Element-wise mean.
pub fn expected_action(matches: &[&ActionVector]) -> Result<Vec<f64>, EnvError> {
    let first = matches.first().ok_or(EnvError::EmptyMatch)?;
    let mut sum = vec![0.0; first.len()];
    for a in matches {
        if a.len() != sum.len() {
            return Err(EnvError::LengthMismatch {
                expected: sum.len(),
                found: a.len(),
            });
        }
        for (s, &c) in sum.iter_mut().zip(a.counts()) {
            *s += f64::from(c);
        }
    }
    let n = matches.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

pub fn round_action(expected: &[f64]) -> ActionVector {
    ActionVector(expected.iter().map(|&v| v.max(0.0).round() as u32).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardOutcome {
    pub reward: f64,
    pub similarity: f64,
}

/// Gaussian-kernel similarity of already-normalized actions.
pub fn similarity(
    normalized_d: &[f64],
    normalized_e: &[f64],
    weights: &WeightVector,
    params: &RewardParams,
) -> Result<f64, EnvError> {
    let w = weights.as_slice();
    if normalized_d.len() != w.len() || normalized_e.len() != w.len() {
        return Err(EnvError::LengthMismatch {
            expected: w.len(),
            found: normalized_d.len().min(normalized_e.len()),
        });
    }
    let dist2: f64 = normalized_d
        .iter()
        .zip(normalized_e)
        .zip(w)
        .map(|((d, e), w)| ((d - e) * w).powi(2))
        .sum();
    Ok((-params.lambda() * dist2).exp())
}

/// `(W · a_d) * exp(-λ ‖(â_d - â_e) ⊙ W‖²)`: raw counts in the magnitude,
/// cap-normalized counts in the distance.
pub fn reward(
    a_d: &ActionVector,
    a_e: &ActionVector,
    weights: &WeightVector,
    params: &RewardParams,
    caps: &[f64],
) -> Result<RewardOutcome, EnvError> {
    let m = weights.len();
    for len in [a_d.len(), a_e.len(), caps.len()] {
        if len != m {
            return Err(EnvError::LengthMismatch { expected: m, found: len });
        }
    }
    let magnitude = contribution(weights, a_d)?;
    let sim = similarity(
        &normalize(&a_d.as_f64(), caps),
        &normalize(&a_e.as_f64(), caps),
        weights,
        params,
    )?;
    Ok(RewardOutcome {
        reward: magnitude * sim,
        similarity: sim,
    })
}

/// What the developer observes at the start of a month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Normalized expected contributor action at the developer's level.
    pub short_term: Vec<f64>,
    /// Normalized cumulative contribution.
    pub long_term: f64,
    pub month_index: usize,
}

impl EnvState {
    /// `[short_term..., long_term]`, the policy input.
    pub fn observation(&self) -> Vec<f64> {
        let mut v = self.short_term.clone();
        v.push(self.long_term);
        v
    }
}

/// Forces the observed features back to `initial`, keeping the month.
pub fn perturb_state(state: &EnvState, initial: &EnvState) -> EnvState {
    EnvState {
        short_term: initial.short_term.clone(),
        long_term: initial.long_term,
        month_index: state.month_index,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub similarity: f64,
    /// Rounded expected contributor action `a_e`.
    pub matched_action: ActionVector,
    /// `W · a_d` for this month.
    pub contribution: f64,
    pub match_rounds: u32,
    pub done: bool,
}

/// Where the short-term feature of the initial state comes from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StartState {
    /// Mean first-month action over the pool.
    #[default]
    PoolMean,
    /// A specific developer's first recorded month.
    Developer(ActionVector),
}

pub struct MentorEnv {
    pool: Arc<PoolIndex>,
    weights: WeightVector,
    match_cfg: MatchConfig,
    reward_params: RewardParams,
    horizon: usize,
    start: StartState,
    initial: EnvState,
    state: EnvState,
    /// Recorded cumulative contribution; never touched by perturbation.
    cumulative: f64,
    /// Expected contributor action at `cumulative`.
    expected: Option<Vec<f64>>,
}

impl MentorEnv {
    pub fn new(
        pool: Arc<PoolIndex>,
        weights: WeightVector,
        match_cfg: MatchConfig,
        reward_params: RewardParams,
        horizon: usize,
    ) -> Result<Self, EnvError> {
        if horizon == 0 {
            return Err(EnvError::InvalidConfig("horizon must be at least 1".into()));
        }
        if weights.len() != pool.dims() {
            return Err(EnvError::LengthMismatch {
                expected: pool.dims(),
                found: weights.len(),
            });
        }
        match_cfg.validate()?;
        let mut env = MentorEnv {
            pool,
            weights,
            match_cfg,
            reward_params,
            horizon,
            start: StartState::PoolMean,
            initial: EnvState {
                short_term: vec![],
                long_term: 0.0,
                month_index: 0,
            },
            state: EnvState {
                short_term: vec![],
                long_term: 0.0,
                month_index: 0,
            },
            cumulative: 0.0,
            expected: None,
        };
        env.reset();
        Ok(env)
    }

    /// Builds the index from an annotated pool.
    pub fn from_pool(
        pool: &ContributorPool,
        weights: WeightVector,
        config: &EnvConfig,
    ) -> Result<Self, EnvError> {
        MentorEnv::new(
            Arc::new(PoolIndex::new(pool)?),
            weights,
            config.match_config()?,
            config.reward_params()?,
            config.horizon,
        )
    }

    pub fn set_start(&mut self, start: StartState) {
        self.start = start;
    }

    pub fn reset(&mut self) -> EnvState {
        let start = match &self.start {
            StartState::PoolMean => self.pool.first_month_mean.clone(),
            StartState::Developer(a) => a.as_f64(),
        };
        self.cumulative = 0.0;
        self.expected = None;
        self.state = EnvState {
            short_term: self.pool.normalize(&start),
            long_term: 0.0,
            month_index: 0,
        };
        self.initial = self.state.clone();
        self.state.clone()
    }

    pub fn step(&mut self, a_d: &ActionVector) -> Result<StepOutcome, EnvError> {
        if self.state.month_index >= self.horizon {
            return Err(EnvError::EpisodeDone);
        }
        if a_d.len() != self.pool.dims() {
            return Err(EnvError::LengthMismatch {
                expected: self.pool.dims(),
                found: a_d.len(),
            });
        }
        let (expected, rounds) = match self.expected.take() {
            Some(e) => (e, 0),
            None => self.expectation_at(self.cumulative)?,
        };
        let a_e = round_action(&expected);
        let RewardOutcome { reward, similarity } =
            reward(a_d, &a_e, &self.weights, &self.reward_params, self.pool.caps())?;

        let step_contribution = contribution(&self.weights, a_d)?;
        self.cumulative += step_contribution;
        let (next_expected, _) = self.expectation_at(self.cumulative)?;

        self.state = EnvState {
            short_term: self.pool.normalize(&next_expected),
            long_term: self.cumulative / self.pool.cumulative_scale(),
            month_index: self.state.month_index + 1,
        };
        self.expected = Some(next_expected);
        Ok(StepOutcome {
            next_state: self.state.clone(),
            reward,
            similarity,
            matched_action: a_e,
            contribution: step_contribution,
            match_rounds: rounds,
            done: self.state.month_index == self.horizon,
        })
    }

    /// Replaces the observed state with the initial one; the recorded
    /// cumulative contribution that drives matching is kept.
    pub fn perturb(&mut self) -> EnvState {
        self.state = perturb_state(&self.state, &self.initial);
        self.state.clone()
    }

    fn expectation_at(&self, level: f64) -> Result<(Vec<f64>, u32), EnvError> {
        let matched = match_contributor_actions(level, &self.pool, &self.match_cfg);
        Ok((expected_action(&matched.actions)?, matched.rounds))
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn initial_state(&self) -> &EnvState {
        &self.initial
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn pool(&self) -> &Arc<PoolIndex> {
        &self.pool
    }

    pub fn is_done(&self) -> bool {
        self.state.month_index >= self.horizon
    }
}

/// One agent-facing transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub contribution: f64,
    pub done: bool,
}

/// Minimal episodic interface the trainer drives.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    /// Maximum count per action dimension.
    fn action_caps(&self) -> &[f64];
    /// Typical reward magnitude; the trainer divides rewards by it before
    /// fitting the critic.
    fn reward_scale(&self) -> f64 {
        1.0
    }
    fn begin_episode(&mut self) -> Vec<f64>;
    fn act(&mut self, action: &ActionVector) -> Result<Transition, EnvError>;
}

impl Environment for MentorEnv {
    fn observation_dim(&self) -> usize {
        self.pool.dims() + 1
    }

    fn action_caps(&self) -> &[f64] {
        self.pool.caps()
    }

    fn reward_scale(&self) -> f64 {
        let max = self.weights.dot(self.pool.caps()).unwrap_or(0.0);
        if max > 0.0 {
            max
        } else {
            1.0
        }
    }

    fn begin_episode(&mut self) -> Vec<f64> {
        self.reset().observation()
    }

    fn act(&mut self, action: &ActionVector) -> Result<Transition, EnvError> {
        let out = self.step(action)?;
        Ok(Transition {
            observation: out.next_state.observation(),
            reward: out.reward,
            contribution: out.contribution,
            done: out.done,
        })
    }
}
