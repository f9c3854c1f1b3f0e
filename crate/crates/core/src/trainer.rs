//! Clipped-surrogate actor-critic training with batch updates inside an
//! episode, plus the once-per-episode variant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvError, Environment};
use crate::ingest::ActionVector;
use crate::policy::{
    accumulate_actor_grad, accumulate_critic_grad, actor_forward, critic_forward, log_prob,
    sample_action, ParamTensors, Policy, PolicyError, DEFAULT_HIDDEN,
};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("non-finite probability ratio (new log prob {new_log_prob}, old {old_log_prob})")]
    NonFiniteRatio { new_log_prob: f64, old_log_prob: f64 },
    #[error("parameters diverged in episode {episode} after update {update}")]
    Diverged { episode: usize, update: usize },
    #[error("empty transition buffer")]
    EmptyBuffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateSchedule {
    /// Update every `batch_size` steps; a remainder segment is updated at episode end.
    #[default]
    EveryBatch,
    /// A single update over the whole episode.
    EndOfEpisode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch_size: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub min_old_prob: f64,
    pub episodes: usize,
    /// Overrides the environment horizon when set.
    pub horizon: Option<usize>,
    pub hidden: usize,
    pub seed: u64,
    pub schedule: UpdateSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_actor: 0.01,
            lr_critic: 0.01,
            batch_size: 10,
            epsilon: 0.3,
            gamma: 0.99,
            epochs: 4,
            min_old_prob: 1e-5,
            episodes: 500,
            horizon: None,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
            schedule: UpdateSchedule::EveryBatch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.min_old_prob > 0.0) {
            return bad("min_old_prob must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr_actor >= 0.0 && self.lr_critic >= 0.0 && self.lr_actor.is_finite() && self.lr_critic.is_finite()) {
            return bad("learning rates must be finite and non-negative");
        }
        if self.hidden == 0 {
            return bad("hidden must be at least 1");
        }
        if self.horizon == Some(0) {
            return bad("horizon must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferedTransition {
    pub state: Vec<f64>,
    pub raw: Vec<f64>,
    pub action: ActionVector,
    /// Log-density under the policy that collected the sample.
    pub old_log_prob: f64,
    /// Reward as fed to the learner (divided by the environment's reward scale).
    pub reward: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionBuffer {
    transitions: Vec<BufferedTransition>,
}

impl TransitionBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: BufferedTransition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[BufferedTransition] {
        &self.transitions
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
    }
}

/// `G_t = Σ_{u≥t} γ^{u−t} r_u` within the segment.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Subtracts the mean and divides by the population standard deviation.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.len() < 2 {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

/// Returns `(normalized advantages, returns)`.
pub fn compute_advantages(buffer: &TransitionBuffer, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let (advantages, returns) = raw_advantages(buffer, gamma);
    let mut advantages = advantages;
    normalize_advantages(&mut advantages);
    (advantages, returns)
}

/// Advantages before normalization, and returns.
pub fn raw_advantages(buffer: &TransitionBuffer, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let rewards: Vec<f64> = buffer.transitions.iter().map(|t| t.reward).collect();
    let returns = discounted_returns(&rewards, gamma);
    let advantages = returns
        .iter()
        .zip(&buffer.transitions)
        .map(|(g, t)| g - t.value)
        .collect();
    (advantages, returns)
}

fn ratio(new_log_prob: f64, old_log_prob: f64) -> Result<f64, TrainError> {
    let r = (new_log_prob - old_log_prob).exp();
    if r.is_finite() {
        Ok(r)
    } else {
        Err(TrainError::NonFiniteRatio {
            new_log_prob,
            old_log_prob,
        })
    }
}

/// `min(π Â, clip(π, 1−ε, 1+ε) Â)` with `π = exp(new − old)`.
pub fn clipped_surrogate(new_log_prob: f64, old_log_prob: f64, advantage: f64, epsilon: f64) -> Result<f64, TrainError> {
    let pi = ratio(new_log_prob, old_log_prob)?;
    Ok(surrogate_from_ratio(pi, advantage, epsilon))
}

pub fn surrogate_from_ratio(pi: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = pi.clamp(1.0 - epsilon, 1.0 + epsilon);
    (pi * advantage).min(clipped * advantage)
}

/// Derivative of the surrogate with respect to `new_log_prob`.
pub fn clipped_surrogate_grad(new_log_prob: f64, old_log_prob: f64, advantage: f64, epsilon: f64) -> Result<f64, TrainError> {
    let pi = ratio(new_log_prob, old_log_prob)?;
    let clipped = pi.clamp(1.0 - epsilon, 1.0 + epsilon);
    Ok(if pi * advantage <= clipped * advantage {
        pi * advantage
    } else {
        0.0
    })
}

/// One update: `epochs` full-batch ascent steps on the surrogate for the
/// actor and descent steps on the mean squared return error for the critic.
pub fn update(policy: &mut Policy, buffer: &TransitionBuffer, config: &TrainConfig) -> Result<(), TrainError> {
    if buffer.is_empty() {
        return Err(TrainError::EmptyBuffer);
    }
    let (advantages, returns) = compute_advantages(buffer, config.gamma);
    let floor = config.min_old_prob.ln();
    let n = buffer.len() as f64;
    for _ in 0..config.epochs {
        let mut actor_grad = policy.actor.zeros_like();
        let mut critic_grad = policy.critic.zeros_like();
        for ((t, &adv), &ret) in buffer.transitions.iter().zip(&advantages).zip(&returns) {
            let new_lp = log_prob(&actor_forward(&policy.actor, &t.state)?, &t.raw);
            let g = clipped_surrogate_grad(new_lp, t.old_log_prob.max(floor), adv, config.epsilon)?;
            accumulate_actor_grad(&policy.actor, &t.state, &t.raw, g / n, &mut actor_grad)?;
            let v = critic_forward(&policy.critic, &t.state)?;
            accumulate_critic_grad(&policy.critic, &t.state, 2.0 * (v - ret) / n, &mut critic_grad)?;
        }
        policy.actor.add_scaled(&actor_grad, config.lr_actor);
        policy.critic.add_scaled(&critic_grad, -config.lr_critic);
    }
    Ok(())
}

/// Per-step log of one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: Vec<f64>,
    pub raw: Vec<f64>,
    pub action: ActionVector,
    pub log_prob: f64,
    /// Environment reward, unscaled.
    pub reward: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub steps: Vec<StepRecord>,
    pub updates: usize,
    pub cumulative_contribution: f64,
}

impl EpisodeReport {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn mean_step_contribution(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.cumulative_contribution / self.steps.len() as f64
        }
    }

    pub fn mean_reward(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.steps.iter().map(|s| s.reward).sum::<f64>() / self.steps.len() as f64
        }
    }
}

fn check_finite(policy: &Policy, episode: usize, update: usize) -> Result<(), TrainError> {
    if policy.is_finite() {
        Ok(())
    } else {
        Err(TrainError::Diverged { episode, update })
    }
}

/// Rolls one episode, updating according to `config.schedule`.
pub fn train_episode<E: Environment + ?Sized>(
    env: &mut E,
    policy: &mut Policy,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    episode: usize,
) -> Result<EpisodeReport, TrainError> {
    let caps = env.action_caps().to_vec();
    let scale = env.reward_scale();
    let mut state = env.begin_episode();
    let mut buffer = TransitionBuffer::new();
    let mut steps = Vec::new();
    let mut updates = 0;
    let mut cumulative = 0.0;
    loop {
        let out = actor_forward(&policy.actor, &state)?;
        let sample = sample_action(&out, rng, &caps);
        let value = critic_forward(&policy.critic, &state)?;
        let tr = env.act(&sample.action)?;
        cumulative += tr.contribution;
        buffer.push(BufferedTransition {
            state: state.clone(),
            raw: sample.raw.clone(),
            action: sample.action.clone(),
            old_log_prob: sample.log_prob,
            reward: tr.reward / scale,
            value,
        });
        steps.push(StepRecord {
            state,
            raw: sample.raw,
            action: sample.action,
            log_prob: sample.log_prob,
            reward: tr.reward,
            contribution: tr.contribution,
        });
        let full = config.schedule == UpdateSchedule::EveryBatch && buffer.len() == config.batch_size;
        if full || (tr.done && !buffer.is_empty()) {
            update(policy, &buffer, config)?;
            updates += 1;
            check_finite(policy, episode, updates)?;
            buffer.clear();
        }
        state = tr.observation;
        if tr.done {
            break;
        }
    }
    Ok(EpisodeReport {
        steps,
        updates,
        cumulative_contribution: cumulative,
    })
}

/// The ablation baseline: one update after the whole episode.
pub fn train_episode_ppo_variant<E: Environment + ?Sized>(
    env: &mut E,
    policy: &mut Policy,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    episode: usize,
) -> Result<EpisodeReport, TrainError> {
    let cfg = TrainConfig {
        schedule: UpdateSchedule::EndOfEpisode,
        ..config.clone()
    };
    train_episode(env, policy, &cfg, rng, episode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_step_contribution: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub curve: Vec<CurvePoint>,
    pub updates: usize,
}

/// Seeds the policy initialization and all action sampling from `config.seed`.
pub fn init_policy<E: Environment + ?Sized>(env: &E, config: &TrainConfig) -> (Policy, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let policy = Policy::init(env.observation_dim(), env.action_caps().len(), config.hidden, &mut rng);
    (policy, rng)
}

/// Runs `config.episodes` episodes from a freshly initialized policy.
pub fn train<E: Environment + ?Sized>(env: &mut E, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let (policy, mut rng) = init_policy(env, config);
    train_from(env, policy, config, &mut rng)
}

pub fn train_from<E: Environment + ?Sized>(
    env: &mut E,
    mut policy: Policy,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let mut curve = Vec::with_capacity(config.episodes);
    let mut updates = 0;
    for episode in 0..config.episodes {
        let report = train_episode(env, &mut policy, config, rng, episode)?;
        updates += report.updates;
        curve.push(CurvePoint {
            episode,
            mean_step_contribution: report.mean_step_contribution(),
            mean_reward: report.mean_reward(),
        });
        log::debug!(
            "episode {episode}: mean contribution {:.4}, mean reward {:.4}",
            report.mean_step_contribution(),
            report.mean_reward()
        );
    }
    Ok(TrainOutcome {
        policy,
        curve,
        updates,
    })
}
