//! Gaussian actor and state-value critic, one hidden ReLU layer each, with
//! hand-written backpropagation.
//!
//! Actor: `h = ReLU(W1 s + b1)`, `mean = tanh(W2 h + b2)`,
//! `variance = softplus(W3 h + b3)`. Critic: `V(s) = w · ReLU(U s + c) + d`.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ingest::ActionVector;

pub const DEFAULT_HIDDEN: usize = 64;
pub const CHECKPOINT_FORMAT: &str = "oss-mentor-checkpoint/v1";

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn check_len(expected: usize, found: usize) -> Result<(), PolicyError> {
    if expected == found {
        Ok(())
    } else {
        Err(PolicyError::Shape { expected, found })
    }
}

/// Fully connected layer, weights row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut sample = || rng.random_range(-bound..=bound);
        let weight = (0..in_dim * out_dim).map(|_| sample()).collect();
        let bias = (0..out_dim).map(|_| sample()).collect();
        Dense {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates `dW += δ ⊗ x`, `db += δ` and returns `Wᵀ δ`.
    fn backward(&self, x: &[f64], delta: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.bias[o] += d;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
        dx
    }

    fn tensors(&self) -> [&Vec<f64>; 2] {
        [&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// Element-wise operations shared by the parameter sets.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<&Vec<f64>>;
    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flatten().copied().collect()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *it.next().expect("flat vector long enough");
            }
        }
    }

    /// `self += scale * other`
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorParams {
    pub hidden: Dense,
    pub mean: Dense,
    pub variance: Dense,
}

impl ActorParams {
    pub fn zeros(state_dim: usize, hidden: usize, action_dim: usize) -> Self {
        ActorParams {
            hidden: Dense::zeros(state_dim, hidden),
            mean: Dense::zeros(hidden, action_dim),
            variance: Dense::zeros(hidden, action_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(state_dim: usize, hidden: usize, action_dim: usize, rng: &mut R) -> Self {
        ActorParams {
            hidden: Dense::init(state_dim, hidden, rng),
            mean: Dense::init(hidden, action_dim, rng),
            variance: Dense::init(hidden, action_dim, rng),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn action_dim(&self) -> usize {
        self.mean.out_dim
    }

    /// Same shapes, all zeros: a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ActorParams::zeros(self.state_dim(), self.hidden.out_dim, self.action_dim())
    }
}

impl ParamTensors for ActorParams {
    fn tensors(&self) -> Vec<&Vec<f64>> {
        [self.hidden.tensors(), self.mean.tensors(), self.variance.tensors()]
            .into_iter()
            .flatten()
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let ActorParams {
            hidden,
            mean,
            variance,
        } = self;
        [hidden.tensors_mut(), mean.tensors_mut(), variance.tensors_mut()]
            .into_iter()
            .flatten()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams {
    pub hidden: Dense,
    pub value: Dense,
}

impl CriticParams {
    pub fn zeros(state_dim: usize, hidden: usize) -> Self {
        CriticParams {
            hidden: Dense::zeros(state_dim, hidden),
            value: Dense::zeros(hidden, 1),
        }
    }

    pub fn init<R: Rng + ?Sized>(state_dim: usize, hidden: usize, rng: &mut R) -> Self {
        CriticParams {
            hidden: Dense::init(state_dim, hidden, rng),
            value: Dense::init(hidden, 1, rng),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn zeros_like(&self) -> Self {
        CriticParams::zeros(self.state_dim(), self.hidden.out_dim)
    }
}

impl ParamTensors for CriticParams {
    fn tensors(&self) -> Vec<&Vec<f64>> {
        [self.hidden.tensors(), self.value.tensors()]
            .into_iter()
            .flatten()
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let CriticParams { hidden, value } = self;
        [hidden.tensors_mut(), value.tensors_mut()]
            .into_iter()
            .flatten()
            .collect()
    }
}

/// Diagonal Gaussian over raw (pre-squash) actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Forward-pass intermediates needed by `actor_backward`.
struct ActorTrace {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    variance_pre: Vec<f64>,
    output: PolicyOutput,
}

fn actor_trace(params: &ActorParams, state: &[f64]) -> Result<ActorTrace, PolicyError> {
    check_len(params.state_dim(), state.len())?;
    let hidden_pre = params.hidden.forward(state);
    let hidden = relu(&hidden_pre);
    let mean = params.mean.forward(&hidden).into_iter().map(f64::tanh).collect();
    let variance_pre = params.variance.forward(&hidden);
    let variance = variance_pre.iter().map(|&z| softplus(z)).collect();
    Ok(ActorTrace {
        hidden_pre,
        hidden,
        variance_pre,
        output: PolicyOutput { mean, variance },
    })
}

pub fn actor_forward(params: &ActorParams, state: &[f64]) -> Result<PolicyOutput, PolicyError> {
    Ok(actor_trace(params, state)?.output)
}

/// `log N(x; mean, diag(variance))`.
pub fn log_prob(output: &PolicyOutput, raw: &[f64]) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    output
        .mean
        .iter()
        .zip(&output.variance)
        .zip(raw)
        .map(|((&mu, &var), &x)| -0.5 * (two_pi * var).ln() - (x - mu).powi(2) / (2.0 * var))
        .sum()
}

/// Maps a raw Gaussian sample to non-negative counts:
/// `round(clip((x + 1) / 2, 0, 1) * cap)`.
pub fn squash_action(raw: &[f64], caps: &[f64]) -> ActionVector {
    ActionVector(
        raw.iter()
            .zip(caps)
            .map(|(&x, &cap)| (((x + 1.0) / 2.0).clamp(0.0, 1.0) * cap).round() as u32)
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub raw: Vec<f64>,
    pub action: ActionVector,
    /// Log-density of `raw` under the policy.
    pub log_prob: f64,
}

/// Draws one standard normal per dimension, in dimension order.
pub fn sample_action<R: Rng + ?Sized>(output: &PolicyOutput, rng: &mut R, caps: &[f64]) -> SampledAction {
    let raw: Vec<f64> = output
        .mean
        .iter()
        .zip(&output.variance)
        .map(|(&mu, &var)| {
            let z: f64 = rng.sample(StandardNormal);
            mu + var.sqrt() * z
        })
        .collect();
    SampledAction {
        action: squash_action(&raw, caps),
        log_prob: log_prob(output, &raw),
        raw,
    }
}

/// Gradient of `upstream * log_prob(raw | state)` with respect to every actor parameter.
pub fn actor_backward(
    params: &ActorParams,
    state: &[f64],
    raw: &[f64],
    upstream: f64,
) -> Result<ActorParams, PolicyError> {
    let mut grads = params.zeros_like();
    accumulate_actor_grad(params, state, raw, upstream, &mut grads)?;
    Ok(grads)
}

/// Adds the gradient of `upstream * log_prob` into `grads`.
pub fn accumulate_actor_grad(
    params: &ActorParams,
    state: &[f64],
    raw: &[f64],
    upstream: f64,
    grads: &mut ActorParams,
) -> Result<(), PolicyError> {
    check_len(params.action_dim(), raw.len())?;
    if upstream == 0.0 {
        check_len(params.state_dim(), state.len())?;
        return Ok(());
    }
    let trace = actor_trace(params, state)?;
    let PolicyOutput { mean, variance } = &trace.output;

    let mut d_mean_pre = Vec::with_capacity(mean.len());
    let mut d_var_pre = Vec::with_capacity(mean.len());
    for j in 0..mean.len() {
        let diff = raw[j] - mean[j];
        let var = variance[j];
        let d_mu = diff / var;
        let d_var = -0.5 / var + diff * diff / (2.0 * var * var);
        d_mean_pre.push(upstream * d_mu * (1.0 - mean[j] * mean[j]));
        d_var_pre.push(upstream * d_var * sigmoid(trace.variance_pre[j]));
    }

    let dh_mean = params.mean.backward(&trace.hidden, &d_mean_pre, &mut grads.mean);
    let dh_var = params.variance.backward(&trace.hidden, &d_var_pre, &mut grads.variance);
    let d_hidden_pre: Vec<f64> = dh_mean
        .iter()
        .zip(&dh_var)
        .zip(&trace.hidden_pre)
        .map(|((a, b), &pre)| if pre > 0.0 { a + b } else { 0.0 })
        .collect();
    params.hidden.backward(state, &d_hidden_pre, &mut grads.hidden);
    Ok(())
}

pub fn critic_forward(params: &CriticParams, state: &[f64]) -> Result<f64, PolicyError> {
    check_len(params.state_dim(), state.len())?;
    let hidden = relu(&params.hidden.forward(state));
    Ok(params.value.forward(&hidden)[0])
}

/// Gradient of `upstream * V(state)` with respect to every critic parameter.
pub fn critic_backward(params: &CriticParams, state: &[f64], upstream: f64) -> Result<CriticParams, PolicyError> {
    let mut grads = params.zeros_like();
    accumulate_critic_grad(params, state, upstream, &mut grads)?;
    Ok(grads)
}

pub fn accumulate_critic_grad(
    params: &CriticParams,
    state: &[f64],
    upstream: f64,
    grads: &mut CriticParams,
) -> Result<(), PolicyError> {
    check_len(params.state_dim(), state.len())?;
    if upstream == 0.0 {
        return Ok(());
    }
    let hidden_pre = params.hidden.forward(state);
    let hidden = relu(&hidden_pre);
    let dh = params.value.backward(&hidden, &[upstream], &mut grads.value);
    let d_pre: Vec<f64> = dh
        .iter()
        .zip(&hidden_pre)
        .map(|(&d, &pre)| if pre > 0.0 { d } else { 0.0 })
        .collect();
    params.hidden.backward(state, &d_pre, &mut grads.hidden);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: ActorParams,
    pub critic: CriticParams,
}

impl Policy {
    pub fn init<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Policy {
            actor: ActorParams::init(state_dim, hidden, action_dim, rng),
            critic: CriticParams::init(state_dim, hidden, rng),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let t = |name: &str, shape: Vec<usize>, data: &[f64]| NamedTensor {
            name: name.to_string(),
            shape,
            data: data.to_vec(),
        };
        let dense = |prefix: &str, d: &Dense| {
            [
                t(&format!("{prefix}.weight"), vec![d.out_dim, d.in_dim], &d.weight),
                t(&format!("{prefix}.bias"), vec![d.out_dim], &d.bias),
            ]
        };
        let tensors = [
            dense("actor.hidden", &self.actor.hidden),
            dense("actor.mean", &self.actor.mean),
            dense("actor.variance", &self.actor.variance),
            dense("critic.hidden", &self.critic.hidden),
            dense("critic.value", &self.critic.value),
        ]
        .into_iter()
        .flatten()
        .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            state_dim: self.actor.state_dim(),
            action_dim: self.actor.action_dim(),
            hidden: self.actor.hidden.out_dim,
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, PolicyError> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(PolicyError::Checkpoint(format!("unknown format `{}`", ckpt.format)));
        }
        let mut policy = Policy {
            actor: ActorParams::zeros(ckpt.state_dim, ckpt.hidden, ckpt.action_dim),
            critic: CriticParams::zeros(ckpt.state_dim, ckpt.hidden),
        };
        let expected = policy.to_checkpoint();
        if expected.tensors.len() != ckpt.tensors.len() {
            return Err(PolicyError::Checkpoint("wrong tensor count".into()));
        }
        for (want, got) in expected.tensors.iter().zip(&ckpt.tensors) {
            if want.name != got.name || want.shape != got.shape || want.data.len() != got.data.len() {
                return Err(PolicyError::Checkpoint(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        let flat: Vec<f64> = ckpt.tensors.iter().flat_map(|t| t.data.iter().copied()).collect();
        let actor_len = policy.actor.num_params();
        policy.actor.set_flat(&flat[..actor_len]);
        policy.critic.set_flat(&flat[actor_len..]);
        Ok(policy)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Policy::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

/// Portable checkpoint: named row-major tensors in a fixed order
/// (`actor.hidden`, `actor.mean`, `actor.variance`, `critic.hidden`,
/// `critic.value`; `.weight` of shape `[out, in]` then `.bias` of shape `[out]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
