use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::env::{MentorEnv, StartState};
use crate::ingest::{ActionVector, MonthRecord, MonthlyTrajectory};
use crate::metric::{annotate_trajectory, WeightVector};
use crate::policy::{actor_forward, sample_action, squash_action, Policy};

use super::HarnessError;

/// Maximum allowed gap between the environment's running cumulative
/// contribution and the metric's prefix sums over the same actions.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// Who picks the monthly action.
pub enum Controller<'a> {
    Policy { policy: &'a Policy, greedy: bool },
    /// Raw actions uniform in `[-1, 1]` through the same count map as the policy.
    Random,
}

impl Controller<'_> {
    fn act(&self, observation: &[f64], caps: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionVector, HarnessError> {
        match self {
            Controller::Policy { policy, greedy } => {
                let out = actor_forward(&policy.actor, observation)?;
                if *greedy {
                    Ok(squash_action(&out.mean, caps))
                } else {
                    Ok(sample_action(&out, rng, caps).action)
                }
            }
            Controller::Random => {
                let raw: Vec<f64> = caps.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
                Ok(squash_action(&raw, caps))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthLog {
    pub month: usize,
    /// Observation the controller acted on.
    pub observation: Vec<f64>,
    pub disturbed: bool,
    pub action: Vec<u32>,
    pub contribution: f64,
    pub cumulative: f64,
    pub reward: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutLog {
    pub months: Vec<MonthLog>,
    /// Largest gap between env cumulative and metric prefix sums.
    pub conservation_error: f64,
}

impl RolloutLog {
    pub fn contributions(&self) -> Vec<f64> {
        self.months.iter().map(|m| m.contribution).collect()
    }

    pub fn final_cumulative(&self) -> f64 {
        self.months.last().map_or(0.0, |m| m.cumulative)
    }

    pub fn mean_step_contribution(&self) -> f64 {
        if self.months.is_empty() {
            0.0
        } else {
            self.final_cumulative() / self.months.len() as f64
        }
    }
}

/// Runs one full episode. Before acting in a month listed in `disturb`, the
/// observed state is forced back to the initial state.
pub fn rollout(
    env: &mut MentorEnv,
    controller: &Controller<'_>,
    start: StartState,
    disturb: &BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutLog, HarnessError> {
    let horizon = env.horizon();
    if let Some(&month) = disturb.iter().find(|&&d| d >= horizon) {
        return Err(HarnessError::DisturbOutOfRange { month, horizon });
    }
    let caps = env.pool().caps().to_vec();
    env.set_start(start);
    let mut state = env.reset();
    let mut months = Vec::with_capacity(horizon);
    loop {
        let month = state.month_index;
        let disturbed = disturb.contains(&month);
        if disturbed {
            state = env.perturb();
        }
        let observation = state.observation();
        let action = controller.act(&observation, &caps, rng)?;
        let out = env.step(&action)?;
        months.push(MonthLog {
            month,
            observation,
            disturbed,
            action: action.0,
            contribution: out.contribution,
            cumulative: env.cumulative(),
            reward: out.reward,
            similarity: out.similarity,
        });
        state = out.next_state;
        if out.done {
            break;
        }
    }
    let conservation_error = check_conservation(&months, env.weights())?;
    Ok(RolloutLog {
        months,
        conservation_error,
    })
}

fn check_conservation(months: &[MonthLog], weights: &WeightVector) -> Result<f64, HarnessError> {
    let trajectory = MonthlyTrajectory {
        contributor_id: String::new(),
        months: months
            .iter()
            .map(|m| MonthRecord {
                index: m.month as i32,
                counts: ActionVector(m.action.clone()),
            })
            .collect(),
        cumulative_contribution: Vec::new(),
    };
    let annotated = annotate_trajectory(&trajectory, weights)?;
    let mut worst = 0.0f64;
    for (m, &expected) in months.iter().zip(&annotated.cumulative_contribution) {
        let deviation = (m.cumulative - expected).abs();
        if deviation > CONSERVATION_TOLERANCE {
            return Err(HarnessError::Conservation {
                month: m.month,
                deviation,
            });
        }
        worst = worst.max(deviation);
    }
    Ok(worst)
}

/// Per-month contributions of a recorded trajectory over `horizon` months;
/// months past the record contribute 0.
pub fn replay_real(trajectory: &MonthlyTrajectory, weights: &WeightVector, horizon: usize) -> Result<Vec<f64>, HarnessError> {
    let annotated = annotate_trajectory(trajectory, weights)?;
    let mut steps = annotated.per_step_contributions();
    steps.resize(horizon, 0.0);
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    use super::*;
    use crate::harness::{ExperimentConfig, Prepared};
    use crate::ingest::SyntheticConfig;

    fn prepared() -> (Prepared, ExperimentConfig) {
        let syn = SyntheticConfig {
            contributors: 25,
            ..Default::default()
        };
        let cfg = ExperimentConfig::synthetic(syn, 3);
        (Prepared::new(&cfg).unwrap(), cfg)
    }

    #[test]
    fn real_replay_arithmetic() {
        let w = WeightVector::new(vec![1.0]).unwrap();
        let t = MonthlyTrajectory {
            contributor_id: "x".into(),
            months: (0..18)
                .map(|i| MonthRecord {
                    index: i,
                    counts: ActionVector(vec![10]),
                })
                .collect(),
            cumulative_contribution: Vec::new(),
        };
        let steps = replay_real(&t, &w, 18).unwrap();
        assert_eq!(steps.iter().sum::<f64>(), 180.0);
        assert_eq!(steps.iter().sum::<f64>() / 18.0, 10.0);
        let padded = replay_real(&t, &w, 20).unwrap();
        assert_eq!(&padded[18..], &[0.0, 0.0]);
    }

    #[test]
    fn random_rollout_logs_every_month_and_conserves() {
        let (p, cfg) = prepared();
        let mut env = p.env(&cfg.env, 18).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let log = rollout(&mut env, &Controller::Random, StartState::PoolMean, &BTreeSet::new(), &mut rng).unwrap();
        assert_eq!(log.months.len(), 18);
        assert!(log.conservation_error <= CONSERVATION_TOLERANCE);
        let total: f64 = log.contributions().iter().sum();
        assert_abs_diff_eq!(total, log.final_cumulative(), epsilon = 1e-9);
    }

    #[test]
    fn disturbed_months_reset_the_observation() {
        let (p, cfg) = prepared();
        let mut env = p.env(&cfg.env, 12).unwrap();
        let disturb: BTreeSet<usize> = [7, 8, 9].into();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let log = rollout(&mut env, &Controller::Random, StartState::PoolMean, &disturb, &mut rng).unwrap();
        let initial = log.months[0].observation.clone();
        for m in &log.months {
            assert_eq!(m.disturbed, disturb.contains(&m.month));
            if m.disturbed {
                assert_eq!(m.observation, initial);
            }
        }
        assert!(log.months[9].cumulative > 0.0);
    }

    #[test]
    fn disturb_month_beyond_horizon_is_an_error() {
        let (p, cfg) = prepared();
        let mut env = p.env(&cfg.env, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = rollout(&mut env, &Controller::Random, StartState::PoolMean, &[5].into(), &mut rng);
        assert!(matches!(err, Err(HarnessError::DisturbOutOfRange { month: 5, horizon: 5 })));
    }
}
