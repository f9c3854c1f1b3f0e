//! Seeded synthetic contributor datasets.
//!
//! Generative model, for contributor `i`, month `t` (0-based) and dimension `d`:
//!
//! ```text
//! skill_i        ~ Uniform[1 - skill_spread, 1 + skill_spread]
//! idle_{i,t}     ~ Bernoulli(idle_probability)
//! count_{i,t,d}  = 0                                            if idle
//!                ~ Poisson(rate_d * skill_i * growth^t)          otherwise
//! ```
//!
//! so `E[count_{i,t,d}] = rate_d * growth^t * (1 - idle_probability)`.
//! Draw order is contributor-major, then month, then the idle flag, then
//! dimensions in schema order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{
    ActionKind, ActionVector, IngestError, MonthRecord, MonthlyTrajectory, ProjectDataset, Schema,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRate {
    pub kind: ActionKind,
    /// Poisson rate for an average contributor in month 0.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub project: String,
    pub contributors: usize,
    pub horizon: usize,
    pub dimensions: Vec<DimensionRate>,
    /// Per-month multiplicative growth of every rate.
    pub growth: f64,
    pub idle_probability: f64,
    pub skill_spread: f64,
    /// Absolute month index of month 0 (default January 2019).
    pub start_month: i32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let rates = [
            (ActionKind::OpenIssue, 2.0),
            (ActionKind::IssueComment, 6.0),
            (ActionKind::CloseIssue, 1.0),
            (ActionKind::OpenPr, 1.5),
            (ActionKind::PrComment, 4.0),
            (ActionKind::MergePr, 0.8),
        ];
        SyntheticConfig {
            project: "synthetic/project".into(),
            contributors: 100,
            horizon: 18,
            dimensions: rates
                .into_iter()
                .map(|(kind, rate)| DimensionRate { kind, rate })
                .collect(),
            growth: 1.05,
            idle_probability: 0.15,
            skill_spread: 0.25,
            start_month: 2019 * 12,
        }
    }
}

impl SyntheticConfig {
    pub fn schema(&self) -> Result<Schema, IngestError> {
        Schema::new(self.dimensions.iter().map(|d| d.kind).collect())
    }

    /// Analytic mean count of dimension `d` in month `t`.
    pub fn expected_count(&self, d: usize, t: usize) -> f64 {
        self.dimensions[d].rate * self.growth.powi(t as i32) * (1.0 - self.idle_probability)
    }

    fn validate(&self) -> Result<(), IngestError> {
        let bad = |msg: &str| Err(IngestError::InvalidSynthetic(msg.to_string()));
        if self.contributors == 0 {
            return bad("contributor count must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.dimensions.iter().any(|d| !(d.rate >= 0.0 && d.rate.is_finite())) {
            return bad("rates must be finite and non-negative");
        }
        if !(self.growth > 0.0 && self.growth.is_finite()) {
            return bad("growth must be positive");
        }
        if !(0.0..1.0).contains(&self.idle_probability) {
            return bad("idle_probability must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.skill_spread) {
            return bad("skill_spread must lie in [0, 1]");
        }
        Ok(())
    }
}

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<ProjectDataset, IngestError> {
    config.validate()?;
    let schema = config.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = config.contributors.to_string().len().max(3);

    let trajectories = (0..config.contributors)
        .map(|i| {
            let skill = if config.skill_spread > 0.0 {
                rng.random_range(1.0 - config.skill_spread..=1.0 + config.skill_spread)
            } else {
                1.0
            };
            let months = (0..config.horizon)
                .map(|t| {
                    let idle = rng.random_bool(config.idle_probability);
                    let scale = skill * config.growth.powi(t as i32);
                    let counts = config
                        .dimensions
                        .iter()
                        .map(|d| {
                            let lambda = d.rate * scale;
                            if idle || lambda <= 0.0 {
                                0
                            } else {
                                let poisson = Poisson::new(lambda).expect("positive finite rate");
                                poisson.sample(&mut rng) as u32
                            }
                        })
                        .collect();
                    MonthRecord {
                        index: config.start_month + t as i32,
                        counts: ActionVector(counts),
                    }
                })
                .collect();
            MonthlyTrajectory {
                contributor_id: format!("dev-{i:0width$}"),
                months,
                cumulative_contribution: Vec::new(),
            }
        })
        .collect();

    Ok(ProjectDataset {
        project: config.project.clone(),
        schema,
        trajectories,
    })
}
