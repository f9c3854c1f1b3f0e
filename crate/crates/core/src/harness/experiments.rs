use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::StartState;
use crate::ingest::MonthlyTrajectory;
use crate::policy::Policy;
use crate::trainer::{train, CurvePoint, TrainConfig, UpdateSchedule};

use super::report::{mean_std, CaseRow, ExperimentReport, MethodRow};
use super::rollout::{replay_real, rollout, Controller, RolloutLog};
use super::{ExperimentConfig, HarnessError, Prepared};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mentor,
    PpoVariant,
    Random,
    Real,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mentor, Method::PpoVariant, Method::Random, Method::Real];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mentor => "mentor",
            Method::PpoVariant => "ppo_variant",
            Method::Random => "random",
            Method::Real => "real",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown method `{s}`")))
    }
}

fn rollout_seed(seed: u64, developer: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(developer as u64)
}

fn start_of(dev: &MonthlyTrajectory) -> StartState {
    StartState::Developer(dev.months[0].counts.clone())
}

/// Loads the method's checkpoint if one is configured, otherwise trains.
fn obtain_policy(
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    method: Method,
    seed: u64,
    epsilon: Option<f64>,
) -> Result<(Policy, Vec<CurvePoint>), HarnessError> {
    if let Some(path) = cfg.eval.checkpoints.get(method.name()) {
        if !path.exists() {
            return Err(HarnessError::Config(format!("missing checkpoint {}", path.display())));
        }
        return Ok((Policy::load(path)?, Vec::new()));
    }
    let schedule = match method {
        Method::PpoVariant => UpdateSchedule::EndOfEpisode,
        _ => UpdateSchedule::EveryBatch,
    };
    let train_cfg = TrainConfig {
        seed,
        schedule,
        epsilon: epsilon.unwrap_or(cfg.train.epsilon),
        ..cfg.train.clone()
    };
    let mut env = prepared.env(&cfg.env, cfg.horizon())?;
    let out = train(&mut env, &train_cfg)?;
    log::info!("trained {method} seed {seed}: {} updates", out.updates);
    Ok((out.policy, out.curve))
}

/// Per-developer rollouts; returns their logs.
fn evaluate_controller(
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    controller: &Controller<'_>,
    developers: &[&MonthlyTrajectory],
    seed: u64,
    horizon: usize,
    disturb: &BTreeSet<usize>,
) -> Result<Vec<RolloutLog>, HarnessError> {
    let mut env = prepared.env(&cfg.env, horizon)?;
    developers
        .iter()
        .enumerate()
        .map(|(i, dev)| {
            let mut rng = ChaCha8Rng::seed_from_u64(rollout_seed(seed, i));
            rollout(&mut env, controller, start_of(dev), disturb, &mut rng)
        })
        .collect()
}

/// Per-seed mean step contribution, per-month mean series and the largest
/// conservation error.
struct MethodResult {
    per_seed: Vec<f64>,
    monthly: Vec<f64>,
    conservation: f64,
}

fn accumulate_monthly(monthly: &mut [f64], series: &[f64], weight: f64) {
    for (m, v) in monthly.iter_mut().zip(series) {
        *m += v * weight;
    }
}

fn run_method(prepared: &Prepared, cfg: &ExperimentConfig, method: Method) -> Result<MethodResult, HarnessError> {
    let horizon = cfg.horizon();
    let seeds = &cfg.eval.seeds;
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut monthly = vec![0.0; horizon];
    let mut conservation = 0.0f64;
    for &seed in seeds {
        let developers = prepared.sample_developers(cfg.eval.developers, seed);
        let weight = 1.0 / (developers.len() * seeds.len()) as f64;
        let series: Vec<Vec<f64>> = match method {
            Method::Real => developers
                .iter()
                .map(|d| replay_real(d, &prepared.weights, horizon))
                .collect::<Result<_, _>>()?,
            Method::Random => {
                evaluate_controller(prepared, cfg, &Controller::Random, &developers, seed, horizon, &BTreeSet::new())?
                    .into_iter()
                    .map(|log| {
                        conservation = conservation.max(log.conservation_error);
                        log.contributions()
                    })
                    .collect()
            }
            Method::Mentor | Method::PpoVariant => {
                let (policy, _) = obtain_policy(prepared, cfg, method, seed, None)?;
                let controller = Controller::Policy {
                    policy: &policy,
                    greedy: cfg.eval.greedy,
                };
                evaluate_controller(prepared, cfg, &controller, &developers, seed, horizon, &BTreeSet::new())?
                    .into_iter()
                    .map(|log| {
                        conservation = conservation.max(log.conservation_error);
                        log.contributions()
                    })
                    .collect()
            }
        };
        let means: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / horizon as f64).collect();
        per_seed.push(means.iter().sum::<f64>() / means.len() as f64);
        for s in &series {
            accumulate_monthly(&mut monthly, s, weight);
        }
    }
    Ok(MethodResult {
        per_seed,
        monthly,
        conservation,
    })
}

fn empty_report(prepared: &Prepared, cfg: &ExperimentConfig, experiment: &str, horizon: usize, index: &str) -> ExperimentReport {
    ExperimentReport {
        experiment: experiment.into(),
        project: prepared.dataset.project.clone(),
        seeds: cfg.eval.seeds.clone(),
        horizon,
        episodes: cfg.train.episodes,
        rows: Vec::new(),
        series_index: index.into(),
        series: BTreeMap::new(),
        max_conservation_error: 0.0,
    }
}

/// Average single-step contribution per method over the seed set, with
/// `developers` sampled start states per seed. A method that fails (for
/// instance a missing checkpoint) becomes an error row.
pub fn run_contribution_table(
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    methods: &[Method],
) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let mut report = empty_report(prepared, cfg, "table", cfg.horizon(), "month");
    for &method in methods {
        match run_method(prepared, cfg, method) {
            Ok(res) => {
                report.max_conservation_error = report.max_conservation_error.max(res.conservation);
                report.rows.push(MethodRow::from_values(method.name(), res.per_seed));
                report.series.insert(method.name().to_string(), res.monthly);
            }
            Err(e) => {
                log::warn!("{method}: {e}");
                report.rows.push(MethodRow::failed(method.name(), e.to_string()));
            }
        }
    }
    Ok(report)
}

fn epsilon_label(eps: f64) -> String {
    format!("epsilon_{eps}")
}

/// Trains one mentor policy per (ε, seed) with shared seeds; rows hold the
/// post-training evaluation, series the seed-averaged learning curves.
pub fn run_epsilon_sweep(prepared: &Prepared, cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let horizon = cfg.horizon();
    let mut report = empty_report(prepared, cfg, "sweep", horizon, "episode");
    let n_seeds = cfg.eval.seeds.len() as f64;
    for &eps in &cfg.eval.epsilons {
        let mut per_seed = Vec::new();
        let mut curve = vec![0.0; cfg.train.episodes];
        for &seed in &cfg.eval.seeds {
            let (policy, points) = obtain_policy(prepared, cfg, Method::Mentor, seed, Some(eps))?;
            for (c, p) in curve.iter_mut().zip(&points) {
                *c += p.mean_step_contribution / n_seeds;
            }
            let developers = prepared.sample_developers(cfg.eval.developers, seed);
            let controller = Controller::Policy {
                policy: &policy,
                greedy: cfg.eval.greedy,
            };
            let logs = evaluate_controller(prepared, cfg, &controller, &developers, seed, horizon, &BTreeSet::new())?;
            for log in &logs {
                report.max_conservation_error = report.max_conservation_error.max(log.conservation_error);
            }
            per_seed.push(logs.iter().map(RolloutLog::mean_step_contribution).sum::<f64>() / logs.len() as f64);
        }
        let mut row = MethodRow::from_values("mentor", per_seed);
        row.epsilon = Some(eps);
        report.rows.push(row);
        report.series.insert(epsilon_label(eps), curve);
    }
    Ok(report)
}

/// Paired rollouts of the trained mentor policy.
#[derive(Debug, Clone)]
pub struct InterventionOutcome {
    pub report: ExperimentReport,
    /// One log per (seed, developer), seed-major.
    pub undisturbed: Vec<RolloutLog>,
    pub disturbed: Vec<RolloutLog>,
    /// REAL per-month contributions in the same order.
    pub real: Vec<Vec<f64>>,
}

/// Undisturbed vs disturbed (state reset in `disturb_months`) vs REAL, with
/// identical rollout randomness for the paired runs.
pub fn run_intervention(prepared: &Prepared, cfg: &ExperimentConfig) -> Result<InterventionOutcome, HarnessError> {
    cfg.validate()?;
    let horizon = cfg.horizon();
    let disturb: BTreeSet<usize> = cfg.eval.disturb_months.iter().copied().collect();
    if let Some(&month) = disturb.iter().find(|&&d| d >= horizon) {
        return Err(HarnessError::DisturbOutOfRange { month, horizon });
    }
    let mut report = empty_report(prepared, cfg, "intervene", horizon, "month");
    let (mut undisturbed, mut disturbed, mut real) = (Vec::new(), Vec::new(), Vec::new());
    let mut per_seed: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &seed in &cfg.eval.seeds {
        let (policy, _) = obtain_policy(prepared, cfg, Method::Mentor, seed, None)?;
        let developers = prepared.sample_developers(cfg.eval.developers, seed);
        let controller = Controller::Policy {
            policy: &policy,
            greedy: cfg.eval.greedy,
        };
        let plain = evaluate_controller(prepared, cfg, &controller, &developers, seed, horizon, &BTreeSet::new())?;
        let hit = evaluate_controller(prepared, cfg, &controller, &developers, seed, horizon, &disturb)?;
        let replay: Vec<Vec<f64>> = developers
            .iter()
            .map(|d| replay_real(d, &prepared.weights, horizon))
            .collect::<Result<_, _>>()?;
        let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
        per_seed
            .entry("undisturbed")
            .or_default()
            .push(mean(plain.iter().map(RolloutLog::mean_step_contribution).collect()));
        per_seed
            .entry("disturbed")
            .or_default()
            .push(mean(hit.iter().map(RolloutLog::mean_step_contribution).collect()));
        per_seed
            .entry("real")
            .or_default()
            .push(mean(replay.iter().map(|s| s.iter().sum::<f64>() / horizon as f64).collect()));
        undisturbed.extend(plain);
        disturbed.extend(hit);
        real.extend(replay);
    }
    for log in undisturbed.iter().chain(&disturbed) {
        report.max_conservation_error = report.max_conservation_error.max(log.conservation_error);
    }
    for name in ["undisturbed", "disturbed", "real"] {
        report.rows.push(MethodRow::from_values(name, per_seed.remove(name).unwrap_or_default()));
    }
    let average = |series: Vec<Vec<f64>>| -> Vec<f64> {
        let mut out = vec![0.0; horizon];
        let w = 1.0 / series.len() as f64;
        for s in &series {
            accumulate_monthly(&mut out, s, w);
        }
        out
    };
    let cumulative = |xs: &[f64]| -> Vec<f64> {
        xs.iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    };
    let u = average(undisturbed.iter().map(RolloutLog::contributions).collect());
    let d = average(disturbed.iter().map(RolloutLog::contributions).collect());
    let r = average(real.clone());
    report.series.insert("undisturbed_cumulative".into(), cumulative(&u));
    report.series.insert("disturbed_cumulative".into(), cumulative(&d));
    report.series.insert("real_cumulative".into(), cumulative(&r));
    report.series.insert("undisturbed".into(), u);
    report.series.insert("disturbed".into(), d);
    report.series.insert("real".into(), r);
    Ok(InterventionOutcome {
        report,
        undisturbed,
        disturbed,
        real,
    })
}

#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub rows: Vec<CaseRow>,
    pub report: ExperimentReport,
}

/// One contributor's recorded monthly contribution next to the mentor
/// policy's, starting from the contributor's first recorded month. The
/// policy comes from the first seed.
pub fn export_case_study(
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    contributor_id: &str,
    horizon: usize,
) -> Result<CaseStudy, HarnessError> {
    cfg.validate()?;
    if horizon == 0 {
        return Err(HarnessError::Config("case horizon must be at least 1".into()));
    }
    let dev = prepared
        .dataset
        .trajectory(contributor_id)
        .filter(|t| !t.months.is_empty())
        .ok_or_else(|| HarnessError::UnknownContributor(contributor_id.to_string()))?;
    let seed = cfg.eval.seeds[0];
    let (policy, _) = obtain_policy(prepared, cfg, Method::Mentor, seed, None)?;
    let controller = Controller::Policy {
        policy: &policy,
        greedy: cfg.eval.greedy,
    };
    let logs = evaluate_controller(prepared, cfg, &controller, &[dev], seed, horizon, &BTreeSet::new())?;
    let mentor = logs[0].contributions();
    let real = replay_real(dev, &prepared.weights, horizon)?;
    let rows: Vec<CaseRow> = (0..horizon)
        .map(|month| CaseRow {
            month,
            real_contribution: real[month],
            mentor_contribution: mentor[month],
        })
        .collect();

    let mut report = empty_report(prepared, cfg, "case_study", horizon, "month");
    report.seeds = vec![seed];
    report.max_conservation_error = logs[0].conservation_error;
    let (rm, _) = mean_std(&real);
    let (mm, _) = mean_std(&mentor);
    report.rows.push(MethodRow::from_values("real", vec![rm]));
    report.rows.push(MethodRow::from_values("mentor", vec![mm]));
    report.series.insert("real_contribution".into(), real);
    report.series.insert("mentor_contribution".into(), mentor);
    Ok(CaseStudy { rows, report })
}
