//! Acceptance suite: one line per criterion, then a single assertion that
//! every criterion passed.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oss_mentor::env::{reward, RewardParams, StartState};
use oss_mentor::harness::{
    export_case_study, rollout, run_contribution_table, run_epsilon_sweep, run_intervention, Controller,
    ExperimentConfig, Method, Prepared, RolloutLog, CONSERVATION_TOLERANCE,
};
use oss_mentor::ingest::{
    generate_synthetic, ActionKind, ActionVector, DimensionRate, MonthRecord, MonthlyTrajectory, ProjectDataset,
    Schema, SyntheticConfig,
};
use oss_mentor::metric::{
    compute_weights, conditional_entropy, shannon_entropy, BinnedDistribution, JointBinnedDistribution, ParentMap,
    WeightVector,
};
use oss_mentor::policy::{
    actor_backward, actor_forward, critic_backward, critic_forward, log_prob, sample_action, ActorParams,
    CriticParams, ParamTensors,
};
use oss_mentor::trainer::{clipped_surrogate, surrogate_from_ratio};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- 1

fn random_joint(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let (nx, ny) = (rng.random_range(1..7), rng.random_range(1..7));
    let mut t: Vec<Vec<f64>> = (0..nx)
        .map(|_| {
            (0..ny)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
                .collect()
        })
        .collect();
    t[0][0] += 1e-3;
    let total: f64 = t.iter().flatten().sum();
    for v in t.iter_mut().flatten() {
        *v /= total;
    }
    t
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let uniform = BinnedDistribution::from_probabilities(vec![0.25; 4]).map_err(|e| e.to_string())?;
    let h = shannon_entropy(&uniform);
    ensure(h == 2.0, || format!("H(uniform-4) = {h}"))?;

    let diag: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..5).map(|j| if i == j { 0.2 } else { 0.0 }).collect())
        .collect();
    let h_yx = conditional_entropy(&JointBinnedDistribution::new(diag).map_err(|e| e.to_string())?);
    ensure(h_yx == 0.0, || format!("H(Y|Y) = {h_yx}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let joint = JointBinnedDistribution::new(random_joint(&mut rng)).map_err(|e| e.to_string())?;
        let hy = shannon_entropy(&BinnedDistribution::from_probabilities(joint.marginal_y()).map_err(|e| e.to_string())?);
        let gap = conditional_entropy(&joint) - hy;
        worst = worst.max(gap);
        ensure(gap <= 1e-12, || format!("H(Y|X) - H(Y) = {gap}"))?;
    }
    within(Duration::from_secs(1), started)?;
    Ok(format!("max H(Y|X) - H(Y) over 1000 tables = {worst:.3e}"))
}

// ---------------------------------------------------------------- 2

/// Entropy-weight method written from scratch: quantile thresholds at sorted
/// positions floor(k n / B), duplicates and the minimum dropped; bin index is
/// the number of thresholds at or below the value.
fn oracle_weights(ds: &ProjectDataset, parents: &[Option<usize>], bins: usize) -> Vec<f64> {
    let m = ds.schema.len();
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|d| {
            ds.trajectories
                .iter()
                .flat_map(|t| &t.months)
                .map(|r| r.counts.0[d] as f64)
                .collect()
        })
        .collect();
    let n = columns[0].len();
    let mut labels = Vec::new();
    let mut nbins = Vec::new();
    for col in &columns {
        let mut s = col.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut thresholds: Vec<f64> = Vec::new();
        for k in 1..bins {
            let t = s[k * n / bins];
            if t > s[0] && !thresholds.contains(&t) {
                thresholds.push(t);
            }
        }
        labels.push(
            col.iter()
                .map(|&v| thresholds.iter().filter(|&&t| t <= v).count())
                .collect::<Vec<_>>(),
        );
        nbins.push(thresholds.len() + 1);
    }
    let mut d = Vec::new();
    for j in 0..m {
        let h = match parents[j] {
            None => {
                let mut c: HashMap<usize, f64> = HashMap::new();
                for &l in &labels[j] {
                    *c.entry(l).or_default() += 1.0;
                }
                c.values().map(|&k| -(k / n as f64) * (k / n as f64).log2()).sum::<f64>()
            }
            Some(p) => {
                let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
                let mut px: HashMap<usize, f64> = HashMap::new();
                for i in 0..n {
                    *joint.entry((labels[p][i], labels[j][i])).or_default() += 1.0;
                    *px.entry(labels[p][i]).or_default() += 1.0;
                }
                joint
                    .iter()
                    .map(|(&(x, _), &c)| -(c / n as f64) * (c / px[&x]).log2())
                    .sum::<f64>()
            }
        };
        let e = if nbins[j] > 1 { h / (nbins[j] as f64).log2() } else { 0.0 };
        d.push(1.0 - e);
    }
    let total: f64 = d.iter().sum();
    if total > 0.0 {
        d.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / m as f64; m]
    }
}

fn dataset_from_columns(kinds: &[ActionKind], rows: &[Vec<u32>]) -> ProjectDataset {
    ProjectDataset {
        project: "fixture".into(),
        schema: Schema::new(kinds.to_vec()).unwrap(),
        trajectories: rows
            .iter()
            .enumerate()
            .map(|(i, r)| MonthlyTrajectory {
                contributor_id: format!("c{i:03}"),
                months: vec![MonthRecord {
                    index: 0,
                    counts: ActionVector(r.clone()),
                }],
                cumulative_contribution: Vec::new(),
            })
            .collect(),
    }
}

fn check_normalized(w: &[f64]) -> Result<(), String> {
    let sum: f64 = w.iter().sum();
    ensure((sum - 1.0).abs() <= 1e-9 && w.iter().all(|&x| x >= 0.0), || {
        format!("weights {w:?} sum {sum}")
    })
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    for seed in 0..10u64 {
        let mut cfg = SyntheticConfig {
            contributors: 40,
            ..Default::default()
        };
        if seed % 3 == 0 {
            cfg.dimensions[seed as usize % 6].rate = 0.0;
        }
        let ds = generate_synthetic(&cfg, seed).map_err(|e| e.to_string())?;
        for parents in [ParentMap::default_for(&ds.schema), ParentMap::roots(ds.schema.len())] {
            for bins in [2, 5, 10] {
                let w = compute_weights(&ds, &parents, bins).map_err(|e| e.to_string())?;
                check_normalized(w.weights.as_slice())?;
                checked += 1;
            }
        }
    }

    let kinds = [ActionKind::OpenIssue, ActionKind::IssueComment];
    let rows: Vec<Vec<u32>> = (0..100).map(|i| vec![3, i % 10]).collect();
    let forced = compute_weights(&dataset_from_columns(&kinds, &rows), &ParentMap::roots(2), 10)
        .map_err(|e| e.to_string())?;
    ensure(forced.weights.as_slice() == [1.0, 0.0], || {
        format!("constant + uniform gave {:?}", forced.weights.as_slice())
    })?;

    let three = SyntheticConfig {
        dimensions: vec![
            DimensionRate {
                kind: ActionKind::OpenIssue,
                rate: 2.0,
            },
            DimensionRate {
                kind: ActionKind::IssueComment,
                rate: 6.0,
            },
            DimensionRate {
                kind: ActionKind::CloseIssue,
                rate: 1.0,
            },
        ],
        ..Default::default()
    };
    let ds = generate_synthetic(&three, 5).map_err(|e| e.to_string())?;
    let parents = ParentMap::default_for(&ds.schema);
    let parent_idx: Vec<Option<usize>> = (0..3).map(|j| parents.parent(j)).collect();
    ensure(parent_idx == [None, Some(0), Some(0)], || format!("parents {parent_idx:?}"))?;
    let mut worst = 0.0f64;
    for bins in [3, 5, 10] {
        let got = compute_weights(&ds, &parents, bins).map_err(|e| e.to_string())?;
        let expected = oracle_weights(&ds, &parent_idx, bins);
        for (g, e) in got.weights.as_slice().iter().zip(&expected) {
            worst = worst.max((g - e).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("oracle deviation {worst:e}"))?;
    within(Duration::from_secs(5), started)?;
    Ok(format!(
        "{checked} weight vectors normalized; forced case (1, 0); 3-dim oracle deviation {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = RewardParams::default();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(1..8);
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w = WeightVector::new(raw.iter().map(|x| x / total).collect()).map_err(|e| e.to_string())?;
        let caps: Vec<f64> = (0..m).map(|_| rng.random_range(1..40) as f64).collect();
        let a = ActionVector((0..m).map(|_| rng.random_range(0..50)).collect());
        let r = reward(&a, &a, &w, &params, &caps).map_err(|e| e.to_string())?.reward;
        let wa: f64 = w.as_slice().iter().zip(a.counts()).map(|(w, &c)| w * c as f64).sum();
        worst = worst.max((r - wa).abs());
        let other = ActionVector((0..m).map(|_| rng.random_range(0..50)).collect());
        let zero = reward(&ActionVector::zeros(m), &other, &w, &params, &caps)
            .map_err(|e| e.to_string())?
            .reward;
        ensure(zero == 0.0, || format!("r(0, a) = {zero}"))?;
    }
    ensure(worst <= 1e-12, || format!("|r(a,a) - W·a| = {worst:e}"))?;

    // fixed a_d, experts drawn at random, sorted by weighted distance
    let mut sequences = 0;
    for _ in 0..50 {
        let m = 4;
        let w = WeightVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let caps = vec![20.0; m];
        let a_d = ActionVector((0..m).map(|_| rng.random_range(1..20)).collect());
        let mut scored: Vec<(f64, f64)> = (0..30)
            .map(|_| {
                let a_e = ActionVector((0..m).map(|_| rng.random_range(0..20)).collect());
                let dist: f64 = (0..m)
                    .map(|j| ((a_d.0[j] as f64 - a_e.0[j] as f64) / 20.0 * w.as_slice()[j]).powi(2))
                    .sum();
                (dist, reward(&a_d, &a_e, &w, &params, &caps).unwrap().reward)
            })
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for pair in scored.windows(2) {
            ensure(pair[1].1 <= pair[0].1 || pair[1].0 == pair[0].0, || {
                format!("reward rose from {} to {} as distance grew", pair[0].1, pair[1].1)
            })?;
        }
        sequences += 1;
    }
    within(Duration::from_secs(1), started)?;
    Ok(format!("max |r(a,a) - W·a| = {worst:.1e}; {sequences} sorted-distance sequences monotone"))
}

// ---------------------------------------------------------------- 4

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn fd_check<P: ParamTensors + Clone>(p: &P, analytic: &[f64], f: impl Fn(&P) -> f64) -> f64 {
    let h = 1e-5;
    let base = p.flat();
    let mut probe = p.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut v = base.clone();
        v[i] = base[i] + h;
        probe.set_flat(&v);
        let fp = f(&probe);
        v[i] = base[i] - h;
        probe.set_flat(&v);
        let fm = f(&probe);
        worst = worst.max(rel_err(a, (fp - fm) / (2.0 * h)));
    }
    worst
}

/// Moves hidden pre-activations at least 1e-2 away from the ReLU kink.
fn nudge(layer: &mut oss_mentor::policy::Dense, state: &[f64]) {
    for (o, z) in layer.forward(state).into_iter().enumerate() {
        if z.abs() < 1e-2 {
            layer.bias[o] += if z >= 0.0 { 2e-2 } else { -2e-2 };
        }
    }
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut params = 0;
    for _ in 0..20 {
        let m = rng.random_range(2..7);
        let hidden = rng.random_range(4..20);
        let state: Vec<f64> = (0..m + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut actor = ActorParams::init(m + 1, hidden, m, &mut rng);
        nudge(&mut actor.hidden, &state);
        let out = actor_forward(&actor, &state).map_err(|e| e.to_string())?;
        let raw = sample_action(&out, &mut rng, &vec![10.0; m]).raw;
        let upstream = rng.random_range(-2.0..2.0);
        let g = actor_backward(&actor, &state, &raw, upstream).map_err(|e| e.to_string())?;
        worst = worst.max(fd_check(&actor, &g.flat(), |a| {
            upstream * log_prob(&actor_forward(a, &state).unwrap(), &raw)
        }));
        params += actor.num_params();

        let mut critic = CriticParams::init(m + 1, hidden, &mut rng);
        nudge(&mut critic.hidden, &state);
        let g = critic_backward(&critic, &state, upstream).map_err(|e| e.to_string())?;
        worst = worst.max(fd_check(&critic, &g.flat(), |c| upstream * critic_forward(c, &state).unwrap()));
        params += critic.num_params();
    }
    ensure(worst <= 1e-4, || format!("worst relative error {worst:e}"))?;
    within(Duration::from_secs(10), started)?;
    Ok(format!("{params} parameters over 20 instances, worst relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let s = |pi: f64, a: f64| clipped_surrogate(pi.ln(), 0.0, a, 0.3).map_err(|e| e.to_string());
    let cases = [(1.0, 2.0, 2.0), (2.0, 1.0, 1.3), (0.5, -1.0, -0.7)];
    for (pi, a, expected) in cases {
        let got = s(pi, a)?;
        ensure(got == expected, || format!("pi={pi} A={a}: {got} != {expected}"))?;
    }
    // both branches of the third case, enumerated
    ensure(0.5 * -1.0 > 0.7 * -1.0, || "branch enumeration".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let pi = rng.random_range(0.0..5.0);
        let adv = rng.random_range(-10.0..10.0);
        let eps = rng.random_range(0.01..0.99);
        let v = surrogate_from_ratio(pi, adv, eps);
        ensure(v <= pi * adv, || format!("surrogate {v} > {}", pi * adv))?;
    }
    Ok("three examples exact; surrogate ≤ π·Â over 10000 draws".into())
}

// ---------------------------------------------------------------- 6-8

fn default_experiment() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(SyntheticConfig::default(), 11);
    cfg.train.episodes = 500;
    cfg
}

fn criterion_6(max_conservation: &mut f64) -> Outcome {
    let started = Instant::now();
    let cfg = default_experiment();
    let p = Prepared::new(&cfg).map_err(|e| e.to_string())?;
    let report = run_contribution_table(&p, &cfg, &[Method::Mentor, Method::Random]).map_err(|e| e.to_string())?;
    *max_conservation = max_conservation.max(report.max_conservation_error);
    let mean = |m: &str| report.row(m).and_then(|r| r.mean_single_step_contribution);
    let (mentor, random) = match (mean("mentor"), mean("random")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(format!("missing rows: {:?}", report.rows)),
    };
    let ratio = mentor / random;
    ensure(ratio >= 1.5, || format!("mentor {mentor:.3} / random {random:.3} = {ratio:.3}"))?;
    within(Duration::from_secs(300), started)?;
    Ok(format!(
        "mentor {mentor:.3} vs random {random:.3} (ratio {ratio:.3}, seeds {:?}) in {:.1?}",
        cfg.eval.seeds,
        started.elapsed()
    ))
}

fn criterion_7(max_conservation: &mut f64) -> Outcome {
    let started = Instant::now();
    let mut cfg = default_experiment();
    cfg.eval.seeds = vec![1, 2, 3, 4, 5];
    let p = Prepared::new(&cfg).map_err(|e| e.to_string())?;
    let report =
        run_contribution_table(&p, &cfg, &[Method::Mentor, Method::PpoVariant]).map_err(|e| e.to_string())?;
    *max_conservation = max_conservation.max(report.max_conservation_error);
    let row = |m: &str| report.row(m).and_then(|r| r.mean_single_step_contribution);
    let (batch, episode) = match (row("mentor"), row("ppo_variant")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(format!("missing rows: {:?}", report.rows)),
    };
    ensure(batch >= episode, || format!("batch {batch:.3} < per-episode {episode:.3}"))?;
    within(Duration::from_secs(600), started)?;
    Ok(format!(
        "batch-update {batch:.3} vs per-episode {episode:.3} over 5 seeds in {:.1?}",
        started.elapsed()
    ))
}

fn criterion_8(max_conservation: &mut f64) -> Outcome {
    let cfg = default_experiment();
    let p = Prepared::new(&cfg).map_err(|e| e.to_string())?;
    let out = run_intervention(&p, &cfg).map_err(|e| e.to_string())?;
    *max_conservation = max_conservation.max(out.report.max_conservation_error);
    let last = |name: &str| *out.report.series[name].last().unwrap();
    let (disturbed, real) = (last("disturbed_cumulative"), last("real_cumulative"));
    ensure(disturbed >= real, || format!("disturbed {disturbed:.3} < real {real:.3}"))?;
    for log in &out.disturbed {
        for m in log.months.iter().filter(|m| m.disturbed) {
            ensure(m.observation == log.months[0].observation, || format!("month {} not reset", m.month))?;
        }
    }

    let mut none = cfg.clone();
    none.eval.disturb_months.clear();
    none.eval.seeds = vec![1];
    none.train.episodes = 50;
    let same = run_intervention(&p, &none).map_err(|e| e.to_string())?;
    ensure(same.disturbed == same.undisturbed, || "empty disturb set changed the rollout".into())?;
    Ok(format!(
        "cumulative at horizon: disturbed {disturbed:.2}, undisturbed {:.2}, real {real:.2}; empty set identical",
        last("undisturbed_cumulative")
    ))
}

// ---------------------------------------------------------------- 9

fn independent_prefix_check(log: &RolloutLog, w: &WeightVector) -> f64 {
    let mut running = 0.0;
    let mut worst = 0.0f64;
    for m in &log.months {
        running += m.action.iter().zip(w.as_slice()).map(|(&c, w)| c as f64 * w).sum::<f64>();
        worst = worst.max((running - m.cumulative).abs());
    }
    worst
}

fn criterion_9(max_conservation: f64) -> Outcome {
    let mut cfg = default_experiment();
    cfg.train.episodes = 20;
    cfg.eval.seeds = vec![1];
    let p = Prepared::new(&cfg).map_err(|e| e.to_string())?;
    let out = run_intervention(&p, &cfg).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut logs = 0;
    for log in out.disturbed.iter().chain(&out.undisturbed) {
        worst = worst.max(independent_prefix_check(log, &p.weights));
        logs += 1;
    }
    let mut env = p.env(&cfg.env, 45).map_err(|e| e.to_string())?;
    for (i, dev) in p.dataset.trajectories.iter().take(20).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let disturb: BTreeSet<usize> = if i % 2 == 0 { [7, 8, 9].into() } else { BTreeSet::new() };
        let log = rollout(
            &mut env,
            &Controller::Random,
            StartState::Developer(dev.months[0].counts.clone()),
            &disturb,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max(independent_prefix_check(&log, &p.weights)).max(log.conservation_error);
        logs += 1;
    }
    worst = worst.max(max_conservation);
    ensure(worst <= CONSERVATION_TOLERANCE, || format!("deviation {worst:e}"))?;
    Ok(format!("{logs} logged rollouts plus all experiment rollouts; max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 10

fn run_all_experiments(dir: &Path) -> Result<(), String> {
    let mut cfg = ExperimentConfig::synthetic(
        SyntheticConfig {
            contributors: 30,
            ..Default::default()
        },
        7,
    );
    cfg.train.episodes = 15;
    cfg.eval.seeds = vec![4, 9];
    cfg.eval.developers = 5;
    cfg.eval.greedy = false;
    let p = Prepared::new(&cfg).map_err(|e| e.to_string())?;
    let e = |x: oss_mentor::harness::HarnessError| x.to_string();
    run_contribution_table(&p, &cfg, &Method::ALL).map_err(e)?.write(&dir.join("table")).map_err(e)?;
    run_epsilon_sweep(&p, &cfg).map_err(e)?.write(&dir.join("sweep")).map_err(e)?;
    run_intervention(&p, &cfg).map_err(e)?.report.write(&dir.join("intervene")).map_err(e)?;
    let id = p.dataset.trajectories[3].contributor_id.clone();
    export_case_study(&p, &cfg, &id, 45).map_err(e)?.report.write(&dir.join("case")).map_err(e)?;
    Ok(())
}

fn csv_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for sub in std::fs::read_dir(dir).unwrap() {
        let sub = sub.unwrap().path();
        for f in std::fs::read_dir(&sub).unwrap() {
            let f = f.unwrap().path();
            if f.extension().is_some_and(|e| e == "csv" || e == "json") {
                out.push(f.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_all_experiments(a.path())?;
    run_all_experiments(b.path())?;
    let files = csv_files(a.path());
    ensure(files == csv_files(b.path()), || "different file sets".into())?;
    ensure(files.iter().filter(|f| f.extension().unwrap() == "csv").count() >= 6, || {
        format!("too few CSV files: {files:?}")
    })?;
    for f in &files {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{} differs between runs", f.display()))?;
    }
    Ok(format!("{} output files bit-identical across two runs", files.len()))
}

// ----------------------------------------------------------------

/// Writes to the stdout handle directly so the line shows even when the test
/// harness captures output.
fn report(line: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            report(format!("PASS {name}: {detail}"));
            true
        }
        Err(why) => {
            report(format!("FAIL {name}: {why}"));
            false
        }
    }
}

#[test]
fn acceptance_criteria() {
    let mut conservation = 0.0f64;
    let results = [
        run("1 entropy suite", criterion_1),
        run("2 weight suite", criterion_2),
        run("3 reward suite", criterion_3),
        run("4 gradient check", criterion_4),
        run("5 clip objective", criterion_5),
        run("6 training efficacy", || criterion_6(&mut conservation)),
        run("7 batch-update ablation", || criterion_7(&mut conservation)),
        run("8 intervention robustness", || criterion_8(&mut conservation)),
        run("9 pipeline conservation", || criterion_9(conservation)),
        run("10 determinism", criterion_10),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
