use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use oss_mentor::harness::{
    export_case_study, run_contribution_table, run_epsilon_sweep, run_intervention, ExperimentConfig,
    Method, Prepared,
};
use oss_mentor::ingest::{
    aggregate_monthly, fetch_archive, generate_synthetic, hours_in_span, open_ndjson, parse_events,
    HttpArchiveSource, ParseReport, ProjectDataset, Schema, SyntheticConfig,
};
use oss_mentor::metric::{compute_weights, ParentMap, WeightsFile, DEFAULT_BINS};
use oss_mentor::trainer::{train, UpdateSchedule};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "oss-mentor", version, about = "Contributor guidance from GitHub activity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download hourly GitHub Archive files for a time span.
    Fetch {
        /// Start, inclusive (YYYY-MM-DD, YYYY-MM-DDTHH or RFC 3339).
        #[arg(long)]
        from: String,
        /// End, exclusive.
        #[arg(long)]
        to: String,
        #[arg(long)]
        dest: PathBuf,
        #[arg(long, default_value = "https://data.gharchive.org")]
        base_url: String,
    },
    /// Aggregate event files (NDJSON, optionally gzipped) into a monthly dataset.
    Ingest {
        /// Files or glob patterns.
        #[arg(required = true)]
        inputs: Vec<String>,
        /// Repository `owner/name` to keep.
        #[arg(long)]
        project: String,
        /// JSON array of dimension names; the default six otherwise.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth {
        /// Synthetic generator config (JSON); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        contributors: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute contribution weights for a dataset.
    Weights {
        #[arg(long)]
        dataset: PathBuf,
        /// `{"child": "parent"}` map; the default map otherwise.
        #[arg(long)]
        parents: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy; writes checkpoint.json and learning_curve.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Variant::Mentor)]
        variant: Variant,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment; writes report.json plus CSV files.
    Evaluate {
        #[arg(value_enum)]
        experiment: Experiment,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Methods for `table`.
        #[arg(long, value_delimiter = ',', default_value = "mentor,ppo_variant,random,real")]
        methods: Vec<String>,
        /// Contributor for `case`; `eval.contributor_id` otherwise.
        #[arg(long)]
        contributor: Option<String>,
        /// Horizon for `case`; `eval.case_horizon` or the training horizon otherwise.
        #[arg(long)]
        horizon: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Mentor,
    PpoVariant,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Table,
    Sweep,
    Intervene,
    Case,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for p in patterns {
        let matched: Vec<PathBuf> = glob::glob(p)?.collect::<std::result::Result<_, _>>()?;
        if matched.is_empty() {
            return Err(format!("no files match `{p}`").into());
        }
        paths.extend(matched);
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()).into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fetch {
            from,
            to,
            dest,
            base_url,
        } => {
            let hours = hours_in_span(&from, &to)?;
            let report = fetch_archive(&hours, &dest, &HttpArchiveSource::new(base_url))?;
            println!(
                "{} files present ({} downloaded, {} already complete), {} failed",
                report.paths.len(),
                report.downloaded,
                report.skipped,
                report.errors.len()
            );
            for (name, err) in &report.errors {
                eprintln!("failed {name}: {err}");
            }
            if !report.errors.is_empty() {
                return Err(format!("{} files failed", report.errors.len()).into());
            }
        }
        Command::Ingest {
            inputs,
            project,
            schema,
            out,
        } => {
            let schema = match schema {
                Some(p) => Schema::load(p)?,
                None => Schema::default(),
            };
            let mut total = ParseReport::default();
            for path in expand_inputs(&inputs)? {
                let report = parse_events(open_ndjson(&path)?, &schema)?;
                log::info!(
                    "{}: {} events, {} malformed, {} unmapped",
                    path.display(),
                    report.events.len(),
                    report.skipped_malformed,
                    report.skipped_unmapped
                );
                total.merge(report);
            }
            total.events.retain(|e| e.repo_name == project);
            let dataset = aggregate_monthly(&total.events, &project, &schema);
            dataset.save(&out)?;
            println!(
                "{} contributors, {} contributor-months, {} malformed lines skipped",
                dataset.trajectories.len(),
                dataset.contributor_months(),
                total.skipped_malformed
            );
        }
        Command::Synth {
            config,
            seed,
            contributors,
            horizon,
            out,
        } => {
            let mut cfg: SyntheticConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)?,
                None => SyntheticConfig::default(),
            };
            if let Some(n) = contributors {
                cfg.contributors = n;
            }
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            let dataset = generate_synthetic(&cfg, seed)?;
            dataset.save(&out)?;
            println!("{} contributors over {} months", dataset.trajectories.len(), cfg.horizon);
        }
        Command::Weights {
            dataset,
            parents,
            bins,
            out,
        } => {
            let dataset = ProjectDataset::load(&dataset)?;
            let parents = match parents {
                Some(p) => ParentMap::load(p, &dataset.schema)?,
                None => ParentMap::default_for(&dataset.schema),
            };
            let computed = compute_weights(&dataset, &parents, bins)?;
            WeightsFile::new(&dataset.schema, &computed).save(&out)?;
            for (kind, w) in dataset.schema.dims().iter().zip(computed.weights.as_slice()) {
                println!("{kind}\t{w:.6}");
            }
        }
        Command::Train {
            config,
            out,
            variant,
            seed,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            let prepared = Prepared::new(&cfg)?;
            let mut train_cfg = cfg.train.clone();
            if let Some(s) = seed {
                train_cfg.seed = s;
            }
            train_cfg.schedule = match variant {
                Variant::Mentor => UpdateSchedule::EveryBatch,
                Variant::PpoVariant => UpdateSchedule::EndOfEpisode,
            };
            let mut env = prepared.env(&cfg.env, cfg.horizon())?;
            let outcome = train(&mut env, &train_cfg)?;
            create_dir(&out)?;
            outcome.policy.save(out.join("checkpoint.json"))?;
            let mut w = csv::Writer::from_path(out.join("learning_curve.csv"))?;
            for point in &outcome.curve {
                w.serialize(point)?;
            }
            w.flush()?;
            let last = outcome.curve.last().map_or(0.0, |p| p.mean_step_contribution);
            println!(
                "{} episodes, {} updates, last mean step contribution {last:.4}",
                outcome.curve.len(),
                outcome.updates
            );
        }
        Command::Evaluate {
            experiment,
            config,
            out,
            methods,
            contributor,
            horizon,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let prepared = Prepared::new(&cfg)?;
            let report = match experiment {
                Experiment::Table => {
                    let methods = methods
                        .iter()
                        .map(|m| m.trim().parse::<Method>())
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    run_contribution_table(&prepared, &cfg, &methods)?
                }
                Experiment::Sweep => run_epsilon_sweep(&prepared, &cfg)?,
                Experiment::Intervene => run_intervention(&prepared, &cfg)?.report,
                Experiment::Case => {
                    let id = contributor
                        .or_else(|| cfg.eval.contributor_id.clone())
                        .ok_or("`case` needs --contributor or eval.contributor_id")?;
                    let h = horizon.or(cfg.eval.case_horizon).unwrap_or(cfg.horizon());
                    export_case_study(&prepared, &cfg, &id, h)?.report
                }
            };
            let written = report.write(&out)?;
            for row in &report.rows {
                match (&row.error, row.mean_single_step_contribution) {
                    (Some(e), _) => println!("{:<12} error: {e}", row.method),
                    (None, Some(m)) => {
                        let eps = row.epsilon.map(|e| format!(" (epsilon {e})")).unwrap_or_default();
                        println!("{:<12}{eps} {m:.4} ± {:.4}", row.method, row.stddev.unwrap_or(0.0));
                    }
                    (None, None) => {}
                }
            }
            for p in written {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
