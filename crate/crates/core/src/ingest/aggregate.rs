use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use super::{
    ActionKind, ActionVector, ContributorPool, IngestError, MonthRecord, MonthlyTrajectory,
    ProjectDataset, RawEvent, Schema,
};

/// Absolute UTC calendar month: `year * 12 + (month - 1)`.
pub fn month_index(ts: &DateTime<Utc>) -> i32 {
    ts.year() * 12 + ts.month0() as i32
}

/// `YYYY-MM` for an absolute month index.
pub fn month_label(index: i32) -> String {
    format!("{:04}-{:02}", index.div_euclid(12), index.rem_euclid(12) + 1)
}

/// Buckets events into contiguous per-actor monthly action vectors.
///
/// Months between an actor's first and last active month are present as zero
/// vectors. Trajectories are ordered by contributor id, so the result does not
/// depend on the order of `events`.
pub fn aggregate_monthly(events: &[RawEvent], project: &str, schema: &Schema) -> ProjectDataset {
    let m = schema.len();
    let mut per_actor: BTreeMap<&str, BTreeMap<i32, Vec<u32>>> = BTreeMap::new();
    for event in events {
        let Some(dim) = schema.index_of(event.action) else {
            continue;
        };
        let month = month_index(&event.timestamp);
        per_actor
            .entry(event.actor_login.as_str())
            .or_default()
            .entry(month)
            .or_insert_with(|| vec![0; m])[dim] += 1;
    }

    let trajectories = per_actor
        .into_iter()
        .map(|(actor, months)| {
            let first = *months.keys().next().expect("actor has at least one month");
            let last = *months.keys().next_back().expect("actor has at least one month");
            let months = (first..=last)
                .map(|index| MonthRecord {
                    index,
                    counts: months
                        .get(&index)
                        .cloned()
                        .map(ActionVector)
                        .unwrap_or_else(|| ActionVector::zeros(m)),
                })
                .collect();
            MonthlyTrajectory {
                contributor_id: actor.to_string(),
                months,
                cumulative_contribution: Vec::new(),
            }
        })
        .collect();

    ProjectDataset {
        project: project.to_string(),
        schema: schema.clone(),
        trajectories,
    }
}

/// What "top" means when selecting contributors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "dimension")]
pub enum RankKey {
    /// Total mapped events over the whole trajectory.
    #[default]
    TotalEvents,
    /// Total count in one dimension, e.g. `push` for a commit-based ranking.
    Dimension(ActionKind),
}

impl RankKey {
    fn score(self, schema: &Schema, t: &MonthlyTrajectory) -> Result<u64, IngestError> {
        match self {
            RankKey::TotalEvents => Ok(t.total_events()),
            RankKey::Dimension(kind) => {
                let dim = schema
                    .index_of(kind)
                    .ok_or_else(|| IngestError::UnknownDimension(kind.to_string()))?;
                Ok(t.months.iter().map(|m| u64::from(m.counts.0[dim])).sum())
            }
        }
    }
}

/// Keeps the `n` highest-ranked trajectories; ties go to the smaller id.
pub fn top_contributors(
    dataset: &ProjectDataset,
    n: usize,
    rank_key: RankKey,
) -> Result<ContributorPool, IngestError> {
    if dataset.trajectories.is_empty() {
        return Err(IngestError::NoContributors);
    }
    let mut scored = dataset
        .trajectories
        .iter()
        .map(|t| Ok((rank_key.score(&dataset.schema, t)?, t)))
        .collect::<Result<Vec<_>, IngestError>>()?;
    scored.sort_by(|(sa, ta), (sb, tb)| {
        sb.cmp(sa)
            .then_with(|| ta.contributor_id.cmp(&tb.contributor_id))
    });
    Ok(ContributorPool {
        project: dataset.project.clone(),
        schema: dataset.schema.clone(),
        trajectories: scored
            .into_iter()
            .take(n.max(1))
            .map(|(_, t)| t.clone())
            .collect(),
    })
}
