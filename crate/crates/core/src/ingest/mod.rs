//! GitHub event ingestion: archive parsing, monthly aggregation, contributor
//! pools and a synthetic dataset generator.
//!
//! The canonical dataset file (`dataset.json`) written by this module is the
//! contract between ingestion and every downstream stage:
//!
//! ```json
//! {"project": "owner/repo",
//!  "schema": ["open_issue", "issue_comment", ...],
//!  "trajectories": [{"contributor_id": "alice",
//!                    "months": [{"index": 24228, "counts": [3, 0, ...]}]}]}
//! ```
//!
//! Month indices are absolute UTC calendar months (`year * 12 + month0`).

mod aggregate;
mod events;
mod fetch;
mod synthetic;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_monthly, month_index, month_label, top_contributors, RankKey};
pub use events::{open_ndjson, parse_events, GithubEventType, ParseReport, RawEvent};
pub use fetch::{
    archive_file_name, fetch_archive, hours_in_span, ArchiveSource, FetchReport, HttpArchiveSource,
};
pub use synthetic::{generate_synthetic, DimensionRate, SyntheticConfig};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown action dimension `{0}`")]
    UnknownDimension(String),
    #[error("schema must list at least one dimension without duplicates")]
    InvalidSchema,
    #[error("trajectory `{contributor}` has a vector of length {found}, schema has {expected}")]
    SchemaMismatch {
        contributor: String,
        expected: usize,
        found: usize,
    },
    #[error("trajectory `{0}` has non-increasing month indices")]
    UnorderedMonths(String),
    #[error("no contributors available")]
    NoContributors,
    #[error("invalid synthetic config: {0}")]
    InvalidSynthetic(String),
    #[error("invalid date span: {0}")]
    InvalidSpan(String),
}

impl IngestError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// One developer action dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    OpenIssue,
    IssueComment,
    CloseIssue,
    OpenPr,
    PrComment,
    MergePr,
    Push,
}

impl ActionKind {
    pub const ALL: [ActionKind; 7] = [
        ActionKind::OpenIssue,
        ActionKind::IssueComment,
        ActionKind::CloseIssue,
        ActionKind::OpenPr,
        ActionKind::PrComment,
        ActionKind::MergePr,
        ActionKind::Push,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::OpenIssue => "open_issue",
            ActionKind::IssueComment => "issue_comment",
            ActionKind::CloseIssue => "close_issue",
            ActionKind::OpenPr => "open_pr",
            ActionKind::PrComment => "pr_comment",
            ActionKind::MergePr => "merge_pr",
            ActionKind::Push => "push",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionKind {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| IngestError::UnknownDimension(s.to_string()))
    }
}

/// Ordered list of action dimensions; the position of a kind is its vector index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ActionKind>", into = "Vec<ActionKind>")]
pub struct Schema(Vec<ActionKind>);

impl Schema {
    pub fn new(dims: Vec<ActionKind>) -> Result<Self, IngestError> {
        let mut seen = dims.clone();
        seen.sort();
        seen.dedup();
        if dims.is_empty() || seen.len() != dims.len() {
            return Err(IngestError::InvalidSchema);
        }
        Ok(Schema(dims))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dims(&self) -> &[ActionKind] {
        &self.0
    }

    pub fn index_of(&self, kind: ActionKind) -> Option<usize> {
        self.0.iter().position(|&k| k == kind)
    }

    /// Reads a JSON array of dimension names.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Default for Schema {
    /// open_issue, issue_comment, close_issue, open_pr, pr_comment, merge_pr.
    fn default() -> Self {
        Schema(ActionKind::ALL[..6].to_vec())
    }
}

impl TryFrom<Vec<ActionKind>> for Schema {
    type Error = IngestError;

    fn try_from(value: Vec<ActionKind>) -> Result<Self, Self::Error> {
        Schema::new(value)
    }
}

impl From<Schema> for Vec<ActionKind> {
    fn from(value: Schema) -> Self {
        value.0
    }
}

/// Per-dimension execution counts for one contributor in one month.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionVector(pub Vec<u32>);

impl ActionVector {
    pub fn zeros(m: usize) -> Self {
        ActionVector(vec![0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| f64::from(c)).collect()
    }
}

impl From<Vec<u32>> for ActionVector {
    fn from(value: Vec<u32>) -> Self {
        ActionVector(value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub index: i32,
    pub counts: ActionVector,
}

/// A contributor's contiguous monthly action history.
///
/// `cumulative_contribution` is empty until the trajectory is annotated with
/// a weight vector; it is not part of the canonical dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyTrajectory {
    pub contributor_id: String,
    pub months: Vec<MonthRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cumulative_contribution: Vec<f64>,
}

impl MonthlyTrajectory {
    pub fn total_events(&self) -> u64 {
        self.months.iter().map(|m| m.counts.total()).sum()
    }

    pub fn is_annotated(&self) -> bool {
        !self.months.is_empty() && self.cumulative_contribution.len() == self.months.len()
    }

    /// Per-month contributions recovered from the cumulative annotation.
    pub fn per_step_contributions(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative_contribution
            .iter()
            .map(|&c| {
                let step = c - prev;
                prev = c;
                step
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectDataset {
    pub project: String,
    pub schema: Schema,
    pub trajectories: Vec<MonthlyTrajectory>,
}

impl ProjectDataset {
    pub fn validate(&self) -> Result<(), IngestError> {
        let m = self.schema.len();
        for t in &self.trajectories {
            for rec in &t.months {
                if rec.counts.len() != m {
                    return Err(IngestError::SchemaMismatch {
                        contributor: t.contributor_id.clone(),
                        expected: m,
                        found: rec.counts.len(),
                    });
                }
            }
            if t.months.windows(2).any(|w| w[0].index >= w[1].index) {
                return Err(IngestError::UnorderedMonths(t.contributor_id.clone()));
            }
        }
        Ok(())
    }

    pub fn contributor_months(&self) -> usize {
        self.trajectories.iter().map(|t| t.months.len()).sum()
    }

    pub fn trajectory(&self, contributor_id: &str) -> Option<&MonthlyTrajectory> {
        self.trajectories
            .iter()
            .find(|t| t.contributor_id == contributor_id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let dataset: ProjectDataset = serde_json::from_str(&text)?;
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IngestError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| IngestError::io(path, e))
    }
}

/// The top contributors of one project; the environment's expert data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributorPool {
    pub project: String,
    pub schema: Schema,
    pub trajectories: Vec<MonthlyTrajectory>,
}

impl ContributorPool {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectory(&self, contributor_id: &str) -> Option<&MonthlyTrajectory> {
        self.trajectories
            .iter()
            .find(|t| t.contributor_id == contributor_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_has_six_dimensions() {
        let schema = Schema::default();
        assert_eq!(schema.len(), 6);
        assert_eq!(schema.index_of(ActionKind::MergePr), Some(5));
        assert_eq!(schema.index_of(ActionKind::Push), None);
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(Schema::new(vec![]).is_err());
        assert!(Schema::new(vec![ActionKind::Push, ActionKind::Push]).is_err());
        let parsed: Result<Schema, _> = serde_json::from_str(r#"["open_issue","open_issue"]"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn dataset_json_layout() {
        let ds = ProjectDataset {
            project: "a/b".into(),
            schema: Schema::new(vec![ActionKind::OpenIssue, ActionKind::Push]).unwrap(),
            trajectories: vec![MonthlyTrajectory {
                contributor_id: "alice".into(),
                months: vec![MonthRecord {
                    index: 3,
                    counts: vec![1, 2].into(),
                }],
                cumulative_contribution: vec![],
            }],
        };
        let json = serde_json::to_value(&ds).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "project": "a/b",
                "schema": ["open_issue", "push"],
                "trajectories": [{"contributor_id": "alice", "months": [{"index": 3, "counts": [1, 2]}]}]
            })
        );
    }

    #[test]
    fn validate_catches_length_mismatch() {
        let ds = ProjectDataset {
            project: "a/b".into(),
            schema: Schema::default(),
            trajectories: vec![MonthlyTrajectory {
                contributor_id: "bob".into(),
                months: vec![MonthRecord {
                    index: 0,
                    counts: vec![1].into(),
                }],
                cumulative_contribution: vec![],
            }],
        };
        assert!(matches!(
            ds.validate(),
            Err(IngestError::SchemaMismatch { expected: 6, found: 1, .. })
        ));
    }
}
