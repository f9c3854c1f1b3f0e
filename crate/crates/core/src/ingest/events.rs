use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Utc};
use flate2::read::MultiGzDecoder;
use serde::Deserialize;
use serde_json::Value;

use super::{ActionKind, IngestError, Schema};

/// GitHub event kinds that can map onto an action dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GithubEventType {
    Issues,
    IssueComment,
    PullRequest,
    PullRequestReviewComment,
    Push,
}

impl GithubEventType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "IssuesEvent" => GithubEventType::Issues,
            "IssueCommentEvent" => GithubEventType::IssueComment,
            "PullRequestEvent" => GithubEventType::PullRequest,
            "PullRequestReviewCommentEvent" => GithubEventType::PullRequestReviewComment,
            "PushEvent" => GithubEventType::Push,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub event_type: GithubEventType,
    /// The action dimension this event counts towards.
    pub action: ActionKind,
    pub actor_login: String,
    pub repo_name: String,
    pub timestamp: DateTime<Utc>,
    /// `payload.action` when present, e.g. `opened` or `closed`.
    pub detail: Option<String>,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ParseReport {
    pub events: Vec<RawEvent>,
    /// Lines that were not valid JSON or lacked a required field.
    pub skipped_malformed: usize,
    /// Well-formed records whose kind is outside the schema.
    pub skipped_unmapped: usize,
}

impl ParseReport {
    pub fn merge(&mut self, other: ParseReport) {
        self.events.extend(other.events);
        self.skipped_malformed += other.skipped_malformed;
        self.skipped_unmapped += other.skipped_unmapped;
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ActorField {
    Object { login: String },
    Legacy(String),
}

#[derive(Deserialize)]
struct RepoField {
    name: String,
}

#[derive(Deserialize)]
struct LegacyRepository {
    name: String,
    owner: String,
}

#[derive(Deserialize)]
struct ArchiveRecord {
    #[serde(rename = "type")]
    kind: String,
    actor: ActorField,
    repo: Option<RepoField>,
    repository: Option<LegacyRepository>,
    created_at: String,
    #[serde(default)]
    payload: Value,
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    // 2012-era archives: "2012/03/10 16:30:57 -0800"
    DateTime::parse_from_str(s, "%Y/%m/%d %H:%M:%S %z")
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

fn classify(event: GithubEventType, payload: &Value) -> Option<ActionKind> {
    let action = payload.get("action").and_then(Value::as_str);
    match event {
        GithubEventType::Issues => match action? {
            "opened" => Some(ActionKind::OpenIssue),
            "closed" => Some(ActionKind::CloseIssue),
            _ => None,
        },
        GithubEventType::IssueComment => {
            if !matches!(action, None | Some("created")) {
                return None;
            }
            let on_pr = payload
                .get("issue")
                .and_then(|i| i.get("pull_request"))
                .is_some_and(|pr| !pr.is_null());
            Some(if on_pr {
                ActionKind::PrComment
            } else {
                ActionKind::IssueComment
            })
        }
        GithubEventType::PullRequest => match action? {
            "opened" => Some(ActionKind::OpenPr),
            "closed" => {
                let merged = payload
                    .get("pull_request")
                    .and_then(|pr| pr.get("merged"))
                    .and_then(Value::as_bool)
                    .unwrap_or(false);
                merged.then_some(ActionKind::MergePr)
            }
            _ => None,
        },
        GithubEventType::PullRequestReviewComment => {
            matches!(action, None | Some("created")).then_some(ActionKind::PrComment)
        }
        GithubEventType::Push => Some(ActionKind::Push),
    }
}

enum LineOutcome {
    Event(Box<RawEvent>),
    Unmapped,
    Malformed,
}

fn parse_line(line: &[u8], schema: &Schema) -> LineOutcome {
    let record: ArchiveRecord = match serde_json::from_slice(line) {
        Ok(r) => r,
        Err(_) => return LineOutcome::Malformed,
    };
    let Some(timestamp) = parse_timestamp(&record.created_at) else {
        return LineOutcome::Malformed;
    };
    let repo_name = match (record.repo, record.repository) {
        (Some(repo), _) => repo.name,
        (None, Some(legacy)) => format!("{}/{}", legacy.owner, legacy.name),
        (None, None) => return LineOutcome::Malformed,
    };
    let actor_login = match record.actor {
        ActorField::Object { login } | ActorField::Legacy(login) => login,
    };
    let Some(event_type) = GithubEventType::parse(&record.kind) else {
        return LineOutcome::Unmapped;
    };
    let Some(action) = classify(event_type, &record.payload) else {
        return LineOutcome::Unmapped;
    };
    if schema.index_of(action).is_none() {
        return LineOutcome::Unmapped;
    }
    let detail = record
        .payload
        .get("action")
        .and_then(Value::as_str)
        .map(str::to_owned);
    LineOutcome::Event(Box::new(RawEvent {
        event_type,
        action,
        actor_login,
        repo_name,
        timestamp,
        detail,
    }))
}

/// Parses a GitHub-Archive NDJSON stream, keeping records that map onto a
/// schema dimension. Bad lines are counted, never fatal.
pub fn parse_events<R: BufRead>(mut reader: R, schema: &Schema) -> std::io::Result<ParseReport> {
    let mut report = ParseReport::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let line = buf.trim_ascii();
        if line.is_empty() {
            continue;
        }
        match parse_line(line, schema) {
            LineOutcome::Event(e) => report.events.push(*e),
            LineOutcome::Unmapped => report.skipped_unmapped += 1,
            LineOutcome::Malformed => report.skipped_malformed += 1,
        }
    }
    Ok(report)
}

/// Opens a plain or gzip-compressed NDJSON file (detected by magic bytes).
pub fn open_ndjson(path: impl AsRef<Path>) -> Result<Box<dyn BufRead>, IngestError> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| IngestError::io(path, e))?;
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}
