use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REPO: &str = "acme/widget";

fn event(kind: &str, login: &str, repo: &str, ts: &str, payload: &str) -> String {
    format!(
        r#"{{"type":"{kind}","actor":{{"login":"{login}"}},"repo":{{"name":"{repo}"}},"created_at":"{ts}","payload":{payload}}}"#
    )
}

/// Archive-style event lines for a dozen users over six months, plus noise:
/// another repository, an unmapped event type and one malformed line.
pub fn fixture_lines(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    for user in 0..12 {
        let login = format!("dev{user:02}");
        let first = rng.random_range(1..4);
        for month in first..=6 {
            let n = rng.random_range(0..6 + user);
            for i in 0..n {
                let ts = format!("2021-{month:02}-{:02}T{:02}:00:00Z", 1 + i % 27, i % 24);
                let (kind, payload) = match rng.random_range(0..7) {
                    0 => ("IssuesEvent", r#"{"action":"opened"}"#),
                    1 => ("IssueCommentEvent", r#"{"action":"created","issue":{}}"#),
                    2 => ("IssuesEvent", r#"{"action":"closed"}"#),
                    3 => ("PullRequestEvent", r#"{"action":"opened"}"#),
                    4 => ("IssueCommentEvent", r#"{"action":"created","issue":{"pull_request":{}}}"#),
                    5 => ("PullRequestEvent", r#"{"action":"closed","pull_request":{"merged":true}}"#),
                    _ => ("PushEvent", r#"{}"#),
                };
                lines.push(event(kind, &login, REPO, &ts, payload));
            }
        }
    }
    lines.push(event("PushEvent", "dev00", "other/repo", "2021-02-01T00:00:00Z", "{}"));
    lines.push(event("WatchEvent", "dev01", REPO, "2021-02-01T00:00:00Z", r#"{"action":"started"}"#));
    lines.push("{not json".into());
    lines
}

/// Writes the fixture split over a plain and a gzipped file.
pub fn write_fixture(dir: &Path) {
    let lines = fixture_lines(42);
    let (a, b) = lines.split_at(lines.len() / 2);
    std::fs::write(dir.join("events-a.json"), a.join("\n") + "\n").unwrap();
    let mut gz = GzEncoder::new(std::fs::File::create(dir.join("events-b.json.gz")).unwrap(), Compression::fast());
    gz.write_all((b.join("\n") + "\n").as_bytes()).unwrap();
    gz.finish().unwrap();
}
