use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};

use super::IngestError;

const GHARCHIVE_BASE: &str = "https://data.gharchive.org";

/// Remote store of hourly archive files.
pub trait ArchiveSource {
    /// Size in bytes of the remote file, if the source can tell.
    fn remote_size(&self, name: &str) -> Result<Option<u64>, String>;
    /// Writes the remote file to `dest`.
    fn download(&self, name: &str, dest: &Path) -> Result<(), String>;
}

pub struct HttpArchiveSource {
    base_url: String,
}

impl HttpArchiveSource {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpArchiveSource {
            base_url: base_url.into().trim_end_matches('/').to_string(),
        }
    }
}

impl Default for HttpArchiveSource {
    fn default() -> Self {
        HttpArchiveSource::new(GHARCHIVE_BASE)
    }
}

impl ArchiveSource for HttpArchiveSource {
    fn remote_size(&self, name: &str) -> Result<Option<u64>, String> {
        let url = format!("{}/{name}", self.base_url);
        let resp = ureq::head(&url).call().map_err(|e| e.to_string())?;
        Ok(resp
            .headers()
            .get("content-length")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok()))
    }

    fn download(&self, name: &str, dest: &Path) -> Result<(), String> {
        let url = format!("{}/{name}", self.base_url);
        let mut resp = ureq::get(&url).call().map_err(|e| e.to_string())?;
        let mut file = File::create(dest).map_err(|e| e.to_string())?;
        io::copy(&mut resp.body_mut().as_reader(), &mut file).map_err(|e| e.to_string())?;
        Ok(())
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct FetchReport {
    /// Local paths of every file present after the run, in hour order.
    pub paths: Vec<PathBuf>,
    pub downloaded: usize,
    pub skipped: usize,
    /// `(file name, error message)` for each failed hour.
    pub errors: Vec<(String, String)>,
}

/// `2019-01-01-0.json.gz`: the hour carries no leading zero.
pub fn archive_file_name(hour: &DateTime<Utc>) -> String {
    format!("{}-{}.json.gz", hour.format("%Y-%m-%d"), hour.hour())
}

fn parse_instant(s: &str) -> Result<DateTime<Utc>, IngestError> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(Utc.from_utc_datetime(&t));
        }
    }
    if let Some((date, hour)) = s.split_once('T') {
        if let (Ok(d), Ok(h)) = (NaiveDate::parse_from_str(date, "%Y-%m-%d"), hour.parse::<u32>()) {
            if let Some(t) = d.and_hms_opt(h, 0, 0) {
                return Ok(Utc.from_utc_datetime(&t));
            }
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")))
        .map_err(|_| IngestError::InvalidSpan(format!("cannot parse `{s}`")))
}

/// Whole hours in `[from, to)`. Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH` or RFC 3339.
pub fn hours_in_span(from: &str, to: &str) -> Result<Vec<DateTime<Utc>>, IngestError> {
    let start = parse_instant(from)?;
    let end = parse_instant(to)?;
    let start = start
        .with_minute(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
        .expect("truncation to the hour is valid");
    if end <= start {
        return Err(IngestError::InvalidSpan(format!("`{to}` is not after `{from}`")));
    }
    let mut hours = Vec::new();
    let mut t = start;
    while t < end {
        hours.push(t);
        t += Duration::hours(1);
    }
    Ok(hours)
}

/// Downloads every hourly archive file in the span into `destination`.
///
/// Files already present with the remote size (or any non-empty local file
/// when the source cannot report a size) are skipped. Failures are reported
/// per file; successful files are kept.
pub fn fetch_archive(
    hours: &[DateTime<Utc>],
    destination: &Path,
    source: &dyn ArchiveSource,
) -> Result<FetchReport, IngestError> {
    fs::create_dir_all(destination).map_err(|e| IngestError::io(destination, e))?;
    let mut report = FetchReport::default();
    for hour in hours {
        let name = archive_file_name(hour);
        let path = destination.join(&name);
        let local = fs::metadata(&path).ok().map(|m| m.len());
        let remote = match source.remote_size(&name) {
            Ok(size) => size,
            Err(e) => {
                report.errors.push((name, e));
                continue;
            }
        };
        let present = match (local, remote) {
            (Some(l), Some(r)) => l == r,
            (Some(l), None) => l > 0,
            (None, _) => false,
        };
        if present {
            report.skipped += 1;
            report.paths.push(path);
            continue;
        }
        let partial = destination.join(format!("{name}.part"));
        match source.download(&name, &partial) {
            Ok(()) => {
                fs::rename(&partial, &path).map_err(|e| IngestError::io(&path, e))?;
                log::info!("downloaded {name}");
                report.downloaded += 1;
                report.paths.push(path);
            }
            Err(e) => {
                let _ = fs::remove_file(&partial);
                report.errors.push((name, e));
            }
        }
    }
    Ok(report)
}
