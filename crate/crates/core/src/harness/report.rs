use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One method (or ε setting) averaged over the seed set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    pub mean_single_step_contribution: Option<f64>,
    pub stddev: Option<f64>,
    /// One value per seed, in seed order.
    pub per_seed: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl MethodRow {
    pub fn from_values(method: impl Into<String>, per_seed: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&per_seed);
        MethodRow {
            method: method.into(),
            epsilon: None,
            mean_single_step_contribution: Some(mean),
            stddev: Some(std),
            per_seed,
            error: None,
        }
    }

    pub fn failed(method: impl Into<String>, error: impl Into<String>) -> Self {
        MethodRow {
            method: method.into(),
            epsilon: None,
            mean_single_step_contribution: None,
            stddev: None,
            per_seed: Vec::new(),
            error: Some(error.into()),
        }
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub month: usize,
    pub real_contribution: f64,
    pub mentor_contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub project: String,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub episodes: usize,
    pub rows: Vec<MethodRow>,
    /// Name of the index column of `series` (`month` or `episode`).
    pub series_index: String,
    /// Equal-length plot series keyed by column name.
    pub series: BTreeMap<String, Vec<f64>>,
    pub max_conservation_error: f64,
}

impl ExperimentReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Writes `report.json`, `<experiment>.csv` for the method rows and
    /// `<experiment>_series.csv` for the series; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut written = Vec::new();
        let json = dir.join("report.json");
        fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| HarnessError::io(&json, e))?;
        written.push(json);
        if !self.rows.is_empty() {
            let path = dir.join(format!("{}.csv", self.experiment));
            self.write_rows(&path)?;
            written.push(path);
        }
        if !self.series.is_empty() {
            let path = dir.join(format!("{}_series.csv", self.experiment));
            self.write_series(&path)?;
            written.push(path);
        }
        Ok(written)
    }

    fn write_rows(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![
            "method".to_string(),
            "epsilon".into(),
            "mean_single_step_contribution".into(),
            "stddev".into(),
        ];
        header.extend(self.seeds.iter().map(|s| format!("seed_{s}")));
        header.push("error".into());
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let mut rec = vec![
                row.method.clone(),
                opt(row.epsilon),
                opt(row.mean_single_step_contribution),
                opt(row.stddev),
            ];
            for i in 0..self.seeds.len() {
                rec.push(opt(row.per_seed.get(i).copied()));
            }
            rec.push(row.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    }

    fn write_series(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![self.series_index.clone()];
        header.extend(self.series.keys().cloned());
        w.write_record(&header)?;
        let len = self.series.values().map(Vec::len).max().unwrap_or(0);
        for i in 0..len {
            let mut rec = vec![i.to_string()];
            rec.extend(self.series.values().map(|s| s.get(i).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[]), (0.0, 0.0));
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let report = ExperimentReport {
            experiment: "table".into(),
            project: "p".into(),
            seeds: vec![1, 2],
            horizon: 3,
            episodes: 0,
            rows: vec![
                MethodRow::from_values("real", vec![1.5, 2.5]),
                MethodRow::failed("mentor", "missing checkpoint"),
            ],
            series_index: "month".into(),
            series: [("real".to_string(), vec![1.0, 2.0, 3.0])].into(),
            max_conservation_error: 0.0,
        };
        let paths = report.write(dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let table = fs::read_to_string(dir.path().join("table.csv")).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "method,epsilon,mean_single_step_contribution,stddev,seed_1,seed_2,error");
        assert!(lines[1].starts_with("real,,2,"));
        assert_eq!(lines[2], "mentor,,,,,,missing checkpoint");
        let series = fs::read_to_string(dir.path().join("table_series.csv")).unwrap();
        assert_eq!(series.lines().count(), 4);
        let back: ExperimentReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
