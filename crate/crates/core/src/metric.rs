//! Data-driven contribution weights.
//!
//! Each action dimension's monthly counts are quantile-binned; a dimension
//! with a parent is scored by the conditional entropy of its bins given the
//! parent's bins, a root dimension by plain Shannon entropy. The entropy
//! weight method then turns entropies into weights: low normalized entropy
//! (a discriminative action) means high weight.
//!
//! All entropies are in bits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::{ActionKind, ActionVector, ContributorPool, MonthlyTrajectory, ProjectDataset, Schema};

const PROB_TOLERANCE: f64 = 1e-12;
const WEIGHT_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("at least two bins are required, got {0}")]
    InvalidBinCount(usize),
    #[error("need at least 2 contributor-months to bin, got {0}")]
    TooFewSamples(usize),
    #[error("dimension index {0} out of range")]
    DimensionOutOfRange(usize),
    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("parent map has a cycle through `{0}`")]
    CyclicParents(ActionKind),
    #[error("`{0}` is not in the schema")]
    UnknownDimension(ActionKind),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> MetricError {
    MetricError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Entropy in bits of a probability vector; zero entries contribute nothing.
pub fn entropy_bits(probabilities: &[f64]) -> f64 {
    -probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

fn check_probabilities(p: &[f64]) -> Result<(), MetricError> {
    if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(MetricError::InvalidDistribution("negative or non-finite mass".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(MetricError::InvalidDistribution(format!("total mass {total}")));
    }
    Ok(())
}

/// Empirical distribution over quantile bins of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDistribution {
    /// Lower thresholds of bins `1..`; bin 0 holds everything below the first edge.
    bin_edges: Vec<f64>,
    probabilities: Vec<f64>,
}

impl BinnedDistribution {
    pub fn new(bin_edges: Vec<f64>, probabilities: Vec<f64>) -> Result<Self, MetricError> {
        if probabilities.len() != bin_edges.len() + 1 {
            return Err(MetricError::InvalidDistribution(format!(
                "{} edges need {} probabilities, got {}",
                bin_edges.len(),
                bin_edges.len() + 1,
                probabilities.len()
            )));
        }
        if bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MetricError::InvalidDistribution("edges must be strictly ascending".into()));
        }
        check_probabilities(&probabilities)?;
        Ok(BinnedDistribution {
            bin_edges,
            probabilities,
        })
    }

    /// A distribution over `probabilities.len()` anonymous bins.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self, MetricError> {
        let edges = (1..probabilities.len()).map(|i| i as f64).collect();
        Self::new(edges, probabilities)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn num_bins(&self) -> usize {
        self.probabilities.len()
    }
}

/// Joint distribution over (x-bin, y-bin) pairs, rows indexed by x.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBinnedDistribution {
    probabilities: Vec<Vec<f64>>,
}

impl JointBinnedDistribution {
    pub fn new(probabilities: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let cols = probabilities.first().map_or(0, Vec::len);
        if cols == 0 || probabilities.iter().any(|r| r.len() != cols) {
            return Err(MetricError::InvalidDistribution("ragged or empty joint table".into()));
        }
        let flat: Vec<f64> = probabilities.iter().flatten().copied().collect();
        check_probabilities(&flat)?;
        Ok(JointBinnedDistribution { probabilities })
    }

    /// Normalizes a table of co-occurrence counts.
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self, MetricError> {
        let total: u64 = counts.iter().flatten().sum();
        if total == 0 {
            return Err(MetricError::InvalidDistribution("no observations".into()));
        }
        let n = total as f64;
        Self::new(
            counts
                .iter()
                .map(|row| row.iter().map(|&c| c as f64 / n).collect())
                .collect(),
        )
    }

    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.probabilities
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.probabilities.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let cols = self.probabilities[0].len();
        (0..cols)
            .map(|j| self.probabilities.iter().map(|r| r[j]).sum())
            .collect()
    }
}

pub fn shannon_entropy(dist: &BinnedDistribution) -> f64 {
    entropy_bits(&dist.probabilities)
}

/// `H(Y|X) = -Σ p(x,y) log2(p(x,y) / p(x))`.
pub fn conditional_entropy(joint: &JointBinnedDistribution) -> f64 {
    let px = joint.marginal_x();
    let mut h = 0.0;
    for (row, &p_x) in joint.probabilities.iter().zip(&px) {
        for &p_xy in row {
            if p_xy > 0.0 {
                h -= p_xy * (p_xy / p_x).log2();
            }
        }
    }
    // rounding can leave -0.0 or a few ulps below zero for deterministic tables
    h.max(0.0)
}

/// Quantile bin thresholds fitted to a sample.
///
/// Threshold `k` is the sorted sample value at position `floor(k * n / B)`;
/// duplicate thresholds and thresholds equal to the minimum are dropped, so
/// no bin is ever empty on the fitted sample. Scaling the sample by a positive
/// constant scales the thresholds and leaves membership unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBins {
    edges: Vec<f64>,
}

impl QuantileBins {
    pub fn fit(values: &[f64], bins: usize) -> Result<Self, MetricError> {
        if bins < 2 {
            return Err(MetricError::InvalidBinCount(bins));
        }
        if values.len() < 2 {
            return Err(MetricError::TooFewSamples(values.len()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let min = sorted[0];
        let mut edges: Vec<f64> = (1..bins).map(|k| sorted[k * n / bins]).collect();
        edges.dedup();
        edges.retain(|&e| e > min);
        Ok(QuantileBins { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn assign(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e <= value)
    }
}

fn dimension_values(dataset: &ProjectDataset, dim: usize) -> Result<Vec<f64>, MetricError> {
    if dim >= dataset.schema.len() {
        return Err(MetricError::DimensionOutOfRange(dim));
    }
    Ok(dataset
        .trajectories
        .iter()
        .flat_map(|t| t.months.iter())
        .map(|m| f64::from(m.counts.0[dim]))
        .collect())
}

/// Quantile-binned empirical distribution of one dimension's monthly counts
/// over every contributor-month in the dataset.
pub fn bin_counts(
    dataset: &ProjectDataset,
    dim: usize,
    bins: usize,
) -> Result<BinnedDistribution, MetricError> {
    let values = dimension_values(dataset, dim)?;
    let quantizer = QuantileBins::fit(&values, bins)?;
    let mut counts = vec![0u64; quantizer.num_bins()];
    for &v in &values {
        counts[quantizer.assign(v)] += 1;
    }
    let n = values.len() as f64;
    BinnedDistribution::new(
        quantizer.edges.clone(),
        counts.iter().map(|&c| c as f64 / n).collect(),
    )
}

/// Which dimension conditions which; indexed by schema position.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentMap {
    parents: Vec<Option<usize>>,
}

impl ParentMap {
    pub fn roots(m: usize) -> Self {
        ParentMap {
            parents: vec![None; m],
        }
    }

    pub fn new(parents: Vec<Option<usize>>) -> Result<Self, MetricError> {
        let m = parents.len();
        if let Some(&bad) = parents.iter().flatten().find(|&&p| p >= m) {
            return Err(MetricError::DimensionOutOfRange(bad));
        }
        let map = ParentMap { parents };
        map.check_acyclic(None)?;
        Ok(map)
    }

    /// Builds from named pairs `child -> parent`; both must be in the schema.
    pub fn from_names(
        schema: &Schema,
        pairs: &BTreeMap<ActionKind, ActionKind>,
    ) -> Result<Self, MetricError> {
        let mut parents = vec![None; schema.len()];
        for (&child, &parent) in pairs {
            let c = schema.index_of(child).ok_or(MetricError::UnknownDimension(child))?;
            let p = schema.index_of(parent).ok_or(MetricError::UnknownDimension(parent))?;
            parents[c] = Some(p);
        }
        let map = ParentMap { parents };
        map.check_acyclic(Some(schema))?;
        Ok(map)
    }

    /// issue_comment, close_issue → open_issue; pr_comment, merge_pr → open_pr.
    /// Pairs whose dimensions are missing from the schema are left out.
    pub fn default_for(schema: &Schema) -> Self {
        let mut pairs = BTreeMap::new();
        for (child, parent) in default_parent_pairs() {
            if schema.index_of(child).is_some() && schema.index_of(parent).is_some() {
                pairs.insert(child, parent);
            }
        }
        Self::from_names(schema, &pairs).expect("default parent map is acyclic")
    }

    /// Reads `{"child": "parent", ...}`.
    pub fn load(path: impl AsRef<Path>, schema: &Schema) -> Result<Self, MetricError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let pairs: BTreeMap<ActionKind, ActionKind> = serde_json::from_str(&text)?;
        Self::from_names(schema, &pairs)
    }

    pub fn parent(&self, dim: usize) -> Option<usize> {
        self.parents[dim]
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    fn check_acyclic(&self, schema: Option<&Schema>) -> Result<(), MetricError> {
        let m = self.parents.len();
        for start in 0..m {
            let mut cur = start;
            for _ in 0..=m {
                match self.parents[cur] {
                    Some(p) if p == start => {
                        let kind = schema.map_or(ActionKind::ALL[0], |s| s.dims()[start]);
                        return Err(MetricError::CyclicParents(kind));
                    }
                    Some(p) => cur = p,
                    None => break,
                }
            }
        }
        Ok(())
    }
}

pub fn default_parent_pairs() -> [(ActionKind, ActionKind); 4] {
    [
        (ActionKind::IssueComment, ActionKind::OpenIssue),
        (ActionKind::CloseIssue, ActionKind::OpenIssue),
        (ActionKind::PrComment, ActionKind::OpenPr),
        (ActionKind::MergePr, ActionKind::OpenPr),
    ]
}

/// Normalized per-dimension importance weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, MetricError> {
        if weights.is_empty() {
            return Err(MetricError::InvalidWeights("empty".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w <= 1.0)) {
            return Err(MetricError::InvalidWeights("entries must lie in [0, 1]".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(MetricError::InvalidWeights(format!("sum is {total}")));
        }
        Ok(WeightVector(weights))
    }

    pub fn uniform(m: usize) -> Self {
        WeightVector(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `W · x` for a real-valued vector of the same length.
    pub fn dot(&self, x: &[f64]) -> Result<f64, MetricError> {
        if x.len() != self.0.len() {
            return Err(MetricError::LengthMismatch {
                expected: self.0.len(),
                found: x.len(),
            });
        }
        Ok(self.0.iter().zip(x).map(|(w, v)| w * v).sum())
    }
}

/// Weights plus the per-dimension entropies they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyWeights {
    pub weights: WeightVector,
    /// `H_j` in bits: conditional on the parent's bins when there is one.
    pub entropies: Vec<f64>,
    /// Bins actually used per dimension after merging.
    pub bins: Vec<usize>,
}

/// The (conditional-)entropy weight method over a dataset.
///
/// For each dimension `j`: `e_j = H_j / log2(bins_j)` (0 for a single bin),
/// `d_j = 1 - e_j`, `w_j = d_j / Σ d`. Uniform weights if every `d_j` is 0.
pub fn compute_weights(
    dataset: &ProjectDataset,
    parents: &ParentMap,
    bins: usize,
) -> Result<EntropyWeights, MetricError> {
    let m = dataset.schema.len();
    if parents.len() != m {
        return Err(MetricError::LengthMismatch {
            expected: m,
            found: parents.len(),
        });
    }
    let values: Vec<Vec<f64>> = (0..m)
        .map(|d| dimension_values(dataset, d))
        .collect::<Result<_, _>>()?;
    let quantizers: Vec<QuantileBins> = values
        .iter()
        .map(|v| QuantileBins::fit(v, bins))
        .collect::<Result<_, _>>()?;
    let assigned: Vec<Vec<usize>> = values
        .iter()
        .zip(&quantizers)
        .map(|(v, q)| v.iter().map(|&x| q.assign(x)).collect())
        .collect();

    let mut entropies = Vec::with_capacity(m);
    for j in 0..m {
        let qj = &quantizers[j];
        let h = match parents.parent(j) {
            None => {
                let mut counts = vec![0u64; qj.num_bins()];
                for &b in &assigned[j] {
                    counts[b] += 1;
                }
                let n = assigned[j].len() as f64;
                entropy_bits(&counts.iter().map(|&c| c as f64 / n).collect::<Vec<_>>())
            }
            Some(p) => {
                let mut table = vec![vec![0u64; qj.num_bins()]; quantizers[p].num_bins()];
                for (&bx, &by) in assigned[p].iter().zip(&assigned[j]) {
                    table[bx][by] += 1;
                }
                conditional_entropy(&JointBinnedDistribution::from_counts(&table)?)
            }
        };
        entropies.push(h);
    }

    let divergence: Vec<f64> = entropies
        .iter()
        .zip(&quantizers)
        .map(|(&h, q)| {
            let normalized = if q.num_bins() > 1 {
                (h / (q.num_bins() as f64).log2()).clamp(0.0, 1.0)
            } else {
                0.0
            };
            1.0 - normalized
        })
        .collect();
    let total: f64 = divergence.iter().sum();
    let weights = if total > 0.0 {
        WeightVector(divergence.iter().map(|d| d / total).collect())
    } else {
        WeightVector::uniform(m)
    };

    Ok(EntropyWeights {
        weights,
        entropies,
        bins: quantizers.iter().map(QuantileBins::num_bins).collect(),
    })
}

/// `C = W · A` for one month.
pub fn contribution(weights: &WeightVector, action: &ActionVector) -> Result<f64, MetricError> {
    weights.dot(&action.as_f64())
}

/// Fills `cumulative_contribution` with prefix sums of monthly contributions.
pub fn annotate_trajectory(
    trajectory: &MonthlyTrajectory,
    weights: &WeightVector,
) -> Result<MonthlyTrajectory, MetricError> {
    let mut running = 0.0;
    let cumulative = trajectory
        .months
        .iter()
        .map(|m| {
            running += contribution(weights, &m.counts)?;
            Ok(running)
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    Ok(MonthlyTrajectory {
        cumulative_contribution: cumulative,
        ..trajectory.clone()
    })
}

pub fn annotate_pool(
    pool: &ContributorPool,
    weights: &WeightVector,
) -> Result<ContributorPool, MetricError> {
    Ok(ContributorPool {
        trajectories: pool
            .trajectories
            .iter()
            .map(|t| annotate_trajectory(t, weights))
            .collect::<Result<_, _>>()?,
        ..pool.clone()
    })
}

pub const WEIGHTS_METHOD: &str = "conditional-entropy-weight";

/// `weights.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub schema: Schema,
    pub weights: Vec<f64>,
    pub entropies: Vec<f64>,
    pub method: String,
}

impl WeightsFile {
    pub fn new(schema: &Schema, computed: &EntropyWeights) -> Self {
        WeightsFile {
            schema: schema.clone(),
            weights: computed.weights.as_slice().to_vec(),
            entropies: computed.entropies.clone(),
            method: WEIGHTS_METHOD.to_string(),
        }
    }

    pub fn weight_vector(&self) -> Result<WeightVector, MetricError> {
        if self.weights.len() != self.schema.len() {
            return Err(MetricError::LengthMismatch {
                expected: self.schema.len(),
                found: self.weights.len(),
            });
        }
        WeightVector::new(self.weights.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetricError> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| io_err(path, e))
    }
}
