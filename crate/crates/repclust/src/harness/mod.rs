//! Replication harness: run configs, canonical fingerprints, NDJSON
//! records, matrix execution, and repeatability reports.
//!
//! A [`RunConfig`] names datasets and algorithms; [`run::run_matrix`]
//! executes every (dataset, algorithm, thread count, replication) cell
//! and streams self-describing [`records::Record`]s; [`report`] folds a
//! record stream into a per-facet repeatability grid.

pub mod canonical;
pub mod records;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use repclust_core::detnum::DEFAULT_CHUNK_SIZE;
use repclust_core::rng::{GeneratorState, RngError};
use serde::Deserialize;

use crate::io::{IoError, LabelColumn};
use crate::harness::records::{Algorithm, HexFloat, InitName, LabelColumnSpec, RecordError};

/// Errors from configuration handling, the run matrix, and reporting.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// The configuration is structurally valid JSON but semantically wrong.
    #[error("invalid configuration: {reason}")]
    InvalidConfig {
        /// What is wrong.
        reason: String,
    },
    /// File access failed.
    #[error("{path}")]
    Io {
        /// The file involved.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
    /// Configuration JSON failed to parse.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// Record stream reading or writing failed.
    #[error(transparent)]
    Record(#[from] RecordError),
    /// Dataset loading failed during replay.
    #[error(transparent)]
    Csv(#[from] IoError),
    /// Generator state string failed to parse.
    #[error(transparent)]
    Rng(#[from] RngError),
    /// A result record references a dataset absent from the stream.
    #[error("no dataset record named {name:?} precedes the result that uses it")]
    MissingDataset {
        /// Dataset name from the result record.
        name: String,
    },
    /// Re-executing a recorded cell failed.
    #[error("re-running {algorithm} on {dataset}: {message}")]
    Replay {
        /// Dataset name.
        dataset: String,
        /// Algorithm being replayed.
        algorithm: Algorithm,
        /// The fit error, rendered.
        message: String,
    },
    /// Scoring recorded labels against ground truth failed, which means
    /// the record stream is internally inconsistent.
    #[error("scoring {dataset}/{algorithm} against ground truth: {message}")]
    Agreement {
        /// Dataset name.
        dataset: String,
        /// Algorithm whose labels were scored.
        algorithm: Algorithm,
        /// The metric error, rendered.
        message: String,
    },
    /// Repeatability needs at least two replications to compare.
    #[error("cell {cell} has {count} replication(s); a repeatability verdict needs at least 2")]
    InsufficientReplications {
        /// The offending (dataset, algorithm, threads) cell.
        cell: String,
        /// Replications found.
        count: usize,
    },
}

/// Top-level run configuration, deserialized from JSON.
///
/// Unknown fields are rejected so typos fail loudly instead of silently
/// falling back to defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Datasets to cluster.
    pub datasets: Vec<DatasetConfig>,
    /// Algorithms to run on each dataset.
    pub algorithms: Vec<Algorithm>,
    /// Worker-thread counts to sweep; empty defers to the CLI or
    /// environment.
    #[serde(default)]
    pub thread_counts: Vec<usize>,
    /// Replications per cell.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Root seed; expanded to a generator state.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Full generator state as `key:counter` hex, overriding `seed`.
    #[serde(default)]
    pub state: Option<String>,
    /// Reduction chunk size for fixed-order summation.
    #[serde(default = "default_chunk_size")]
    pub chunk_size: usize,
    /// K-Means parameter overrides.
    #[serde(default)]
    pub kmeans: Option<KmeansConfig>,
    /// DBSCAN parameters, overridable per dataset.
    #[serde(default)]
    pub dbscan: Option<DbscanConfig>,
    /// Ward parameter overrides.
    #[serde(default)]
    pub ward: Option<WardConfig>,
    /// Measure RAPL energy around each fit when available.
    #[serde(default)]
    pub energy: bool,
    /// Optional single-bit fault injection, for validating that the
    /// harness actually detects non-repeatability.
    #[serde(default)]
    pub fault: Option<FaultConfig>,
}

fn default_replications() -> usize {
    30
}

fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}

fn default_true() -> bool {
    true
}

/// One dataset: either a CSV file or synthetic blobs, never both.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Display name; defaults to the file stem or a blob-derived name.
    #[serde(default)]
    pub name: Option<String>,
    /// CSV file to load.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Ground-truth column in the CSV, by header name or zero-based index.
    #[serde(default)]
    pub label_column: Option<LabelColumnSpec>,
    /// Synthetic Gaussian blobs to generate.
    #[serde(default)]
    pub blobs: Option<BlobConfig>,
    /// Min-max scale features to [0, 1] before clustering.
    #[serde(default = "default_true")]
    pub minmax: bool,
    /// Per-dataset DBSCAN override (eps is scale-dependent).
    #[serde(default)]
    pub dbscan: Option<DbscanConfig>,
}

impl From<&LabelColumnSpec> for LabelColumn {
    fn from(spec: &LabelColumnSpec) -> Self {
        match spec {
            LabelColumnSpec::Index(i) => LabelColumn::Index(*i),
            LabelColumnSpec::Name(n) => LabelColumn::Name(n.clone()),
        }
    }
}

/// Synthetic blob generation parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobConfig {
    /// Points to draw.
    pub n_samples: usize,
    /// Dimensions.
    pub n_features: usize,
    /// Number of blob centers.
    pub centers: usize,
    /// Per-coordinate standard deviation; a JSON number or an exact
    /// 16-digit hex bit pattern.
    pub cluster_std: HexFloat,
}

/// K-Means overrides; unset fields take protocol defaults at run time.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmeansConfig {
    /// Cluster count; defaults to the dataset's ground-truth class count.
    #[serde(default)]
    pub k: Option<usize>,
    /// Restarts; defaults to 5.
    #[serde(default)]
    pub n_init: Option<usize>,
    /// Iteration cap per restart; defaults to 300.
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Center initialization; defaults to `random-points`.
    #[serde(default)]
    pub init: Option<InitName>,
}

/// DBSCAN parameters; `eps` has no sensible global default and must come
/// from the config or a per-dataset override.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbscanConfig {
    /// Neighborhood radius; a JSON number or exact hex bit pattern.
    #[serde(default)]
    pub eps: Option<HexFloat>,
    /// Core-point threshold; defaults to twice the feature count.
    #[serde(default)]
    pub min_samples: Option<usize>,
}

/// Ward overrides.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WardConfig {
    /// Cut level for flat labels; defaults to the ground-truth class count.
    #[serde(default)]
    pub n_clusters: Option<usize>,
}

/// Injects a one-ulp perturbation into a single inertia reduction term
/// (the largest one; ties go to the smallest index).
///
/// Whether the wiggle survives depends on the data: a term far below the
/// total is absorbed by the reduction's own rounding. To demonstrate a
/// guaranteed flag, run an instance whose largest squared distance
/// exceeds half the inertia.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    /// Zero-based replication to perturb; all others run clean.
    pub replication: usize,
}

impl RunConfig {
    /// Read and validate a configuration file.
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    /// Check cross-field constraints that the type system cannot.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |reason: String| Err(HarnessError::InvalidConfig { reason });
        if self.datasets.is_empty() {
            return invalid("no datasets".into());
        }
        if self.algorithms.is_empty() {
            return invalid("no algorithms".into());
        }
        if self.replications < 2 {
            return invalid(format!(
                "replications = {}; repeatability needs at least 2",
                self.replications
            ));
        }
        if self.chunk_size == 0 {
            return invalid("chunk_size must be at least 1".into());
        }
        if self.thread_counts.contains(&0) {
            return invalid("thread_counts entries must be at least 1".into());
        }
        if self.seed.is_some() && self.state.is_some() {
            return invalid("seed and state are mutually exclusive".into());
        }
        if let Some(fault) = &self.fault {
            if fault.replication >= self.replications {
                return invalid(format!(
                    "fault.replication = {} but only {} replications run",
                    fault.replication, self.replications
                ));
            }
        }
        for (i, dataset) in self.datasets.iter().enumerate() {
            match (&dataset.csv, &dataset.blobs) {
                (Some(_), Some(_)) => {
                    return invalid(format!("dataset {i} sets both csv and blobs"));
                }
                (None, None) => {
                    return invalid(format!("dataset {i} sets neither csv nor blobs"));
                }
                _ => {}
            }
            if dataset.label_column.is_some() && dataset.csv.is_none() {
                return invalid(format!("dataset {i} sets label_column without csv"));
            }
        }
        Ok(())
    }

    /// The root generator state: explicit `state`, expanded `seed`, or the
    /// fixed default seed 42.
    pub fn root_state(&self) -> Result<GeneratorState, HarnessError> {
        if let Some(hex) = &self.state {
            return Ok(GeneratorState::from_hex(hex)?);
        }
        Ok(GeneratorState::from_seed(self.seed.unwrap_or(42)))
    }
}
