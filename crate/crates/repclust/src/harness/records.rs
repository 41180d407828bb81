//! The NDJSON records file: one self-describing JSON object per line.
//!
//! Records are the only thing a report reads, so each one carries
//! everything needed to interpret — and re-execute — it: full resolved
//! parameters, the generator state, the chunk size, and the artifact
//! version. Floats are serialized as 16-digit hex bit patterns rather
//! than decimal, because the entire point of the file is bit-level
//! comparison and decimal round-trips invite doubt.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::energy::EnergySample;

/// An `f64` carried as its exact bit pattern.
///
/// Serializes as 16 lowercase hex digits (`3fc999999999999a`); accepts
/// either that or a plain JSON number on input, so hand-written configs
/// can say `0.6` while machine-written records stay exact. Equality and
/// ordering are on bits, which keeps `NaN`s comparable and distinguishes
/// `-0.0` from `0.0`.
#[derive(Debug, Clone, Copy)]
pub struct HexFloat(pub f64);

impl PartialEq for HexFloat {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for HexFloat {}

impl fmt::Display for HexFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0.to_bits())
    }
}

impl Serialize for HexFloat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("{:016x}", self.0.to_bits()))
    }
}

impl<'de> Deserialize<'de> for HexFloat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Hex(String),
            Number(f64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(HexFloat(v)),
            Repr::Hex(s) => {
                if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(D::Error::custom(format!(
                        "expected 16 hex digits or a number, got {s:?}"
                    )));
                }
                let bits = u64::from_str_radix(&s, 16).map_err(D::Error::custom)?;
                Ok(HexFloat(f64::from_bits(bits)))
            }
        }
    }
}

/// The algorithms the harness can run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Lloyd's K-Means.
    Kmeans,
    /// Density clustering.
    Dbscan,
    /// Agglomerative merge tree.
    Ward,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::Dbscan => "dbscan",
            Algorithm::Ward => "ward",
        })
    }
}

/// Center initialization scheme, by config-file name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitName {
    /// Uniformly drawn distinct data points.
    #[serde(rename = "random-points")]
    RandomPoints,
    /// Distance-weighted seeding.
    #[serde(rename = "kmeans++")]
    KMeansPlusPlus,
}

/// Resolved hyperparameters echoed into each result record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgoParams {
    /// K-Means settings.
    Kmeans {
        /// Cluster count.
        k: usize,
        /// Random restarts.
        n_init: usize,
        /// Iteration cap.
        max_iter: usize,
        /// Initialization scheme.
        init: InitName,
    },
    /// DBSCAN settings.
    Dbscan {
        /// Neighborhood radius.
        eps: HexFloat,
        /// Core threshold (self included).
        min_samples: usize,
    },
    /// Merge-tree settings.
    Ward {
        /// Flat cut size for the labels facet.
        n_clusters: usize,
    },
}

/// CSV ground-truth column selector: a JSON string means a header name,
/// an integer means a zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumnSpec {
    /// Zero-based column position.
    Index(usize),
    /// Header name.
    Name(String),
}

/// How a dataset came to be, with enough detail to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Loaded from a CSV file.
    Csv {
        /// The path as given in the config.
        path: String,
        /// Ground-truth column, if one was named.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<LabelColumnSpec>,
    },
    /// Generated Gaussian blobs.
    Blobs {
        /// Total points.
        n_samples: usize,
        /// Dimensions.
        n_features: usize,
        /// Blob count.
        centers: usize,
        /// Per-blob standard deviation.
        cluster_std: HexFloat,
        /// Generator state the blobs were drawn from (`key:counter` hex).
        state: String,
    },
}

/// Describes one dataset of a run; written once, before its result rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// Name the result records refer to.
    pub name: String,
    /// Rows.
    pub n_samples: usize,
    /// Columns.
    pub n_features: usize,
    /// Whether min-max scaling was applied before clustering.
    pub scaled: bool,
    /// Provenance, sufficient to rebuild the exact points.
    pub source: DataSource,
    /// Ground-truth labels, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<i64>>,
}

/// One clustering execution: a single (dataset, algorithm, thread count,
/// replication) cell of the run matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// Version of this crate that produced the record.
    pub artifact_version: String,
    /// Dataset name (a `DatasetRecord` earlier in the file).
    pub dataset: String,
    /// Algorithm that ran.
    pub algorithm: Algorithm,
    /// Worker threads the algorithm was allowed.
    pub thread_count: usize,
    /// Replication index within the cell.
    pub replication: usize,
    /// Root generator state (`key:counter` hex) — identical for every
    /// replication of a cell, by design.
    pub generator_state: String,
    /// Reduction chunk size in effect.
    pub chunk_size: usize,
    /// Resolved hyperparameters.
    pub params: AlgoParams,
    /// Facet tag → SHA-256 hex of the facet's canonical bytes.
    pub fingerprints: BTreeMap<String, String>,
    /// Wall-clock duration of the fit call alone, in nanoseconds.
    pub duration_ns: u64,
    /// Energy samples bracketing the fit, when measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<Vec<EnergySample>>,
    /// Why energy is absent, when it was requested but unavailable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_note: Option<String>,
    /// True when the fault hook perturbed this replication's inertia.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fault_injected: bool,
    /// Flat labels, kept on replication 0 only (for agreement scoring).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    /// Final objective (K-Means only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<HexFloat>,
    /// Iterations of the winning restart (K-Means only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_iter: Option<u64>,
    /// Winning restart index (K-Means only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_init: Option<u64>,
}

/// A failure that consumed a cell or a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    /// Dataset involved, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Algorithm involved, when the failure was per-cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    /// Human-readable cause.
    pub message: String,
}

/// One line of the records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    /// Dataset descriptor.
    Dataset(DatasetRecord),
    /// Completed execution.
    Result(ResultRecord),
    /// Recorded failure.
    Error(ErrorRecord),
}

/// Errors from reading a records file.
#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    /// Line could not be read.
    #[error("reading records: {0}")]
    Io(#[from] std::io::Error),
    /// Line held invalid JSON or an unknown record shape.
    #[error("records line {line}: {source}")]
    Malformed {
        /// 1-based line number.
        line: usize,
        /// Parser error.
        source: serde_json::Error,
    },
}

/// Append one record as a JSON line and flush, so a crashed run keeps
/// every completed record.
pub fn write_record<W: Write>(out: &mut W, record: &Record) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Read a whole records file; blank lines are skipped.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<Record>, RecordError> {
    let mut records = Vec::new();
    for (index, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|source| RecordError::Malformed { line: index + 1, source })?;
        records.push(record);
    }
    Ok(records)
}
