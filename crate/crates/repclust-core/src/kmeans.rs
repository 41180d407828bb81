//! Lloyd's K-Means with every source of run-to-run variation pinned.
//!
//! The four usual leak points are closed explicitly:
//!
//! * initialization draws come from a counter-based substream per restart,
//!   so restart `r` sees the same randomness no matter what ran before it;
//! * assignment ties go to the smallest center index, scanned `0..k`;
//! * center updates sum member coordinates in point-index order through
//!   [`fixed_sum`], then divide by the member count;
//! * the final inertia is one fixed-order reduction over per-point terms,
//!   computed once after convergence.
//!
//! Parallelism exists only in the assignment step, which maps a pure
//! function over points; [`parallel_map_fixed`] guarantees the output is
//! identical for every worker count.

use alloc::vec::Vec;
use core::fmt;

use crate::data::{Dataset, Matrix};
use crate::detnum::{fixed_sum, parallel_map_fixed, sqdist, ReductionPlan, DEFAULT_CHUNK_SIZE};
use crate::metrics;
use crate::rng::{purpose, GeneratorState, RngError};

/// How initial centers are chosen within each restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    /// K distinct data points, drawn uniformly. The default.
    RandomPoints,
    /// D²-weighted sampling: each new center is drawn with probability
    /// proportional to the squared distance to the nearest chosen center,
    /// accumulated in point-index order.
    KMeansPlusPlus,
}

/// Tuning for [`fit`]. `new` fills in the conventional defaults; fields
/// are public so callers can override any of them directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    /// Number of clusters.
    pub k: usize,
    /// Independent random restarts; the restart with minimal inertia wins.
    pub n_init: usize,
    /// Iteration cap per restart.
    pub max_iter: usize,
    /// Center initialization scheme.
    pub init_method: InitMethod,
    /// Root generator state; restart `r` derives its own substream from it.
    pub state: GeneratorState,
    /// Chunk size for the fixed-order reductions (center sums, inertia).
    pub chunk_size: usize,
}

impl KMeansParams {
    /// Parameters with defaults: one restart, 300 iterations max, random
    /// data points as initial centers, the default reduction chunk size.
    pub fn new(k: usize, state: GeneratorState) -> Self {
        KMeansParams {
            k,
            n_init: 1,
            max_iter: 300,
            init_method: InitMethod::RandomPoints,
            state,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

/// Outcome of [`fit`]: the winning restart's model plus enough metadata to
/// replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Final centers, one row per cluster.
    pub centers: Matrix,
    /// Cluster index per point.
    pub labels: Vec<usize>,
    /// Sum of squared point-to-center distances, one fixed-order reduction.
    pub inertia: f64,
    /// Which restart won (ties on inertia bits go to the smallest index).
    pub best_init_index: usize,
    /// Iterations the winning restart ran before labels stabilized.
    pub n_iter: usize,
    /// The exact parameters used, including the root generator state;
    /// feeding these back into [`fit`] reproduces this result bitwise.
    pub params: KMeansParams,
}

/// Errors from K-Means fitting.
#[derive(Debug, Clone, PartialEq)]
pub enum KMeansError {
    /// A parameter failed validation (named field must be ≥ 1).
    InvalidParams {
        /// Which field.
        field: &'static str,
    },
    /// More clusters than points.
    TooManyClusters {
        /// Requested clusters.
        k: usize,
        /// Available points.
        n: usize,
    },
    /// Empty-cluster repair ran out of points to promote; only possible
    /// when there are more empty clusters than data points.
    RepairImpossible {
        /// Clusters needing a point.
        empty_clusters: usize,
        /// Points available.
        points: usize,
    },
    /// Substream derivation failed.
    Rng(RngError),
}

impl fmt::Display for KMeansError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KMeansError::InvalidParams { field } => write!(f, "parameter {field} must be >= 1"),
            KMeansError::TooManyClusters { k, n } => {
                write!(f, "cannot fit {k} clusters to {n} points")
            }
            KMeansError::RepairImpossible { empty_clusters, points } => {
                write!(f, "{empty_clusters} empty clusters but only {points} points to promote")
            }
            KMeansError::Rng(e) => write!(f, "generator error: {e}"),
        }
    }
}

impl core::error::Error for KMeansError {}

impl From<RngError> for KMeansError {
    fn from(e: RngError) -> Self {
        KMeansError::Rng(e)
    }
}

/// Assign each point to its nearest center by squared Euclidean distance.
///
/// Candidates are scanned in center order `0..k` and only a strictly
/// smaller distance displaces the current best, so bitwise-equal distances
/// resolve to the smallest center index. The scan is a pure function of
/// `(point, centers)`, which is what makes parallelizing over points safe.
pub fn assign(points: &Matrix, centers: &Matrix, worker_count: usize) -> Vec<usize> {
    assert!(centers.n_rows() > 0, "at least one center");
    assert_eq!(points.n_cols(), centers.n_cols(), "points and centers must share dimensions");
    let rows: Vec<&[f64]> = points.rows().collect();
    parallel_map_fixed(&rows, worker_count, |row| {
        let mut best_label = 0usize;
        let mut best_dist = sqdist(row, centers.row(0));
        for k in 1..centers.n_rows() {
            let d = sqdist(row, centers.row(k));
            if d < best_dist {
                best_dist = d;
                best_label = k;
            }
        }
        best_label
    })
}

/// Recompute each center as the mean of its members.
///
/// Member coordinates are summed in point-index order per dimension via
/// [`fixed_sum`], then divided by the member count. A cluster with no
/// members keeps its row from `prev_centers` bitwise and is flagged so the
/// caller can invoke [`repair_empty`].
pub fn update(
    points: &Matrix,
    labels: &[usize],
    k: usize,
    prev_centers: &Matrix,
    chunk_size: usize,
) -> (Matrix, Vec<bool>) {
    assert_eq!(labels.len(), points.n_rows(), "one label per point");
    assert_eq!(prev_centers.n_rows(), k, "previous centers must have k rows");
    let d = points.n_cols();

    // Member coordinates per (cluster, dimension), gathered in point-index
    // order so the fixed-order sum sees a pinned sequence.
    let mut coords: Vec<Vec<f64>> = alloc::vec![Vec::new(); k * d];
    for (row, &label) in points.rows().zip(labels) {
        assert!(label < k, "label out of range");
        for (j, &v) in row.iter().enumerate() {
            coords[label * d + j].push(v);
        }
    }

    let mut centers = prev_centers.clone();
    let mut empty_flags = alloc::vec![false; k];
    for cluster in 0..k {
        let count = coords[cluster * d].len();
        if count == 0 {
            empty_flags[cluster] = true;
            continue;
        }
        let plan = ReductionPlan::new(count, chunk_size).expect("chunk size validated upstream");
        let mut row = alloc::vec![0.0f64; d];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = fixed_sum(&coords[cluster * d + j], &plan) / count as f64;
        }
        centers.set_row(cluster, &row);
    }
    (centers, empty_flags)
}

/// Give each empty cluster a point of its own.
///
/// Empty clusters are processed in ascending cluster index. Each takes the
/// point with the greatest squared distance to its currently assigned
/// center — ties to the smallest point index — excluding points already
/// promoted in this round. The point's label switches to the repaired
/// cluster and the cluster's center becomes that point, so repaired
/// clusters are non-empty by construction and total inertia can only drop.
pub fn repair_empty(
    points: &Matrix,
    mut labels: Vec<usize>,
    mut centers: Matrix,
    empty_flags: &[bool],
) -> Result<(Vec<usize>, Matrix), KMeansError> {
    let n = points.n_rows();
    let mut promoted = alloc::vec![false; n];
    for cluster in 0..empty_flags.len() {
        if !empty_flags[cluster] {
            continue;
        }
        let mut best: Option<usize> = None;
        let mut best_dist = -1.0f64;
        for i in 0..n {
            if promoted[i] {
                continue;
            }
            let d = sqdist(points.row(i), centers.row(labels[i]));
            if d > best_dist {
                best_dist = d;
                best = Some(i);
            }
        }
        let chosen = best.ok_or(KMeansError::RepairImpossible {
            empty_clusters: empty_flags.iter().filter(|&&e| e).count(),
            points: n,
        })?;
        promoted[chosen] = true;
        labels[chosen] = cluster;
        centers.set_row(cluster, points.row(chosen));
    }
    Ok((labels, centers))
}

fn init_centers(
    points: &Matrix,
    k: usize,
    method: InitMethod,
    state: GeneratorState,
) -> Result<Matrix, KMeansError> {
    let n = points.n_rows();
    let d = points.n_cols();
    match method {
        InitMethod::RandomPoints => {
            let (indices, _) = state.uniform_indices(n, k)?;
            let mut values = Vec::with_capacity(k * d);
            for &i in &indices {
                values.extend_from_slice(points.row(i));
            }
            Ok(Matrix::new(k, d, values).expect("shape"))
        }
        InitMethod::KMeansPlusPlus => {
            let mut state = state;
            let mut chosen = Vec::with_capacity(k);
            let (first, next) = state.next_below(n as u64);
            state = next;
            chosen.push(first as usize);

            // Squared distance from each point to its nearest chosen
            // center, maintained incrementally.
            let mut d2: Vec<f64> = (0..n)
                .map(|i| sqdist(points.row(i), points.row(first as usize)))
                .collect();

            while chosen.len() < k {
                // Plain left-to-right fold, deliberately not chunked: the
                // selection walk below accumulates the same prefix sums one
                // term at a time, and the two orders must agree exactly so
                // the walk always reaches `target` before running out.
                let total = d2.iter().fold(0.0f64, |acc, &v| acc + v);
                let pick = if total > 0.0 {
                    let (u, next) = state.next_f64();
                    state = next;
                    let target = u * total;
                    let mut cum = 0.0f64;
                    let mut fallback = None;
                    let mut selected = None;
                    for (i, &w) in d2.iter().enumerate() {
                        cum += w;
                        if w > 0.0 {
                            fallback = Some(i);
                            if cum >= target {
                                selected = Some(i);
                                break;
                            }
                        }
                    }
                    selected.or(fallback).expect("total > 0 implies a positive weight")
                } else {
                    // Every remaining point coincides with a chosen center;
                    // take the smallest index not yet chosen.
                    (0..n).find(|i| !chosen.contains(i)).ok_or(
                        KMeansError::TooManyClusters { k, n },
                    )?
                };
                chosen.push(pick);
                for i in 0..n {
                    let dn = sqdist(points.row(i), points.row(pick));
                    if dn < d2[i] {
                        d2[i] = dn;
                    }
                }
            }

            let mut values = Vec::with_capacity(k * d);
            for &i in &chosen {
                values.extend_from_slice(points.row(i));
            }
            Ok(Matrix::new(k, d, values).expect("shape"))
        }
    }
}

struct RestartOutcome {
    centers: Matrix,
    labels: Vec<usize>,
    inertia: f64,
    n_iter: usize,
}

fn lloyd_restart(
    points: &Matrix,
    params: &KMeansParams,
    restart: u64,
    worker_count: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<RestartOutcome, KMeansError> {
    let init_state = params.state.substream(purpose::KMEANS_INIT, restart)?;
    let mut centers = init_centers(points, params.k, params.init_method, init_state)?;
    let mut previous_labels: Option<Vec<usize>> = None;
    let mut labels = Vec::new();
    let mut n_iter = params.max_iter;

    for iteration in 1..=params.max_iter {
        labels = assign(points, &centers, worker_count);
        let (updated, empty_flags) =
            update(points, &labels, params.k, &centers, params.chunk_size);
        centers = updated;
        if empty_flags.iter().any(|&e| e) {
            let (repaired_labels, repaired_centers) =
                repair_empty(points, labels, centers, &empty_flags)?;
            labels = repaired_labels;
            centers = repaired_centers;
        }
        if let Some(log) = trace.as_deref_mut() {
            log.push(metrics::inertia(points, &centers, &labels, params.chunk_size));
        }
        if previous_labels.as_deref() == Some(&labels) {
            n_iter = iteration;
            break;
        }
        previous_labels = Some(labels.clone());
    }

    let inertia = metrics::inertia(points, &centers, &labels, params.chunk_size);
    Ok(RestartOutcome { centers, labels, inertia, n_iter })
}

fn fit_inner(
    data: &Dataset,
    params: &KMeansParams,
    worker_count: usize,
    mut traces: Option<&mut Vec<Vec<f64>>>,
) -> Result<KMeansResult, KMeansError> {
    if params.k == 0 {
        return Err(KMeansError::InvalidParams { field: "k" });
    }
    if params.n_init == 0 {
        return Err(KMeansError::InvalidParams { field: "n_init" });
    }
    if params.max_iter == 0 {
        return Err(KMeansError::InvalidParams { field: "max_iter" });
    }
    if params.chunk_size == 0 {
        return Err(KMeansError::InvalidParams { field: "chunk_size" });
    }
    let points = data.points();
    if params.k > points.n_rows() {
        return Err(KMeansError::TooManyClusters { k: params.k, n: points.n_rows() });
    }

    let mut best: Option<(RestartOutcome, usize)> = None;
    for restart in 0..params.n_init {
        let mut trace = traces.as_deref_mut().map(|_| Vec::new());
        let outcome =
            lloyd_restart(points, params, restart as u64, worker_count, trace.as_mut())?;
        if let Some(all) = traces.as_deref_mut() {
            all.push(trace.expect("trace allocated when tracing"));
        }
        // Strictly-smaller keeps the earliest restart on exact ties.
        let improves = best.as_ref().is_none_or(|(b, _)| outcome.inertia < b.inertia);
        if improves {
            best = Some((outcome, restart));
        }
    }
    let (winner, best_init_index) = best.expect("n_init >= 1 validated above");
    Ok(KMeansResult {
        centers: winner.centers,
        labels: winner.labels,
        inertia: winner.inertia,
        best_init_index,
        n_iter: winner.n_iter,
        params: *params,
    })
}

/// Run K-Means: `n_init` restarts of Lloyd's alternation, keeping the
/// restart with minimal inertia.
///
/// Within a restart, iterations alternate [`assign`] and [`update`] (plus
/// [`repair_empty`] when a cluster empties) until the labels repeat between
/// consecutive iterations or `max_iter` is hit. The result is bitwise
/// identical for every `worker_count` and every rerun with equal params.
pub fn fit(
    data: &Dataset,
    params: &KMeansParams,
    worker_count: usize,
) -> Result<KMeansResult, KMeansError> {
    fit_inner(data, params, worker_count, None)
}

/// Like [`fit`], but also returns the post-iteration inertia sequence of
/// every restart (outer index: restart). Useful for checking that the
/// objective never increases; costs one extra reduction per iteration.
pub fn fit_traced(
    data: &Dataset,
    params: &KMeansParams,
    worker_count: usize,
) -> Result<(KMeansResult, Vec<Vec<f64>>), KMeansError> {
    let mut traces = Vec::new();
    let result = fit_inner(data, params, worker_count, Some(&mut traces))?;
    Ok((result, traces))
}
