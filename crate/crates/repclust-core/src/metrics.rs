//! Clustering quality measures: within-cluster inertia and the adjusted
//! Rand index.
//!
//! Inertia goes through [`fixed_sum`] so the reported value is a pure
//! function of the points, centers and labels — independent of how the
//! terms were produced. The adjusted Rand index is computed in exact
//! integer arithmetic (`i128`) and rounded to `f64` only at the final
//! division, so equal partitions compare bitwise equal across platforms.

use alloc::vec::Vec;
use core::fmt;

use crate::data::Matrix;
use crate::detnum::{fixed_sum, sqdist, ReductionPlan};

/// Errors from label comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    /// The two labelings cover different numbers of points.
    LengthMismatch {
        /// Length of the first labeling.
        left: usize,
        /// Length of the second labeling.
        right: usize,
    },
    /// No points to compare.
    EmptyLabels,
    /// A pair count exceeded the exact integer range. Unreachable below
    /// roughly 10^18 points, but checked arithmetic keeps it explicit.
    CombinatoricsOverflow,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LengthMismatch { left, right } => {
                write!(f, "labelings have different lengths: {left} vs {right}")
            }
            MetricsError::EmptyLabels => write!(f, "labelings are empty"),
            MetricsError::CombinatoricsOverflow => {
                write!(f, "pair counts exceed exact integer range")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

/// Sum of squared distances from each point to its assigned center.
///
/// The per-point terms are accumulated in point-index order through a
/// [`ReductionPlan`] with the given chunk size, so the result depends only
/// on the inputs, never on any parallel schedule that produced the labels.
///
/// Panics if a label is out of range for `centers` or the dimensions
/// disagree; callers pass outputs of the fitting routines, which uphold
/// both by construction.
pub fn inertia(points: &Matrix, centers: &Matrix, labels: &[usize], chunk_size: usize) -> f64 {
    assert_eq!(labels.len(), points.n_rows(), "one label per point");
    assert_eq!(points.n_cols(), centers.n_cols(), "points and centers must share dimensions");
    let terms: Vec<f64> = points
        .rows()
        .zip(labels)
        .map(|(row, &label)| sqdist(row, centers.row(label)))
        .collect();
    let plan = ReductionPlan::new(terms.len(), chunk_size).expect("chunk size validated upstream");
    fixed_sum(&terms, &plan)
}

/// Pair-count table between two labelings.
///
/// Rows follow the sorted distinct values of the first labeling, columns
/// the sorted distinct values of the second. Kept public because reports
/// print it alongside the index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    /// Cell counts, row-major.
    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Per-row totals (first labeling's class sizes).
    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    /// Per-column totals (second labeling's class sizes).
    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    /// Number of points.
    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Cross-tabulate two labelings of the same points.
pub fn contingency_table<A, B>(a: &[A], b: &[B]) -> Result<ContingencyTable, MetricsError>
where
    A: Ord + Copy,
    B: Ord + Copy,
{
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(MetricsError::EmptyLabels);
    }

    // Index classes by sorted value, so the table layout is a function of
    // the label values alone, not of point order.
    let mut row_of: alloc::collections::BTreeMap<A, usize> =
        a.iter().map(|&label| (label, 0)).collect();
    for (index, slot) in row_of.values_mut().enumerate() {
        *slot = index;
    }
    let mut col_of: alloc::collections::BTreeMap<B, usize> =
        b.iter().map(|&label| (label, 0)).collect();
    for (index, slot) in col_of.values_mut().enumerate() {
        *slot = index;
    }

    let (n_rows, n_cols) = (row_of.len(), col_of.len());
    let mut counts = alloc::vec![alloc::vec![0u64; n_cols]; n_rows];
    for (x, y) in a.iter().zip(b) {
        counts[row_of[x]][col_of[y]] += 1;
    }
    let row_sums: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> =
        (0..n_cols).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    Ok(ContingencyTable { counts, row_sums, col_sums, total: a.len() as u64 })
}

fn choose2(n: u64) -> Option<i128> {
    let n = n as i128;
    n.checked_mul(n - 1).map(|p| p / 2)
}

/// Adjusted Rand index between two labelings.
///
/// All pair counts stay in `i128`; the only floating-point work is one
/// division at the end. To avoid the usual `n choose 2` denominator in
/// intermediate expectations, both numerator and denominator are scaled by
/// `2 * (n choose 2)`:
///
/// ```text
///       2 * (C(n,2) * sum_ij C(n_ij,2)  -  sum_i C(a_i,2) * sum_j C(b_j,2))
/// ARI = ----------------------------------------------------------------
///       C(n,2) * (sum_i C(a_i,2) + sum_j C(b_j,2))  -  2 * sum_i * sum_j
/// ```
///
/// A zero denominator means both labelings are all-singletons or single-
/// cluster; they agree trivially and the index is defined as `1.0`.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> Result<f64, MetricsError>
where
    A: Ord + Copy,
    B: Ord + Copy,
{
    let table = contingency_table(a, b)?;
    let overflow = MetricsError::CombinatoricsOverflow;

    let mut index: i128 = 0;
    for row in table.counts() {
        for &cell in row {
            index = index.checked_add(choose2(cell).ok_or(overflow.clone())?).ok_or(overflow.clone())?;
        }
    }
    let mut sum_a: i128 = 0;
    for &s in table.row_sums() {
        sum_a = sum_a.checked_add(choose2(s).ok_or(overflow.clone())?).ok_or(overflow.clone())?;
    }
    let mut sum_b: i128 = 0;
    for &s in table.col_sums() {
        sum_b = sum_b.checked_add(choose2(s).ok_or(overflow.clone())?).ok_or(overflow.clone())?;
    }
    let pairs = choose2(table.total()).ok_or(overflow.clone())?;

    let cross = sum_a.checked_mul(sum_b).ok_or(overflow.clone())?;
    let num = pairs
        .checked_mul(index)
        .and_then(|v| v.checked_sub(cross))
        .and_then(|v| v.checked_mul(2))
        .ok_or(overflow.clone())?;
    let den = sum_a
        .checked_add(sum_b)
        .and_then(|v| pairs.checked_mul(v))
        .and_then(|v| v.checked_sub(cross.checked_mul(2)?))
        .ok_or(overflow)?;

    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}
