//! Deterministic numeric kernels: fixed-order reduction, distances, and an
//! index-ordered parallel map.
//!
//! Floating-point addition is not associative: `(0.1 + 0.2) - 0.1` and
//! `0.1 + (0.2 - 0.1)` already differ in the last bit. A reduction whose
//! association order follows thread count therefore yields thread-dependent
//! results — the classic way a "deterministic" algorithm drifts by ~1e-14
//! between runs. The kernels here make the evaluation order a function of
//! the data shape alone: sums are chunked by a recorded constant and folded
//! left to right, squared distances accumulate in dimension order, and
//! [`parallel_map_fixed`] assigns each output slot by input index so worker
//! count can never reorder anything.
//!
//! None of this code uses `mul_add`. Rust does not contract separate
//! multiplies and adds into fused ones, so the order written below is the
//! order executed at every optimization level.

use alloc::vec::Vec;

/// Chunk length used when a caller does not pick one.
///
/// The value is arbitrary but must be recorded next to any result it
/// produced: re-summing the same data with a different chunk size is a
/// different (equally deterministic) computation.
pub const DEFAULT_CHUNK_SIZE: usize = 4096;

/// Errors from the deterministic kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetnumError {
    /// A reduction plan was requested with `chunk_size == 0`.
    ZeroChunkSize,
    /// Two vectors that must share a dimension do not.
    DimensionMismatch {
        /// Length of the left operand.
        left: usize,
        /// Length of the right operand.
        right: usize,
    },
}

impl core::fmt::Display for DetnumError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DetnumError::ZeroChunkSize => write!(f, "chunk size must be at least 1"),
            DetnumError::DimensionMismatch { left, right } => {
                write!(f, "dimension mismatch: {left} vs {right}")
            }
        }
    }
}

impl core::error::Error for DetnumError {}

/// Shape of a fixed-order reduction: how many elements, cut into chunks of
/// what size.
///
/// Chunk boundaries are a pure function of `(total_len, chunk_size)`. Thread
/// count plays no part, which is the whole point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionPlan {
    chunk_size: usize,
    total_len: usize,
}

impl ReductionPlan {
    /// Plan a reduction over `total_len` elements in chunks of `chunk_size`.
    pub fn new(total_len: usize, chunk_size: usize) -> Result<Self, DetnumError> {
        if chunk_size == 0 {
            return Err(DetnumError::ZeroChunkSize);
        }
        Ok(ReductionPlan { chunk_size, total_len })
    }

    /// Plan with [`DEFAULT_CHUNK_SIZE`].
    pub fn with_default_chunk(total_len: usize) -> Self {
        ReductionPlan { chunk_size: DEFAULT_CHUNK_SIZE, total_len }
    }

    /// Elements per chunk.
    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    /// Total number of elements the plan covers.
    pub fn total_len(&self) -> usize {
        self.total_len
    }
}

/// Sum `values` in a fixed association order: each chunk left to right in
/// element order, then the chunk partials left to right in chunk order.
///
/// The result depends on `(values, chunk_size)` and nothing else. An empty
/// slice sums to `+0.0`. "Left to right" here means a fold starting from
/// `+0.0`, the same convention as `Iterator::sum`.
///
/// # Panics
///
/// Panics if `plan.total_len()` disagrees with `values.len()`; that is a
/// caller bug, not a data condition.
pub fn fixed_sum(values: &[f64], plan: &ReductionPlan) -> f64 {
    assert_eq!(
        values.len(),
        plan.total_len(),
        "reduction plan was built for a different length"
    );
    let mut total = 0.0;
    for chunk in values.chunks(plan.chunk_size) {
        let mut partial = 0.0;
        for &v in chunk {
            partial += v;
        }
        total += partial;
    }
    total
}

/// Squared Euclidean distance, accumulated strictly in dimension order
/// `0..d`.
///
/// Each term is `(a_j - b_j) * (a_j - b_j)` added as a separate operation —
/// no fused multiply-add, no reassociation.
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> Result<f64, DetnumError> {
    if a.len() != b.len() {
        return Err(DetnumError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    Ok(sqdist(a, b))
}

/// Distance kernel for callers that have already matched dimensions
/// structurally (rows of one matrix, say). Same arithmetic as
/// [`sq_euclidean`].
pub(crate) fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc
}

/// Apply a pure function to every item, `output[i] = f(items[i])`, using up
/// to `worker_count` threads.
///
/// Work is split into contiguous index ranges, one per worker, and each
/// output lands in the slot its input index dictates. Because `f` is pure
/// and slot assignment ignores scheduling, the output is bit-identical for
/// every `worker_count >= 1`.
#[cfg(feature = "std")]
pub fn parallel_map_fixed<T, U, F>(items: &[T], worker_count: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let result: Result<Vec<U>, core::convert::Infallible> =
        try_parallel_map_fixed(items, worker_count, |item| Ok(f(item)));
    match result {
        Ok(v) => v,
        Err(e) => match e {},
    }
}

/// Sequential fallback without `std`. The threaded version above produces
/// the same bits by construction, so the two are interchangeable.
#[cfg(not(feature = "std"))]
pub fn parallel_map_fixed<T, U, F>(items: &[T], _worker_count: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    items.iter().map(f).collect()
}

/// Fallible variant of [`parallel_map_fixed`].
///
/// On failure returns the error of the *smallest failing item index*,
/// regardless of which worker hit it first in wall-clock time. Workers do
/// not race to cancel each other; purity makes the extra work harmless.
#[cfg(feature = "std")]
pub fn try_parallel_map_fixed<T, U, E, F>(
    items: &[T],
    worker_count: usize,
    f: F,
) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync,
{
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let workers = worker_count.max(1).min(items.len());
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk_len = items.len().div_ceil(workers);

    // One contiguous range per worker; worker w fills indices
    // [w*chunk_len, min((w+1)*chunk_len, n)). An error is tagged with its
    // global index so the smallest one wins deterministically.
    let chunk_results: Vec<Result<Vec<U>, (usize, E)>> = std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                // Both bounds clamp: the last ranges can be empty when
                // workers * chunk_len overshoots the item count.
                let start = usize::min(w * chunk_len, items.len());
                let end = usize::min(start + chunk_len, items.len());
                scope.spawn(move || {
                    let mut out = Vec::with_capacity(end - start);
                    for (i, item) in items[start..end].iter().enumerate() {
                        match f(item) {
                            Ok(v) => out.push(v),
                            Err(e) => return Err((start + i, e)),
                        }
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("parallel_map_fixed worker panicked"))
            .collect()
    });

    let mut flat = Vec::with_capacity(items.len());
    let mut first_err: Option<(usize, E)> = None;
    for result in chunk_results {
        match result {
            Ok(mut part) => flat.append(&mut part),
            Err((i, e)) => {
                if first_err.as_ref().is_none_or(|(j, _)| i < *j) {
                    first_err = Some((i, e));
                }
            }
        }
    }
    match first_err {
        Some((_, e)) => Err(e),
        None => Ok(flat),
    }
}

/// See the `std` version; without threads this is a plain short-circuiting
/// loop, which satisfies the same contract.
#[cfg(not(feature = "std"))]
pub fn try_parallel_map_fixed<T, U, E, F>(
    items: &[T],
    _worker_count: usize,
    f: F,
) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync,
{
    items.iter().map(f).collect()
}
