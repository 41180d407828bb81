//! Agglomerative clustering that merges, at every step, the pair whose
//! combined cluster has the smallest mean squared deviation from its own
//! center.
//!
//! Note this criterion scores the merged cluster itself; it is not the
//! classical Ward ΔSSE (Lance–Williams) increase, and the two can build
//! different trees. The pair scan visits live clusters in ascending id
//! order and only a strictly smaller criterion displaces the incumbent, so
//! exact ties resolve to the lexicographically smallest `(id_a, id_b)` —
//! the whole procedure is single-threaded and replayable by construction.

use alloc::vec::Vec;
use core::fmt;

use crate::data::Dataset;

/// Errors from tree construction and flat extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WardError {
    /// Merging needs at least two points.
    TooFewPoints {
        /// Points supplied.
        n: usize,
    },
    /// Requested cluster count must satisfy `1 <= k <= n`.
    ClusterCountOutOfRange {
        /// Requested count.
        k: usize,
        /// Points in the tree.
        n: usize,
    },
}

impl fmt::Display for WardError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WardError::TooFewPoints { n } => {
                write!(f, "need at least 2 points to merge, got {n}")
            }
            WardError::ClusterCountOutOfRange { k, n } => {
                write!(f, "cluster count {k} outside 1..={n}")
            }
        }
    }
}

impl core::error::Error for WardError {}

/// Running sums for one live cluster: enough to evaluate the merge
/// criterion in O(d) without revisiting member points.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAccumulator {
    /// Cluster id: original point index for singletons, `n + step` for
    /// merge products.
    pub id: usize,
    /// Number of member points.
    pub member_count: usize,
    /// Per-dimension sum of member coordinates.
    pub coord_sum: Vec<f64>,
    /// Sum of squared norms of the members.
    pub sqnorm_sum: f64,
}

impl ClusterAccumulator {
    /// Singleton cluster holding one point.
    pub fn singleton(id: usize, point: &[f64]) -> Self {
        let sqnorm_sum = point.iter().fold(0.0f64, |acc, &v| acc + v * v);
        ClusterAccumulator {
            id,
            member_count: 1,
            coord_sum: point.to_vec(),
            sqnorm_sum,
        }
    }

    /// Mean squared deviation of the union of `self` and `other` from the
    /// union's center, via the identity
    ///
    /// ```text
    /// MSE = (sq_a + sq_b) / n  -  ‖(sum_a + sum_b) / n‖²,   n = n_a + n_b
    /// ```
    ///
    /// The two terms can nearly cancel for tight clusters far from the
    /// origin, and the rounding error then lands as a tiny negative;
    /// that gets clamped to zero, keeping the criterion a valid variance.
    pub fn merged_mse(&self, other: &Self) -> f64 {
        let count = (self.member_count + other.member_count) as f64;
        let mean_sq = (self.sqnorm_sum + other.sqnorm_sum) / count;
        let mut center_norm = 0.0f64;
        for (a, b) in self.coord_sum.iter().zip(&other.coord_sum) {
            let m = (a + b) / count;
            center_norm += m * m;
        }
        let mse = mean_sq - center_norm;
        if mse < 0.0 {
            0.0
        } else {
            mse
        }
    }

    fn merge(&self, other: &Self, id: usize) -> Self {
        let coord_sum =
            self.coord_sum.iter().zip(&other.coord_sum).map(|(a, b)| a + b).collect();
        ClusterAccumulator {
            id,
            member_count: self.member_count + other.member_count,
            coord_sum,
            sqnorm_sum: self.sqnorm_sum + other.sqnorm_sum,
        }
    }
}

/// One merge: clusters `id_a` and `id_b` (with `id_a < id_b`) joined into
/// a cluster of `merged_size` points, at the stated criterion value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    /// Lower operand id.
    pub id_a: usize,
    /// Higher operand id.
    pub id_b: usize,
    /// The minimized mean squared deviation of the merged cluster.
    pub criterion: f64,
    /// Points in the merged cluster.
    pub merged_size: usize,
}

/// The full merge tree: `n - 1` steps over `n` points. Step `s` creates
/// cluster id `n + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct WardResult {
    /// Merges in execution order.
    pub merges: Vec<MergeStep>,
    /// Number of original points.
    pub n_samples: usize,
}

/// Build the merge tree: start from singletons, repeatedly merge the pair
/// minimizing [`ClusterAccumulator::merged_mse`] until one cluster holds
/// everything.
pub fn fit(data: &Dataset) -> Result<WardResult, WardError> {
    let points = data.points();
    let n = points.n_rows();
    if n < 2 {
        return Err(WardError::TooFewPoints { n });
    }

    // Live clusters stay sorted by ascending id: singletons come out 0..n,
    // each merge product gets a larger id than anything before it and is
    // appended at the end, and removals preserve order. The i < j scan
    // below therefore visits pairs in ascending (id_a, id_b).
    let mut live: Vec<ClusterAccumulator> =
        (0..n).map(|i| ClusterAccumulator::singleton(i, points.row(i))).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best_pair = (0usize, 1usize);
        let mut best_value = f64::INFINITY;
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                let value = live[i].merged_mse(&live[j]);
                if value < best_value {
                    best_value = value;
                    best_pair = (i, j);
                }
            }
        }

        let (i, j) = best_pair;
        let merged = live[i].merge(&live[j], n + step);
        merges.push(MergeStep {
            id_a: live[i].id,
            id_b: live[j].id,
            criterion: best_value,
            merged_size: merged.member_count,
        });
        live.remove(j);
        live.remove(i);
        live.push(merged);
    }

    Ok(WardResult { merges, n_samples: n })
}

/// Cut the tree into `k` flat clusters.
///
/// Replays the first `n - k` merges (equivalently, undoes the last
/// `k - 1`) and labels the surviving clusters `0..k` in order of their
/// smallest original point index.
pub fn flat_labels(result: &WardResult, k: usize) -> Result<Vec<usize>, WardError> {
    let n = result.n_samples;
    if k == 0 || k > n {
        return Err(WardError::ClusterCountOutOfRange { k, n });
    }

    // parent[id] points at the merge product that absorbed the cluster.
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    for (step, merge) in result.merges.iter().take(n - k).enumerate() {
        parent[merge.id_a] = n + step;
        parent[merge.id_b] = n + step;
    }

    let mut cluster_label = alloc::vec![usize::MAX; 2 * n - 1];
    let mut next = 0usize;
    let mut labels = Vec::with_capacity(n);
    for point in 0..n {
        let mut root = point;
        while parent[root] != root {
            root = parent[root];
        }
        if cluster_label[root] == usize::MAX {
            cluster_label[root] = next;
            next += 1;
        }
        labels.push(cluster_label[root]);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, Matrix};
    use crate::detnum::{fixed_sum, sqdist, ReductionPlan};
    use crate::rng::GeneratorState;
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn dataset_1d(values: &[f64]) -> Dataset {
        let m = Matrix::new(values.len(), 1, values.to_vec()).unwrap();
        Dataset::new("test", m).unwrap()
    }

    fn relative_close(actual: f64, expected: f64, tolerance: f64) -> bool {
        (actual - expected).abs() <= tolerance * expected.abs().max(1e-300)
    }

    #[test]
    fn three_points_merge_nearest_first() {
        let result = fit(&dataset_1d(&[0.0, 1.0, 5.0])).unwrap();
        assert_eq!(result.merges.len(), 2);

        let first = result.merges[0];
        assert_eq!((first.id_a, first.id_b, first.merged_size), (0, 1, 2));
        assert_eq!(first.criterion, 0.25);

        // Merging {0,1} with {5}: mean of squares 26/3 minus squared mean
        // 4 is 14/3; the accumulator identity lands within rounding of it.
        let second = result.merges[1];
        assert_eq!((second.id_a, second.id_b, second.merged_size), (2, 3, 3));
        assert!(relative_close(second.criterion, 14.0 / 3.0, 1e-9));
    }

    #[test]
    fn exact_tie_goes_to_the_smallest_id_pair() {
        // (0,1) and (2,3) both evaluate to exactly 0.25.
        let result = fit(&dataset_1d(&[0.0, 1.0, 10.0, 11.0])).unwrap();
        let first = result.merges[0];
        assert_eq!((first.id_a, first.id_b), (0, 1));
        assert_eq!(first.criterion, 0.25);
        let second = result.merges[1];
        assert_eq!((second.id_a, second.id_b), (2, 3));
        assert_eq!(second.criterion, 0.25);
    }

    #[test]
    fn two_points_force_a_single_merge() {
        let result = fit(&dataset_1d(&[2.0, 4.0])).unwrap();
        assert_eq!(result.merges.len(), 1);
        let only = result.merges[0];
        assert_eq!((only.id_a, only.id_b, only.merged_size), (0, 1, 2));
        // (4 + 16)/2 - 3^2 = 1.
        assert_eq!(only.criterion, 1.0);
    }

    #[test]
    fn identical_singletons_merge_at_exactly_zero() {
        let result = fit(&dataset_1d(&[3.0, 3.0, 50.0])).unwrap();
        assert_eq!(result.merges[0].criterion, 0.0);
        assert_eq!((result.merges[0].id_a, result.merges[0].id_b), (0, 1));
    }

    #[test]
    fn fit_rejects_fewer_than_two_points() {
        assert_eq!(fit(&dataset_1d(&[1.0])), Err(WardError::TooFewPoints { n: 1 }));
    }

    #[test]
    fn merge_rows_are_structurally_consistent() {
        let data = make_blobs(40, 2, 3, 1.0, GeneratorState::from_seed(23)).unwrap();
        let result = fit(&data).unwrap();
        let n = data.n_samples();
        assert_eq!(result.merges.len(), n - 1);

        let mut size_of: BTreeMap<usize, usize> = (0..n).map(|i| (i, 1)).collect();
        for (step, merge) in result.merges.iter().enumerate() {
            assert!(merge.id_a < merge.id_b, "step {step}");
            assert!(merge.criterion >= 0.0, "step {step}");
            let a = size_of.remove(&merge.id_a).expect("id_a live");
            let b = size_of.remove(&merge.id_b).expect("id_b live");
            assert_eq!(merge.merged_size, a + b, "step {step}");
            size_of.insert(n + step, merge.merged_size);
        }
        // One survivor holding every point.
        assert_eq!(size_of.len(), 1);
        assert_eq!(size_of.values().next(), Some(&n));
    }

    #[test]
    fn refitting_reproduces_the_merge_list_bitwise() {
        let data = make_blobs(60, 3, 4, 0.8, GeneratorState::from_seed(29)).unwrap();
        let a = fit(&data).unwrap();
        let b = fit(&data).unwrap();
        assert_eq!(a.n_samples, b.n_samples);
        for (x, y) in a.merges.iter().zip(&b.merges) {
            assert_eq!((x.id_a, x.id_b, x.merged_size), (y.id_a, y.id_b, y.merged_size));
            assert_eq!(x.criterion.to_bits(), y.criterion.to_bits());
        }
    }

    #[test]
    fn flat_labels_cut_the_tree_at_any_level() {
        let result = fit(&dataset_1d(&[0.0, 1.0, 5.0])).unwrap();
        assert_eq!(flat_labels(&result, 1).unwrap(), [0, 0, 0]);
        assert_eq!(flat_labels(&result, 2).unwrap(), [0, 0, 1]);
        assert_eq!(flat_labels(&result, 3).unwrap(), [0, 1, 2]);
        assert_eq!(
            flat_labels(&result, 0),
            Err(WardError::ClusterCountOutOfRange { k: 0, n: 3 })
        );
        assert_eq!(
            flat_labels(&result, 4),
            Err(WardError::ClusterCountOutOfRange { k: 4, n: 3 })
        );
    }

    #[test]
    fn flat_labels_number_clusters_by_smallest_member() {
        // Two tight pairs far apart; cutting at k=2 must label the pair
        // containing point 0 as cluster 0 regardless of merge order.
        let result = fit(&dataset_1d(&[100.0, 101.0, 0.0, 1.0])).unwrap();
        let labels = flat_labels(&result, 2).unwrap();
        assert_eq!(labels, [0, 0, 1, 1]);
    }

    /// Reference evaluator: the same criterion recomputed from the raw
    /// member points with fixed-order sums, no accumulator identity.
    fn criterion_from_raw(points: &Matrix, members_a: &[usize], members_b: &[usize]) -> f64 {
        let mut members: Vec<usize> = members_a.iter().chain(members_b).copied().collect();
        members.sort_unstable();
        let d = points.n_cols();
        let count = members.len() as f64;
        let plan = ReductionPlan::with_default_chunk(members.len());

        let mut center = vec![0.0f64; d];
        for (j, slot) in center.iter_mut().enumerate() {
            let coords: Vec<f64> = members.iter().map(|&i| points.get(i, j)).collect();
            *slot = fixed_sum(&coords, &plan) / count;
        }
        let deviations: Vec<f64> =
            members.iter().map(|&i| sqdist(points.row(i), &center)).collect();
        fixed_sum(&deviations, &plan) / count
    }

    #[test]
    fn agrees_with_recomputation_from_raw_points() {
        // Lockstep oracle: at each step, re-derive every live pair's
        // criterion from the raw points. When the top two candidates are
        // separated by more than a 1e-9 relative margin the chosen pair
        // must match; the recorded criterion must always match within the
        // same margin. On ambiguous steps the oracle adopts the
        // implementation's choice so the two stay aligned.
        for seed in [41u64, 43, 47] {
            let data = make_blobs(40, 2, 3, 1.2, GeneratorState::from_seed(seed)).unwrap();
            let points = data.points();
            let n = data.n_samples();
            let result = fit(&data).unwrap();

            let mut members_of: BTreeMap<usize, Vec<usize>> =
                (0..n).map(|i| (i, vec![i])).collect();
            for (step, merge) in result.merges.iter().enumerate() {
                let ids: Vec<usize> = members_of.keys().copied().collect();
                let mut best: Option<((usize, usize), f64)> = None;
                let mut second_value = f64::INFINITY;
                for (ai, &a) in ids.iter().enumerate() {
                    for &b in &ids[ai + 1..] {
                        let value = criterion_from_raw(points, &members_of[&a], &members_of[&b]);
                        match best {
                            Some((_, incumbent)) if value < incumbent => {
                                second_value = incumbent;
                                best = Some(((a, b), value));
                            }
                            Some(_) => second_value = second_value.min(value),
                            None => best = Some(((a, b), value)),
                        }
                    }
                }
                let ((oa, ob), best_value) = best.expect("at least one pair");

                let unambiguous =
                    (second_value - best_value) > 1e-9 * best_value.abs().max(1e-300);
                if unambiguous {
                    assert_eq!(
                        (merge.id_a, merge.id_b),
                        (oa, ob),
                        "seed {seed}, step {step}: oracle picked a different pair"
                    );
                }
                let oracle_value =
                    criterion_from_raw(points, &members_of[&merge.id_a], &members_of[&merge.id_b]);
                assert!(
                    relative_close(merge.criterion, oracle_value, 1e-9),
                    "seed {seed}, step {step}: criterion {} vs oracle {oracle_value}",
                    merge.criterion
                );

                let mut merged = members_of.remove(&merge.id_a).unwrap();
                merged.extend(members_of.remove(&merge.id_b).unwrap());
                merged.sort_unstable();
                members_of.insert(n + step, merged);
            }
        }
    }
}
