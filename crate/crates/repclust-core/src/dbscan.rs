//! DBSCAN with deterministic cluster numbering and border assignment.
//!
//! Density clustering has two places where implementations quietly
//! diverge: the order clusters are discovered in (which shuffles ids) and
//! which cluster claims a border point that sits within reach of several.
//! Both are pinned here — cluster ids follow the smallest core-point index
//! in each component, and a border joins the cluster of its smallest-index
//! core neighbor. The third hazard, a point at distance exactly `eps`, is
//! resolved by comparing squared distances with `<=` (no square root, no
//! rounding step).

use alloc::vec::Vec;
use core::fmt;

use crate::data::{Dataset, Matrix};
use crate::detnum::{parallel_map_fixed, sqdist};

/// Density parameters. Construction enforces `eps > 0` (finite) and
/// `min_pts >= 1`, so the fitting operations have no failure modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    eps: f64,
    min_pts: usize,
}

/// Errors from parameter construction.
#[derive(Debug, Clone, PartialEq)]
pub enum DbscanError {
    /// `eps` must be a finite positive number.
    InvalidEps {
        /// The rejected value.
        eps: f64,
    },
    /// `min_pts` must be at least 1.
    ZeroMinPts,
}

impl fmt::Display for DbscanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DbscanError::InvalidEps { eps } => {
                write!(f, "eps must be finite and positive, got {eps}")
            }
            DbscanError::ZeroMinPts => write!(f, "min_pts must be at least 1"),
        }
    }
}

impl core::error::Error for DbscanError {}

impl DbscanParams {
    /// Validated parameters: neighborhood radius and the neighbor count
    /// (self included) required for core status.
    pub fn new(eps: f64, min_pts: usize) -> Result<Self, DbscanError> {
        if !eps.is_finite() || !(eps > 0.0) {
            return Err(DbscanError::InvalidEps { eps });
        }
        if min_pts == 0 {
            return Err(DbscanError::ZeroMinPts);
        }
        Ok(DbscanParams { eps, min_pts })
    }

    /// Neighborhood radius.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Core threshold on neighborhood size.
    pub fn min_pts(&self) -> usize {
        self.min_pts
    }
}

/// What a point turned out to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointRole {
    /// At least `min_pts` neighbors (itself included).
    Core,
    /// Not core, but within `eps` of a core point.
    Border,
    /// Neither.
    Noise,
}

impl PointRole {
    /// Stable numeric code, used where roles are serialized.
    pub fn code(self) -> u8 {
        match self {
            PointRole::Core => 0,
            PointRole::Border => 1,
            PointRole::Noise => 2,
        }
    }
}

/// Clustering outcome: `labels[i]` is a cluster id in `0..n_clusters`, or
/// `-1` exactly when `roles[i]` is [`PointRole::Noise`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbscanResult {
    /// Cluster id per point, `-1` for noise.
    pub labels: Vec<i64>,
    /// Role per point.
    pub roles: Vec<PointRole>,
    /// Number of clusters found.
    pub n_clusters: usize,
}

/// Step 1: neighborhoods and core flags.
///
/// The neighbor test is `sq_euclidean(p, q) <= eps * eps`, and every point
/// neighbors itself, so an isolated point has a neighborhood of size 1.
/// Lists come back in ascending point index — downstream tie rules depend
/// on that order. The per-point scans are independent, so they parallelize
/// over `worker_count` threads without affecting the output.
pub fn identify(
    points: &Matrix,
    params: &DbscanParams,
    worker_count: usize,
) -> (Vec<bool>, Vec<Vec<usize>>) {
    let eps_sq = params.eps * params.eps;
    let n = points.n_rows();
    let indices: Vec<usize> = (0..n).collect();
    let neighbor_lists = parallel_map_fixed(&indices, worker_count, |&i| {
        let row = points.row(i);
        (0..n).filter(|&j| sqdist(row, points.row(j)) <= eps_sq).collect::<Vec<usize>>()
    });
    let core_flags = neighbor_lists.iter().map(|l| l.len() >= params.min_pts).collect();
    (core_flags, neighbor_lists)
}

/// Step 2: group neighboring core points into clusters.
///
/// Components of the core-to-core adjacency graph, built by union-find
/// scanning points and neighbors in ascending index. Cluster ids count up
/// in order of each component's smallest core-point index, which makes the
/// numbering a function of the data alone. Non-core points get `-1` here;
/// [`assign`] decides border versus noise.
pub fn create(core_flags: &[bool], neighbor_lists: &[Vec<usize>]) -> (Vec<i64>, usize) {
    let n = core_flags.len();
    let mut forest = UnionFind::new(n);
    for i in 0..n {
        if !core_flags[i] {
            continue;
        }
        for &j in &neighbor_lists[i] {
            if core_flags[j] {
                forest.union(i, j);
            }
        }
    }

    let mut labels = alloc::vec![-1i64; n];
    let mut component_label = alloc::vec![-1i64; n];
    let mut next = 0i64;
    for i in 0..n {
        if !core_flags[i] {
            continue;
        }
        let root = forest.find(i);
        if component_label[root] < 0 {
            component_label[root] = next;
            next += 1;
        }
        labels[i] = component_label[root];
    }
    (labels, next as usize)
}

/// Step 3: attach borders, mark noise.
///
/// A non-core point with at least one core neighbor becomes a border of
/// the cluster of its *smallest-index* core neighbor; with none it is
/// noise. Exploration order matters here — the ascending neighbor lists
/// from [`identify`] are what make the choice well-defined.
pub fn assign(
    core_labels: Vec<i64>,
    core_flags: &[bool],
    neighbor_lists: &[Vec<usize>],
    n_clusters: usize,
) -> DbscanResult {
    let mut labels = core_labels;
    let mut roles = Vec::with_capacity(labels.len());
    for i in 0..labels.len() {
        if core_flags[i] {
            roles.push(PointRole::Core);
            continue;
        }
        let first_core = neighbor_lists[i].iter().find(|&&j| core_flags[j]);
        match first_core {
            Some(&j) => {
                labels[i] = labels[j];
                roles.push(PointRole::Border);
            }
            None => {
                labels[i] = -1;
                roles.push(PointRole::Noise);
            }
        }
    }
    DbscanResult { labels, roles, n_clusters }
}

/// Run DBSCAN: [`identify`], [`create`], [`assign`] in sequence.
///
/// Output is bitwise identical for every `worker_count` and across reruns;
/// the algorithm draws no randomness at all.
pub fn fit(data: &Dataset, params: &DbscanParams, worker_count: usize) -> DbscanResult {
    let (core_flags, neighbor_lists) = identify(data.points(), params, worker_count);
    let (core_labels, n_clusters) = create(&core_flags, &neighbor_lists);
    assign(core_labels, &core_flags, &neighbor_lists, n_clusters)
}

/// Union-find with path halving; the final numbering never depends on the
/// tree shape, only on which points end up connected.
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[rb] = ra;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use crate::metrics::adjusted_rand_index;
    use crate::rng::GeneratorState;
    use alloc::vec;

    fn dataset_1d(values: &[f64]) -> Dataset {
        let m = Matrix::new(values.len(), 1, values.to_vec()).unwrap();
        Dataset::new("test", m).unwrap()
    }

    /// Independent reference: BFS flood fill from each unvisited core in
    /// ascending index, then border attachment by smallest core neighbor.
    /// Same rules as the union-find implementation, different mechanics.
    fn reference_dbscan(data: &Dataset, params: &DbscanParams) -> DbscanResult {
        let points = data.points();
        let n = points.n_rows();
        let eps_sq = params.eps() * params.eps();
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| {
                        crate::detnum::sq_euclidean(points.row(i), points.row(j)).unwrap()
                            <= eps_sq
                    })
                    .collect()
            })
            .collect();
        let core: Vec<bool> = neighbors.iter().map(|l| l.len() >= params.min_pts()).collect();

        let mut labels = vec![-1i64; n];
        let mut next = 0i64;
        for start in 0..n {
            if !core[start] || labels[start] >= 0 {
                continue;
            }
            let mut queue = vec![start];
            labels[start] = next;
            while let Some(p) = queue.pop() {
                for &q in &neighbors[p] {
                    if core[q] && labels[q] < 0 {
                        labels[q] = next;
                        queue.push(q);
                    }
                }
            }
            next += 1;
        }

        let mut roles = Vec::with_capacity(n);
        for i in 0..n {
            if core[i] {
                roles.push(PointRole::Core);
            } else if let Some(&j) = neighbors[i].iter().find(|&&j| core[j]) {
                labels[i] = labels[j];
                roles.push(PointRole::Border);
            } else {
                labels[i] = -1;
                roles.push(PointRole::Noise);
            }
        }
        DbscanResult { labels, roles, n_clusters: next as usize }
    }

    #[test]
    fn params_are_validated_at_construction() {
        assert!(DbscanParams::new(0.5, 2).is_ok());
        assert_eq!(
            DbscanParams::new(0.0, 2),
            Err(DbscanError::InvalidEps { eps: 0.0 })
        );
        assert!(DbscanParams::new(-1.0, 2).is_err());
        assert!(DbscanParams::new(f64::NAN, 2).is_err());
        assert!(DbscanParams::new(f64::INFINITY, 2).is_err());
        assert_eq!(DbscanParams::new(0.5, 0), Err(DbscanError::ZeroMinPts));
    }

    #[test]
    fn chain_with_an_outlier_forms_one_cluster_and_noise() {
        let data = dataset_1d(&[0.0, 0.5, 1.0, 5.0]);
        let params = DbscanParams::new(0.6, 2).unwrap();
        let result = fit(&data, &params, 1);
        assert_eq!(result.labels, [0, 0, 0, -1]);
        assert_eq!(
            result.roles,
            [PointRole::Core, PointRole::Core, PointRole::Core, PointRole::Noise]
        );
        assert_eq!(result.n_clusters, 1);
    }

    #[test]
    fn border_between_two_clusters_joins_the_smaller_core_index() {
        // Indices 0-3 and 5-8 are two core runs; index 4 sits within eps
        // of core 3 on the left and core 5 on the right. The smallest-
        // index rule sends it left.
        let data = dataset_1d(&[0.0, 0.15, 0.3, 0.45, 0.9, 1.35, 1.5, 1.65, 1.8]);
        let params = DbscanParams::new(0.5, 4).unwrap();
        let result = fit(&data, &params, 1);
        assert_eq!(result.labels, [0, 0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(result.roles[4], PointRole::Border);
        assert_eq!(result.n_clusters, 2);

        let (core_flags, neighbor_lists) = identify(data.points(), &params, 1);
        assert!(!core_flags[4]);
        let core_neighbors: Vec<usize> =
            neighbor_lists[4].iter().copied().filter(|&j| core_flags[j]).collect();
        assert_eq!(core_neighbors, [3, 5]);
    }

    #[test]
    fn distance_exactly_eps_counts_as_a_neighbor() {
        let data = dataset_1d(&[0.0, 0.6]);
        let params = DbscanParams::new(0.6, 2).unwrap();
        let result = fit(&data, &params, 1);
        assert_eq!(result.labels, [0, 0]);
        assert_eq!(result.roles, [PointRole::Core, PointRole::Core]);
    }

    #[test]
    fn identical_points_are_cores_at_any_positive_eps() {
        let data = dataset_1d(&[3.0, 3.0]);
        let params = DbscanParams::new(1e-300, 2).unwrap();
        let result = fit(&data, &params, 1);
        assert_eq!(result.labels, [0, 0]);
        assert_eq!(result.roles, [PointRole::Core, PointRole::Core]);
    }

    #[test]
    fn eps_beyond_the_diameter_makes_one_all_core_cluster() {
        let data = dataset_1d(&[0.0, 1.0, 2.0, 3.0]);
        let params = DbscanParams::new(10.0, 4).unwrap();
        let result = fit(&data, &params, 1);
        assert_eq!(result.labels, [0, 0, 0, 0]);
        assert!(result.roles.iter().all(|&r| r == PointRole::Core));
        assert_eq!(result.n_clusters, 1);
    }

    #[test]
    fn min_pts_beyond_n_marks_everything_noise() {
        let data = dataset_1d(&[0.0, 0.1, 0.2]);
        let params = DbscanParams::new(1.0, 4).unwrap();
        let result = fit(&data, &params, 1);
        assert_eq!(result.labels, [-1, -1, -1]);
        assert!(result.roles.iter().all(|&r| r == PointRole::Noise));
        assert_eq!(result.n_clusters, 0);
    }

    #[test]
    fn create_without_cores_yields_zero_clusters() {
        let (labels, n_clusters) = create(&[false, false], &[vec![0], vec![1]]);
        assert_eq!(labels, [-1, -1]);
        assert_eq!(n_clusters, 0);
    }

    #[test]
    fn separated_core_groups_number_by_smallest_member() {
        // Two triples; the one holding point 0 gets id 0.
        let data = dataset_1d(&[0.0, 0.1, 0.2, 9.0, 9.1, 9.2]);
        let params = DbscanParams::new(0.15, 2).unwrap();
        let result = fit(&data, &params, 1);
        assert_eq!(result.labels, [0, 0, 0, 1, 1, 1]);
        assert_eq!(result.n_clusters, 2);
    }

    #[test]
    fn output_is_identical_across_worker_counts() {
        let data = make_blobs(250, 2, 3, 0.4, GeneratorState::from_seed(31)).unwrap();
        let params = DbscanParams::new(0.5, 4).unwrap();
        let baseline = fit(&data, &params, 1);
        for workers in [2usize, 4, 16] {
            assert_eq!(fit(&data, &params, workers), baseline, "workers = {workers}");
        }
    }

    #[test]
    fn matches_the_reference_implementation_on_random_instances() {
        for seed in 0..6u64 {
            let data = make_blobs(150, 2, 3, 0.6, GeneratorState::from_seed(seed)).unwrap();
            for (eps, min_pts) in [(0.3, 3), (0.8, 4), (1.5, 6), (0.05, 2)] {
                let params = DbscanParams::new(eps, min_pts).unwrap();
                let ours = fit(&data, &params, 2);
                let reference = reference_dbscan(&data, &params);
                assert_eq!(ours, reference, "seed {seed}, eps {eps}, min_pts {min_pts}");
                // Noise and label -1 coincide exactly.
                for (label, role) in ours.labels.iter().zip(&ours.roles) {
                    assert_eq!(*label == -1, *role == PointRole::Noise);
                }
            }
        }
    }

    #[test]
    fn permuting_rows_permutes_the_partition_but_not_the_core_set() {
        let data = make_blobs(120, 2, 3, 0.5, GeneratorState::from_seed(8)).unwrap();
        let params = DbscanParams::new(0.6, 4).unwrap();
        let original = fit(&data, &params, 1);

        // Deterministic shuffle of row indices.
        let n = data.n_samples();
        let mut order: Vec<usize> = (0..n).collect();
        let mut state = GeneratorState::from_seed(99);
        for i in (1..n).rev() {
            let (j, next) = state.next_below(i as u64 + 1);
            state = next;
            order.swap(i, j as usize);
        }
        let rows: Vec<&[f64]> = order.iter().map(|&i| data.points().row(i)).collect();
        let permuted_data =
            Dataset::new("permuted", Matrix::from_rows(&rows).unwrap()).unwrap();
        let permuted = fit(&permuted_data, &params, 1);

        // Map results back to original row positions.
        let mut labels_back = vec![0i64; n];
        let mut roles_back = vec![PointRole::Noise; n];
        for (pos, &orig) in order.iter().enumerate() {
            labels_back[orig] = permuted.labels[pos];
            roles_back[orig] = permuted.roles[pos];
        }

        let core_original: Vec<bool> =
            original.roles.iter().map(|&r| r == PointRole::Core).collect();
        let core_permuted: Vec<bool> =
            roles_back.iter().map(|&r| r == PointRole::Core).collect();
        assert_eq!(core_original, core_permuted);

        // Ids may renumber; the partition itself may not change. Compare
        // only non-noise points so ARI sees the cluster structure.
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in 0..n {
            if original.labels[i] >= 0 && labels_back[i] >= 0 {
                a.push(original.labels[i]);
                b.push(labels_back[i]);
            }
        }
        assert_eq!(
            original.labels.iter().filter(|&&l| l >= 0).count(),
            a.len(),
            "noise sets must agree before comparing partitions"
        );
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn clusters_are_density_connected() {
        // Structural sanity on a mixed instance: within each cluster the
        // core points form one eps-connected component, and every border
        // touches a core of its own cluster.
        let data = make_blobs(200, 2, 4, 0.9, GeneratorState::from_seed(17)).unwrap();
        let params = DbscanParams::new(0.5, 5).unwrap();
        let result = fit(&data, &params, 1);
        let (core_flags, neighbor_lists) = identify(data.points(), &params, 1);

        for cluster in 0..result.n_clusters as i64 {
            let cores: Vec<usize> = (0..data.n_samples())
                .filter(|&i| core_flags[i] && result.labels[i] == cluster)
                .collect();
            assert!(!cores.is_empty(), "cluster {cluster} has no core");

            // Flood fill over core-to-core adjacency, restricted to the
            // cluster, must reach every core from the first.
            let mut reached = vec![false; data.n_samples()];
            let mut queue = vec![cores[0]];
            reached[cores[0]] = true;
            while let Some(p) = queue.pop() {
                for &q in &neighbor_lists[p] {
                    if core_flags[q] && result.labels[q] == cluster && !reached[q] {
                        reached[q] = true;
                        queue.push(q);
                    }
                }
            }
            assert!(cores.iter().all(|&c| reached[c]), "cluster {cluster} splits");
        }

        for i in 0..data.n_samples() {
            if result.roles[i] == PointRole::Border {
                let touches_own_cluster = neighbor_lists[i]
                    .iter()
                    .any(|&j| core_flags[j] && result.labels[j] == result.labels[i]);
                assert!(touches_own_cluster, "border {i} is detached from its cluster");
            }
        }
    }
}
