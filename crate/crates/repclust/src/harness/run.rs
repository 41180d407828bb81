//! Matrix execution: every (dataset, algorithm, thread count, replication)
//! cell of a run, streamed as NDJSON records, plus exact replay of a
//! recorded cell.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use repclust_core::data::{make_blobs, minmax_scale, Dataset, Matrix};
use repclust_core::detnum::{fixed_sum, sq_euclidean, ReductionPlan};
use repclust_core::rng::GeneratorState;
use repclust_core::{dbscan, kmeans, ward};

use crate::energy::{measure, PowercapBackend};
use crate::harness::canonical::{fingerprint, ResultFacet};
use crate::harness::records::{
    write_record, AlgoParams, Algorithm, DataSource, DatasetRecord, ErrorRecord, HexFloat,
    InitName, Record, ResultRecord,
};
use crate::harness::{DatasetConfig, HarnessError, RunConfig};
use crate::io::{load_csv, LabelColumn};

/// Execute the full run matrix described by `config`, writing each record
/// to `out` as soon as it exists (write-then-flush, so an interrupted run
/// keeps everything completed). Returns the same records in order.
///
/// Failures that concern a single dataset or cell become [`ErrorRecord`]s
/// in the stream rather than aborting the run; only configuration and
/// output problems return an error.
pub fn run_matrix<W: std::io::Write>(
    config: &RunConfig,
    thread_counts: &[usize],
    out: &mut W,
) -> Result<Vec<Record>, HarnessError> {
    config.validate()?;
    if thread_counts.is_empty() || thread_counts.contains(&0) {
        return Err(HarnessError::InvalidConfig {
            reason: format!("thread counts {thread_counts:?} must be non-empty and positive"),
        });
    }
    let root = config.root_state()?;

    // One discovery attempt per run; if the counters are missing every
    // result carries the reason instead of samples.
    let mut energy_backend: Option<PowercapBackend> = None;
    let mut energy_note: Option<String> = None;
    if config.energy {
        match PowercapBackend::discover() {
            Ok(backend) => energy_backend = Some(backend),
            Err(error) => energy_note = Some(format!("energy unavailable: {error}")),
        }
    }

    let mut records = Vec::new();
    let mut emit = |record: Record, out: &mut W| -> Result<(), HarnessError> {
        write_record(out, &record).map_err(record_io_error)?;
        records.push(record);
        Ok(())
    };

    for dataset_config in &config.datasets {
        let (dataset, source) = match build_dataset(dataset_config, root) {
            Ok(built) => built,
            Err(message) => {
                emit(
                    Record::Error(ErrorRecord {
                        dataset: dataset_config.name.clone(),
                        algorithm: None,
                        message,
                    }),
                    out,
                )?;
                continue;
            }
        };
        emit(
            Record::Dataset(DatasetRecord {
                name: dataset.name().to_string(),
                n_samples: dataset.n_samples(),
                n_features: dataset.n_features(),
                scaled: dataset_config.minmax,
                source,
                ground_truth: dataset.labels().map(<[i64]>::to_vec),
            }),
            out,
        )?;

        for &algorithm in &config.algorithms {
            let resolved = match resolve(algorithm, config, dataset_config, &dataset) {
                Ok(resolved) => resolved,
                Err(message) => {
                    emit(
                        Record::Error(ErrorRecord {
                            dataset: Some(dataset.name().to_string()),
                            algorithm: Some(algorithm),
                            message,
                        }),
                        out,
                    )?;
                    continue;
                }
            };

            for &thread_count in thread_counts {
                for replication in 0..config.replications {
                    // The fault hook targets the inertia reduction, which
                    // only K-Means has.
                    let faulted = algorithm == Algorithm::Kmeans
                        && config
                            .fault
                            .as_ref()
                            .is_some_and(|fault| fault.replication == replication);
                    let cell = execute_cell(
                        &dataset,
                        &resolved,
                        root,
                        config.chunk_size,
                        thread_count,
                        faulted,
                        energy_backend.as_mut(),
                    );
                    match cell {
                        Ok(outcome) => {
                            let energy_note = match (&energy_note, &outcome.energy_error) {
                                (Some(note), _) => Some(note.clone()),
                                (None, Some(error)) => Some(format!("energy unavailable: {error}")),
                                (None, None) => None,
                            };
                            emit(
                                Record::Result(ResultRecord {
                                    artifact_version: env!("CARGO_PKG_VERSION").to_string(),
                                    dataset: dataset.name().to_string(),
                                    algorithm,
                                    thread_count,
                                    replication,
                                    generator_state: root.to_hex(),
                                    chunk_size: config.chunk_size,
                                    params: resolved.echo.clone(),
                                    fingerprints: outcome.fingerprints,
                                    duration_ns: duration_to_ns(outcome.duration),
                                    energy: outcome.energy,
                                    energy_note,
                                    fault_injected: faulted,
                                    labels: (replication == 0).then_some(outcome.labels),
                                    inertia: outcome.inertia.map(HexFloat),
                                    n_iter: outcome.n_iter,
                                    best_init: outcome.best_init,
                                }),
                                out,
                            )?;
                        }
                        Err(message) => {
                            // The same parameters fail the same way every
                            // replication; one record covers the cell.
                            emit(
                                Record::Error(ErrorRecord {
                                    dataset: Some(dataset.name().to_string()),
                                    algorithm: Some(algorithm),
                                    message,
                                }),
                                out,
                            )?;
                            break;
                        }
                    }
                }
            }
        }
    }
    Ok(records)
}

// write_record returns std::io::Error; route it through RecordError so the
// caller sees one error type for all record-stream trouble.
fn record_io_error(error: std::io::Error) -> HarnessError {
    HarnessError::Record(crate::harness::records::RecordError::Io(error))
}

fn duration_to_ns(duration: Duration) -> u64 {
    u64::try_from(duration.as_nanos()).unwrap_or(u64::MAX)
}

/// Re-execute one recorded cell from its embedded parameters and return
/// fresh fingerprints for comparison against the record's.
///
/// `records` must contain the [`DatasetRecord`] the result refers to;
/// blob datasets are regenerated from the recorded state, CSV datasets
/// re-read from the recorded path.
pub fn replay(
    records: &[Record],
    target: &ResultRecord,
) -> Result<BTreeMap<String, String>, HarnessError> {
    let dataset_record = records
        .iter()
        .find_map(|record| match record {
            Record::Dataset(d) if d.name == target.dataset => Some(d),
            _ => None,
        })
        .ok_or_else(|| HarnessError::MissingDataset { name: target.dataset.clone() })?;

    let raw = match &dataset_record.source {
        DataSource::Blobs { n_samples, n_features, centers, cluster_std, state } => {
            let state = GeneratorState::from_hex(state)?;
            make_blobs(*n_samples, *n_features, *centers, cluster_std.0, state)
                .map_err(|e| replay_error(target, e))?
        }
        DataSource::Csv { path, label_column } => {
            let column = label_column.as_ref().map(LabelColumn::from);
            load_csv(std::path::Path::new(path), column.as_ref())?
        }
    };
    let dataset = if dataset_record.scaled { minmax_scale(&raw) } else { raw };

    let state = GeneratorState::from_hex(&target.generator_state)?;
    let chunk_size = target.chunk_size;
    let mut fingerprints = BTreeMap::new();
    match &target.params {
        AlgoParams::Kmeans { k, n_init, max_iter, init } => {
            let params = kmeans::KMeansParams {
                k: *k,
                n_init: *n_init,
                max_iter: *max_iter,
                init_method: init_method(*init),
                state,
                chunk_size,
            };
            let result = kmeans::fit(&dataset, &params, target.thread_count)
                .map_err(|e| replay_error(target, e))?;
            let inertia = if target.fault_injected {
                faulted_inertia(dataset.points(), &result.centers, &result.labels, chunk_size)
            } else {
                result.inertia
            };
            insert_kmeans_facets(&mut fingerprints, &result, inertia);
        }
        AlgoParams::Dbscan { eps, min_samples } => {
            let params = dbscan::DbscanParams::new(eps.0, *min_samples)
                .map_err(|e| replay_error(target, e))?;
            let result = dbscan::fit(&dataset, &params, target.thread_count);
            insert_dbscan_facets(&mut fingerprints, &result);
        }
        AlgoParams::Ward { n_clusters } => {
            let result = ward::fit(&dataset).map_err(|e| replay_error(target, e))?;
            let labels =
                ward::flat_labels(&result, *n_clusters).map_err(|e| replay_error(target, e))?;
            insert_ward_facets(&mut fingerprints, &result, &labels);
        }
    }
    Ok(fingerprints)
}

fn replay_error(target: &ResultRecord, error: impl std::fmt::Display) -> HarnessError {
    HarnessError::Replay {
        dataset: target.dataset.clone(),
        algorithm: target.algorithm,
        message: error.to_string(),
    }
}

/// Build a dataset from its config entry. Errors come back as strings
/// because they end up in [`ErrorRecord`]s, not in the caller's lap.
fn build_dataset(
    config: &DatasetConfig,
    root: GeneratorState,
) -> Result<(Dataset, DataSource), String> {
    let built = match (&config.csv, &config.blobs) {
        (Some(path), None) => {
            let column = config.label_column.as_ref().map(LabelColumn::from);
            let dataset = load_csv(path, column.as_ref())
                .map_err(|e| format!("loading {}: {e}", path.display()))?;
            let source = DataSource::Csv {
                path: path.display().to_string(),
                label_column: config.label_column.clone(),
            };
            (dataset, source)
        }
        (None, Some(blobs)) => {
            let dataset = make_blobs(
                blobs.n_samples,
                blobs.n_features,
                blobs.centers,
                blobs.cluster_std.0,
                root,
            )
            .map_err(|e| format!("generating blobs: {e}"))?;
            let source = DataSource::Blobs {
                n_samples: blobs.n_samples,
                n_features: blobs.n_features,
                centers: blobs.centers,
                cluster_std: blobs.cluster_std,
                state: root.to_hex(),
            };
            (dataset, source)
        }
        // validate() has already rejected other combinations.
        _ => return Err("dataset needs exactly one of csv or blobs".into()),
    };
    let (dataset, source) = built;
    let dataset = match &config.name {
        Some(name) => rename(dataset, name),
        None => dataset,
    };
    Ok((if config.minmax { minmax_scale(&dataset) } else { dataset }, source))
}

fn rename(dataset: Dataset, name: &str) -> Dataset {
    let points = dataset.points().clone();
    match dataset.labels() {
        Some(labels) => Dataset::with_labels(name, points, labels.to_vec()),
        None => Dataset::new(name, points),
    }
    .expect("renaming cannot break an already-valid dataset")
}

/// Everything needed to run one algorithm on one dataset: the resolved
/// parameters for the record stream plus the concrete fit inputs.
struct Resolved {
    echo: AlgoParams,
    kind: ResolvedKind,
}

enum ResolvedKind {
    Kmeans { k: usize, n_init: usize, max_iter: usize, init: InitName },
    Dbscan { eps: f64, min_samples: usize },
    Ward { n_clusters: usize },
}

/// Distinct ground-truth classes, the default for `k` and `n_clusters`.
fn n_classes(dataset: &Dataset) -> Option<usize> {
    let labels = dataset.labels()?;
    let distinct: std::collections::BTreeSet<i64> = labels.iter().copied().collect();
    Some(distinct.len())
}

fn init_method(name: InitName) -> kmeans::InitMethod {
    match name {
        InitName::RandomPoints => kmeans::InitMethod::RandomPoints,
        InitName::KMeansPlusPlus => kmeans::InitMethod::KMeansPlusPlus,
    }
}

fn resolve(
    algorithm: Algorithm,
    config: &RunConfig,
    dataset_config: &DatasetConfig,
    dataset: &Dataset,
) -> Result<Resolved, String> {
    let n = dataset.n_samples();
    match algorithm {
        Algorithm::Kmeans => {
            let section = config.kmeans.clone().unwrap_or_default();
            let k = section.k.or_else(|| n_classes(dataset)).ok_or(
                "kmeans needs k: the config sets none and the dataset has no ground truth",
            )?;
            if k == 0 || k > n {
                return Err(format!("kmeans k = {k} out of range for {n} points"));
            }
            let n_init = section.n_init.unwrap_or(5);
            let max_iter = section.max_iter.unwrap_or(300);
            let init = section.init.unwrap_or(InitName::RandomPoints);
            if n_init == 0 || max_iter == 0 {
                return Err(format!(
                    "kmeans n_init = {n_init} and max_iter = {max_iter} must be at least 1"
                ));
            }
            Ok(Resolved {
                echo: AlgoParams::Kmeans { k, n_init, max_iter, init },
                kind: ResolvedKind::Kmeans { k, n_init, max_iter, init },
            })
        }
        Algorithm::Dbscan => {
            let global = config.dbscan.clone().unwrap_or_default();
            let local = dataset_config.dbscan.clone().unwrap_or_default();
            let eps = local.eps.or(global.eps).ok_or(
                "dbscan needs eps: set it in the dbscan section or the dataset override",
            )?;
            let min_samples = local
                .min_samples
                .or(global.min_samples)
                .unwrap_or(2 * dataset.n_features());
            // Surface bad values now so the error is one record, not one
            // per thread count.
            dbscan::DbscanParams::new(eps.0, min_samples).map_err(|e| e.to_string())?;
            Ok(Resolved {
                echo: AlgoParams::Dbscan { eps, min_samples },
                kind: ResolvedKind::Dbscan { eps: eps.0, min_samples },
            })
        }
        Algorithm::Ward => {
            let n_clusters = config
                .ward
                .clone()
                .unwrap_or_default()
                .n_clusters
                .or_else(|| n_classes(dataset))
                .ok_or(
                    "ward needs n_clusters: the config sets none and the dataset has no ground truth",
                )?;
            if n < 2 {
                return Err(format!("ward needs at least 2 points, got {n}"));
            }
            if n_clusters == 0 || n_clusters > n {
                return Err(format!("ward n_clusters = {n_clusters} out of range for {n} points"));
            }
            Ok(Resolved {
                echo: AlgoParams::Ward { n_clusters },
                kind: ResolvedKind::Ward { n_clusters },
            })
        }
    }
}

/// Result of one cell: fingerprints plus the scalar echoes the record keeps.
struct CellOutcome {
    fingerprints: BTreeMap<String, String>,
    labels: Vec<i64>,
    inertia: Option<f64>,
    n_iter: Option<u64>,
    best_init: Option<u64>,
    duration: Duration,
    energy: Option<Vec<crate::energy::EnergySample>>,
    energy_error: Option<crate::energy::EnergyError>,
}

fn execute_cell(
    dataset: &Dataset,
    resolved: &Resolved,
    root: GeneratorState,
    chunk_size: usize,
    thread_count: usize,
    faulted: bool,
    energy_backend: Option<&mut PowercapBackend>,
) -> Result<CellOutcome, String> {
    // Time the fit alone; dataset prep and fingerprinting stay outside.
    let timed = || -> (Result<CellFit, String>, Duration) {
        let started = Instant::now();
        let fit = run_fit(dataset, resolved, root, chunk_size, thread_count);
        (fit, started.elapsed())
    };

    let ((fit, duration), energy, energy_error) = match energy_backend {
        Some(backend) => {
            let (output, samples) = measure(backend, timed);
            match samples {
                Ok(samples) => (output, Some(samples), None),
                Err(error) => (output, None, Some(error)),
            }
        }
        None => (timed(), None, None),
    };
    let fit = fit?;

    let mut fingerprints = BTreeMap::new();
    let (labels, inertia, n_iter, best_init) = match fit {
        CellFit::Kmeans(result) => {
            let inertia = if faulted {
                faulted_inertia(dataset.points(), &result.centers, &result.labels, chunk_size)
            } else {
                result.inertia
            };
            insert_kmeans_facets(&mut fingerprints, &result, inertia);
            let labels = result.labels.iter().map(|&l| l as i64).collect();
            (
                labels,
                Some(inertia),
                Some(result.n_iter as u64),
                Some(result.best_init_index as u64),
            )
        }
        CellFit::Dbscan(result) => {
            insert_dbscan_facets(&mut fingerprints, &result);
            (result.labels, None, None, None)
        }
        CellFit::Ward(result, flat) => {
            insert_ward_facets(&mut fingerprints, &result, &flat);
            (flat.iter().map(|&l| l as i64).collect(), None, None, None)
        }
    };
    Ok(CellOutcome {
        fingerprints,
        labels,
        inertia,
        n_iter,
        best_init,
        duration,
        energy,
        energy_error,
    })
}

enum CellFit {
    Kmeans(kmeans::KMeansResult),
    Dbscan(dbscan::DbscanResult),
    Ward(ward::WardResult, Vec<usize>),
}

fn run_fit(
    dataset: &Dataset,
    resolved: &Resolved,
    root: GeneratorState,
    chunk_size: usize,
    thread_count: usize,
) -> Result<CellFit, String> {
    match &resolved.kind {
        ResolvedKind::Kmeans { k, n_init, max_iter, init } => {
            let params = kmeans::KMeansParams {
                k: *k,
                n_init: *n_init,
                max_iter: *max_iter,
                init_method: init_method(*init),
                state: root,
                chunk_size,
            };
            let result =
                kmeans::fit(dataset, &params, thread_count).map_err(|e| e.to_string())?;
            Ok(CellFit::Kmeans(result))
        }
        ResolvedKind::Dbscan { eps, min_samples } => {
            let params =
                dbscan::DbscanParams::new(*eps, *min_samples).map_err(|e| e.to_string())?;
            Ok(CellFit::Dbscan(dbscan::fit(dataset, &params, thread_count)))
        }
        ResolvedKind::Ward { n_clusters } => {
            let result = ward::fit(dataset).map_err(|e| e.to_string())?;
            let flat = ward::flat_labels(&result, *n_clusters).map_err(|e| e.to_string())?;
            Ok(CellFit::Ward(result, flat))
        }
    }
}

fn insert_kmeans_facets(
    fingerprints: &mut BTreeMap<String, String>,
    result: &kmeans::KMeansResult,
    inertia: f64,
) {
    for facet in [
        ResultFacet::Centers(&result.centers),
        ResultFacet::Labels(&result.labels),
        ResultFacet::Inertia(inertia),
        ResultFacet::BestInit {
            index: result.best_init_index as u64,
            n_iter: result.n_iter as u64,
        },
    ] {
        fingerprints.insert(facet.tag().to_string(), fingerprint(&facet));
    }
}

fn insert_dbscan_facets(fingerprints: &mut BTreeMap<String, String>, result: &dbscan::DbscanResult) {
    let facet = ResultFacet::DbscanLabels { labels: &result.labels, roles: &result.roles };
    fingerprints.insert(facet.tag().to_string(), fingerprint(&facet));
}

fn insert_ward_facets(
    fingerprints: &mut BTreeMap<String, String>,
    result: &ward::WardResult,
    flat: &[usize],
) {
    for facet in [ResultFacet::MergeList(&result.merges), ResultFacet::Labels(flat)] {
        fingerprints.insert(facet.tag().to_string(), fingerprint(&facet));
    }
}

/// Recompute the inertia reduction with its largest term (ties to the
/// smallest index) perturbed by one ulp — the single-bit fault whose
/// detection the harness is expected to demonstrate. Perturbing the
/// largest term matters: a one-ulp wiggle on a term much smaller than
/// the total is absorbed by rounding and the sum comes out unchanged.
pub fn faulted_inertia(
    points: &Matrix,
    centers: &Matrix,
    labels: &[usize],
    chunk_size: usize,
) -> f64 {
    let mut terms: Vec<f64> = points
        .rows()
        .zip(labels)
        .map(|(row, &label)| {
            sq_euclidean(row, centers.row(label)).expect("fit output shapes are consistent")
        })
        .collect();
    let mut target = 0;
    for (index, &term) in terms.iter().enumerate() {
        if term > terms[target] {
            target = index;
        }
    }
    terms[target] = f64::from_bits(terms[target].to_bits() + 1);
    let plan = ReductionPlan::new(terms.len(), chunk_size).expect("chunk size validated upstream");
    fixed_sum(&terms, &plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::records::read_records;
    use repclust_core::metrics;

    fn blob_config(extra: serde_json::Value) -> RunConfig {
        let mut value = serde_json::json!({
            "datasets": [
                {"blobs": {"n_samples": 60, "n_features": 2, "centers": 3, "cluster_std": 0.4},
                 "minmax": false}
            ],
            "algorithms": ["kmeans", "dbscan", "ward"],
            "replications": 3,
            "seed": 7,
            "kmeans": {"k": 3, "n_init": 2},
            "dbscan": {"eps": 1.0}
        });
        if let serde_json::Value::Object(entries) = extra {
            for (key, entry) in entries {
                value[key] = entry;
            }
        }
        serde_json::from_value(value).unwrap()
    }

    fn results(records: &[Record]) -> Vec<&ResultRecord> {
        records
            .iter()
            .filter_map(|r| match r {
                Record::Result(result) => Some(result),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn matrix_covers_every_cell_and_streams_identical_records() {
        let config = blob_config(serde_json::json!({}));
        let mut buffer = Vec::new();
        let records = run_matrix(&config, &[1, 2], &mut buffer).unwrap();

        // 1 dataset record + 3 algorithms x 2 thread counts x 3 replications.
        assert_eq!(records.len(), 1 + 3 * 2 * 3);
        assert_eq!(read_records(buffer.as_slice()).unwrap(), records);

        let results = results(&records);
        assert_eq!(results.len(), 18);
        assert!(results.iter().all(|r| r.generator_state == results[0].generator_state));
        // Replication 0 keeps labels; later replications drop them.
        for result in &results {
            assert_eq!(result.replication == 0, result.labels.is_some());
        }
        // Facet sets per algorithm.
        for result in &results {
            let keys: Vec<&str> = result.fingerprints.keys().map(String::as_str).collect();
            match result.algorithm {
                Algorithm::Kmeans => assert_eq!(keys, ["C", "I", "L", "M"]),
                Algorithm::Dbscan => assert_eq!(keys, ["D"]),
                Algorithm::Ward => assert_eq!(keys, ["L", "W"]),
            }
        }
    }

    #[test]
    fn replications_and_thread_counts_agree_on_fingerprints() {
        let config = blob_config(serde_json::json!({}));
        let records = run_matrix(&config, &[1, 4], &mut Vec::new()).unwrap();
        let results = results(&records);
        for algorithm in [Algorithm::Kmeans, Algorithm::Dbscan, Algorithm::Ward] {
            let mine: Vec<_> = results.iter().filter(|r| r.algorithm == algorithm).collect();
            assert_eq!(mine.len(), 2 * 3);
            assert!(mine.iter().all(|r| r.fingerprints == mine[0].fingerprints));
        }
    }

    /// Three collinear points, one cluster: squared distances 4, 1, 9 sum
    /// to 14, and the largest term exceeds half the total, so a one-ulp
    /// bump on it cannot be absorbed by the reduction's rounding. Fault
    /// tests need such an instance — on typical data a one-ulp wiggle on
    /// a term far below the total often vanishes into the rounding.
    fn line_config(dir: &tempfile::TempDir, fault_replication: usize) -> RunConfig {
        let path = dir.path().join("line.csv");
        std::fs::write(&path, "0.0\n1.0\n5.0\n").unwrap();
        serde_json::from_value(serde_json::json!({
            "datasets": [{"csv": path, "minmax": false}],
            "algorithms": ["kmeans"],
            "replications": 3,
            "kmeans": {"k": 1, "n_init": 1},
            "fault": {"replication": fault_replication}
        }))
        .unwrap()
    }

    #[test]
    fn fault_hook_perturbs_the_largest_term_and_survives_the_sum() {
        // Three collinear points and one center at their mean: the squared
        // distances are 4, 1, and 9, so the largest term (9) carries more
        // than half the total (14) and a one-ulp bump must survive the
        // reduction instead of being absorbed by rounding.
        use repclust_core::detnum::DEFAULT_CHUNK_SIZE;
        let points = Matrix::new(3, 1, vec![0.0, 1.0, 5.0]).unwrap();
        let dataset = Dataset::new("line", points).unwrap();
        let params = kmeans::KMeansParams::new(1, GeneratorState::from_seed(42));
        let result = kmeans::fit(&dataset, &params, 1).unwrap();
        assert_eq!(result.inertia, 14.0);

        let faulted = faulted_inertia(
            dataset.points(),
            &result.centers,
            &result.labels,
            DEFAULT_CHUNK_SIZE,
        );
        assert_ne!(faulted.to_bits(), result.inertia.to_bits());
        // The perturbation is one ulp of the 9.0 term, deterministically.
        assert_eq!(faulted, 14.0 + (f64::from_bits(9.0f64.to_bits() + 1) - 9.0));
    }

    #[test]
    fn faulted_runs_disagree_only_on_inertia_records() {
        let dir = tempfile::tempdir().unwrap();
        let config = line_config(&dir, 1);
        let records = run_matrix(&config, &[1], &mut Vec::new()).unwrap();
        let results = results(&records);
        assert_eq!(results.len(), 3);
        assert!(results[1].fault_injected);
        assert!(!results[0].fault_injected && !results[2].fault_injected);
        assert_eq!(results[0].fingerprints, results[2].fingerprints);
        assert_ne!(results[0].fingerprints["I"], results[1].fingerprints["I"]);
        for facet in ["C", "L", "M"] {
            assert_eq!(results[0].fingerprints[facet], results[1].fingerprints[facet]);
        }
        assert_eq!(results[0].inertia.unwrap(), HexFloat(14.0));
        let bumped_term = f64::from_bits(9.0f64.to_bits() + 1);
        assert_eq!(results[1].inertia.unwrap(), HexFloat(4.0 + 1.0 + bumped_term));
    }

    #[test]
    fn unfaulted_recompute_matches_the_fit_inertia_bitwise() {
        let config = blob_config(serde_json::json!({"algorithms": ["kmeans"]}));
        let records = run_matrix(&config, &[1], &mut Vec::new()).unwrap();
        let dataset = match &records[0] {
            Record::Dataset(d) => d.clone(),
            other => panic!("expected dataset record, got {other:?}"),
        };
        // Rebuild the dataset and the fit, then recompute inertia the way
        // the fault hook does minus the perturbation.
        let result = results(&records)[0];
        let state = GeneratorState::from_hex(&result.generator_state).unwrap();
        let blobs = match &dataset.source {
            DataSource::Blobs { n_samples, n_features, centers, cluster_std, state } => {
                make_blobs(
                    *n_samples,
                    *n_features,
                    *centers,
                    cluster_std.0,
                    GeneratorState::from_hex(state).unwrap(),
                )
                .unwrap()
            }
            other => panic!("expected blobs, got {other:?}"),
        };
        let params = kmeans::KMeansParams {
            k: 3,
            n_init: 2,
            max_iter: 300,
            init_method: kmeans::InitMethod::RandomPoints,
            state,
            chunk_size: result.chunk_size,
        };
        let fit = kmeans::fit(&blobs, &params, 1).unwrap();
        let recomputed =
            metrics::inertia(blobs.points(), &fit.centers, &fit.labels, result.chunk_size);
        assert_eq!(recomputed.to_bits(), fit.inertia.to_bits());
        assert_eq!(result.inertia.unwrap(), HexFloat(fit.inertia));
    }

    #[test]
    fn replay_reproduces_every_fingerprint() {
        let config = blob_config(serde_json::json!({}));
        let records = run_matrix(&config, &[2], &mut Vec::new()).unwrap();
        for result in results(&records) {
            let fresh = replay(&records, result).unwrap();
            assert_eq!(fresh, result.fingerprints, "replay drifted for {}", result.algorithm);
        }
    }

    #[test]
    fn replay_reproduces_faulted_records_too() {
        let dir = tempfile::tempdir().unwrap();
        let config = line_config(&dir, 0);
        let records = run_matrix(&config, &[1], &mut Vec::new()).unwrap();
        let results = results(&records);
        let faulted = results[0];
        assert!(faulted.fault_injected);
        // The faulted fingerprint genuinely differs from the clean ones,
        // so matching it proves replay re-applies the fault.
        assert_ne!(faulted.fingerprints["I"], results[1].fingerprints["I"]);
        assert_eq!(replay(&records, faulted).unwrap(), faulted.fingerprints);
    }

    #[test]
    fn csv_datasets_run_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        let blobs = make_blobs(40, 2, 2, 0.3, GeneratorState::from_seed(5)).unwrap();
        crate::io::write_csv(&path, &blobs).unwrap();

        let config: RunConfig = serde_json::from_value(serde_json::json!({
            "datasets": [{"csv": path, "label_column": "label"}],
            "algorithms": ["kmeans", "ward"],
            "replications": 2,
            "seed": 3
        }))
        .unwrap();
        let records = run_matrix(&config, &[1], &mut Vec::new()).unwrap();
        match &records[0] {
            // k and n_clusters fall back to the ground-truth class count.
            Record::Dataset(d) => assert_eq!(d.ground_truth.as_ref().unwrap().len(), 40),
            other => panic!("expected dataset record, got {other:?}"),
        }
        let results = results(&records);
        assert_eq!(results.len(), 4);
        for result in results {
            match &result.params {
                AlgoParams::Kmeans { k, .. } => assert_eq!(*k, 2),
                AlgoParams::Ward { n_clusters } => assert_eq!(*n_clusters, 2),
                other => panic!("unexpected params {other:?}"),
            }
            assert_eq!(replay(&records, result).unwrap(), result.fingerprints);
        }
    }

    #[test]
    fn unresolvable_algorithms_become_error_records() {
        // No ground truth (csv without label column) and no explicit k.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.csv");
        std::fs::write(&path, "1.0,2.0\n3.0,4.0\n5.0,6.0\n").unwrap();
        let config: RunConfig = serde_json::from_value(serde_json::json!({
            "datasets": [{"csv": path}],
            "algorithms": ["kmeans", "dbscan"],
            "replications": 2
        }))
        .unwrap();
        let records = run_matrix(&config, &[1], &mut Vec::new()).unwrap();
        let errors: Vec<&ErrorRecord> = records
            .iter()
            .filter_map(|r| match r {
                Record::Error(e) => Some(e),
                _ => None,
            })
            .collect();
        // kmeans lacks k, dbscan lacks eps; the dataset record still leads.
        assert!(matches!(records[0], Record::Dataset(_)));
        assert_eq!(errors.len(), 2);
        assert_eq!(errors[0].algorithm, Some(Algorithm::Kmeans));
        assert_eq!(errors[1].algorithm, Some(Algorithm::Dbscan));
    }

    #[test]
    fn missing_csv_files_become_dataset_error_records() {
        let config: RunConfig = serde_json::from_value(serde_json::json!({
            "datasets": [{"csv": "/nonexistent/points.csv", "name": "ghost"}],
            "algorithms": ["ward"],
            "replications": 2
        }))
        .unwrap();
        let records = run_matrix(&config, &[1], &mut Vec::new()).unwrap();
        assert_eq!(records.len(), 1);
        match &records[0] {
            Record::Error(error) => {
                assert_eq!(error.dataset.as_deref(), Some("ghost"));
                assert_eq!(error.algorithm, None);
            }
            other => panic!("expected error record, got {other:?}"),
        }
    }

    #[test]
    fn per_dataset_dbscan_override_beats_the_global_section() {
        let config: RunConfig = serde_json::from_value(serde_json::json!({
            "datasets": [
                {"blobs": {"n_samples": 20, "n_features": 2, "centers": 2, "cluster_std": 0.3},
                 "dbscan": {"eps": 0.25}},
                {"blobs": {"n_samples": 22, "n_features": 2, "centers": 2, "cluster_std": 0.3},
                 "name": "second"}
            ],
            "algorithms": ["dbscan"],
            "replications": 2,
            "dbscan": {"eps": 0.5, "min_samples": 3}
        }))
        .unwrap();
        let records = run_matrix(&config, &[1], &mut Vec::new()).unwrap();
        let results = results(&records);
        let eps_of = |r: &ResultRecord| match &r.params {
            AlgoParams::Dbscan { eps, min_samples } => (eps.0, *min_samples),
            other => panic!("unexpected params {other:?}"),
        };
        assert_eq!(eps_of(results[0]), (0.25, 3));
        assert_eq!(eps_of(results[2]), (0.5, 3));
    }

    #[test]
    fn fit_duration_is_recorded() {
        let config = blob_config(serde_json::json!({"algorithms": ["ward"]}));
        let records = run_matrix(&config, &[1], &mut Vec::new()).unwrap();
        assert!(results(&records).iter().all(|r| r.duration_ns > 0));
    }
}
