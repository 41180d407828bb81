//! Fold a record stream into a repeatability report.
//!
//! The report answers three questions per (dataset, algorithm): did every
//! replication produce bit-identical facets at each thread count, do the
//! facets also agree *across* thread counts, and how well do the labels
//! match ground truth. Rendering is deterministic — the same records
//! always produce byte-identical markdown and CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use repclust_core::metrics::adjusted_rand_index;

use crate::harness::records::{Algorithm, ErrorRecord, Record, ResultRecord};
use crate::harness::HarnessError;

/// Facet columns in display order (K-Means centers/labels/inertia/meta,
/// then the Ward merge list and the DBSCAN label+role facet).
const FACET_ORDER: [&str; 6] = ["C", "L", "I", "M", "W", "D"];

/// Verdict for one facet of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Every replication produced the same fingerprint.
    Repeatable,
    /// At least two replications disagree (or a record lacks the facet).
    Differs,
}

impl Verdict {
    fn mark(self) -> &'static str {
        match self {
            Verdict::Repeatable => "ok",
            Verdict::Differs => "X",
        }
    }
}

/// One (dataset, algorithm, thread count) cell, folded over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    /// Dataset name.
    pub dataset: String,
    /// Algorithm.
    pub algorithm: Algorithm,
    /// Worker threads.
    pub thread_count: usize,
    /// Replications seen.
    pub replications: usize,
    /// Replications that ran with the fault hook armed.
    pub faults: usize,
    /// Facet tag → verdict across replications.
    pub facets: BTreeMap<String, Verdict>,
    /// Sum of fit durations over the replications, nanoseconds.
    pub total_duration_ns: u64,
}

/// Verdicts for one (dataset, algorithm) pair across every thread count.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossThreadRow {
    /// Dataset name.
    pub dataset: String,
    /// Algorithm.
    pub algorithm: Algorithm,
    /// Thread counts folded together.
    pub thread_counts: Vec<usize>,
    /// Facet tag → verdict across all replications of all thread counts.
    pub facets: BTreeMap<String, Verdict>,
}

/// Label agreement against ground truth for one (dataset, algorithm).
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    /// Dataset name.
    pub dataset: String,
    /// Algorithm.
    pub algorithm: Algorithm,
    /// Adjusted Rand index of replication 0's labels at the smallest
    /// thread count, against the dataset's ground truth.
    pub ari: f64,
}

/// The folded report; see [`build_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityReport {
    /// Per-cell verdicts, sorted by (dataset, algorithm, threads).
    pub cells: Vec<CellRow>,
    /// Cross-thread verdicts, sorted by (dataset, algorithm).
    pub cross: Vec<CrossThreadRow>,
    /// Ground-truth agreement, sorted by (dataset, algorithm); datasets
    /// without ground truth have no rows.
    pub agreements: Vec<AgreementRow>,
    /// Error records encountered in the stream, in order.
    pub errors: Vec<ErrorRecord>,
}

/// Fold records into a [`RepeatabilityReport`].
///
/// Every cell needs at least two replications — one execution cannot
/// witness repeatability. Noise labels (`-1`) count as a cluster of their
/// own when scoring DBSCAN against ground truth.
pub fn build_report(records: &[Record]) -> Result<RepeatabilityReport, HarnessError> {
    let mut ground_truth: BTreeMap<&str, &[i64]> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut cells: BTreeMap<(&str, Algorithm, usize), Vec<&ResultRecord>> = BTreeMap::new();
    for record in records {
        match record {
            Record::Dataset(dataset) => {
                if let Some(truth) = &dataset.ground_truth {
                    ground_truth.insert(&dataset.name, truth);
                }
            }
            Record::Error(error) => errors.push(error.clone()),
            Record::Result(result) => cells
                .entry((&result.dataset, result.algorithm, result.thread_count))
                .or_default()
                .push(result),
        }
    }

    let mut cell_rows = Vec::new();
    for (&(dataset, algorithm, thread_count), results) in &cells {
        if results.len() < 2 {
            return Err(HarnessError::InsufficientReplications {
                cell: format!("{dataset}/{algorithm}/threads={thread_count}"),
                count: results.len(),
            });
        }
        cell_rows.push(CellRow {
            dataset: dataset.to_string(),
            algorithm,
            thread_count,
            replications: results.len(),
            faults: results.iter().filter(|r| r.fault_injected).count(),
            facets: facet_verdicts(results),
            total_duration_ns: results.iter().map(|r| r.duration_ns).sum(),
        });
    }

    // Cross-thread: fold every record of a (dataset, algorithm) pair,
    // regardless of thread count, into one verdict per facet.
    let mut pairs: BTreeMap<(&str, Algorithm), Vec<&ResultRecord>> = BTreeMap::new();
    for (&(dataset, algorithm, _), results) in &cells {
        pairs.entry((dataset, algorithm)).or_default().extend(results.iter().copied());
    }
    let mut cross = Vec::new();
    for (&(dataset, algorithm), results) in &pairs {
        let thread_counts: BTreeSet<usize> = results.iter().map(|r| r.thread_count).collect();
        cross.push(CrossThreadRow {
            dataset: dataset.to_string(),
            algorithm,
            thread_counts: thread_counts.into_iter().collect(),
            facets: facet_verdicts(results),
        });
    }

    let mut agreements = Vec::new();
    for (&(dataset, algorithm), results) in &pairs {
        let Some(truth) = ground_truth.get(dataset) else { continue };
        // Replication 0 at the smallest thread count carries the labels.
        let Some(labels) = results
            .iter()
            .filter(|r| r.replication == 0)
            .min_by_key(|r| r.thread_count)
            .and_then(|r| r.labels.as_ref())
        else {
            continue;
        };
        let ari = adjusted_rand_index(truth, labels).map_err(|e| HarnessError::Agreement {
            dataset: dataset.to_string(),
            algorithm,
            message: e.to_string(),
        })?;
        agreements.push(AgreementRow { dataset: dataset.to_string(), algorithm, ari });
    }

    Ok(RepeatabilityReport { cells: cell_rows, cross, agreements, errors })
}

/// Per-facet verdict over a set of result records: repeatable exactly when
/// every record carries the facet and all fingerprints agree.
fn facet_verdicts(results: &[&ResultRecord]) -> BTreeMap<String, Verdict> {
    let facet_names: BTreeSet<&str> = results
        .iter()
        .flat_map(|r| r.fingerprints.keys().map(String::as_str))
        .collect();
    facet_names
        .into_iter()
        .map(|facet| {
            let mut values = results.iter().map(|r| r.fingerprints.get(facet));
            let first = values.next().expect("cells contain at least one record");
            let repeatable = first.is_some() && values.all(|v| v == first);
            let verdict = if repeatable { Verdict::Repeatable } else { Verdict::Differs };
            (facet.to_string(), verdict)
        })
        .collect()
}

/// Facet tags present anywhere in the report, in display order.
fn facet_columns(report: &RepeatabilityReport) -> Vec<&str> {
    let present: BTreeSet<&str> = report
        .cells
        .iter()
        .flat_map(|row| row.facets.keys().map(String::as_str))
        .collect();
    FACET_ORDER.iter().copied().filter(|tag| present.contains(tag)).collect()
}

fn seconds(ns: u64) -> String {
    format!("{:.3}", ns as f64 / 1e9)
}

/// Render the report as markdown.
pub fn render_markdown(report: &RepeatabilityReport) -> String {
    let columns = facet_columns(report);
    let mut out = String::new();
    let mark = |facets: &BTreeMap<String, Verdict>, tag: &str| {
        facets.get(tag).map_or("-", |verdict| verdict.mark()).to_string()
    };

    out.push_str("# Repeatability report\n\n## Per-cell verdicts\n\n");
    out.push_str("One row per (dataset, algorithm, thread count); `ok` means every\n");
    out.push_str("replication produced bit-identical results for that facet, `X` means\n");
    out.push_str("at least one differed, `-` means the algorithm has no such facet.\n");
    out.push_str("Facets: C centers, L labels, I inertia, M winning restart and\n");
    out.push_str("iteration count, W merge list, D labels with point roles.\n\n");
    let _ = writeln!(
        out,
        "| dataset | algorithm | threads | reps | {} | fit time (s) |",
        columns.join(" | ")
    );
    let _ = writeln!(out, "|---|---|---|---|{}---|", "---|".repeat(columns.len()));
    for row in &report.cells {
        let reps = if row.faults > 0 {
            format!("{} ({} faulted)", row.replications, row.faults)
        } else {
            row.replications.to_string()
        };
        let marks: Vec<String> = columns.iter().map(|tag| mark(&row.facets, tag)).collect();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            row.dataset,
            row.algorithm,
            row.thread_count,
            reps,
            marks.join(" | "),
            seconds(row.total_duration_ns),
        );
    }

    out.push_str("\n## Cross-thread verdicts\n\n");
    out.push_str("Facets folded over every replication at every thread count: `ok`\n");
    out.push_str("means the result is independent of worker-thread count.\n\n");
    let _ = writeln!(out, "| dataset | algorithm | threads | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|---|---|{}", "---|".repeat(columns.len()));
    for row in &report.cross {
        let threads: Vec<String> = row.thread_counts.iter().map(usize::to_string).collect();
        let marks: Vec<String> = columns.iter().map(|tag| mark(&row.facets, tag)).collect();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            row.dataset,
            row.algorithm,
            threads.join(","),
            marks.join(" | "),
        );
    }

    if !report.agreements.is_empty() {
        out.push_str("\n## Agreement with ground truth\n\n");
        out.push_str("Adjusted Rand index of replication 0 labels (smallest thread\n");
        out.push_str("count) against the dataset's ground truth. DBSCAN noise points\n");
        out.push_str("(label -1) are scored as one cluster of their own.\n\n");
        let datasets: BTreeSet<&str> =
            report.agreements.iter().map(|a| a.dataset.as_str()).collect();
        let algorithms: BTreeSet<Algorithm> =
            report.agreements.iter().map(|a| a.algorithm).collect();
        let names: Vec<String> = algorithms.iter().map(Algorithm::to_string).collect();
        let _ = writeln!(out, "| dataset | {} |", names.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(algorithms.len()));
        for dataset in datasets {
            let scores: Vec<String> = algorithms
                .iter()
                .map(|&algorithm| {
                    report
                        .agreements
                        .iter()
                        .find(|a| a.dataset == dataset && a.algorithm == algorithm)
                        .map_or_else(|| "-".to_string(), |a| format!("{:.4}", a.ari))
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", dataset, scores.join(" | "));
        }
    }

    if !report.errors.is_empty() {
        out.push_str("\n## Errors\n\n");
        for error in &report.errors {
            let scope = match (&error.dataset, &error.algorithm) {
                (Some(dataset), Some(algorithm)) => format!("{dataset}/{algorithm}"),
                (Some(dataset), None) => dataset.clone(),
                (None, Some(algorithm)) => algorithm.to_string(),
                (None, None) => "run".to_string(),
            };
            let _ = writeln!(out, "- {}: {}", scope, error.message);
        }
    }
    out
}

/// Render the report as long-format CSV: one row per (cell, facet), one
/// per cross-thread facet (threads = `all`), one `duration_ns` row per
/// cell, and one `ari` row per agreement.
pub fn render_csv(report: &RepeatabilityReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["dataset", "algorithm", "threads", "replications", "facet", "value"])
        .expect("writing to memory cannot fail");
    let mut write = |dataset: &str, algorithm: Algorithm, threads: &str, reps: &str,
                     facet: &str, value: &str| {
        writer
            .write_record([dataset, &algorithm.to_string(), threads, reps, facet, value])
            .expect("writing to memory cannot fail");
    };

    for row in &report.cells {
        let threads = row.thread_count.to_string();
        let reps = row.replications.to_string();
        for (facet, verdict) in &row.facets {
            let value = match verdict {
                Verdict::Repeatable => "repeatable",
                Verdict::Differs => "differs",
            };
            write(&row.dataset, row.algorithm, &threads, &reps, facet, value);
        }
        write(
            &row.dataset,
            row.algorithm,
            &threads,
            &reps,
            "duration_ns",
            &row.total_duration_ns.to_string(),
        );
    }
    for row in &report.cross {
        for (facet, verdict) in &row.facets {
            let value = match verdict {
                Verdict::Repeatable => "repeatable",
                Verdict::Differs => "differs",
            };
            write(&row.dataset, row.algorithm, "all", "", facet, value);
        }
    }
    for row in &report.agreements {
        write(&row.dataset, row.algorithm, "", "", "ari", &format!("{:.17}", row.ari));
    }

    let bytes = writer.into_inner().expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("csv output is ASCII")
}
