//! Canonical byte encodings of result facets, and their SHA-256
//! fingerprints.
//!
//! "Bitwise identical" is only checkable against a serialization that is
//! itself bit-faithful: every float is emitted as its exact IEEE-754 bit
//! pattern (big-endian), every integer at fixed width, every sequence
//! behind an explicit length, and every facet behind a distinct tag byte.
//! Two facets fingerprint equal exactly when their contents are
//! bit-identical — `0.0` and `-0.0` differ, and so do two inertias one ulp
//! apart.

use repclust_core::data::Matrix;
use repclust_core::dbscan::PointRole;
use repclust_core::ward::MergeStep;
use sha2::{Digest, Sha256};

/// One comparable output of a clustering run.
#[derive(Debug, Clone, Copy)]
pub enum ResultFacet<'a> {
    /// Final centers, row-major. Tag `C`.
    Centers(&'a Matrix),
    /// Flat cluster indices (K-Means assignments or a tree cut). Tag `L`.
    Labels(&'a [usize]),
    /// Final objective value. Tag `I`.
    Inertia(f64),
    /// Winning restart and its iteration count. Tag `M`.
    BestInit {
        /// Index of the winning restart.
        index: u64,
        /// Iterations that restart ran.
        n_iter: u64,
    },
    /// Full merge tree. Tag `W`.
    MergeList(&'a [MergeStep]),
    /// Density labels with their roles (noise is `-1`). Tag `D`.
    DbscanLabels {
        /// Cluster id per point.
        labels: &'a [i64],
        /// Role per point.
        roles: &'a [PointRole],
    },
}

impl ResultFacet<'_> {
    /// The single-letter facet name used in records and reports.
    pub fn tag(&self) -> char {
        match self {
            ResultFacet::Centers(_) => 'C',
            ResultFacet::Labels(_) => 'L',
            ResultFacet::Inertia(_) => 'I',
            ResultFacet::BestInit { .. } => 'M',
            ResultFacet::MergeList(_) => 'W',
            ResultFacet::DbscanLabels { .. } => 'D',
        }
    }
}

/// Serialize a facet to its canonical byte sequence.
pub fn canonical_bytes(facet: &ResultFacet) -> Vec<u8> {
    let mut out = Vec::new();
    out.push(facet.tag() as u8);
    match facet {
        ResultFacet::Centers(matrix) => {
            out.extend((matrix.n_rows() as u64).to_be_bytes());
            out.extend((matrix.n_cols() as u64).to_be_bytes());
            for value in matrix.values() {
                out.extend(value.to_bits().to_be_bytes());
            }
        }
        ResultFacet::Labels(labels) => {
            out.extend((labels.len() as u64).to_be_bytes());
            for &label in *labels {
                out.extend((label as u64).to_be_bytes());
            }
        }
        ResultFacet::Inertia(value) => {
            out.extend(value.to_bits().to_be_bytes());
        }
        ResultFacet::BestInit { index, n_iter } => {
            out.extend(index.to_be_bytes());
            out.extend(n_iter.to_be_bytes());
        }
        ResultFacet::MergeList(merges) => {
            out.extend((merges.len() as u64).to_be_bytes());
            for merge in *merges {
                out.extend((merge.id_a as u64).to_be_bytes());
                out.extend((merge.id_b as u64).to_be_bytes());
                out.extend(merge.criterion.to_bits().to_be_bytes());
                out.extend((merge.merged_size as u64).to_be_bytes());
            }
        }
        ResultFacet::DbscanLabels { labels, roles } => {
            assert_eq!(labels.len(), roles.len(), "one role per label");
            out.extend((labels.len() as u64).to_be_bytes());
            for &label in *labels {
                out.extend(label.to_be_bytes());
            }
            for &role in *roles {
                out.push(role.code());
            }
        }
    }
    out
}

/// SHA-256 of the canonical bytes, as lowercase hex.
pub fn fingerprint(facet: &ResultFacet) -> String {
    hex::encode(Sha256::digest(canonical_bytes(facet)))
}
