//! Replication harness around [`repclust_core`].
//!
//! The core crate guarantees that each fit is a pure function of its
//! inputs; this crate provides the machinery to demonstrate it. A run
//! sweeps the full matrix of dataset × algorithm × thread count ×
//! replication, fingerprints every result facet (centers, labels,
//! inertia, winning initialization), and appends self-describing records
//! to an NDJSON file. A report collapses those records into a
//! repeatability grid — any cross in it means two replications disagreed
//! at the bit level — plus an agreement table against ground truth.
//!
//! Also here: CSV dataset loading, RAPL energy sampling with counter-
//! wraparound correction, and a fault-injection hook that perturbs one
//! inertia reduction term by one ulp to prove the grid can actually fail.

pub mod energy;
pub mod harness;
pub mod io;
