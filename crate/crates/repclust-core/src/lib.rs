//! Clustering that produces the same bits every time.
//!
//! Most clustering libraries are deterministic only up to floating-point
//! reassociation: change the number of worker threads and a parallel
//! reduction sums in a different order, the last bits of the inertia move,
//! and two "identical" runs stop being comparable. This crate takes the
//! opposite contract. Every algorithm here — Lloyd's K-Means, DBSCAN and
//! Ward agglomeration — is written so that its complete output (centers,
//! labels, objective values, merge history) is a pure function of the input
//! data and parameters, bit-for-bit identical across runs *and across
//! worker-thread counts*.
//!
//! Three mechanisms carry that contract:
//!
//! * [`detnum`] fixes the association order of every reduction (chunked
//!   left-to-right summation, dimension-ordered distances) and provides a
//!   parallel map whose output layout is determined by input index, never
//!   by scheduling.
//! * [`rng`] is a counter-based generator (Philox4x64-10) whose full state
//!   is a serializable key/counter pair, so every random decision can be
//!   replayed exactly and parallel substreams are disjoint by construction.
//! * The algorithms pin every tie: nearest-center ties go to the smallest
//!   center index, merge ties to the lexicographically smallest id pair,
//!   restart ties to the smallest restart index, and so on.
//!
//! The crate is `no_std`-compatible (with `alloc`); disable the default
//! `std` feature and enable `libm` for the math routines. Without `std`
//! the parallel map degrades to a sequential loop with — by construction —
//! identical results.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("enable the `std` or `libm` feature: rng::normal_pair needs ln/sqrt/sin/cos");

pub mod data;
pub mod dbscan;
pub mod detnum;
pub mod kmeans;
pub mod metrics;
pub mod rng;
pub mod ward;
