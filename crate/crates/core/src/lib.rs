//! Allocation-only kernels for large-scale unsupervised re-identification.
//!
//! Everything in this crate operates on in-memory [`FeatureMatrix`] values and
//! builds with `#![no_std]` + `alloc`. The default `std` feature only switches
//! the row-parallel kernels onto rayon; results are identical either way.
//!
//! | Module | What it does |
//! |--------|--------------|
//! | [`types`] | feature matrices, label tables, neighbor lists, refined distances |
//! | [`knn`] | exact top-k search and dense pairwise distances |
//! | [`rerank`] | local re-ranking (sparse, `n·k`) and the full k-reciprocal baseline |
//! | [`sampling`] | local neighborhood sampling around a random anchor |
//! | [`scheduler`] | per-epoch DBSCAN radius schedules |
//! | [`clustering`] | DBSCAN over sparse refined distances, ARI |
//! | [`cotrain`] | pseudo-label derangement across views |
//! | [`losses`] | proxy / batch-hard / Barlow Twins losses, EMA, PK batches |
//! | [`eval`] | ensemble distances, cross-camera mAP and CMC |
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod clustering;
pub mod cotrain;
mod error;
pub mod eval;
pub mod knn;
pub mod losses;
pub(crate) mod par;
pub mod rerank;
pub mod sampling;
pub mod scheduler;
pub mod types;

pub use error::{Error, Result};
pub use knn::Metric;
pub use types::{
    ClusterAssignment, DistanceTable, FeatureMatrix, LabelTable, NeighborList,
    SparseRefinedDistances,
};

/// Neighborhood size used throughout unless configured otherwise.
pub const DEFAULT_K: usize = 20;
