//! Simulation and analysis toolkit for parallel execution of blockchain
//! transactions.
//!
//! The crate is organised around a single data model ([`workload`]) and a set
//! of analyses over it:
//!
//! - [`graph`] builds the storage-conflict dependency graph and its heaviest
//!   (critical) path.
//! - [`bound`] computes abort-free speedup bounds with a heaviest-path-first
//!   list scheduler, plus an exhaustive oracle for small instances.
//! - [`occsim`] simulates optimistic schedulers in virtual gas time: classic
//!   OCC, OCC with deterministic commit order, and OCC with deterministic
//!   aborts (OCC-DA).
//! - [`transforms`] rewrites workloads and graphs to model conflict
//!   elimination (multiple senders, partitioned counters, commutative adds).
//! - [`storagevm`] is a small multi-version store used as the serial
//!   reference executor.
//! - [`report`] orchestrates experiments and emits JSON/CSV reports.
//!
//! Batch work (corpus sweeps, probe trials) goes through [`exec`], which uses
//! rayon when the `parallel` feature is enabled and plain iteration otherwise.

pub mod bound;
pub mod error;
pub mod exec;
pub mod graph;
mod hash;
pub mod occsim;
pub mod report;
pub mod stats;
pub mod storagevm;
pub mod transforms;
pub mod workload;

pub use error::{Error, Result};
pub use graph::{ConflictMode, DependencyGraph, PathReport};
pub use workload::{AccessSet, KeyTag, StorageKey, Transaction, TxId, Workload};
