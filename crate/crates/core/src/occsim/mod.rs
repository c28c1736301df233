//! Optimistic concurrency control in virtual gas time.
//!
//! Three schedulers share one data model:
//!
//! - [`run_occ_classic`]: commit as soon as execution ends, validating reads
//!   against whatever committed meanwhile. The serialization order depends
//!   on timing.
//! - [`run_occ_det_commit`]: commit strictly in block order; each execution
//!   snapshots the highest committed id at dispatch. Final state is fixed,
//!   but which executions abort depends on timing.
//! - [`run_occ_da`]: commit in block order and fix every execution's storage
//!   version before the run from an [`SvPolicy`]. Which executions abort is a
//!   function of the workload and the policy alone.
//!
//! The simulator is single-threaded; "threads" are slots in a virtual pool.

mod classic;
mod engine;
mod probe;
mod timing;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ConflictMode, DependencyGraph};
use crate::storagevm::StorageVersion;
use crate::workload::{TxId, Workload};

pub use classic::{run_occ_classic, run_occ_classic_with};
pub use engine::{run_occ_da, run_occ_da_with, run_occ_det_commit, run_occ_det_commit_with};
pub use probe::{determinism_probe, ModeProbe, ProbeReport};
pub use timing::{GasTiming, JitterTiming, ScriptedTiming, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[serde(rename = "occ-classic")]
    Classic,
    #[serde(rename = "occ-det-commit")]
    DetCommit,
    #[serde(rename = "occ-da")]
    OccDa,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Classic => "occ-classic",
            Mode::DetCommit => "occ-det-commit",
            Mode::OccDa => "occ-da",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Committed,
    Aborted,
}

/// One execution of one transaction.
///
/// `sv` is the snapshot the execution read. For classic OCC, which has no
/// block-order versions, it is the commit position of the last transaction
/// visible at dispatch (`-1` for none).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecAttempt {
    pub tx: TxId,
    pub attempt: u32,
    pub sv: StorageVersion,
    pub start: u64,
    pub end: u64,
    /// Virtual time of the commit or abort decision; `>= end`.
    pub decided_at: u64,
    pub outcome: Outcome,
}

/// The part of an attempt that OCC-DA fixes independently of timing.
pub type AttemptKey = (TxId, u32, StorageVersion, Outcome);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccRunResult {
    pub mode: Mode,
    pub threads: usize,
    pub policy: String,
    /// In decision order.
    pub attempts: Vec<ExecAttempt>,
    pub makespan: u64,
    pub committed_order: Vec<TxId>,
    pub wasted_gas: u64,
    pub serial_gas: u64,
    pub speedup: f64,
}

impl OccRunResult {
    pub fn aborts(&self) -> impl Iterator<Item = &ExecAttempt> {
        self.attempts.iter().filter(|a| a.outcome == Outcome::Aborted)
    }

    pub fn abort_count(&self) -> usize {
        self.aborts().count()
    }

    /// Sorted multiset of `(tx, attempt, sv, outcome)`.
    pub fn attempt_pattern(&self) -> Vec<AttemptKey> {
        let mut keys: Vec<AttemptKey> = self
            .attempts
            .iter()
            .map(|a| (a.tx, a.attempt, a.sv, a.outcome))
            .collect();
        keys.sort();
        keys
    }

    /// Gas of every attempt, committed or not.
    pub fn attempted_gas(&self, w: &Workload) -> u64 {
        self.attempts.iter().map(|a| w.transactions()[a.tx].gas).sum()
    }

    pub fn attempts_of(&self, tx: TxId) -> impl Iterator<Item = &ExecAttempt> {
        self.attempts.iter().filter(move |a| a.tx == tx)
    }

    /// Compact JSON summary: aborts as `(tx, attempt, sv)` triples.
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            mode: self.mode,
            threads: self.threads,
            policy: self.policy.clone(),
            makespan: self.makespan,
            serial: self.serial_gas,
            speedup: self.speedup,
            aborts: self.aborts().map(|a| (a.tx, a.attempt, a.sv)).collect(),
            wasted_gas: self.wasted_gas,
            committed_order: self.committed_order.clone(),
        }
    }

    /// Event log: `tx,attempt,sv,start,end,outcome` per attempt.
    pub fn event_csv(&self) -> String {
        let mut out = String::from("tx,attempt,sv,start,end,outcome\n");
        for a in &self.attempts {
            let outcome = match a.outcome {
                Outcome::Committed => "committed",
                Outcome::Aborted => "aborted",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                a.tx, a.attempt, a.sv, a.start, a.end, outcome
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub threads: usize,
    pub policy: String,
    pub makespan: u64,
    pub serial: u64,
    pub speedup: f64,
    pub aborts: Vec<(TxId, u32, StorageVersion)>,
    pub wasted_gas: u64,
    pub committed_order: Vec<TxId>,
}

/// Storage version assignment for OCC-DA, decided before execution.
///
/// Retries (attempt `>= 1`) use `tx - 1` unless a custom map says otherwise;
/// an execution with `sv = tx - 1` has an empty conflict window and always
/// commits.
#[derive(Debug, Clone, PartialEq)]
pub enum SvPolicy {
    /// First execution reads the pre-block state.
    MinusOne,
    /// First execution waits for the highest id the transaction depends on
    /// in an estimated dependency graph.
    DepGraph(DependencyGraph),
    /// Explicit `(tx, attempt) -> sv`. Missing first attempts default to
    /// `-1`, missing retries to `tx - 1`.
    Custom(BTreeMap<(TxId, u32), StorageVersion>),
}

impl SvPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            SvPolicy::MinusOne => "minus-one",
            SvPolicy::DepGraph(_) => "dep-graph",
            SvPolicy::Custom(_) => "custom",
        }
    }

    pub fn sv_for(&self, tx: TxId, attempt: u32) -> StorageVersion {
        match self {
            SvPolicy::Custom(map) => match map.get(&(tx, attempt)) {
                Some(&sv) => sv,
                None if attempt == 0 => StorageVersion::PRE_BLOCK,
                None => StorageVersion::before(tx),
            },
            _ if attempt > 0 => StorageVersion::before(tx),
            SvPolicy::MinusOne => StorageVersion::PRE_BLOCK,
            SvPolicy::DepGraph(g) => g
                .max_dependency(tx)
                .map_or(StorageVersion::PRE_BLOCK, StorageVersion::of),
        }
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        let check = |tx: TxId, sv: StorageVersion| {
            if sv.get() >= tx as i64 || sv.get() < -1 {
                Err(Error::validation(format!(
                    "storage version {sv} for tx {tx} must lie in [-1, {})",
                    tx
                )))
            } else {
                Ok(())
            }
        };
        match self {
            SvPolicy::MinusOne => Ok(()),
            SvPolicy::DepGraph(g) => {
                if g.len() != n {
                    return Err(Error::validation(format!(
                        "dependency graph has {} vertices, workload has {n}",
                        g.len()
                    )));
                }
                (0..n).try_for_each(|tx| check(tx, self.sv_for(tx, 0)))
            }
            SvPolicy::Custom(map) => {
                for (&(tx, _), &sv) in map {
                    if tx >= n {
                        return Err(Error::validation(format!("policy names unknown tx {tx}")));
                    }
                    check(tx, sv)?;
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn check_threads(threads: usize) -> Result<()> {
    if threads < 1 {
        return Err(Error::validation("thread count must be at least 1"));
    }
    Ok(())
}

/// Alias kept for call sites that think in terms of the boolean flag.
pub fn conflict_mode(cadd_aware: bool) -> ConflictMode {
    ConflictMode::from(cadd_aware)
}
