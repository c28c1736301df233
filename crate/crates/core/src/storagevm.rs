//! Multi-version key-value store with snapshot reads and commutative-add
//! buffering.
//!
//! This is the serial reference executor: [`run_serial`] defines the correct
//! final state of a workload and [`replay_check`] verifies that a simulated
//! parallel run reaches the same state.
//!
//! Traces carry no values, so values are synthetic. A plain write stores a
//! hash of the writer's id, the key, and every value the transaction read;
//! any stale read therefore changes some written value and the digest. A
//! write tagged as an increment stores `read + delta` instead, so counter
//! totals stay meaningful.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::hash::Mixer;
use crate::occsim::{Outcome, OccRunResult};
use crate::workload::{StorageKey, Transaction, TxId, Workload};

/// Highest version whose writes a snapshot includes; `-1` is the state
/// before the execution unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StorageVersion(i64);

impl StorageVersion {
    pub const PRE_BLOCK: StorageVersion = StorageVersion(-1);

    pub fn new(v: i64) -> Self {
        StorageVersion(v)
    }

    pub fn of(tx: TxId) -> Self {
        StorageVersion(tx as i64)
    }

    /// Snapshot that sees everything committed strictly before `tx`.
    pub fn before(tx: TxId) -> Self {
        StorageVersion(tx as i64 - 1)
    }

    pub fn get(self) -> i64 {
        self.0
    }

    /// Whether writes committed at `version` are visible.
    pub fn includes(self, version: usize) -> bool {
        (version as i64) <= self.0
    }
}

impl fmt::Display for StorageVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Committed history: per key, `(version, value)` in strictly increasing
/// version order.
#[derive(Debug, Clone, Default)]
pub struct StorageState {
    committed: HashMap<StorageKey, Vec<(usize, i64)>>,
    last_version: Option<usize>,
    floor: Option<usize>,
}

impl StorageState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Value visible at `sv`, or 0 when the key was never written at or
    /// below it.
    pub fn read(&self, key: &StorageKey, sv: StorageVersion) -> Result<(i64, StorageVersion)> {
        if let Some(floor) = self.floor {
            if sv.get() < floor as i64 {
                return Err(Error::Invariant(format!(
                    "snapshot {sv} is below the retained version floor {floor}"
                )));
            }
        }
        let Some(history) = self.committed.get(key) else {
            return Ok((0, StorageVersion::PRE_BLOCK));
        };
        let visible = history.partition_point(|&(v, _)| sv.includes(v));
        Ok(match visible {
            0 => (0, StorageVersion::PRE_BLOCK),
            p => {
                let (v, value) = history[p - 1];
                (value, StorageVersion::of(v))
            }
        })
    }

    pub fn latest(&self, key: &StorageKey) -> i64 {
        self.committed
            .get(key)
            .and_then(|h| h.last())
            .map_or(0, |&(_, v)| v)
    }

    /// Drops history that no snapshot at or above `floor` can observe.
    /// Later reads below the floor fail.
    pub fn set_version_floor(&mut self, floor: usize) {
        self.floor = Some(floor);
        for history in self.committed.values_mut() {
            let visible = history.partition_point(|&(v, _)| v <= floor);
            if visible > 1 {
                history.drain(..visible - 1);
            }
        }
    }

    /// Applies `effect` atomically at `version`: buffered writes, then
    /// pending adds folded onto the latest committed value.
    pub fn commit(&mut self, effect: &TxEffect, version: usize) -> Result<()> {
        if self.last_version.is_some_and(|last| version <= last) {
            return Err(Error::Invariant(format!(
                "commit at version {version} after version {}",
                self.last_version.unwrap()
            )));
        }
        for (key, &value) in &effect.write_buffer {
            self.committed.entry(key.clone()).or_default().push((version, value));
        }
        for (key, deltas) in &effect.pending_cadds {
            let sum = deltas.iter().fold(0i64, |acc, d| acc.wrapping_add(*d));
            let value = self.latest(key).wrapping_add(sum);
            self.committed.entry(key.clone()).or_default().push((version, value));
        }
        self.last_version = Some(version);
        Ok(())
    }

    /// Final value of every key ever written, in key order.
    pub fn final_values(&self) -> BTreeMap<&StorageKey, i64> {
        self.committed
            .iter()
            .filter_map(|(k, h)| h.last().map(|&(_, v)| (k, v)))
            .collect()
    }

    /// SHA-256 over `key value\n` lines of [`final_values`](Self::final_values).
    pub fn digest(&self) -> StateDigest {
        let mut hasher = Sha256::new();
        for (k, v) in self.final_values() {
            hasher.update(format!("{k} {v}\n").as_bytes());
        }
        StateDigest(hasher.finalize().into())
    }

    /// Sorted `key value version` lines of the latest entries.
    pub fn dump(&self) -> String {
        let mut rows: Vec<(&StorageKey, i64, usize)> = self
            .committed
            .iter()
            .filter_map(|(k, h)| h.last().map(|&(ver, val)| (k, val, ver)))
            .collect();
        rows.sort();
        rows.iter()
            .map(|(k, val, ver)| format!("{k} {val} {ver}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateDigest([u8; 32]);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// A storage instruction, for executing explicit instruction sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Load(StorageKey),
    Store(StorageKey, i64),
    Cadd(StorageKey, i64),
}

/// Result of executing one transaction against a snapshot. A key never has
/// both a buffered write and pending adds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TxEffect {
    pub read_log: Vec<(StorageKey, i64, StorageVersion)>,
    pub write_buffer: BTreeMap<StorageKey, i64>,
    pub pending_cadds: BTreeMap<StorageKey, Vec<i64>>,
}

impl TxEffect {
    pub fn is_empty(&self) -> bool {
        self.read_log.is_empty() && self.write_buffer.is_empty() && self.pending_cadds.is_empty()
    }
}

/// Interprets a storage instruction sequence.
///
/// `Store` erases pending adds on the key. `Load` with pending adds folds
/// them into the snapshot value first and turns the key into a buffered
/// write. Loads of locally written keys do not touch storage.
pub struct Executor<'s> {
    state: &'s StorageState,
    sv: StorageVersion,
    effect: TxEffect,
}

impl<'s> Executor<'s> {
    pub fn new(state: &'s StorageState, sv: StorageVersion) -> Self {
        Executor {
            state,
            sv,
            effect: TxEffect::default(),
        }
    }

    pub fn load(&mut self, key: &StorageKey) -> Result<i64> {
        if let Some(&v) = self.effect.write_buffer.get(key) {
            return Ok(v);
        }
        let (base, at) = self.state.read(key, self.sv)?;
        self.effect.read_log.push((key.clone(), base, at));
        if let Some(deltas) = self.effect.pending_cadds.remove(key) {
            let value = deltas.iter().fold(base, |acc, d| acc.wrapping_add(*d));
            self.effect.write_buffer.insert(key.clone(), value);
            return Ok(value);
        }
        Ok(base)
    }

    pub fn store(&mut self, key: &StorageKey, value: i64) {
        self.effect.pending_cadds.remove(key);
        self.effect.write_buffer.insert(key.clone(), value);
    }

    pub fn cadd(&mut self, key: &StorageKey, delta: i64) {
        if let Some(v) = self.effect.write_buffer.get_mut(key) {
            *v = v.wrapping_add(delta);
        } else {
            self.effect.pending_cadds.entry(key.clone()).or_default().push(delta);
        }
    }

    pub fn apply(&mut self, op: &Op) -> Result<()> {
        match op {
            Op::Load(k) => {
                self.load(k)?;
            }
            Op::Store(k, v) => self.store(k, *v),
            Op::Cadd(k, d) => self.cadd(k, *d),
        }
        Ok(())
    }

    pub fn finish(self) -> TxEffect {
        self.effect
    }
}

pub fn exec_ops(ops: &[Op], sv: StorageVersion, state: &StorageState) -> Result<TxEffect> {
    let mut ex = Executor::new(state, sv);
    for op in ops {
        ex.apply(op)?;
    }
    Ok(ex.finish())
}

/// Executes a trace-level transaction: reads, then adds, then writes.
pub fn exec_abstract(tx: &Transaction, sv: StorageVersion, state: &StorageState) -> Result<TxEffect> {
    let mut ex = Executor::new(state, sv);
    let mut read_values = Vec::with_capacity(tx.access.reads.len());
    for key in &tx.access.reads {
        read_values.push((key, ex.load(key)?));
    }
    for (key, delta) in &tx.access.cadds {
        ex.cadd(key, *delta);
    }
    let mut fingerprint = Mixer::new().u64(tx.id as u64);
    for (key, value) in &read_values {
        fingerprint = fingerprint.bytes(key.to_string().as_bytes()).i64(*value);
    }
    for key in &tx.access.writes {
        let read = read_values.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let value = match (tx.increment_delta(key), read) {
            (Some(delta), Some(old)) => old.wrapping_add(delta),
            _ => fingerprint.bytes(key.to_string().as_bytes()).finish() as i64,
        };
        ex.store(key, value);
    }
    Ok(ex.finish())
}

/// Executes every transaction in block order, each on the snapshot right
/// before it.
pub fn serial_state(w: &Workload) -> Result<StorageState> {
    let mut state = StorageState::new();
    for tx in w.transactions() {
        let effect = exec_abstract(tx, StorageVersion::before(tx.id), &state)?;
        state.commit(&effect, tx.id)?;
    }
    Ok(state)
}

pub fn run_serial(w: &Workload) -> Result<StateDigest> {
    Ok(serial_state(w)?.digest())
}

/// Serial execution in an arbitrary permutation of the transactions, each
/// reading everything committed before it.
pub fn serial_state_in_order(w: &Workload, order: &[TxId]) -> Result<StorageState> {
    let mut seen = vec![false; w.len()];
    if order.len() != w.len() || order.iter().any(|&t| t >= w.len() || std::mem::replace(&mut seen[t], true)) {
        return Err(Error::validation("order is not a permutation of the workload"));
    }
    let mut state = StorageState::new();
    for (pos, &tx) in order.iter().enumerate() {
        let effect = exec_abstract(&w.transactions()[tx], StorageVersion::new(pos as i64 - 1), &state)?;
        state.commit(&effect, pos)?;
    }
    Ok(state)
}

/// Re-executes the committed attempt of each transaction, in commit order,
/// on that attempt's recorded snapshot, and compares the final digest with
/// [`run_serial`].
///
/// Versions here are commit positions. For the deterministic modes the
/// commit order is block order, so positions equal transaction ids.
pub fn replay_check(w: &Workload, run: &OccRunResult) -> Result<bool> {
    Ok(replay(w, run)? == run_serial(w)?)
}

/// Like [`replay_check`], but against serial execution in the run's own
/// commit order. This is the guarantee classic OCC gives: some serial order,
/// not necessarily block order.
pub fn replay_check_commit_order(w: &Workload, run: &OccRunResult) -> Result<bool> {
    let replayed = replay(w, run)?;
    Ok(replayed == serial_state_in_order(w, &run.committed_order)?.digest())
}

fn replay(w: &Workload, run: &OccRunResult) -> Result<StateDigest> {
    let n = w.len();
    let mut committed: Vec<Option<StorageVersion>> = vec![None; n];
    for a in &run.attempts {
        if a.tx >= n {
            return Err(Error::validation(format!("attempt references unknown tx {}", a.tx)));
        }
        if a.outcome == Outcome::Committed {
            if committed[a.tx].is_some() {
                return Err(Error::validation(format!("tx {} committed twice", a.tx)));
            }
            committed[a.tx] = Some(a.sv);
        }
    }
    if run.committed_order.len() != n {
        return Err(Error::validation("committed order does not cover the workload"));
    }
    let mut state = StorageState::new();
    for (pos, &tx) in run.committed_order.iter().enumerate() {
        let sv = committed
            .get(tx)
            .copied()
            .flatten()
            .ok_or_else(|| Error::validation(format!("tx {tx} has no committed attempt")))?;
        let effect = exec_abstract(&w.transactions()[tx], sv, &state)?;
        state.commit(&effect, pos)?;
    }
    Ok(state.digest())
}
