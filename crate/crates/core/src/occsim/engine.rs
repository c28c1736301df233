//! In-order commit engine shared by OCC-DA and OCC with deterministic commit
//! order.
//!
//! Each loop iteration runs three stages:
//!
//! 1. move waiting transactions whose storage version has committed into the
//!    ready set, then fill free pool slots from it;
//! 2. complete the pooled execution with the least remaining time, advancing
//!    the virtual clock by that amount;
//! 3. drain completed executions in id order, committing or aborting each.
//!
//! An execution of `tx` on snapshot `sv` aborts iff some transaction in
//! `sv+1 ..= tx-1` changed a key that `tx` read. Since that window only
//! depends on `sv`, the check reduces to comparing `sv` against the last
//! earlier transaction that changed any key `tx` observes.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::graph::{observes, ConflictMode};
use crate::storagevm::StorageVersion;
use crate::workload::{AccessIndex, TxId, Workload};

use super::{check_threads, ExecAttempt, GasTiming, Mode, OccRunResult, Outcome, SvPolicy, Timing};

enum SvSource<'p> {
    Fixed(&'p SvPolicy),
    AtDispatch,
}

struct Running {
    remaining: u64,
    tx: TxId,
    sv: StorageVersion,
    attempt: u32,
    start: u64,
}

/// For each tx, the highest earlier id that changed a key it observes, or -1.
pub(crate) fn last_stale_writer(index: &AccessIndex, mode: ConflictMode) -> Vec<i64> {
    let mut last_change: Vec<i64> = vec![-1; index.key_count()];
    let mut out = Vec::with_capacity(index.len());
    for tx in 0..index.len() {
        let mut latest = -1i64;
        for &(key, kind) in index.accesses(tx) {
            let changer = last_change[key as usize];
            if changer >= 0 && observes(kind, mode) {
                latest = latest.max(changer);
            }
        }
        for &(key, kind) in index.accesses(tx) {
            if kind.writes() || kind.cadds() {
                last_change[key as usize] = tx as i64;
            }
        }
        out.push(latest);
    }
    out
}

/// OCC with deterministic aborts: storage versions come from `policy`.
pub fn run_occ_da(
    w: &Workload,
    threads: usize,
    policy: &SvPolicy,
    mode: ConflictMode,
) -> Result<OccRunResult> {
    run_occ_da_with(w, threads, policy, mode, &mut GasTiming)
}

pub fn run_occ_da_with(
    w: &Workload,
    threads: usize,
    policy: &SvPolicy,
    mode: ConflictMode,
    timing: &mut dyn Timing,
) -> Result<OccRunResult> {
    policy.validate(w.len())?;
    run_ordered(w, threads, SvSource::Fixed(policy), mode, timing)
}

/// OCC with deterministic commit order: each execution snapshots the highest
/// committed id at dispatch.
pub fn run_occ_det_commit(w: &Workload, threads: usize, mode: ConflictMode) -> Result<OccRunResult> {
    run_occ_det_commit_with(w, threads, mode, &mut GasTiming)
}

pub fn run_occ_det_commit_with(
    w: &Workload,
    threads: usize,
    mode: ConflictMode,
    timing: &mut dyn Timing,
) -> Result<OccRunResult> {
    run_ordered(w, threads, SvSource::AtDispatch, mode, timing)
}

fn run_ordered(
    w: &Workload,
    threads: usize,
    source: SvSource<'_>,
    mode: ConflictMode,
    timing: &mut dyn Timing,
) -> Result<OccRunResult> {
    check_threads(threads)?;
    let n = w.len();
    let gas = w.gas();
    let index = AccessIndex::new(w);
    let stale = last_stale_writer(&index, mode);

    let initial_sv = |tx: TxId| match source {
        SvSource::Fixed(p) => p.sv_for(tx, 0),
        // always dispatchable; the real version is taken at dispatch
        SvSource::AtDispatch => StorageVersion::PRE_BLOCK,
    };

    let mut waiting: BinaryHeap<Reverse<(StorageVersion, TxId)>> =
        (0..n).map(|tx| Reverse((initial_sv(tx), tx))).collect();
    // ascending ids, paired with the version assigned while waiting
    let mut ready: Vec<(TxId, StorageVersion)> = Vec::new();
    let mut ready_ids: Vec<TxId> = Vec::new();
    let mut pool: Vec<Running> = Vec::with_capacity(threads);
    let mut completed: BinaryHeap<Reverse<(TxId, usize)>> = BinaryHeap::new();
    let mut attempts_so_far = vec![0u32; n];
    let mut records: Vec<ExecAttempt> = Vec::new();
    let mut decided: Vec<usize> = Vec::new();
    let mut committed_order = Vec::with_capacity(n);
    let mut next: TxId = 0;
    let mut clock: u64 = 0;

    while next < n {
        let mut progressed = false;

        // stage 1: schedule
        while let Some(&Reverse((sv, tx))) = waiting.peek() {
            if sv.get() > next as i64 - 1 {
                break;
            }
            waiting.pop();
            let pos = ready.partition_point(|&(id, _)| id < tx);
            ready.insert(pos, (tx, sv));
            progressed = true;
        }
        while pool.len() < threads && !ready.is_empty() {
            ready_ids.clear();
            ready_ids.extend(ready.iter().map(|&(id, _)| id));
            let pick = timing.pick_ready(&ready_ids);
            let (tx, sv) = ready.remove(pick);
            let sv = match source {
                SvSource::Fixed(_) => sv,
                SvSource::AtDispatch => StorageVersion::before(next),
            };
            let attempt = attempts_so_far[tx];
            attempts_so_far[tx] += 1;
            let duration = timing.duration(tx, attempt, gas[tx]).max(1);
            pool.push(Running {
                remaining: duration,
                tx,
                sv,
                attempt,
                start: clock,
            });
            progressed = true;
        }

        // stage 2: execute until the next completion
        if let Some(pos) = (0..pool.len()).min_by_key(|&i| (pool[i].remaining, pool[i].tx)) {
            let done = pool.swap_remove(pos);
            clock += done.remaining;
            for r in &mut pool {
                r.remaining -= done.remaining;
            }
            records.push(ExecAttempt {
                tx: done.tx,
                attempt: done.attempt,
                sv: done.sv,
                start: done.start,
                end: clock,
                decided_at: clock,
                outcome: Outcome::Committed,
            });
            completed.push(Reverse((done.tx, records.len() - 1)));
            progressed = true;
        }

        // stage 3: commit or abort, strictly in id order
        while let Some(&Reverse((tx, rec))) = completed.peek() {
            if tx != next {
                break;
            }
            completed.pop();
            let sv = records[rec].sv;
            records[rec].decided_at = clock;
            decided.push(rec);
            if stale[tx] > sv.get() {
                records[rec].outcome = Outcome::Aborted;
                let retry_sv = match source {
                    SvSource::Fixed(p) => p.sv_for(tx, records[rec].attempt + 1),
                    SvSource::AtDispatch => StorageVersion::PRE_BLOCK,
                };
                waiting.push(Reverse((retry_sv, tx)));
            } else {
                committed_order.push(tx);
                next += 1;
            }
            progressed = true;
        }

        if !progressed {
            return Err(Error::Invariant(format!(
                "scheduler stalled at next = {next} with {} waiting",
                waiting.len()
            )));
        }
    }

    let attempts: Vec<ExecAttempt> = decided.into_iter().map(|i| records[i].clone()).collect();
    let wasted_gas = attempts
        .iter()
        .filter(|a| a.outcome == Outcome::Aborted)
        .map(|a| gas[a.tx])
        .sum();
    let serial_gas = w.serial_gas();
    let (run_mode, policy) = match source {
        SvSource::Fixed(p) => (Mode::OccDa, p.label().to_owned()),
        SvSource::AtDispatch => (Mode::DetCommit, "highest-committed".to_owned()),
    };
    Ok(OccRunResult {
        mode: run_mode,
        threads,
        policy,
        attempts,
        makespan: clock,
        committed_order,
        wasted_gas,
        serial_gas,
        speedup: speedup(serial_gas, clock),
    })
}

pub(crate) fn speedup(serial: u64, makespan: u64) -> f64 {
    if makespan == 0 {
        1.0
    } else {
        serial as f64 / makespan as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{StorageKey, Transaction};

    fn k(s: &str) -> StorageKey {
        s.parse().unwrap()
    }

    /// tx0 writes K (gas 30), tx2 reads K; tx1 and tx3 are independent.
    fn single_read_dep() -> Workload {
        Workload::renumbered(vec![
            Transaction::new("a", 30).write(k("c:K")),
            Transaction::new("b", 10).write(k("c:b")),
            Transaction::new("c", 10).read(k("c:K")).write(k("c:c")),
            Transaction::new("d", 10).write(k("c:d")),
        ])
        .unwrap()
    }

    fn chain(k_txs: usize, gas: u64) -> Workload {
        Workload::renumbered(
            (0..k_txs)
                .map(|i| Transaction::new(format!("s{i}"), gas).increment(k("c:ctr"), 1))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn stale_writer_window_matches_literal_scan() {
        let w = single_read_dep();
        let idx = AccessIndex::new(&w);
        assert_eq!(last_stale_writer(&idx, ConflictMode::Plain), vec![-1, -1, 0, -1]);
    }

    #[test]
    fn single_read_dep_one_abort() {
        let w = single_read_dep();
        let r = run_occ_da(&w, 2, &SvPolicy::MinusOne, ConflictMode::Plain).unwrap();
        let aborts: Vec<_> = r.aborts().map(|a| (a.tx, a.attempt, a.sv)).collect();
        assert_eq!(aborts, vec![(2, 0, StorageVersion::PRE_BLOCK)]);
        let retry = r.attempts_of(2).find(|a| a.attempt == 1).unwrap();
        assert_eq!(retry.sv, StorageVersion::new(1));
        assert_eq!(retry.outcome, Outcome::Committed);
        assert_eq!(r.committed_order, vec![0, 1, 2, 3]);
        assert_eq!(r.wasted_gas, 10);
    }

    #[test]
    fn edge_free_never_aborts() {
        let w = Workload::renumbered(
            (0..10).map(|i| Transaction::new("s", 5).write(k(&format!("c:{i}")))).collect(),
        )
        .unwrap();
        for threads in [1, 3, 10] {
            let r = run_occ_da(&w, threads, &SvPolicy::MinusOne, ConflictMode::Plain).unwrap();
            assert_eq!(r.abort_count(), 0);
            assert_eq!(r.committed_order, (0..10).collect::<Vec<_>>());
            let d = run_occ_det_commit(&w, threads, ConflictMode::Plain).unwrap();
            assert_eq!(d.abort_count(), 0);
        }
    }

    #[test]
    fn one_thread_is_serial() {
        let w = chain(6, 7);
        let g = crate::graph::build_graph(&w, ConflictMode::Plain);
        let r = run_occ_da(&w, 1, &SvPolicy::DepGraph(g), ConflictMode::Plain).unwrap();
        assert_eq!(r.abort_count(), 0);
        assert_eq!(r.makespan, w.serial_gas());
        assert_eq!(r.speedup, 1.0);
        // a pre-block first snapshot aborts even when executed serially
        let r = run_occ_da(&w, 1, &SvPolicy::MinusOne, ConflictMode::Plain).unwrap();
        assert_eq!(r.abort_count(), 5);
        assert_eq!(r.makespan, w.serial_gas() + r.wasted_gas);
        let d = run_occ_det_commit(&w, 1, ConflictMode::Plain).unwrap();
        assert_eq!(d.abort_count(), 0);
        assert_eq!(d.makespan, w.serial_gas());
    }

    #[test]
    fn perfect_dep_graph_avoids_aborts() {
        let w = chain(3, 10);
        let g = crate::graph::build_graph(&w, ConflictMode::Plain);
        let r = run_occ_da(&w, 4, &SvPolicy::DepGraph(g), ConflictMode::Plain).unwrap();
        assert_eq!(r.abort_count(), 0);
        assert_eq!(r.makespan, 30);
    }

    #[test]
    fn det_commit_chain_aborts_but_commits_in_order() {
        let w = crate::workload::TokenDistribution::new(5, 1)
            .gas(crate::workload::GasModel::fixed(10))
            .generate(1)
            .unwrap();
        let r = run_occ_det_commit(&w, 2, ConflictMode::Plain).unwrap();
        assert!(r.abort_count() >= 1);
        assert_eq!(r.committed_order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn minus_one_bounds_attempts_at_two() {
        let w = chain(12, 3);
        let r = run_occ_da(&w, 4, &SvPolicy::MinusOne, ConflictMode::Plain).unwrap();
        for tx in 0..12 {
            assert!(r.attempts_of(tx).count() <= 2);
        }
        // every tx but the first reads the counter that its predecessor bumped
        assert_eq!(r.abort_count(), 11);
    }

    #[test]
    fn custom_policy_allows_more_attempts() {
        let w = chain(3, 5);
        let mut map = std::collections::BTreeMap::new();
        map.insert((2, 1), StorageVersion::new(0));
        let r = run_occ_da(&w, 3, &SvPolicy::Custom(map), ConflictMode::Plain).unwrap();
        assert_eq!(r.attempts_of(2).count(), 3);
        let last = r.attempts_of(2).last().unwrap();
        assert_eq!(last.outcome, Outcome::Committed);
        assert_eq!(last.sv, StorageVersion::new(1));
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = chain(2, 1);
        assert!(run_occ_da(&w, 0, &SvPolicy::MinusOne, ConflictMode::Plain).is_err());
        let mut map = std::collections::BTreeMap::new();
        map.insert((1, 0), StorageVersion::new(1));
        assert!(run_occ_da(&w, 1, &SvPolicy::Custom(map), ConflictMode::Plain).is_err());
    }

    #[test]
    fn cadd_aware_removes_counter_aborts() {
        let w = Workload::renumbered(
            (0..6).map(|i| Transaction::new(format!("s{i}"), 10).cadd(k("c:ctr"), 1)).collect(),
        )
        .unwrap();
        let plain = run_occ_da(&w, 6, &SvPolicy::MinusOne, ConflictMode::Plain).unwrap();
        let aware = run_occ_da(&w, 6, &SvPolicy::MinusOne, ConflictMode::CaddAware).unwrap();
        assert_eq!(plain.abort_count(), 5);
        assert_eq!(aware.abort_count(), 0);
        assert_eq!(aware.makespan, 10);
    }

    #[test]
    fn wasted_gas_accounting() {
        let w = chain(8, 4);
        let r = run_occ_da(&w, 3, &SvPolicy::MinusOne, ConflictMode::Plain).unwrap();
        let committed: u64 = r
            .attempts
            .iter()
            .filter(|a| a.outcome == Outcome::Committed)
            .map(|a| w.transactions()[a.tx].gas)
            .sum();
        assert_eq!(r.wasted_gas + committed, r.attempted_gas(&w));
    }
}
