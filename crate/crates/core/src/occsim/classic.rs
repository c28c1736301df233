//! Classic OCC: first-come-first-served dispatch, commit at completion,
//! backward validation against transactions that committed while the
//! execution was running. Aborted transactions rejoin the ready queue.

use crate::error::Result;
use crate::graph::{stale_read, ConflictMode};
use crate::storagevm::StorageVersion;
use crate::workload::{AccessIndex, TxId, Workload};

use super::engine::speedup;
use super::{check_threads, ExecAttempt, JitterTiming, Mode, OccRunResult, Outcome, Timing};

struct Running {
    remaining: u64,
    tx: TxId,
    attempt: u32,
    start: u64,
    /// Commits visible at dispatch.
    seen: usize,
}

/// Classic OCC with seeded timing perturbation: dispatch order among ready
/// transactions and per-attempt durations (gas +/- 50%) come from
/// `interleaving_seed`.
pub fn run_occ_classic(w: &Workload, threads: usize, interleaving_seed: u64) -> Result<OccRunResult> {
    run_occ_classic_with(w, threads, &mut JitterTiming::new(interleaving_seed))
}

pub fn run_occ_classic_with(w: &Workload, threads: usize, timing: &mut dyn Timing) -> Result<OccRunResult> {
    check_threads(threads)?;
    let n = w.len();
    let gas = w.gas();
    let index = AccessIndex::new(w);

    let mut ready: Vec<TxId> = (0..n).collect();
    let mut pool: Vec<Running> = Vec::with_capacity(threads);
    let mut attempts_so_far = vec![0u32; n];
    let mut commits: Vec<TxId> = Vec::with_capacity(n);
    let mut attempts = Vec::new();
    let mut clock = 0u64;

    while commits.len() < n {
        while pool.len() < threads && !ready.is_empty() {
            let tx = ready.remove(timing.pick_ready(&ready));
            let attempt = attempts_so_far[tx];
            attempts_so_far[tx] += 1;
            pool.push(Running {
                remaining: timing.duration(tx, attempt, gas[tx]).max(1),
                tx,
                attempt,
                start: clock,
                seen: commits.len(),
            });
        }

        let pos = (0..pool.len())
            .min_by_key(|&i| (pool[i].remaining, pool[i].tx))
            .expect("pool cannot be empty while transactions remain");
        let done = pool.swap_remove(pos);
        clock += done.remaining;
        for r in &mut pool {
            r.remaining -= done.remaining;
        }

        let invalid = commits[done.seen..].iter().any(|&c| {
            index.any_shared(c, done.tx, |a, b| stale_read(a, b, ConflictMode::Plain))
        });
        let outcome = if invalid {
            let at = ready.partition_point(|&id| id < done.tx);
            ready.insert(at, done.tx);
            Outcome::Aborted
        } else {
            commits.push(done.tx);
            Outcome::Committed
        };
        attempts.push(ExecAttempt {
            tx: done.tx,
            attempt: done.attempt,
            sv: StorageVersion::new(done.seen as i64 - 1),
            start: done.start,
            end: clock,
            decided_at: clock,
            outcome,
        });
    }

    let wasted_gas = attempts
        .iter()
        .filter(|a: &&ExecAttempt| a.outcome == Outcome::Aborted)
        .map(|a| gas[a.tx])
        .sum();
    let serial_gas = w.serial_gas();
    Ok(OccRunResult {
        mode: Mode::Classic,
        threads,
        policy: "first-come-first-served".to_owned(),
        attempts,
        makespan: clock,
        committed_order: commits,
        wasted_gas,
        serial_gas,
        speedup: speedup(serial_gas, clock),
    })
}
