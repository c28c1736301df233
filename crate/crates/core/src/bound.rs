//! Abort-free speedup bounds.
//!
//! [`bound_schedule`] is a non-preemptive list scheduler in virtual gas
//! time: whenever a thread is idle, it takes the ready transaction (all
//! dependencies finished) that heads the heaviest dependency chain. List
//! scheduling is not optimal in general, so [`brute_force_makespan`] gives
//! the exact optimum for small graphs to measure the gap.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Strategy};
use crate::graph::{build_graph, critical_path, heaviest_from, ConflictMode, DependencyGraph};
use crate::stats::{mean, overall_speedup, Histogram};
use crate::workload::{TxId, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub tx: TxId,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub threads: usize,
    pub makespan: u64,
    pub serial_cost: u64,
    pub speedup: f64,
    pub per_thread: Vec<Vec<Slot>>,
}

impl ScheduleResult {
    pub fn slot_of(&self, tx: TxId) -> Option<(usize, Slot)> {
        self.per_thread
            .iter()
            .enumerate()
            .find_map(|(t, slots)| slots.iter().find(|s| s.tx == tx).map(|s| (t, *s)))
    }

    pub fn summary(&self, with_timeline: bool) -> BoundSummary {
        BoundSummary {
            makespan: self.makespan,
            serial: self.serial_cost,
            speedup: self.speedup,
            threads: self.threads,
            timeline: with_timeline.then(|| self.per_thread.clone()),
        }
    }
}

/// JSON shape of one bound result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub makespan: u64,
    pub serial: u64,
    pub speedup: f64,
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline: Option<Vec<Vec<Slot>>>,
}

fn check_threads(threads: usize) -> Result<()> {
    if threads < 1 {
        return Err(Error::validation("thread count must be at least 1"));
    }
    Ok(())
}

/// Heaviest-path-first list schedule. Priority ties go to the lowest id,
/// thread ties to the lowest thread index.
pub fn bound_schedule(g: &DependencyGraph, threads: usize) -> Result<ScheduleResult> {
    check_threads(threads)?;
    let n = g.len();
    let priority = heaviest_from(g);
    let succs = g.successors();
    let mut unmet: Vec<usize> = (0..n).map(|j| g.dependencies(j).len()).collect();
    let mut ready: BinaryHeap<(u64, Reverse<TxId>)> = (0..n)
        .filter(|&j| unmet[j] == 0)
        .map(|j| (priority[j], Reverse(j)))
        .collect();
    let mut running: Vec<Option<Slot>> = vec![None; threads];
    let mut per_thread: Vec<Vec<Slot>> = vec![Vec::new(); threads];
    let mut now = 0u64;

    loop {
        for (t, slot) in running.iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            let Some((_, Reverse(tx))) = ready.pop() else { break };
            let s = Slot {
                tx,
                start: now,
                end: now + g.weights()[tx],
            };
            *slot = Some(s);
            per_thread[t].push(s);
        }
        let Some(next_end) = running.iter().flatten().map(|s| s.end).min() else {
            break;
        };
        now = next_end;
        for slot in running.iter_mut() {
            if let Some(s) = *slot {
                if s.end == now {
                    *slot = None;
                    for &j in &succs[s.tx] {
                        unmet[j] -= 1;
                        if unmet[j] == 0 {
                            ready.push((priority[j], Reverse(j)));
                        }
                    }
                }
            }
        }
    }

    let serial_cost = g.total_weight();
    Ok(ScheduleResult {
        threads,
        makespan: now,
        serial_cost,
        speedup: if now == 0 { 1.0 } else { serial_cost as f64 / now as f64 },
        per_thread,
    })
}

pub const BRUTE_FORCE_MAX_TXS: usize = 10;
pub const BRUTE_FORCE_MAX_THREADS: usize = 4;

/// Exact minimum makespan over all dependency-respecting non-preemptive
/// schedules, including ones that leave a thread idle on purpose.
///
/// Starts only need to be considered at time 0 and at completion times, so
/// the search branches on which subset of ready transactions to start at each
/// completion, memoized on (started set, remaining times of running ones).
pub fn brute_force_makespan(g: &DependencyGraph, threads: usize) -> Result<u64> {
    check_threads(threads)?;
    if g.len() > BRUTE_FORCE_MAX_TXS || threads > BRUTE_FORCE_MAX_THREADS {
        return Err(Error::TooLarge(format!(
            "{} transactions on {threads} threads (limits: {BRUTE_FORCE_MAX_TXS}, {BRUTE_FORCE_MAX_THREADS})",
            g.len()
        )));
    }
    let preds = (0..g.len())
        .map(|j| g.predecessors(j).fold(0u16, |m, i| m | (1 << i)))
        .collect();
    let mut search = Search {
        weights: g.weights(),
        preds,
        threads,
        all: ((1u32 << g.len()) - 1) as u16,
        memo: HashMap::new(),
    };
    Ok(search.solve(0, Vec::new()))
}

struct Search<'g> {
    weights: &'g [u64],
    preds: Vec<u16>,
    threads: usize,
    all: u16,
    memo: HashMap<(u16, Vec<(u64, u8)>), u64>,
}

impl Search<'_> {
    fn solve(&mut self, started: u16, running: Vec<(u64, u8)>) -> u64 {
        let running_mask = running.iter().fold(0u16, |m, &(_, tx)| m | (1 << tx));
        let finished = started & !running_mask;
        if finished == self.all {
            return 0;
        }
        let key = (started, running);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let (started, running) = key;
        let ready: u16 = (0..self.weights.len())
            .filter(|&i| started & (1 << i) == 0 && self.preds[i] & !finished == 0)
            .fold(0, |m, i| m | (1 << i));
        let idle = self.threads - running.len();

        let mut best = u64::MAX;
        // every subset of `ready`, the empty one included
        let mut subset = ready;
        loop {
            let size = subset.count_ones() as usize;
            if size <= idle && (subset != 0 || !running.is_empty()) {
                let mut next: Vec<(u64, u8)> = running.clone();
                for i in 0..self.weights.len() {
                    if subset & (1 << i) != 0 {
                        next.push((self.weights[i], i as u8));
                    }
                }
                let dt = next.iter().map(|&(r, _)| r).min().unwrap();
                let mut after: Vec<(u64, u8)> = next
                    .into_iter()
                    .filter(|&(r, _)| r > dt)
                    .map(|(r, tx)| (r - dt, tx))
                    .collect();
                after.sort_unstable();
                let total = dt + self.solve(started | subset, after);
                best = best.min(total);
            }
            if subset == 0 {
                break;
            }
            subset = (subset - 1) & ready;
        }
        self.memo.insert((started, running), best);
        best
    }
}

/// Bound results for a batch of workloads at one thread count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub threads: usize,
    pub results: Vec<ScheduleResult>,
    pub critical_weights: Vec<u64>,
    pub mean_speedup: f64,
    pub overall_speedup: f64,
    pub histogram: Histogram,
}

pub fn batch_speedups(
    workloads: &[Workload],
    threads: usize,
    mode: ConflictMode,
    strategy: Strategy,
) -> Result<BatchReport> {
    if workloads.is_empty() {
        return Err(Error::validation("batch needs at least one workload"));
    }
    check_threads(threads)?;
    let graphs = exec::map(strategy, workloads, |w| build_graph(w, mode));
    batch_from_graphs(&graphs, threads, strategy)
}

/// Same as [`batch_speedups`] on prebuilt (possibly pruned) graphs.
pub fn batch_from_graphs(graphs: &[DependencyGraph], threads: usize, strategy: Strategy) -> Result<BatchReport> {
    if graphs.is_empty() {
        return Err(Error::validation("batch needs at least one workload"));
    }
    let cells = exec::map(strategy, graphs, |g| {
        bound_schedule(g, threads).map(|r| (r, critical_path(g).critical_weight))
    });
    let mut results = Vec::with_capacity(cells.len());
    let mut critical_weights = Vec::with_capacity(cells.len());
    for cell in cells {
        let (r, cw) = cell?;
        results.push(r);
        critical_weights.push(cw);
    }
    let speedups: Vec<f64> = results.iter().map(|r| r.speedup).collect();
    let mut histogram = Histogram::for_threads(threads);
    for &s in &speedups {
        histogram.add(s);
    }
    Ok(BatchReport {
        threads,
        mean_speedup: mean(&speedups),
        overall_speedup: overall_speedup(results.iter().map(|r| (r.serial_cost, r.makespan))),
        results,
        critical_weights,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> DependencyGraph {
        DependencyGraph::from_edges(vec![1, 2, 3, 1], [(1, 0), (2, 0), (3, 1), (3, 2)]).unwrap()
    }

    fn chain(n: usize, w: u64) -> DependencyGraph {
        DependencyGraph::from_edges(vec![w; n], (1..n).map(|j| (j, j - 1))).unwrap()
    }

    #[test]
    fn independent_pack_perfectly() {
        let g = DependencyGraph::new(vec![10; 4]);
        let r = bound_schedule(&g, 2).unwrap();
        assert_eq!(r.makespan, 20);
        assert_eq!(r.speedup, 2.0);
        assert_eq!(brute_force_makespan(&g, 2).unwrap(), 20);
    }

    #[test]
    fn chain_is_serial() {
        for threads in 1..=4 {
            let r = bound_schedule(&chain(4, 10), threads).unwrap();
            assert_eq!(r.makespan, 40);
            assert_eq!(r.speedup, 1.0);
        }
        assert_eq!(brute_force_makespan(&DependencyGraph::from_edges(vec![3, 4, 5], [(1, 0), (2, 1)]).unwrap(), 3).unwrap(), 12);
    }

    #[test]
    fn diamond_timeline() {
        let r = bound_schedule(&diamond(), 2).unwrap();
        assert_eq!(r.makespan, 5);
        assert_eq!(r.slot_of(0).unwrap(), (0, Slot { tx: 0, start: 0, end: 1 }));
        assert_eq!(r.slot_of(2).unwrap(), (0, Slot { tx: 2, start: 1, end: 4 }));
        assert_eq!(r.slot_of(1).unwrap(), (1, Slot { tx: 1, start: 1, end: 3 }));
        assert_eq!(r.slot_of(3).unwrap().1, Slot { tx: 3, start: 4, end: 5 });
        assert_eq!(brute_force_makespan(&diamond(), 2).unwrap(), 5);
    }

    #[test]
    fn brute_force_not_above_greedy() {
        // 0 -> 2 -> 3 carries 7 units of gas, so 7 is optimal on any count
        let g = DependencyGraph::from_edges(vec![2, 3, 1, 4], [(2, 0), (3, 2)]).unwrap();
        let greedy = bound_schedule(&g, 2).unwrap().makespan;
        let best = brute_force_makespan(&g, 2).unwrap();
        assert!(best <= greedy);
        assert_eq!(best, 7);
        assert_eq!(greedy, 7);
    }

    #[test]
    fn rejects_zero_threads_and_big_instances() {
        assert!(bound_schedule(&diamond(), 0).is_err());
        assert!(matches!(brute_force_makespan(&chain(11, 1), 2), Err(Error::TooLarge(_))));
        assert!(matches!(brute_force_makespan(&chain(3, 1), 5), Err(Error::TooLarge(_))));
    }

    #[test]
    fn empty_graph_has_zero_makespan() {
        let r = bound_schedule(&DependencyGraph::new(vec![]), 4).unwrap();
        assert_eq!(r.makespan, 0);
        assert_eq!(brute_force_makespan(&DependencyGraph::new(vec![]), 4).unwrap(), 0);
    }

    #[test]
    fn batch_aggregates() {
        let pair = [DependencyGraph::new(vec![10; 10]), chain(1, 100)];
        // first: 10 txs of 10 on 10 threads -> 100/10; second: 100/100
        let r = batch_from_graphs(&pair, 10, Strategy::Sequential).unwrap();
        assert_eq!(r.results[0].speedup, 10.0);
        assert_eq!(r.results[1].speedup, 1.0);
        assert_eq!(r.mean_speedup, 5.5);
        assert!((r.overall_speedup - 200.0 / 110.0).abs() < 1e-12);
        assert_eq!(r.histogram.total(), 2);
        assert!(batch_speedups(&[], 2, ConflictMode::Plain, Strategy::Sequential).is_err());
    }
}
