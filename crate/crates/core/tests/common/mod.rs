//! Independent reference implementations and generators shared by the
//! integration suites.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use txpar::bound::ScheduleResult;
use txpar::graph::DependencyGraph;
use txpar::{KeyTag, StorageKey, Transaction, TxId, Workload};

pub fn key(i: usize) -> StorageKey {
    StorageKey::new(format!("c{}", i % 2), format!("k{i}"))
}

/// Random transaction over a pool of `keys` keys. Each key independently is
/// untouched, read, written, read-and-written, or added to.
pub fn arb_tx(keys: usize) -> impl Strategy<Value = Transaction> {
    (
        prop::collection::vec(0u8..8, keys),
        1u64..60,
        0usize..3,
        prop::collection::vec(-5i64..6, keys),
    )
        .prop_map(|(kinds, gas, sender, deltas)| {
            let mut tx = Transaction::new(format!("s{sender}"), gas);
            for (i, kind) in kinds.into_iter().enumerate() {
                let k = key(i);
                tx = match kind {
                    1 => tx.read(k),
                    2 => tx.write(k),
                    3 => tx.read(k.clone()).write(k),
                    4 => tx.increment(k, deltas[i]),
                    5 => tx.cadd(k, deltas[i]),
                    6 => tx.read(k.clone()).write(k.clone()).tag(k, KeyTag::ValueDependent),
                    _ => tx,
                };
            }
            tx
        })
}

pub fn arb_workload(max_n: usize, keys: usize) -> impl Strategy<Value = Workload> {
    prop::collection::vec(arb_tx(keys), 1..=max_n).prop_map(|txs| Workload::renumbered(txs).unwrap())
}

/// Workload where every access is a tagged increment or a plain add; the
/// final state is then order-independent.
pub fn arb_counter_workload(max_n: usize, keys: usize) -> impl Strategy<Value = Workload> {
    prop::collection::vec(
        (
            prop::collection::vec(0u8..3, keys),
            1u64..40,
            0usize..6,
            prop::collection::vec(-9i64..10, keys),
        )
            .prop_map(|(kinds, gas, sender, deltas)| {
                let mut tx = Transaction::new(format!("s{sender}"), gas);
                for (i, kind) in kinds.into_iter().enumerate() {
                    tx = match kind {
                        1 => tx.increment(key(i), deltas[i]),
                        2 => tx.cadd(key(i), deltas[i]),
                        _ => tx,
                    };
                }
                tx
            }),
        1..=max_n,
    )
    .prop_map(|txs| Workload::renumbered(txs).unwrap())
}

pub fn arb_dag(max_n: usize, max_gas: u64) -> impl Strategy<Value = DependencyGraph> {
    (1..=max_n)
        .prop_flat_map(move |n| {
            (
                prop::collection::vec(1..=max_gas, n),
                prop::collection::vec(any::<bool>(), n * (n - 1) / 2),
            )
        })
        .prop_map(|(weights, bits)| dag_from_bits(weights, &bits))
}

pub fn dag_from_bits(weights: Vec<u64>, bits: &[bool]) -> DependencyGraph {
    let n = weights.len();
    let mut edges = Vec::new();
    let mut b = 0;
    for j in 0..n {
        for i in 0..j {
            if bits[b] {
                edges.push((j, i));
            }
            b += 1;
        }
    }
    DependencyGraph::from_edges(weights, edges).unwrap()
}

struct Sets {
    r: HashSet<String>,
    w: HashSet<String>,
    c: HashSet<String>,
}

fn sets(tx: &Transaction) -> Sets {
    let s = |it: &mut dyn Iterator<Item = &StorageKey>| it.map(|k| k.to_string()).collect::<HashSet<_>>();
    Sets {
        r: s(&mut tx.access.reads.iter()),
        w: s(&mut tx.access.writes.iter()),
        c: s(&mut tx.access.cadds.iter().map(|(k, _)| k)),
    }
}

fn meet(a: &HashSet<String>, b: &HashSet<String>) -> bool {
    a.intersection(b).next().is_some()
}

/// Pairwise conflict by plain set intersection. Without cadd awareness an
/// add is a write; with it, adds commute with each other but not with reads
/// or writes.
pub fn oracle_conflict(a: &Transaction, b: &Transaction, cadd_aware: bool) -> bool {
    let (x, y) = (sets(a), sets(b));
    if cadd_aware {
        let any_x: HashSet<String> = x.r.iter().chain(&x.w).chain(&x.c).cloned().collect();
        let any_y: HashSet<String> = y.r.iter().chain(&y.w).chain(&y.c).cloned().collect();
        meet(&x.w, &any_y) || meet(&y.w, &any_x) || meet(&x.c, &y.r) || meet(&y.c, &x.r)
    } else {
        let wx: HashSet<String> = x.w.union(&x.c).cloned().collect();
        let wy: HashSet<String> = y.w.union(&y.c).cloned().collect();
        meet(&wx, &y.r) || meet(&wx, &wy) || meet(&x.r, &wy)
    }
}

pub fn oracle_edges(w: &Workload, cadd_aware: bool) -> BTreeSet<(TxId, TxId)> {
    let txs = w.transactions();
    let mut out = BTreeSet::new();
    for j in 0..txs.len() {
        for i in 0..j {
            if oracle_conflict(&txs[i], &txs[j], cadd_aware) {
                out.insert((j, i));
            }
        }
    }
    out
}

/// Heaviest path by enumerating every path explicitly.
pub fn oracle_critical_weight(g: &DependencyGraph) -> u64 {
    fn walk(g: &DependencyGraph, v: TxId, acc: u64, best: &mut u64) {
        let acc = acc + g.weights()[v];
        *best = (*best).max(acc);
        for p in g.predecessors(v) {
            walk(g, p, acc, best);
        }
    }
    let mut best = 0;
    for v in 0..g.len() {
        walk(g, v, 0, &mut best);
    }
    best
}

/// Checks that a schedule runs every transaction exactly once for its
/// weight, never overlaps on a thread, and respects every dependency.
pub fn check_schedule(g: &DependencyGraph, r: &ScheduleResult) -> Result<(), String> {
    let n = g.len();
    let mut slot = vec![None; n];
    if r.per_thread.len() != r.threads {
        return Err("thread count mismatch".into());
    }
    for (t, slots) in r.per_thread.iter().enumerate() {
        for pair in slots.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(format!("overlap on thread {t}"));
            }
        }
        for s in slots {
            if s.end - s.start != g.weights()[s.tx] {
                return Err(format!("tx {} ran for the wrong time", s.tx));
            }
            if slot[s.tx].replace(*s).is_some() {
                return Err(format!("tx {} ran twice", s.tx));
            }
        }
    }
    for j in 0..n {
        let sj = slot[j].ok_or(format!("tx {j} never ran"))?;
        for i in g.predecessors(j) {
            if slot[i].unwrap().end > sj.start {
                return Err(format!("tx {j} started before its dependency {i} finished"));
            }
        }
    }
    let makespan = slot.iter().flatten().map(|s| s.end).max().unwrap_or(0);
    if makespan != r.makespan {
        return Err("makespan mismatch".into());
    }
    Ok(())
}
