//! Conflict-elimination rewrites: multiple senders, partitioned counters,
//! commutative adds, and seeded random pruning of counter edges.
//!
//! Workload rewrites never change the number of transactions, their ids or
//! their gas.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, ConflictMode, DependencyGraph};
use crate::hash::mix64;
use crate::workload::{KeyTag, StorageKey, Transaction, Workload};

fn rename_key(tx: &mut Transaction, from: &StorageKey, to: &StorageKey) {
    let a = &mut tx.access;
    if a.reads.remove(from) {
        a.reads.insert(to.clone());
    }
    if a.writes.remove(from) {
        a.writes.insert(to.clone());
    }
    for (k, _) in a.cadds.iter_mut() {
        if k == from {
            *k = to.clone();
        }
    }
    if let Some(tag) = tx.tags.remove(from) {
        tx.tags.insert(to.clone(), tag);
    }
}

/// Reassigns the transactions of `hot_sender` round-robin over `m` senders.
///
/// The k-th such transaction goes to sender `k % m`; index 0 keeps the
/// original name and key, index j > 0 becomes `"{hot_sender}#j"` with its
/// balance key `sender_balance_key.derived(j)`. `m = 1` is the identity.
pub fn split_senders(w: &Workload, hot_sender: &str, m: usize, sender_balance_key: &StorageKey) -> Result<Workload> {
    if m == 0 {
        return Err(Error::validation("split_senders needs m >= 1"));
    }
    if !w.transactions().iter().any(|t| &*t.sender == hot_sender) {
        return Err(Error::validation(format!("sender {hot_sender:?} does not appear in the workload")));
    }
    let mut k = 0usize;
    Ok(w.map_transactions(|tx| {
        if &*tx.sender != hot_sender {
            return;
        }
        let j = k % m;
        k += 1;
        if j == 0 {
            return;
        }
        tx.sender = format!("{hot_sender}#{j}").into();
        rename_key(tx, sender_balance_key, &sender_balance_key.derived(j));
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Routing {
    #[default]
    BySender,
    ByTxId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub target_keys: BTreeSet<StorageKey>,
    pub length: usize,
    #[serde(default)]
    pub routing: Routing,
}

impl PartitionSpec {
    pub fn new(target_keys: impl IntoIterator<Item = StorageKey>, length: usize, routing: Routing) -> Result<Self> {
        let spec = PartitionSpec {
            target_keys: target_keys.into_iter().collect(),
            length,
            routing,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::validation("partition length must be at least 2"));
        }
        if self.target_keys.is_empty() {
            return Err(Error::validation("partition needs at least one target key"));
        }
        Ok(())
    }

    /// Sub-counter index of `tx`: the [`mix64`] hash of the sender's UTF-8
    /// bytes, or of the id as 8 little-endian bytes, modulo `length`.
    pub fn slot_of(&self, tx: &Transaction) -> usize {
        let h = match self.routing {
            Routing::BySender => mix64(tx.sender.as_bytes()),
            Routing::ByTxId => mix64(&(tx.id as u64).to_le_bytes()),
        };
        (h % self.length as u64) as usize
    }

    pub fn sub_key(key: &StorageKey, i: usize) -> StorageKey {
        key.derived(i)
    }
}

/// Replaces each target counter `K` with sub-counters `K#0 .. K#(L-1)`.
///
/// Writes and adds go to the transaction's routed sub-counter. A read of the
/// counter's value reads every sub-counter. An increment (a read-modify-write
/// tagged [`KeyTag::Increment`]) only reads the sub-counter it updates, which
/// is what `cnt[slot] += n` does.
pub fn partition_counters(w: &Workload, spec: &PartitionSpec) -> Result<Workload> {
    spec.validate()?;
    Ok(w.map_transactions(|tx| {
        let slot = spec.slot_of(tx);
        for key in &spec.target_keys {
            if !tx.access.touches(key) && !tx.tags.contains_key(key) {
                continue;
            }
            let sub = PartitionSpec::sub_key(key, slot);
            let increment = tx.access.reads.contains(key)
                && tx.access.writes.contains(key)
                && tx.increment_delta(key).is_some();
            if increment {
                rename_key(tx, key, &sub);
                continue;
            }
            if tx.access.reads.remove(key) {
                for i in 0..spec.length {
                    tx.access.reads.insert(PartitionSpec::sub_key(key, i));
                }
            }
            if tx.access.writes.remove(key) {
                tx.access.writes.insert(sub.clone());
            }
            for (k, _) in tx.access.cadds.iter_mut() {
                if k == key {
                    *k = sub.clone();
                }
            }
            if let Some(tag) = tx.tags.remove(key) {
                tx.tags.insert(sub, tag);
            }
        }
    }))
}

/// Turns increment read-modify-writes of the target keys into commutative
/// adds. Untagged read-modify-writes are taken as `+1`.
pub fn cadd_rewrite(w: &Workload, target_keys: &BTreeSet<StorageKey>) -> Result<Workload> {
    for tx in w.transactions() {
        for key in target_keys {
            let a = &tx.access;
            if !(a.reads.contains(key) && a.writes.contains(key)) {
                continue;
            }
            let unsound = |reason| Error::UnsoundRewrite {
                tx: tx.id,
                key: key.to_string(),
                reason,
            };
            if tx.tags.get(key) == Some(&KeyTag::ValueDependent) {
                return Err(unsound("the read value is used beyond the update"));
            }
            if a.cadds.iter().any(|(k, _)| k == key) {
                return Err(unsound("the key is also read after a pending add"));
            }
        }
    }
    Ok(w.map_transactions(|tx| {
        for key in target_keys {
            if !(tx.access.reads.contains(key) && tx.access.writes.contains(key)) {
                continue;
            }
            let delta = tx.increment_delta(key).unwrap_or(1);
            tx.access.reads.remove(key);
            tx.access.writes.remove(key);
            tx.access.cadds.push((key.clone(), delta));
            tx.tags.remove(key);
        }
    }))
}

/// An exact probability `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probability {
    num: u64,
    den: u64,
}

impl Probability {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::validation(format!("probability {num}/{den} is outside [0, 1]")));
        }
        Ok(Probability { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    fn sample(self, rng: &mut impl Rng) -> bool {
        rng.gen_range(0..self.den) < self.num
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Accepts `"a/b"` or a plain decimal such as `"0.25"` or `"1"`.
impl FromStr for Probability {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::validation(format!("bad probability {s:?}"));
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse().map_err(|_| bad())?;
            let den = b.trim().parse().map_err(|_| bad())?;
            return Probability::new(num, den);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() || frac.len() > 18 {
            return Err(bad());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int.checked_mul(den).and_then(|x| x.checked_add(frac)).ok_or_else(bad)?;
        Probability::new(num, den)
    }
}

impl Serialize for Probability {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(serde_json::Number),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Number(n) => n.to_string(),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Drops each edge whose causes all lie in `target_keys` with probability
/// `p`, one draw per such edge in `(later, earlier)` order from a ChaCha8
/// stream seeded with `seed`. Edges with any other cause, or with no
/// recorded cause, are kept.
pub fn prune_edges_probabilistic(
    g: &DependencyGraph,
    target_keys: &BTreeSet<StorageKey>,
    p: Probability,
    seed: u64,
) -> DependencyGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = g.clone();
    out.retain_edges(|_, dep| {
        let target_only = !dep.keys.is_empty() && dep.keys.iter().all(|k| target_keys.contains(k));
        !(target_only && p.sample(&mut rng))
    });
    out
}

/// Number of edges [`prune_edges_probabilistic`] is allowed to remove.
pub fn target_only_edges(g: &DependencyGraph, target_keys: &BTreeSet<StorageKey>) -> usize {
    (0..g.len())
        .flat_map(|j| g.dependencies(j))
        .filter(|d| !d.keys.is_empty() && d.keys.iter().all(|k| target_keys.contains(k)))
        .count()
}

/// One step of a transform chain, as written in config files:
/// `{"transform": "...", "params": {...}, "seed": 7}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformStep {
    #[serde(flatten)]
    pub op: Transform,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", content = "params", rename_all = "kebab-case")]
pub enum Transform {
    SplitSenders {
        hot_sender: String,
        m: usize,
        sender_balance_key: StorageKey,
    },
    PartitionCounters(PartitionSpec),
    CaddRewrite {
        target_keys: BTreeSet<StorageKey>,
    },
    PruneEdges {
        target_keys: BTreeSet<StorageKey>,
        probability: Probability,
    },
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::SplitSenders { .. } => "split-senders",
            Transform::PartitionCounters(_) => "partition-counters",
            Transform::CaddRewrite { .. } => "cadd-rewrite",
            Transform::PruneEdges { .. } => "prune-edges",
        }
    }

    pub fn is_graph_step(&self) -> bool {
        matches!(self, Transform::PruneEdges { .. })
    }
}

impl TransformStep {
    pub fn new(op: Transform) -> Self {
        TransformStep { op, seed: 0 }
    }

    pub fn seeded(op: Transform, seed: u64) -> Self {
        TransformStep { op, seed }
    }
}

/// Workload rewrites of a chain applied in order. Graph steps are skipped;
/// they must come last (see [`check_chain`]).
pub fn apply_workload_steps(w: &Workload, steps: &[TransformStep]) -> Result<Workload> {
    check_chain(steps)?;
    let mut cur = w.clone();
    for step in steps {
        cur = match &step.op {
            Transform::SplitSenders {
                hot_sender,
                m,
                sender_balance_key,
            } => split_senders(&cur, hot_sender, *m, sender_balance_key)?,
            Transform::PartitionCounters(spec) => partition_counters(&cur, spec)?,
            Transform::CaddRewrite { target_keys } => cadd_rewrite(&cur, target_keys)?,
            Transform::PruneEdges { .. } => continue,
        };
    }
    Ok(cur)
}

/// Graph steps of a chain applied to `g` in order.
pub fn apply_graph_steps(g: &DependencyGraph, steps: &[TransformStep]) -> DependencyGraph {
    let mut cur = g.clone();
    for step in steps {
        if let Transform::PruneEdges {
            target_keys,
            probability,
        } = &step.op
        {
            cur = prune_edges_probabilistic(&cur, target_keys, *probability, step.seed);
        }
    }
    cur
}

/// A chain is workload rewrites followed by graph steps, since a rewrite
/// cannot be applied to a graph.
pub fn check_chain(steps: &[TransformStep]) -> Result<()> {
    if let Some(first_graph) = steps.iter().position(|s| s.op.is_graph_step()) {
        if let Some(late) = steps[first_graph..].iter().find(|s| !s.op.is_graph_step()) {
            return Err(Error::validation(format!(
                "{} cannot follow a graph step",
                late.op.name()
            )));
        }
    }
    Ok(())
}

/// Rewritten workload plus its (pruned) dependency graph.
pub fn transformed_graph(w: &Workload, steps: &[TransformStep], mode: ConflictMode) -> Result<(Workload, DependencyGraph)> {
    let w = apply_workload_steps(w, steps)?;
    let g = apply_graph_steps(&build_graph(&w, mode), steps);
    Ok((w, g))
}
