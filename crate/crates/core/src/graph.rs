//! Storage-conflict dependency graphs and their heaviest paths.
//!
//! Vertex `j` depends on `i < j` when the two transactions touch a common key
//! and at least one access is a write. Edges always point from a later to an
//! earlier id, so every graph here is acyclic. No transitive reduction is
//! applied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::{Access, AccessIndex, KeyId, StorageKey, Transaction, TxId, Workload};

/// How commutative adds participate in conflict detection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictMode {
    /// A CADD is an ordinary write.
    #[default]
    Plain,
    /// Two CADDs on a key commute; a CADD still conflicts with reads and
    /// with plain writes.
    CaddAware,
    /// Like `CaddAware`, and a CADD does not conflict with a plain write
    /// either. Only sound when effects are applied in block order.
    Relaxed,
}

impl From<bool> for ConflictMode {
    fn from(cadd_aware: bool) -> Self {
        if cadd_aware {
            ConflictMode::CaddAware
        } else {
            ConflictMode::Plain
        }
    }
}

impl ConflictMode {
    pub fn is_cadd_aware(self) -> bool {
        self != ConflictMode::Plain
    }
}

/// Whether two transactions' accesses to one key conflict.
pub fn kinds_conflict(a: Access, b: Access, mode: ConflictMode) -> bool {
    match mode {
        ConflictMode::Plain => {
            let write_like = Access::WRITE | Access::CADD;
            let any = Access::READ | write_like;
            (a.intersects(write_like) && b.intersects(any))
                || (b.intersects(write_like) && a.intersects(any))
        }
        ConflictMode::CaddAware => {
            let any = Access::READ | Access::WRITE | Access::CADD;
            (a.writes() && b.intersects(any))
                || (b.writes() && a.intersects(any))
                || (a.cadds() && b.reads())
                || (b.cadds() && a.reads())
        }
        ConflictMode::Relaxed => {
            let rw = Access::READ | Access::WRITE;
            (a.writes() && b.intersects(rw))
                || (b.writes() && a.intersects(rw))
                || (a.cadds() && b.reads())
                || (b.cadds() && a.reads())
        }
    }
}

/// Directional check used at commit validation: would `later` have read a
/// value that `earlier` changes? Earlier writes and CADDs both change values.
/// In plain mode a later CADD counts as a load as well.
pub fn stale_read(earlier: Access, later: Access, mode: ConflictMode) -> bool {
    earlier.intersects(Access::WRITE | Access::CADD) && observes(later, mode)
}

/// Whether an access depends on the value previously stored under the key.
pub fn observes(access: Access, mode: ConflictMode) -> bool {
    match mode {
        ConflictMode::Plain => access.intersects(Access::READ | Access::CADD),
        ConflictMode::CaddAware | ConflictMode::Relaxed => access.reads(),
    }
}

fn access_of(tx: &Transaction, key: &StorageKey) -> Access {
    let mut a = Access::NONE;
    if tx.access.reads.contains(key) {
        a = a | Access::READ;
    }
    if tx.access.writes.contains(key) {
        a = a | Access::WRITE;
    }
    if tx.access.cadds.iter().any(|(k, _)| k == key) {
        a = a | Access::CADD;
    }
    a
}

/// Pairwise conflict predicate on two transactions.
pub fn conflicts(a: &Transaction, b: &Transaction, mode: ConflictMode) -> bool {
    let (small, large) = if a.access.keys().len() <= b.access.keys().len() {
        (a, b)
    } else {
        (b, a)
    };
    small
        .access
        .keys()
        .into_iter()
        .filter(|k| large.access.touches(k))
        .any(|k| kinds_conflict(access_of(a, k), access_of(b, k), mode))
}

/// One incoming dependency of a transaction and the keys that cause it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dependency {
    pub on: TxId,
    pub keys: Vec<StorageKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    weights: Vec<u64>,
    /// `preds[j]` sorted by `on`, ascending.
    preds: Vec<Vec<Dependency>>,
}

impl DependencyGraph {
    /// Edge-free graph with the given vertex weights.
    pub fn new(weights: Vec<u64>) -> Self {
        let preds = vec![Vec::new(); weights.len()];
        DependencyGraph { weights, preds }
    }

    /// Builds a graph from explicit `(later, earlier)` pairs. Causes are left
    /// empty.
    pub fn from_edges(weights: Vec<u64>, edges: impl IntoIterator<Item = (TxId, TxId)>) -> Result<Self> {
        let mut g = DependencyGraph::new(weights);
        for (j, i) in edges {
            g.add_edge(j, i, Vec::new())?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, later: TxId, earlier: TxId, keys: Vec<StorageKey>) -> Result<()> {
        if later >= self.len() || earlier >= later {
            return Err(Error::validation(format!(
                "edge ({later}, {earlier}) must satisfy earlier < later < {}",
                self.len()
            )));
        }
        let preds = &mut self.preds[later];
        match preds.binary_search_by_key(&earlier, |d| d.on) {
            Ok(pos) => {
                let dep = &mut preds[pos];
                for k in keys {
                    if !dep.keys.contains(&k) {
                        dep.keys.push(k);
                    }
                }
            }
            Err(pos) => preds.insert(pos, Dependency { on: earlier, keys }),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    pub fn dependencies(&self, tx: TxId) -> &[Dependency] {
        &self.preds[tx]
    }

    pub fn predecessors(&self, tx: TxId) -> impl Iterator<Item = TxId> + '_ {
        self.preds[tx].iter().map(|d| d.on)
    }

    /// Highest id `tx` depends on.
    pub fn max_dependency(&self, tx: TxId) -> Option<TxId> {
        self.preds[tx].last().map(|d| d.on)
    }

    pub fn successors(&self) -> Vec<Vec<TxId>> {
        let mut succ = vec![Vec::new(); self.len()];
        for (j, i) in self.edges() {
            succ[i].push(j);
        }
        succ
    }

    /// All edges as `(later, earlier)`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (TxId, TxId)> + '_ {
        self.preds
            .iter()
            .enumerate()
            .flat_map(|(j, ps)| ps.iter().map(move |d| (j, d.on)))
    }

    pub fn edge_set(&self) -> BTreeSet<(TxId, TxId)> {
        self.edges().collect()
    }

    pub fn edge_count(&self) -> usize {
        self.preds.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, later: TxId, earlier: TxId) -> bool {
        later < self.len()
            && self.preds[later]
                .binary_search_by_key(&earlier, |d| d.on)
                .is_ok()
    }

    /// Keeps only the edges for which `keep(later, dependency)` holds.
    pub fn retain_edges(&mut self, mut keep: impl FnMut(TxId, &Dependency) -> bool) {
        for (j, ps) in self.preds.iter_mut().enumerate() {
            ps.retain(|d| keep(j, d));
        }
    }

    /// Text edge list: a `# n` line, a `# weights` line, then `j i` per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# n {}", self.len());
        let ws: Vec<String> = self.weights.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "# weights {}", ws.join(" "));
        for (j, i) in self.edges() {
            let _ = writeln!(out, "{j} {i}");
        }
        out
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n: self.len(),
            edges: self.edges().map(|(j, i)| [j, i]).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// JSON form of a [`DependencyGraph`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<[TxId; 2]>,
    pub weights: Vec<u64>,
}

impl TryFrom<GraphJson> for DependencyGraph {
    type Error = Error;

    fn try_from(g: GraphJson) -> Result<Self> {
        if g.weights.len() != g.n {
            return Err(Error::validation("weights length differs from n"));
        }
        DependencyGraph::from_edges(g.weights, g.edges.into_iter().map(|[j, i]| (j, i)))
    }
}

/// Builds the conflict graph of `w` using a per-key access index. Produces
/// exactly the edge set of a pairwise [`conflicts`] scan.
pub fn build_graph(w: &Workload, mode: ConflictMode) -> DependencyGraph {
    let index = AccessIndex::new(w);
    build_graph_indexed(w, &index, mode)
}

pub fn build_graph_indexed(w: &Workload, index: &AccessIndex, mode: ConflictMode) -> DependencyGraph {
    let n = w.len();
    let mut by_key: Vec<Vec<(TxId, Access)>> = vec![Vec::new(); index.key_count()];
    let mut preds = Vec::with_capacity(n);
    for j in 0..n {
        let mut causes: BTreeMap<TxId, Vec<KeyId>> = BTreeMap::new();
        for &(key, kind) in index.accesses(j) {
            for &(i, earlier) in &by_key[key as usize] {
                if kinds_conflict(earlier, kind, mode) {
                    causes.entry(i).or_default().push(key);
                }
            }
        }
        for &(key, kind) in index.accesses(j) {
            by_key[key as usize].push((j, kind));
        }
        preds.push(
            causes
                .into_iter()
                .map(|(on, keys)| Dependency {
                    on,
                    keys: keys.into_iter().map(|k| index.key(k).clone()).collect(),
                })
                .collect(),
        );
    }
    DependencyGraph {
        weights: w.gas(),
        preds,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub critical_weight: u64,
    pub critical_path: Vec<TxId>,
    pub total_weight: u64,
}

/// For each vertex, the weight of the heaviest chain it starts: itself plus
/// the heaviest chain of any dependent.
pub fn heaviest_from(g: &DependencyGraph) -> Vec<u64> {
    heaviest_with_next(g).0
}

fn heaviest_with_next(g: &DependencyGraph) -> (Vec<u64>, Vec<Option<TxId>>) {
    let n = g.len();
    let mut best_tail = vec![0u64; n];
    let mut next: Vec<Option<TxId>> = vec![None; n];
    let mut hf = vec![0u64; n];
    for j in (0..n).rev() {
        hf[j] = g.weights[j] + best_tail[j];
        for i in g.predecessors(j) {
            // j descends, so `>=` keeps the lowest-id successor on ties
            if hf[j] >= best_tail[i] {
                best_tail[i] = hf[j];
                next[i] = Some(j);
            }
        }
    }
    (hf, next)
}

/// Vertex-weighted longest path. Ties resolve to the lowest ids.
pub fn critical_path(g: &DependencyGraph) -> PathReport {
    let (hf, next) = heaviest_with_next(g);
    let total_weight = g.total_weight();
    let Some(start) = (0..g.len()).max_by(|&a, &b| hf[a].cmp(&hf[b]).then(b.cmp(&a))) else {
        return PathReport {
            critical_weight: 0,
            critical_path: Vec::new(),
            total_weight,
        };
    };
    let mut path = vec![start];
    let mut cur = start;
    while let Some(j) = next[cur] {
        path.push(j);
        cur = j;
    }
    PathReport {
        critical_weight: hf[start],
        critical_path: path,
        total_weight,
    }
}
