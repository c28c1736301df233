use std::collections::HashMap;
use std::ops::BitOr;

use super::{StorageKey, Workload};

pub type KeyId = u32;

/// How a transaction touches one key, as a small bit set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Access(u8);

impl Access {
    pub const NONE: Access = Access(0);
    pub const READ: Access = Access(1);
    pub const WRITE: Access = Access(2);
    pub const CADD: Access = Access(4);

    pub fn contains(self, other: Access) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn intersects(self, other: Access) -> bool {
        self.0 & other.0 != 0
    }

    pub fn reads(self) -> bool {
        self.intersects(Access::READ)
    }

    pub fn writes(self) -> bool {
        self.intersects(Access::WRITE)
    }

    pub fn cadds(self) -> bool {
        self.intersects(Access::CADD)
    }
}

impl BitOr for Access {
    type Output = Access;

    fn bitor(self, rhs: Access) -> Access {
        Access(self.0 | rhs.0)
    }
}

/// Interned view of a workload's access sets: each transaction's touched keys
/// as `(key id, access kinds)` pairs sorted by key id.
#[derive(Debug, Clone)]
pub struct AccessIndex {
    keys: Vec<StorageKey>,
    per_tx: Vec<Vec<(KeyId, Access)>>,
}

impl AccessIndex {
    pub fn new(workload: &Workload) -> Self {
        let mut interner = Interner::default();
        let mut per_tx = Vec::with_capacity(workload.len());
        for tx in workload.transactions() {
            let mut acc: Vec<(KeyId, Access)> = Vec::new();
            for k in &tx.access.reads {
                acc.push((interner.intern(k), Access::READ));
            }
            for k in &tx.access.writes {
                acc.push((interner.intern(k), Access::WRITE));
            }
            for (k, _) in &tx.access.cadds {
                acc.push((interner.intern(k), Access::CADD));
            }
            acc.sort_by_key(|(id, _)| *id);
            let mut merged: Vec<(KeyId, Access)> = Vec::with_capacity(acc.len());
            for (id, a) in acc {
                match merged.last_mut() {
                    Some((last, kinds)) if *last == id => *kinds = *kinds | a,
                    _ => merged.push((id, a)),
                }
            }
            per_tx.push(merged);
        }
        AccessIndex {
            keys: interner.keys,
            per_tx,
        }
    }

    pub fn len(&self) -> usize {
        self.per_tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_tx.is_empty()
    }

    pub fn key_count(&self) -> usize {
        self.keys.len()
    }

    pub fn key(&self, id: KeyId) -> &StorageKey {
        &self.keys[id as usize]
    }

    pub fn key_id(&self, key: &StorageKey) -> Option<KeyId> {
        self.keys.iter().position(|k| k == key).map(|p| p as KeyId)
    }

    pub fn accesses(&self, tx: usize) -> &[(KeyId, Access)] {
        &self.per_tx[tx]
    }

    /// True iff some key satisfies `pred(access_of_a, access_of_b)`.
    pub fn any_shared(&self, a: usize, b: usize, mut pred: impl FnMut(Access, Access) -> bool) -> bool {
        let (xs, ys) = (&self.per_tx[a], &self.per_tx[b]);
        let (mut i, mut j) = (0, 0);
        while i < xs.len() && j < ys.len() {
            match xs[i].0.cmp(&ys[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if pred(xs[i].1, ys[j].1) {
                        return true;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        false
    }
}

#[derive(Default)]
struct Interner<'w> {
    ids: HashMap<&'w StorageKey, KeyId>,
    keys: Vec<StorageKey>,
}

impl<'w> Interner<'w> {
    fn intern(&mut self, key: &'w StorageKey) -> KeyId {
        if let Some(&id) = self.ids.get(key) {
            return id;
        }
        let id = self.keys.len() as KeyId;
        self.keys.push(key.clone());
        self.ids.insert(key, id);
        id
    }
}
