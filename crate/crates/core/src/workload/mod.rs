//! Transaction and workload data model.
//!
//! A [`Workload`] is one execution unit (a block or a batch of blocks): an
//! ordered list of transactions whose position is the block order. Each
//! transaction carries its gas cost, used as the time proxy everywhere, and
//! the storage keys it read, wrote and commutatively added to.

mod gen;
mod index;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gen::{
    DefiFee, GasModel, MixComponent, Mixed, NftMint, Pattern, Payments, TokenDistribution,
    BALANCE_CONTRACT,
};
pub use index::{Access, AccessIndex, KeyId};
pub use trace::{emit_trace, parse_trace, read_trace_file, write_trace_file};

/// Position of a transaction inside its execution unit, 0-based.
pub type TxId = usize;

/// A contract storage entry: `(contract, slot)`, compared bytewise.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StorageKey {
    contract: Arc<str>,
    slot: Arc<str>,
}

impl StorageKey {
    pub fn new(contract: impl Into<Arc<str>>, slot: impl Into<Arc<str>>) -> Self {
        StorageKey {
            contract: contract.into(),
            slot: slot.into(),
        }
    }

    pub fn contract(&self) -> &str {
        &self.contract
    }

    pub fn slot(&self) -> &str {
        &self.slot
    }

    /// Derived key in the same contract, `slot#suffix`. Used for sub-counters
    /// and per-sender balance splits.
    pub fn derived(&self, suffix: impl fmt::Display) -> StorageKey {
        StorageKey {
            contract: self.contract.clone(),
            slot: format!("{}#{}", self.slot, suffix).into(),
        }
    }
}

impl fmt::Display for StorageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.contract, self.slot)
    }
}

impl fmt::Debug for StorageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for StorageKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((c, slot)) if !c.is_empty() && !slot.is_empty() => Ok(StorageKey::new(c, slot)),
            _ => Err(format!("storage key `{s}` is not of the form <contract>:<slot>")),
        }
    }
}

impl Serialize for StorageKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StorageKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Storage accesses of one transaction after normalization.
///
/// A read-modify-write shows up in both `reads` and `writes`. `cadds` is a
/// multiset of commutative adds, kept in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessSet {
    pub reads: BTreeSet<StorageKey>,
    pub writes: BTreeSet<StorageKey>,
    pub cadds: Vec<(StorageKey, i64)>,
}

impl AccessSet {
    pub fn cadd_keys(&self) -> BTreeSet<&StorageKey> {
        self.cadds.iter().map(|(k, _)| k).collect()
    }

    /// Every key touched in any way.
    pub fn keys(&self) -> BTreeSet<&StorageKey> {
        let mut keys: BTreeSet<&StorageKey> = self.reads.iter().chain(&self.writes).collect();
        keys.extend(self.cadds.iter().map(|(k, _)| k));
        keys
    }

    pub fn touches(&self, key: &StorageKey) -> bool {
        self.reads.contains(key)
            || self.writes.contains(key)
            || self.cadds.iter().any(|(k, _)| k == key)
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty() && self.writes.is_empty() && self.cadds.is_empty()
    }
}

/// What the code behind a read-modify-write does with the value it read.
///
/// Storage traces cannot tell an increment from arbitrary computation, so
/// generators (or whoever produced the trace) label keys explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyTag {
    /// The write is `read + delta` and the read value is used for nothing else.
    Increment(i64),
    /// The read value feeds other computation; not commutative.
    ValueDependent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxId,
    pub sender: Arc<str>,
    pub gas: u64,
    pub access: AccessSet,
    pub tags: BTreeMap<StorageKey, KeyTag>,
}

impl Transaction {
    /// A transaction with no accesses. The id is assigned when the
    /// transaction is placed into a [`Workload`].
    pub fn new(sender: impl Into<Arc<str>>, gas: u64) -> Self {
        Transaction {
            id: 0,
            sender: sender.into(),
            gas,
            access: AccessSet::default(),
            tags: BTreeMap::new(),
        }
    }

    pub fn read(mut self, key: StorageKey) -> Self {
        self.access.reads.insert(key);
        self
    }

    pub fn write(mut self, key: StorageKey) -> Self {
        self.access.writes.insert(key);
        self
    }

    pub fn cadd(mut self, key: StorageKey, delta: i64) -> Self {
        self.access.cadds.push((key, delta));
        self
    }

    /// Read-modify-write of `key` tagged as an increment by `delta`.
    pub fn increment(mut self, key: StorageKey, delta: i64) -> Self {
        self.access.reads.insert(key.clone());
        self.access.writes.insert(key.clone());
        self.tags.insert(key, KeyTag::Increment(delta));
        self
    }

    pub fn tag(mut self, key: StorageKey, tag: KeyTag) -> Self {
        self.tags.insert(key, tag);
        self
    }

    pub fn increment_delta(&self, key: &StorageKey) -> Option<i64> {
        match self.tags.get(key) {
            Some(KeyTag::Increment(d)) => Some(*d),
            _ => None,
        }
    }
}

/// One execution unit: transactions in block order plus free-form labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Workload {
    transactions: Vec<Transaction>,
    pub meta: BTreeMap<String, String>,
}

impl Workload {
    /// Validates that ids are `0..n` in order and every gas is positive.
    pub fn new(transactions: Vec<Transaction>) -> Result<Self> {
        for (pos, tx) in transactions.iter().enumerate() {
            if tx.id != pos {
                return Err(Error::validation(format!(
                    "transaction at position {pos} has id {}; ids must be contiguous from 0",
                    tx.id
                )));
            }
            if tx.gas < 1 {
                return Err(Error::validation(format!("transaction {pos} has gas 0")));
            }
        }
        Ok(Workload {
            transactions,
            meta: BTreeMap::new(),
        })
    }

    /// Assigns ids by position, then validates.
    pub fn renumbered(mut transactions: Vec<Transaction>) -> Result<Self> {
        for (pos, tx) in transactions.iter_mut().enumerate() {
            tx.id = pos;
        }
        Workload::new(transactions)
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn serial_gas(&self) -> u64 {
        self.transactions.iter().map(|t| t.gas).sum()
    }

    pub fn gas(&self) -> Vec<u64> {
        self.transactions.iter().map(|t| t.gas).collect()
    }

    pub fn senders(&self) -> BTreeSet<&str> {
        self.transactions.iter().map(|t| &*t.sender).collect()
    }

    /// Applies `f` to every transaction. Ids and gas are restored afterwards,
    /// so a rewrite can only change senders, access sets and tags.
    pub(crate) fn map_transactions(&self, mut f: impl FnMut(&mut Transaction)) -> Workload {
        let transactions = self
            .transactions
            .iter()
            .map(|tx| {
                let mut out = tx.clone();
                f(&mut out);
                out.id = tx.id;
                out.gas = tx.gas;
                out
            })
            .collect();
        Workload {
            transactions,
            meta: self.meta.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(s: &str) -> StorageKey {
        s.parse().unwrap()
    }

    #[test]
    fn key_parse_and_display() {
        let key = k("0xabc:slot1");
        assert_eq!(key.contract(), "0xabc");
        assert_eq!(key.slot(), "slot1");
        assert_eq!(key.to_string(), "0xabc:slot1");
        // slot may itself contain ':'; the contract may not
        assert_eq!(k("c:a:b").slot(), "a:b");
        assert!("noslot".parse::<StorageKey>().is_err());
        assert!(":x".parse::<StorageKey>().is_err());
    }

    #[test]
    fn key_equality_needs_both_fields() {
        assert_eq!(k("a:b"), StorageKey::new("a", "b"));
        assert_ne!(k("a:b"), k("a:c"));
        assert_ne!(k("a:b"), k("x:b"));
    }

    #[test]
    fn workload_rejects_gaps_and_zero_gas() {
        let mut tx = Transaction::new("s", 1);
        tx.id = 1;
        assert!(Workload::new(vec![tx]).is_err());
        assert!(Workload::renumbered(vec![Transaction::new("s", 0)]).is_err());
        let w = Workload::renumbered(vec![Transaction::new("s", 5), Transaction::new("t", 7)]).unwrap();
        assert_eq!(w.serial_gas(), 12);
        assert_eq!(w.transactions()[1].id, 1);
    }

    #[test]
    fn increment_builder_tags_rmw() {
        let tx = Transaction::new("s", 1).increment(k("c:n"), 3);
        assert!(tx.access.reads.contains(&k("c:n")));
        assert!(tx.access.writes.contains(&k("c:n")));
        assert_eq!(tx.increment_delta(&k("c:n")), Some(3));
    }
}
