//! Line-delimited trace format.
//!
//! One JSON record per line:
//!
//! ```text
//! {"id":0,"sender":"a","gas":21000,"reads":["c:s"],"writes":[],"cadds":[["c:t",1]]}
//! ```
//!
//! Lines starting with `#` are comments; a `# meta {...}` comment carries the
//! workload's label map. Two optional fields, `incs` (`[[key, delta], ...]`)
//! and `vdeps` (`[key, ...]`), carry [`KeyTag`]s and are only emitted when
//! non-empty.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AccessSet, KeyTag, StorageKey, Transaction, Workload};
use crate::error::{Error, Result};

const HEADER: &str = "# txpar trace v1";
const META_PREFIX: &str = "# meta ";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    sender: String,
    gas: u64,
    #[serde(default)]
    reads: Vec<String>,
    #[serde(default)]
    writes: Vec<String>,
    #[serde(default)]
    cadds: Vec<(String, i64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    incs: Vec<(String, i64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    vdeps: Vec<String>,
}

#[derive(Default)]
struct Interner {
    strings: HashMap<String, Arc<str>>,
}

impl Interner {
    fn get(&mut self, s: &str) -> Arc<str> {
        if let Some(a) = self.strings.get(s) {
            return a.clone();
        }
        let a: Arc<str> = s.into();
        self.strings.insert(s.to_owned(), a.clone());
        a
    }

    fn key(&mut self, s: &str, line: usize) -> Result<StorageKey> {
        match s.split_once(':') {
            Some((c, slot)) if !c.is_empty() && !slot.is_empty() => {
                Ok(StorageKey::new(self.get(c), self.get(slot)))
            }
            _ => Err(Error::Parse {
                line,
                message: format!("storage key `{s}` is not of the form <contract>:<slot>"),
            }),
        }
    }
}

/// Parses a trace. Ids, when present, must be unique and contiguous; the
/// result is always renumbered from 0 in line order.
pub fn parse_trace(input: impl Read) -> Result<Workload> {
    let reader = BufReader::new(input);
    let mut interner = Interner::default();
    let mut meta = BTreeMap::new();
    let mut txs = Vec::new();
    let mut ids: Vec<(usize, Option<u64>)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix(META_PREFIX) {
            let labels: BTreeMap<String, String> =
                serde_json::from_str(rest).map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad meta comment: {e}"),
                })?;
            meta.extend(labels);
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let rec: Record = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.gas < 1 {
            return Err(Error::validation(format!("line {lineno}: gas must be at least 1")));
        }
        ids.push((lineno, rec.id));
        txs.push(record_to_tx(rec, &mut interner, lineno)?);
    }

    check_ids(&ids)?;
    let mut w = Workload::renumbered(txs)?;
    w.meta = meta;
    Ok(w)
}

fn check_ids(ids: &[(usize, Option<u64>)]) -> Result<()> {
    let with_id = ids.iter().filter(|(_, id)| id.is_some()).count();
    if with_id == 0 {
        return Ok(());
    }
    if with_id != ids.len() {
        return Err(Error::validation(
            "either every record or no record may carry an id",
        ));
    }
    let mut seen = HashSet::new();
    for (line, id) in ids {
        let id = id.unwrap();
        if !seen.insert(id) {
            return Err(Error::validation(format!("line {line}: duplicate id {id}")));
        }
    }
    let base = ids[0].1.unwrap();
    for (offset, (line, id)) in ids.iter().enumerate() {
        if id.unwrap() != base + offset as u64 {
            return Err(Error::validation(format!(
                "line {line}: id {} breaks the contiguous sequence starting at {base}",
                id.unwrap()
            )));
        }
    }
    Ok(())
}

fn record_to_tx(rec: Record, interner: &mut Interner, line: usize) -> Result<Transaction> {
    let mut access = AccessSet::default();
    for k in &rec.reads {
        access.reads.insert(interner.key(k, line)?);
    }
    for k in &rec.writes {
        access.writes.insert(interner.key(k, line)?);
    }
    for (k, d) in &rec.cadds {
        access.cadds.push((interner.key(k, line)?, *d));
    }
    let mut tags = BTreeMap::new();
    for (k, d) in &rec.incs {
        tags.insert(interner.key(k, line)?, KeyTag::Increment(*d));
    }
    for k in &rec.vdeps {
        tags.insert(interner.key(k, line)?, KeyTag::ValueDependent);
    }
    Ok(Transaction {
        id: 0,
        sender: interner.get(&rec.sender),
        gas: rec.gas,
        access,
        tags,
    })
}

fn tx_to_record(tx: &Transaction) -> Record {
    let mut incs = Vec::new();
    let mut vdeps = Vec::new();
    for (k, tag) in &tx.tags {
        match tag {
            KeyTag::Increment(d) => incs.push((k.to_string(), *d)),
            KeyTag::ValueDependent => vdeps.push(k.to_string()),
        }
    }
    Record {
        id: Some(tx.id as u64),
        sender: tx.sender.to_string(),
        gas: tx.gas,
        reads: tx.access.reads.iter().map(|k| k.to_string()).collect(),
        writes: tx.access.writes.iter().map(|k| k.to_string()).collect(),
        cadds: tx
            .access
            .cadds
            .iter()
            .map(|(k, d)| (k.to_string(), *d))
            .collect(),
        incs,
        vdeps,
    }
}

/// Serializes a workload. Output is a pure function of the workload: sets are
/// emitted in key order and meta in label order.
pub fn emit_trace(workload: &Workload, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    if !workload.meta.is_empty() {
        let meta = serde_json::to_string(&workload.meta).map_err(std::io::Error::other)?;
        writeln!(out, "{META_PREFIX}{meta}")?;
    }
    for tx in workload.transactions() {
        let line = serde_json::to_string(&tx_to_record(tx)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_trace_file(path: &Path) -> Result<Workload> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(file)
}

pub fn write_trace_file(workload: &Workload, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    emit_trace(workload, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Workload> {
        parse_trace(s.as_bytes())
    }

    fn emit(w: &Workload) -> String {
        let mut buf = Vec::new();
        emit_trace(w, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_input_is_empty_workload() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("# just a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn single_record() {
        let w = parse(r#"{"id":0,"sender":"a","gas":21000,"reads":[],"writes":[],"cadds":[]}"#)
            .unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.transactions()[0].gas, 21000);
        assert_eq!(&*w.transactions()[0].sender, "a");
    }

    #[test]
    fn emitted_record_matches_wire_format() {
        let w = parse(r#"{"id":0,"sender":"a","gas":21000,"reads":[],"writes":[],"cadds":[]}"#)
            .unwrap();
        assert_eq!(
            emit(&w),
            "# txpar trace v1\n{\"id\":0,\"sender\":\"a\",\"gas\":21000,\"reads\":[],\"writes\":[],\"cadds\":[]}\n"
        );
    }

    #[test]
    fn empty_workload_emits_header_only() {
        assert_eq!(emit(&Workload::default()), "# txpar trace v1\n");
    }

    #[test]
    fn ids_are_optional_and_renumbered() {
        let w = parse(
            "{\"sender\":\"a\",\"gas\":1}\n{\"sender\":\"b\",\"gas\":2}\n",
        )
        .unwrap();
        assert_eq!(w.transactions()[1].id, 1);
        let w = parse(
            "{\"id\":7,\"sender\":\"a\",\"gas\":1}\n{\"id\":8,\"sender\":\"b\",\"gas\":2}\n",
        )
        .unwrap();
        assert_eq!(w.transactions()[0].id, 0);
        assert_eq!(w.transactions()[1].id, 1);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = parse("# c\n{\"sender\":\"a\",\"gas\":1}\n{not json}\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("{\"sender\":\"a\",\"gas\":1,\"reads\":[\"nocolon\"]}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicate_and_gapped_ids_rejected() {
        let dup = "{\"id\":0,\"sender\":\"a\",\"gas\":1}\n{\"id\":0,\"sender\":\"b\",\"gas\":1}\n";
        let err = parse(dup).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate")), "{err}");
        let gap = "{\"id\":0,\"sender\":\"a\",\"gas\":1}\n{\"id\":2,\"sender\":\"b\",\"gas\":1}\n";
        assert!(matches!(parse(gap), Err(Error::Validation(_))));
        let mixed = "{\"id\":0,\"sender\":\"a\",\"gas\":1}\n{\"sender\":\"b\",\"gas\":1}\n";
        assert!(matches!(parse(mixed), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_gas_rejected() {
        let err = parse("{\"sender\":\"a\",\"gas\":0}").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn keys_are_interned() {
        let w = parse(
            "{\"sender\":\"a\",\"gas\":1,\"writes\":[\"c:k\"]}\n{\"sender\":\"a\",\"gas\":1,\"reads\":[\"c:k\"]}\n",
        )
        .unwrap();
        let a = w.transactions()[0].access.writes.iter().next().unwrap();
        let b = w.transactions()[1].access.reads.iter().next().unwrap();
        assert!(Arc::ptr_eq(&a.contract, &b.contract));
        assert!(Arc::ptr_eq(&w.transactions()[0].sender, &w.transactions()[1].sender));
    }

    #[test]
    fn tags_and_meta_round_trip() {
        let k: StorageKey = "c:n".parse().unwrap();
        let v: StorageKey = "c:v".parse().unwrap();
        let w = Workload::renumbered(vec![Transaction::new("a", 3)
            .increment(k, -4)
            .read(v.clone())
            .tag(v, KeyTag::ValueDependent)])
        .unwrap()
        .with_meta("seed", "9");
        let text = emit(&w);
        assert!(text.contains("\"incs\":[[\"c:n\",-4]]"));
        assert!(text.contains("# meta {\"seed\":\"9\"}"));
        assert_eq!(parse(&text).unwrap(), w);
    }
}
