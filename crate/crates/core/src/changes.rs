//! Change capture: LOG and DELTA formats over base tables, and bag diffs for
//! derived relations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::{format_row_id, TableState};
use crate::value::{Timestamp, Value};

/// Declared so that DELETE sorts first, which is the tie-break every
/// consumer wants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Delete,
    Insert,
    Update,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Delete => "DELETE",
            Action::Insert => "INSERT",
            Action::Update => "UPDATE",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Action::Delete => "-",
            Action::Insert | Action::Update => "+",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        match s.to_ascii_uppercase().as_str() {
            "DELETE" => Some(Action::Delete),
            "INSERT" => Some(Action::Insert),
            "UPDATE" => Some(Action::Update),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Log,
    Delta,
}

impl Format {
    pub fn parse(s: Option<&str>) -> Result<Format> {
        match s.map(|s| s.to_ascii_uppercase()) {
            None => Ok(Format::Delta),
            Some(s) if s == "DELTA" => Ok(Format::Delta),
            Some(s) if s == "LOG" => Ok(Format::Log),
            Some(s) => Err(Error::UnknownFormat(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub values: Vec<Value>,
    pub action: Action,
    pub row_id: String,
    pub time: Timestamp,
    pub seq: u64,
    /// Statement order within the commit.
    pub op: u64,
}

/// Every committed operation on `t` with commit seq in `(from, to]`, in
/// commit order. Expired versions are never reported.
pub fn table_log(t: &TableState, from: u64, to: u64) -> Vec<ChangeRecord> {
    let in_range = |s: Option<u64>| s.is_some_and(|s| s > from && s <= to);
    let mut out = Vec::new();
    for v in t.versions.iter().filter(|v| !v.expired) {
        if in_range(v.insert_seq) {
            out.push(ChangeRecord {
                values: v.values.clone(),
                action: if v.via_update { Action::Update } else { Action::Insert },
                row_id: format_row_id(v.row_id),
                time: v.insert_time,
                seq: v.insert_seq.unwrap(),
                op: v.insert_op,
            });
        }
        if in_range(v.delete_seq) {
            out.push(ChangeRecord {
                values: v.values.clone(),
                action: Action::Delete,
                row_id: format_row_id(v.row_id),
                time: v.delete_time.unwrap_or(v.insert_time),
                seq: v.delete_seq.unwrap(),
                op: v.delete_op,
            });
        }
    }
    out.sort_by(|a, b| {
        (a.seq, a.op, &a.row_id, a.action).cmp(&(b.seq, b.op, &b.row_id, b.action))
    });
    out
}

/// Consolidates a LOG (in commit order) per row id.
///
/// A row that is new over the range yields one INSERT with its last image; a
/// row that disappeared yields one DELETE carrying its first before-image; a
/// row that changed yields DELETE(first before-image) + UPDATE(last image).
/// Output is ordered by (row id, time, DELETE first).
pub fn compact(log: &[ChangeRecord]) -> Vec<ChangeRecord> {
    let mut groups: BTreeMap<&str, Vec<&ChangeRecord>> = BTreeMap::new();
    for r in log {
        groups.entry(r.row_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for recs in groups.values() {
        let first = recs[0];
        let last = recs[recs.len() - 1];
        let existed_before = first.action == Action::Delete;
        let exists_after = last.action != Action::Delete;
        match (existed_before, exists_after) {
            (false, false) => {}
            (false, true) => out.push(ChangeRecord { action: Action::Insert, ..last.clone() }),
            (true, false) => out.push(ChangeRecord {
                values: first.values.clone(),
                action: Action::Delete,
                ..last.clone()
            }),
            (true, true) => {
                out.push(first.clone());
                out.push(ChangeRecord { action: Action::Update, ..last.clone() });
            }
        }
    }
    out.sort_by(|a, b| (&a.row_id, a.time, a.action).cmp(&(&b.row_id, b.time, b.action)));
    out
}

/// LOG records split per commit and consolidated within each commit. This is
/// the change relation as a standing, ever-growing table.
pub fn per_commit_compact(log: &[ChangeRecord]) -> Vec<ChangeRecord> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < log.len() {
        let mut j = i;
        while j < log.len() && log[j].seq == log[i].seq {
            j += 1;
        }
        out.extend(compact(&log[i..j]));
        i = j;
    }
    out
}

/// Stable synthetic identity for rows of derived relations: FNV-1a over the
/// rendered identity values.
pub fn synthetic_row_id(identity: &[Value]) -> String {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for v in identity {
        let piece = format!("{}:{}|", v.kind(), v);
        for b in piece.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    format!("{h:016x}")
}

/// A row of a derived relation with its identity (grouping key, or the row
/// itself when ungrouped).
pub type KeyedRow = (Vec<Value>, Vec<Value>);

/// Bag difference `new - old` as change records. Within one identity the
/// removed rows come first as DELETEs, then the added rows as INSERTs.
pub fn diff(old: &[KeyedRow], new: &[KeyedRow], time: Timestamp, seq: u64) -> Vec<ChangeRecord> {
    let mut by_id: BTreeMap<&[Value], (Vec<&Vec<Value>>, Vec<&Vec<Value>>)> = BTreeMap::new();
    for (k, r) in old {
        by_id.entry(k.as_slice()).or_default().0.push(r);
    }
    for (k, r) in new {
        by_id.entry(k.as_slice()).or_default().1.push(r);
    }
    let mut out = Vec::new();
    for (id, (mut olds, mut news)) in by_id {
        olds.sort();
        news.sort();
        let (mut removed, mut added) = (Vec::new(), Vec::new());
        let (mut i, mut j) = (0, 0);
        while i < olds.len() || j < news.len() {
            match (olds.get(i), news.get(j)) {
                (Some(a), Some(b)) if a == b => {
                    i += 1;
                    j += 1;
                }
                (Some(a), Some(b)) if a < b => {
                    removed.push(*a);
                    i += 1;
                }
                (Some(a), None) => {
                    removed.push(*a);
                    i += 1;
                }
                (_, Some(b)) => {
                    added.push(*b);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        let row_id = synthetic_row_id(id);
        let rec = |values: &Vec<Value>, action| ChangeRecord {
            values: values.clone(),
            action,
            row_id: row_id.clone(),
            time,
            seq,
            op: 0,
        };
        out.extend(removed.into_iter().map(|r| rec(r, Action::Delete)));
        out.extend(added.into_iter().map(|r| rec(r, Action::Insert)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{parse_clock_label, TsFormat};

    fn t(s: &str) -> Timestamp {
        parse_clock_label(s, None).unwrap()
    }

    fn rec(v: i64, action: Action, id: &str, time: &str, seq: u64) -> ChangeRecord {
        ChangeRecord {
            values: vec![Value::Int(v)],
            action,
            row_id: id.into(),
            time: t(time),
            seq,
            op: 0,
        }
    }

    #[test]
    fn insert_then_updates_collapse_to_insert() {
        let log = vec![
            rec(2, Action::Insert, "00000002", "12:01", 1),
            rec(2, Action::Delete, "00000002", "12:03", 2),
            rec(20, Action::Update, "00000002", "12:03", 2),
        ];
        let d = compact(&log);
        assert_eq!(d, vec![rec(20, Action::Insert, "00000002", "12:03", 2)]);
    }

    #[test]
    fn update_pair_is_kept() {
        let log = vec![
            rec(2, Action::Delete, "00000002", "12:03", 2),
            rec(20, Action::Update, "00000002", "12:03", 2),
            rec(21, Action::Delete, "00000002", "12:04", 3),
            rec(22, Action::Update, "00000002", "12:04", 3),
        ];
        let d = compact(&log);
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].action, &d[0].values), (Action::Delete, &vec![Value::Int(2)]));
        assert_eq!((d[1].action, &d[1].values), (Action::Update, &vec![Value::Int(22)]));
    }

    #[test]
    fn insert_then_delete_vanishes() {
        let log = vec![
            rec(1, Action::Insert, "00000001", "12:01", 1),
            rec(1, Action::Delete, "00000001", "12:02", 2),
        ];
        assert!(compact(&log).is_empty());
    }

    #[test]
    fn aggregate_change_is_delete_then_insert() {
        let now = Timestamp::new(0, TsFormat::ClockMinute);
        let k = vec![Value::text("SF")];
        let old = vec![(k.clone(), vec![Value::text("SF"), Value::Int(30)])];
        let new = vec![(k.clone(), vec![Value::text("SF"), Value::Int(62)])];
        let d = diff(&old, &new, now, 1);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].action, Action::Delete);
        assert_eq!(d[1].action, Action::Insert);
        assert_eq!(d[0].row_id, d[1].row_id);
        assert!(diff(&new, &new, now, 1).is_empty());
    }

    #[test]
    fn format_names() {
        assert_eq!(Format::parse(Some("delta")).unwrap(), Format::Delta);
        assert!(matches!(Format::parse(Some("FULL")), Err(Error::UnknownFormat(_))));
    }
}
