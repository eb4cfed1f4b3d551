//! Continuous cursors and subscriptions.
//!
//! A cursor remembers the commit seq it has delivered up to. Each fetch
//! evaluates at the latest commit and returns only what is new since then:
//! change records for queries over unranged CHANGES, newly closed windows or
//! newly final rows for FINAL queries, and added rows otherwise.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::analysis::prove_insert_only;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::eval::{row_action, ColumnInfo, Evaluator, Relation};
use crate::sql::walk::{base_tables, has_unranged_changes, visit_factors};
use crate::sql::{Query, Schedule, SetExpr, Trigger};
use crate::storage::View;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CursorState {
    Declared,
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CursorKind {
    /// Additions between the previous and the current evaluation.
    Plain,
    /// Unranged CHANGES bound to the resume position.
    Changes,
    Final,
}

#[derive(Debug, Clone)]
pub struct Cursor {
    pub name: String,
    pub query: Query,
    pub state: CursorState,
    pub kind: CursorKind,
    /// Commit seq delivered up to.
    pub resume: u64,
    /// Largest windowing value seen by the previous FINAL fetch.
    pub frontier: Option<Value>,
    /// Rows already emitted by a FINAL query without windows.
    emitted: BTreeMap<Vec<Value>, usize>,
    buffer: VecDeque<Vec<Value>>,
    columns: Vec<ColumnInfo>,
    /// Base tables read by the query (lower case).
    pub deps: BTreeSet<String>,
    /// Set for subscriptions driven only by a periodic schedule.
    pub periodic_only: bool,
}

impl Cursor {
    pub fn new(name: &str, query: Query) -> Cursor {
        let kind = if has_final(&query) {
            CursorKind::Final
        } else if has_unranged_changes(&query) {
            CursorKind::Changes
        } else {
            CursorKind::Plain
        };
        Cursor {
            name: name.to_string(),
            deps: base_tables(&query),
            query,
            state: CursorState::Declared,
            kind,
            resume: 0,
            frontier: None,
            emitted: BTreeMap::new(),
            buffer: VecDeque::new(),
            columns: Vec::new(),
            periodic_only: false,
        }
    }

    pub fn is_open(&self) -> bool {
        self.state == CursorState::Open
    }

    /// Evaluates the next batch into the buffer and moves the resume
    /// position to the latest commit.
    fn refill(&mut self, engine: &Engine) -> Result<()> {
        let db = &engine.db;
        let to = db.clock.seq();
        let mut ev = Evaluator::new(db, View::Committed(to));
        ev.expired_override = engine.read_mode;
        ev.resume = Some(self.resume);
        let rel = match self.kind {
            CursorKind::Final => {
                ev.final_prev = self.frontier.clone();
                let rel = ev.query(&self.query)?.visible();
                let seen = ev.final_seen.borrow().clone();
                match seen {
                    Some(max) => {
                        self.frontier = Some(max);
                        rel
                    }
                    None if ev.final_prev.is_none() && self.frontier.is_none() => self.new_rows(rel),
                    None => self.new_rows(rel),
                }
            }
            CursorKind::Changes => {
                ev.bind_changes = true;
                ev.query(&self.query)?.visible()
            }
            CursorKind::Plain => {
                let now = ev.query(&self.query)?.visible();
                let mut old = Evaluator::new(db, View::Committed(self.resume));
                old.expired_override = engine.read_mode;
                let before = old.query(&self.query)?.visible();
                additions(before, now)
            }
        };
        self.columns = rel.columns;
        self.buffer.extend(rel.rows);
        self.resume = to;
        Ok(())
    }

    /// Rows of `rel` beyond what was already emitted, counting duplicates.
    fn new_rows(&mut self, rel: Relation) -> Relation {
        let mut count: BTreeMap<&Vec<Value>, usize> = BTreeMap::new();
        let mut rows = Vec::new();
        for r in &rel.rows {
            let c = count.entry(r).or_default();
            *c += 1;
            if *c > self.emitted.get(r).copied().unwrap_or(0) {
                rows.push(r.clone());
            }
        }
        for r in &rows {
            *self.emitted.entry(r.clone()).or_default() += 1;
        }
        Relation { columns: rel.columns, rows, keys: None }
    }

    fn take(&mut self, count: Option<u64>) -> Relation {
        let n = count.map_or(self.buffer.len(), |c| (c as usize).min(self.buffer.len()));
        Relation { columns: self.columns.clone(), rows: self.buffer.drain(..n).collect(), keys: None }
    }
}

fn has_final(q: &Query) -> bool {
    if matches!(q.body, SetExpr::Final(_)) {
        return true;
    }
    let mut found = false;
    visit_factors(q, &mut |_, fin| found |= fin);
    found
}

/// Bag difference `now - before`.
fn additions(before: Relation, now: Relation) -> Relation {
    let mut old: BTreeMap<Vec<Value>, usize> = BTreeMap::new();
    for r in before.rows {
        *old.entry(r).or_default() += 1;
    }
    let mut rows = Vec::new();
    for r in now.rows {
        match old.get_mut(&r) {
            Some(c) if *c > 0 => *c -= 1,
            _ => rows.push(r),
        }
    }
    Relation { columns: now.columns, rows, keys: None }
}

/// Renders fetched rows as `(sign, v1, v2, ...)` tuples. The sign comes from
/// an Action column when the query selects one and is `+` otherwise.
pub fn format_tuples(rel: &Relation) -> Vec<String> {
    let action = rel.columns.iter().position(|c| c.name.eq_ignore_ascii_case("Action"));
    rel.rows
        .iter()
        .map(|r| {
            let mut parts = Vec::with_capacity(r.len() + 1);
            if action.is_none() {
                parts.push("+".to_string());
            }
            for (i, v) in r.iter().enumerate() {
                if Some(i) == action {
                    parts.push(row_action(v).map_or_else(|| v.to_string(), |a| a.symbol().to_string()));
                } else {
                    parts.push(v.to_string());
                }
            }
            format!("({})", parts.join(", "))
        })
        .collect()
}

impl Engine {
    pub fn declare_cursor(&mut self, name: &str, query: Query) -> Result<()> {
        let key = name.to_ascii_lowercase();
        if self.cursors.contains_key(&key) {
            return Err(Error::DuplicateCursor(name.to_string()));
        }
        let proof = prove_insert_only(&query, &self.db)?;
        if !proof.is_proven() {
            return Err(Error::NotInsertOnly(format!(
                "continuous cursor {name} needs an insert-only query; first failing node: {}",
                proof.failing.as_deref().unwrap_or("?")
            )));
        }
        self.cursors.insert(key, Cursor::new(name, query));
        Ok(())
    }

    fn cursor_mut(&mut self, name: &str) -> Result<&mut Cursor> {
        self.cursors.get_mut(&name.to_ascii_lowercase()).ok_or_else(|| Error::UnknownCursor(name.to_string()))
    }

    pub fn open_cursor(&mut self, name: &str) -> Result<()> {
        let c = self.cursor_mut(name)?;
        if c.is_open() {
            return Err(Error::AlreadyOpen(name.to_string()));
        }
        c.state = CursorState::Open;
        Ok(())
    }

    pub fn close_cursor(&mut self, name: &str) -> Result<()> {
        let c = self.cursor_mut(name)?;
        if !c.is_open() {
            return Err(Error::CursorNotOpen(name.to_string()));
        }
        c.state = CursorState::Closed;
        Ok(())
    }

    /// Returns up to `count` new rows; an empty relation means no data.
    pub fn fetch(&mut self, name: &str, count: Option<u64>) -> Result<Relation> {
        let key = name.to_ascii_lowercase();
        let mut c = self.cursors.remove(&key).ok_or_else(|| Error::UnknownCursor(name.to_string()))?;
        let out = if !c.is_open() {
            Err(Error::CursorNotOpen(name.to_string()))
        } else if c.buffer.is_empty() {
            c.refill(self).map(|_| c.take(count))
        } else {
            Ok(c.take(count))
        };
        self.cursors.insert(key, c);
        out
    }

    /// Opens a system cursor that pushes new rows to the event stream.
    pub fn subscribe(&mut self, query: Query, schedule: Option<Schedule>) -> Result<String> {
        let name = format!("sub{}", self.next_subscription);
        self.declare_cursor(&name, query)?;
        self.next_subscription += 1;
        let periodic_only = schedule.as_ref().is_some_and(|s| {
            !s.triggers.is_empty() && s.triggers.iter().all(|t| matches!(t, Trigger::Periodic { .. }))
        });
        if let Some(c) = self.cursors.get_mut(&name) {
            c.periodic_only = periodic_only;
        }
        self.open_cursor(&name)?;
        self.subscriptions.push(name.clone());
        self.deliver(&name)?;
        Ok(name)
    }

    pub fn cancel(&mut self, name: &str) -> Result<()> {
        let key = name.to_ascii_lowercase();
        let before = self.subscriptions.len();
        self.subscriptions.retain(|s| *s != key);
        if self.subscriptions.len() == before {
            return Err(Error::UnknownCursor(name.to_string()));
        }
        self.cursors.remove(&key);
        Ok(())
    }

    fn deliver(&mut self, name: &str) -> Result<()> {
        let rel = self.fetch(name, None)?;
        for line in format_tuples(&rel) {
            self.event(format!("[{name}] {line}"));
        }
        Ok(())
    }

    /// Delivers to subscriptions after a commit (`on_commit`) or a clock
    /// advance. Failures are reported as events and do not stop the session.
    pub(crate) fn poll_subscriptions(&mut self, on_commit: bool) {
        for name in self.subscriptions.clone() {
            let periodic = self.cursors.get(&name).is_some_and(|c| c.periodic_only);
            if on_commit && periodic {
                continue;
            }
            if let Err(e) = self.deliver(&name) {
                self.event(format!("[{name}] error: {e}"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additions_is_a_bag_difference() {
        let cols = vec![ColumnInfo::new("x")];
        let rel = |v: &[i64]| Relation {
            columns: cols.clone(),
            rows: v.iter().map(|&i| vec![Value::Int(i)]).collect(),
            keys: None,
        };
        let out = additions(rel(&[1, 2]), rel(&[1, 1, 2, 3]));
        assert_eq!(out.rows, vec![vec![Value::Int(1)], vec![Value::Int(3)]]);
    }

    #[test]
    fn tuples_use_action_symbols() {
        let rel = Relation {
            columns: vec![ColumnInfo::new("Action"), ColumnInfo::new("v")],
            rows: vec![vec![Value::text("DELETE"), Value::Int(1)], vec![Value::text("UPDATE"), Value::Int(2)]],
            keys: None,
        };
        assert_eq!(format_tuples(&rel), ["(-, 1)", "(+, 2)"]);
    }
}
