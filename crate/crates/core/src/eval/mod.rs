//! Query evaluation over versioned storage.
//!
//! Evaluation is a direct interpretation of the AST: nested-loop joins, hash-free
//! grouping through ordered maps, and runtime name resolution through a chain
//! of scopes. Data sizes are small, so clarity wins over speed.

mod expr;
pub mod finalize;
pub mod window;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use crate::changes::{self, Action, ChangeRecord, Format, KeyedRow};
use crate::error::{Error, Result};
use crate::lifecycle::{self, ReadMode};
use crate::sql::{
    Changes, ChangesSource, Expr, FactorKind, JoinKind, Query, Select, SelectItem, SetExpr, SetOp,
    TableFactor, TableRef,
};
use crate::storage::{Database, TableState, View};
use crate::value::{Timestamp, Value};

pub use expr::{and3, binary_values, compare, or3};
pub use window::WindowParams;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnInfo {
    pub name: String,
    pub qualifier: Option<String>,
    /// Not expanded by `*` (CommitSeq).
    pub hidden: bool,
    /// Action/RowID/Time of the outermost CHANGES.
    pub meta: bool,
}

impl ColumnInfo {
    pub fn new(name: impl Into<String>) -> ColumnInfo {
        ColumnInfo { name: name.into(), qualifier: None, hidden: false, meta: false }
    }

    fn matches(&self, qualifier: Option<&str>, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name)
            && match qualifier {
                None => true,
                Some(q) => self.qualifier.as_deref().is_some_and(|c| c.eq_ignore_ascii_case(q)),
            }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relation {
    pub columns: Vec<ColumnInfo>,
    pub rows: Vec<Vec<Value>>,
    /// Per-row identity for grouped results (the grouping key).
    pub keys: Option<Vec<Vec<Value>>>,
}

impl Relation {
    pub fn new(columns: Vec<ColumnInfo>) -> Relation {
        Relation { columns, rows: Vec::new(), keys: None }
    }

    /// Position of a column by name, ignoring qualifiers.
    pub fn find(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn find_meta(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.meta && c.name.eq_ignore_ascii_case(name))
    }

    pub fn visible_columns(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| !self.columns[i].hidden).collect()
    }

    /// Copy without hidden columns, for display.
    pub fn visible(&self) -> Relation {
        let idx = self.visible_columns();
        Relation {
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
            keys: self.keys.clone(),
        }
    }

    /// Rows paired with their identity: the grouping key when known, the
    /// visible row otherwise.
    pub fn keyed_rows(&self) -> Vec<KeyedRow> {
        let idx = self.visible_columns();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let row: Vec<Value> = idx.iter().map(|&c| r[c].clone()).collect();
                let key = match &self.keys {
                    Some(k) => k[i].clone(),
                    None => row.clone(),
                };
                (key, row)
            })
            .collect()
    }

    pub(crate) fn requalify(mut self, q: Option<&str>) -> Relation {
        if let Some(q) = q {
            for c in &mut self.columns {
                c.qualifier = Some(q.to_string());
            }
        }
        self
    }

    /// Rows as a sorted multiset, for order-insensitive comparison.
    pub fn sorted_rows(&self) -> Vec<Vec<Value>> {
        let mut rows = self.visible().rows;
        rows.sort();
        rows
    }
}

/// Name resolution frame: the current row plus enclosing query rows.
#[derive(Clone, Copy)]
pub struct Scope<'s> {
    pub columns: &'s [ColumnInfo],
    pub row: &'s [Value],
    pub parent: Option<&'s Scope<'s>>,
    /// Rows of the current group when aggregates are allowed.
    pub group: Option<&'s [Vec<Value>]>,
}

impl<'s> Scope<'s> {
    pub fn empty() -> Scope<'static> {
        Scope { columns: &[], row: &[], parent: None, group: None }
    }

    pub fn new(columns: &'s [ColumnInfo], row: &'s [Value], parent: Option<&'s Scope<'s>>) -> Scope<'s> {
        Scope { columns, row, parent, group: None }
    }

    pub fn lookup(&self, qualifier: Option<&str>, name: &str) -> Option<&'s Value> {
        let mut s = Some(self);
        while let Some(scope) = s {
            if let Some(i) = scope.columns.iter().position(|c| c.matches(qualifier, name)) {
                return Some(&scope.row[i]);
            }
            s = scope.parent;
        }
        None
    }

    /// Whether the name resolves in this frame alone (not in parents).
    pub fn resolves_locally(&self, qualifier: Option<&str>, name: &str) -> bool {
        self.columns.iter().any(|c| c.matches(qualifier, name))
    }
}

#[derive(Debug, Clone)]
pub struct CteBinding {
    pub name: String,
    pub query: Rc<Query>,
    pub rel: Rc<Relation>,
}

#[derive(Debug, Clone, Default)]
pub struct Env {
    pub ctes: Vec<CteBinding>,
}

impl Env {
    pub fn lookup(&self, name: &str) -> Option<&CteBinding> {
        self.ctes.iter().rev().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Reading context. Cheap to clone; sub-evaluations tweak a copy.
#[derive(Clone)]
pub struct Evaluator<'a> {
    pub db: &'a Database,
    pub view: View,
    pub now: Timestamp,
    /// LAST_SCHEDULE_TIME as a commit seq (task or cursor resume position).
    pub resume: Option<u64>,
    /// Unranged CHANGES at this level read from `resume`.
    pub bind_changes: bool,
    pub expired_override: Option<ReadMode>,
    /// Inside FINAL(...): expired reads default to ERROR.
    pub in_final: bool,
    /// Base scans keep only final rows.
    pub final_mode: bool,
    /// Window frontier of the previous fetch of a FINAL cursor.
    pub final_prev: Option<Value>,
    /// Window frontier observed by this evaluation.
    pub final_seen: Rc<RefCell<Option<Value>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(db: &'a Database, view: View) -> Evaluator<'a> {
        let now = match view {
            View::Dirty => db.now(),
            View::Committed(s) if s >= db.clock.seq() => db.now(),
            View::Committed(s) => db.time_of(s),
        };
        Evaluator {
            db,
            view,
            now,
            resume: None,
            bind_changes: false,
            expired_override: None,
            in_final: false,
            final_mode: false,
            final_prev: None,
            final_seen: Rc::new(RefCell::new(None)),
        }
    }

    /// Latest commit seq this evaluator can see as committed.
    pub fn committed_seq(&self) -> u64 {
        match self.view {
            View::Committed(s) => s,
            View::Dirty => self.db.clock.seq(),
        }
    }

    pub fn read_mode(&self) -> ReadMode {
        self.expired_override
            .unwrap_or(if self.in_final { ReadMode::Error } else { ReadMode::Ignore })
    }

    pub fn tweak(&self, f: impl FnOnce(&mut Evaluator<'a>)) -> Evaluator<'a> {
        let mut e = self.clone();
        f(&mut e);
        e
    }

    /// Evaluator reading committed data as of `seq`, for change computation.
    pub fn at_seq(&self, seq: u64) -> Evaluator<'a> {
        let mut e = Evaluator::new(self.db, View::Committed(seq));
        e.resume = self.resume;
        e.expired_override = Some(ReadMode::Ignore);
        e
    }

    pub fn query(&self, q: &Query) -> Result<Relation> {
        self.eval_query(q, &Env::default(), None)
    }

    pub fn eval_query(&self, q: &Query, env: &Env, outer: Option<&Scope>) -> Result<Relation> {
        let mut local;
        let env = if q.with.is_empty() {
            env
        } else {
            local = env.clone();
            for cte in &q.with {
                let rel = self.eval_query(&cte.query, &local, outer)?;
                local.ctes.push(CteBinding {
                    name: cte.name.clone(),
                    query: Rc::new(cte.query.clone()),
                    rel: Rc::new(rel),
                });
            }
            &local
        };
        let mut rel = self.eval_set_expr(&q.body, env, outer)?;
        if !q.order_by.is_empty() {
            let mut decorated = Vec::with_capacity(rel.rows.len());
            for (i, row) in rel.rows.iter().enumerate() {
                let scope = Scope { columns: &rel.columns, row, parent: outer, group: None };
                let mut key = Vec::new();
                for item in &q.order_by {
                    key.push(self.eval_expr(&item.expr, &scope, env)?);
                }
                decorated.push((key, i));
            }
            decorated.sort_by(|(a, ia), (b, ib)| {
                for (n, item) in q.order_by.iter().enumerate() {
                    let o = a[n].cmp(&b[n]);
                    let o = if item.desc { o.reverse() } else { o };
                    if o != std::cmp::Ordering::Equal {
                        return o;
                    }
                }
                ia.cmp(ib)
            });
            let order: Vec<usize> = decorated.into_iter().map(|(_, i)| i).collect();
            rel.rows = order.iter().map(|&i| rel.rows[i].clone()).collect();
            if let Some(keys) = &rel.keys {
                rel.keys = Some(order.iter().map(|&i| keys[i].clone()).collect());
            }
        }
        if let Some(n) = q.limit {
            rel.rows.truncate(n as usize);
            if let Some(k) = &mut rel.keys {
                k.truncate(n as usize);
            }
        }
        Ok(rel)
    }

    fn eval_set_expr(&self, body: &SetExpr, env: &Env, outer: Option<&Scope>) -> Result<Relation> {
        match body {
            SetExpr::Select(s) => self.eval_select(s, env, outer),
            SetExpr::Values(rows) => {
                let width = rows.first().map_or(0, |r| r.len());
                let mut rel =
                    Relation::new((1..=width).map(|i| ColumnInfo::new(format!("column{i}"))).collect());
                let scope = outer.copied().unwrap_or_else(|| Scope::empty());
                for r in rows {
                    if r.len() != width {
                        return Err(Error::SchemaMismatch("VALUES rows differ in width".into()));
                    }
                    let mut out = Vec::with_capacity(width);
                    for e in r {
                        out.push(self.eval_expr(e, &scope, env)?);
                    }
                    rel.rows.push(out);
                }
                Ok(rel)
            }
            SetExpr::Query(q) => self.eval_query(q, env, outer),
            SetExpr::Final(q) => self.eval_final(q, env, outer),
            SetExpr::SetOp { op, all, left, right } => {
                let l = self.eval_set_expr(left, env, outer)?.visible();
                let r = self.eval_set_expr(right, env, outer)?.visible();
                if l.columns.len() != r.columns.len() {
                    return Err(Error::SchemaMismatch(format!(
                        "set operation operands have {} and {} columns",
                        l.columns.len(),
                        r.columns.len()
                    )));
                }
                let rows = set_op(*op, *all, l.rows, r.rows);
                let mut columns = l.columns;
                for c in &mut columns {
                    c.meta = false;
                }
                Ok(Relation { columns, rows, keys: None })
            }
        }
    }

    pub fn eval_select(&self, s: &Select, env: &Env, outer: Option<&Scope>) -> Result<Relation> {
        // A FINALIZE clause supplies finality itself; the sources are read whole.
        let source_eval = if s.finalize.is_some() && self.final_mode {
            self.tweak(|e| e.final_mode = false)
        } else {
            self.clone()
        };
        let mut from = source_eval.eval_from(&s.from, env, outer, s.selection.as_ref())?;

        for pred in [&s.selection, &s.finalize].into_iter().flatten() {
            let mut kept = Vec::with_capacity(from.rows.len());
            for row in from.rows {
                let scope = Scope { columns: &from.columns, row: &row, parent: outer, group: None };
                if truth(&self.eval_expr(pred, &scope, env)?)? == Some(true) {
                    kept.push(row);
                }
            }
            from.rows = kept;
        }

        let grouped = !s.group_by.is_empty()
            || s.items.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_aggregate()))
            || s.having.as_ref().is_some_and(|h| h.contains_aggregate());

        let mut rel = if grouped {
            self.eval_grouped(s, from, env, outer)?
        } else {
            let (columns, exprs) = self.projection(s, &from)?;
            let mut rel = Relation::new(columns);
            for row in &from.rows {
                let scope = Scope { columns: &from.columns, row, parent: outer, group: None };
                let mut out = Vec::with_capacity(exprs.len());
                for p in &exprs {
                    out.push(match p {
                        Proj::Col(i) => row[*i].clone(),
                        Proj::Expr(e) => self.eval_expr(e, &scope, env)?,
                    });
                }
                rel.rows.push(out);
            }
            rel
        };

        if s.distinct {
            let mut seen = std::collections::BTreeSet::new();
            rel.rows.retain(|r| seen.insert(r.clone()));
            rel.keys = None;
        }
        Ok(rel)
    }

    /// Output columns and how to compute each, for a non-grouped select.
    fn projection(&self, s: &Select, from: &Relation) -> Result<(Vec<ColumnInfo>, Vec<Proj>)> {
        let mut columns = Vec::new();
        let mut exprs = Vec::new();
        for item in &s.items {
            match item {
                SelectItem::Wildcard => {
                    for i in from.visible_columns() {
                        let mut c = from.columns[i].clone();
                        c.qualifier = None;
                        columns.push(c);
                        exprs.push(Proj::Col(i));
                    }
                }
                SelectItem::QualifiedWildcard(q) => {
                    let mut any = false;
                    for i in from.visible_columns() {
                        let c = &from.columns[i];
                        if c.qualifier.as_deref().is_some_and(|cq| cq.eq_ignore_ascii_case(q)) {
                            let mut c = c.clone();
                            c.qualifier = None;
                            columns.push(c);
                            exprs.push(Proj::Col(i));
                            any = true;
                        }
                    }
                    if !any {
                        return Err(Error::UnresolvedName(format!("unknown relation {q}")));
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    let mut info = ColumnInfo::new(alias.clone().unwrap_or_else(|| output_name(expr)));
                    if let (Expr::Column { qualifier, name }, None) = (expr, alias) {
                        if let Some(i) = from.columns.iter().position(|c| c.matches(qualifier.as_deref(), name)) {
                            info.meta = from.columns[i].meta;
                            info.hidden = false;
                        }
                    }
                    columns.push(info);
                    exprs.push(Proj::Expr(expr.clone()));
                }
            }
        }
        Ok((columns, exprs))
    }

    fn eval_grouped(&self, s: &Select, from: Relation, env: &Env, outer: Option<&Scope>) -> Result<Relation> {
        // GROUP BY may name select-list aliases.
        let group_exprs: Vec<Expr> = s
            .group_by
            .iter()
            .map(|g| resolve_alias(g, s, &from))
            .collect();

        let completeness = if self.final_mode {
            Some(self.group_finality(s, &group_exprs, env)?)
        } else {
            None
        };

        let mut groups: BTreeMap<Vec<Value>, Vec<Vec<Value>>> = BTreeMap::new();
        for row in from.rows {
            let scope = Scope { columns: &from.columns, row: &row, parent: outer, group: None };
            let mut key = Vec::with_capacity(group_exprs.len());
            for g in &group_exprs {
                key.push(self.eval_expr(g, &scope, env)?);
            }
            groups.entry(key).or_default().push(row);
        }
        if groups.is_empty() && group_exprs.is_empty() {
            groups.insert(vec![], vec![]);
        }

        let mut columns = Vec::new();
        for item in &s.items {
            match item {
                SelectItem::Expr { expr, alias } => {
                    columns.push(ColumnInfo::new(alias.clone().unwrap_or_else(|| output_name(expr))))
                }
                _ => return Err(Error::TypeError("* is not allowed in a grouped select".into())),
            }
        }
        let null_row = vec![Value::Null; from.columns.len()];
        let mut rel = Relation::new(columns);
        let mut keys = Vec::new();
        for (key, rows) in &groups {
            if let Some(check) = &completeness {
                if !check.complete(self, key, env)? {
                    continue;
                }
            }
            let rep = rows.first().unwrap_or(&null_row);
            let scope = Scope { columns: &from.columns, row: rep, parent: outer, group: Some(rows) };
            if let Some(h) = &s.having {
                if truth(&self.eval_expr(h, &scope, env)?)? != Some(true) {
                    continue;
                }
            }
            let mut out = Vec::new();
            for item in &s.items {
                if let SelectItem::Expr { expr, .. } = item {
                    out.push(self.eval_expr(expr, &scope, env)?);
                }
            }
            rel.rows.push(out);
            keys.push(key.clone());
        }
        if !group_exprs.is_empty() {
            rel.keys = Some(keys);
        }
        Ok(rel)
    }

    pub fn eval_from(
        &self,
        from: &[TableRef],
        env: &Env,
        outer: Option<&Scope>,
        pushdown: Option<&Expr>,
    ) -> Result<Relation> {
        let mut acc = Relation { columns: vec![], rows: vec![vec![]], keys: None };
        for tr in from {
            acc = self.join(acc, &tr.factor, JoinKind::Cross, None, env, outer, pushdown)?;
            for j in &tr.joins {
                acc = self.join(acc, &j.factor, j.kind, j.on.as_ref(), env, outer, pushdown)?;
            }
        }
        Ok(acc)
    }

    #[allow(clippy::too_many_arguments)]
    fn join(
        &self,
        left: Relation,
        factor: &TableFactor,
        kind: JoinKind,
        on: Option<&Expr>,
        env: &Env,
        outer: Option<&Scope>,
        pushdown: Option<&Expr>,
    ) -> Result<Relation> {
        let lateral = matches!(factor.kind, FactorKind::Function { .. });
        let fixed = if lateral { None } else { Some(self.eval_factor(factor, env, outer, pushdown)?) };

        let mut columns = left.columns.clone();
        let mut out_rows = Vec::new();
        let mut right_cols: Option<Vec<ColumnInfo>> = fixed.as_ref().map(|r| r.columns.clone());

        for lrow in &left.rows {
            let lateral_rel;
            let right = match &fixed {
                Some(r) => r,
                None => {
                    let scope = Scope { columns: &left.columns, row: lrow, parent: outer, group: None };
                    lateral_rel = self.eval_factor(factor, env, Some(&scope), pushdown)?;
                    if right_cols.is_none() {
                        right_cols = Some(lateral_rel.columns.clone());
                    }
                    &lateral_rel
                }
            };
            let natural: Vec<(usize, usize)> = if kind == JoinKind::Natural {
                left.columns
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| {
                        right.columns.iter().position(|rc| rc.name.eq_ignore_ascii_case(&c.name)).map(|j| (i, j))
                    })
                    .collect()
            } else {
                vec![]
            };
            let mut matched = false;
            for rrow in &right.rows {
                let mut row = lrow.clone();
                row.extend(rrow.iter().cloned());
                let keep = match kind {
                    JoinKind::Natural => natural.iter().all(|&(i, j)| {
                        !lrow[i].is_null() && lrow[i] == rrow[j]
                    }),
                    _ => match on {
                        None => true,
                        Some(cond) => {
                            let mut cols = left.columns.clone();
                            cols.extend(right.columns.iter().cloned());
                            let scope = Scope { columns: &cols, row: &row, parent: outer, group: None };
                            truth(&self.eval_expr(cond, &scope, env)?)? == Some(true)
                        }
                    },
                };
                if keep {
                    matched = true;
                    out_rows.push(row);
                }
            }
            if kind == JoinKind::Left && !matched {
                let mut row = lrow.clone();
                row.extend(std::iter::repeat_n(Value::Null, right.columns.len()));
                out_rows.push(row);
            }
        }
        match right_cols {
            Some(rc) => columns.extend(rc),
            None => {
                // lateral factor over an empty left side: columns still needed
                let probe = Scope::empty();
                if let Ok(r) = self.eval_factor(factor, env, Some(&probe), pushdown) {
                    columns.extend(r.columns);
                }
            }
        }
        Ok(Relation { columns, rows: out_rows, keys: None })
    }

    pub fn eval_factor(
        &self,
        factor: &TableFactor,
        env: &Env,
        outer: Option<&Scope>,
        pushdown: Option<&Expr>,
    ) -> Result<Relation> {
        let alias = factor.alias.as_deref();
        let rel = match &factor.kind {
            FactorKind::Table(name) => {
                if let Some(cte) = env.lookup(name) {
                    let rel = if self.final_mode && !query_finalizes(&cte.query) {
                        self.eval_query(&cte.query, env, None)?
                    } else {
                        (*cte.rel).clone()
                    };
                    Relation { keys: None, ..rel }.requalify(Some(alias.unwrap_or(name)))
                } else {
                    self.scan_table(name, alias.unwrap_or(name), pushdown, outer, env)?
                }
            }
            FactorKind::Derived(q) => {
                let mut rel = self.eval_query(q, env, outer)?;
                rel.keys = None;
                for c in &mut rel.columns {
                    c.qualifier = None;
                }
                rel.requalify(alias)
            }
            FactorKind::Changes(c) => {
                let mut rel = self.eval_changes(c, env, outer)?;
                rel.keys = None;
                rel.requalify(alias)
            }
            FactorKind::Function { name, args } => {
                let scope = outer.copied().unwrap_or_else(|| Scope::empty());
                self.table_function(name, args, &scope, env)?.requalify(alias)
            }
            FactorKind::Nested(list) => {
                let rel = self.eval_from(list, env, outer, pushdown)?;
                rel.requalify(alias)
            }
        };
        match &factor.window {
            None => Ok(rel),
            Some(spec) => {
                let scope = outer.copied().unwrap_or_else(|| Scope::empty());
                let params = self.window_params(spec, &rel, &scope, env)?;
                window::expand(rel, &params, alias)
            }
        }
    }

    fn scan_table(
        &self,
        name: &str,
        qualifier: &str,
        pushdown: Option<&Expr>,
        outer: Option<&Scope>,
        env: &Env,
    ) -> Result<Relation> {
        let t = self.db.table(name)?;
        let columns = table_columns(t, qualifier);
        if self.read_mode() == ReadMode::Error {
            lifecycle::expired_read_guard(self, t, &columns, pushdown, outer, env)?;
        }
        let mut versions: Vec<_> = t.rows(self.view).collect();
        versions.sort_by_key(|v| v.row_id);
        let mut rows: Vec<Vec<Value>> = versions.into_iter().map(|v| v.values.clone()).collect();
        if self.final_mode {
            rows = self.final_rows(t, &columns, rows, env)?;
        }
        Ok(Relation { columns, rows, keys: None })
    }

    pub fn eval_changes(&self, c: &Changes, env: &Env, outer: Option<&Scope>) -> Result<Relation> {
        let format = Format::parse(c.format.as_deref())?;
        let to = self.committed_seq();
        let from = match &c.start {
            Some(Expr::LastScheduleTime) => Some(self.resume.ok_or_else(|| {
                Error::UnresolvedName("LAST_SCHEDULE_TIME is only defined in a task or cursor".into())
            })?),
            Some(e) => {
                let scope = outer.copied().unwrap_or_else(|| Scope::empty());
                let v = self.eval_expr(e, &scope, env)?;
                let t = v.to_timestamp(Some(self.db.base_date())).ok_or_else(|| {
                    Error::TypeError(format!("CHANGES start must be a timestamp, got {v}"))
                })?;
                Some(self.db.clock.resolve(t))
            }
            None if self.bind_changes && self.resume.is_some() => self.resume,
            None if self.in_final => Some(0),
            None => None,
        };
        if let Some(f) = from {
            if f > to {
                return Err(Error::InvalidRange(format!("start is after the end of the range ({f} > {to})")));
            }
        }

        let (payload, records) = match &c.source {
            ChangesSource::Table(name) if env.lookup(name).is_none() => {
                let t = self.db.table(name)?;
                let log = changes::table_log(t, from.unwrap_or(0), to);
                let records = match (from, format) {
                    (Some(_), Format::Delta) => changes::compact(&log),
                    (_, Format::Log) => log,
                    (None, Format::Delta) => changes::per_commit_compact(&log),
                };
                (t.column_names(), records)
            }
            source => {
                let owned;
                let q: &Query = match source {
                    ChangesSource::Query(q) => q,
                    ChangesSource::Table(name) => {
                        owned = crate::sql::parse_query(&format!("SELECT * FROM {}", crate::sql::render::ident(name)))?;
                        &owned
                    }
                };
                self.derived_changes(q, env, from, to, format)?
            }
        };

        let mut columns: Vec<ColumnInfo> = payload.into_iter().map(ColumnInfo::new).collect();
        for name in ["Action", "RowID", "Time"] {
            columns.push(ColumnInfo { meta: true, ..ColumnInfo::new(name) });
        }
        columns.push(ColumnInfo { meta: true, hidden: true, ..ColumnInfo::new("CommitSeq") });
        let rows = records.into_iter().map(record_row).collect();
        Ok(Relation { columns, rows, keys: None })
    }

    fn derived_changes(
        &self,
        q: &Query,
        env: &Env,
        from: Option<u64>,
        to: u64,
        format: Format,
    ) -> Result<(Vec<String>, Vec<ChangeRecord>)> {
        let latest = self.at_seq(to).eval_query(q, env, None)?;
        // seq 0 is before anything existed: every row of the first state is an
        // insert, including the row a scalar aggregate gives over no input
        let eval_at = |s: u64| -> Result<Relation> {
            if s == 0 {
                return Ok(Relation { columns: latest.columns.clone(), rows: vec![], keys: latest.keys.clone() });
            }
            self.at_seq(s).eval_query(q, env, None)
        };
        let payload: Vec<String> =
            latest.visible_columns().iter().map(|&i| latest.columns[i].name.clone()).collect();
        let time_of = |s: u64| self.db.clock.time_of(s).unwrap_or(self.now);
        let records = match (from, format) {
            (Some(f), Format::Delta) => {
                let old = eval_at(f)?;
                changes::diff(&old.keyed_rows(), &latest.keyed_rows(), time_of(to), to)
            }
            (from, _) => {
                let start = from.unwrap_or(0);
                let mut out = Vec::new();
                let mut prev: Vec<KeyedRow> = eval_at(start)?.keyed_rows();
                for s in start + 1..=to {
                    let cur = if s == to { latest.keyed_rows() } else { eval_at(s)?.keyed_rows() };
                    out.extend(changes::diff(&prev, &cur, time_of(s), s));
                    prev = cur;
                }
                out
            }
        };
        Ok((payload, records))
    }
}

/// Scan columns of a base table under the given qualifier.
pub fn table_columns(t: &TableState, qualifier: &str) -> Vec<ColumnInfo> {
    t.columns
        .iter()
        .map(|c| ColumnInfo { qualifier: Some(qualifier.to_string()), ..ColumnInfo::new(c.name.clone()) })
        .collect()
}

enum Proj {
    Col(usize),
    Expr(Expr),
}

fn record_row(r: ChangeRecord) -> Vec<Value> {
    let mut row = r.values;
    row.push(Value::text(r.action.name()));
    row.push(Value::Text(r.row_id));
    row.push(Value::Timestamp(r.time));
    row.push(Value::Int(r.seq as i64));
    row
}

/// Reads the Action of a change row.
pub fn row_action(v: &Value) -> Option<Action> {
    v.as_str().and_then(Action::parse)
}

pub fn truth(v: &Value) -> Result<Option<bool>> {
    match v {
        Value::Null => Ok(None),
        Value::Bool(b) => Ok(Some(*b)),
        other => Err(Error::TypeError(format!("expected a boolean, got {} {other}", other.kind()))),
    }
}

/// Column name an unaliased select item gets.
pub fn output_name(e: &Expr) -> String {
    match e {
        Expr::Column { name, .. } => name.clone(),
        other => other.to_string(),
    }
}

/// Replaces a bare GROUP BY name that is not a source column but is a
/// select-list alias with the aliased expression.
fn resolve_alias(g: &Expr, s: &Select, from: &Relation) -> Expr {
    if let Expr::Column { qualifier: None, name } = g {
        if from.columns.iter().any(|c| c.name.eq_ignore_ascii_case(name)) {
            return g.clone();
        }
        for item in &s.items {
            if let SelectItem::Expr { expr, alias: Some(a) } = item {
                if a.eq_ignore_ascii_case(name) {
                    return expr.clone();
                }
            }
        }
    }
    g.clone()
}

fn query_finalizes(q: &Query) -> bool {
    matches!(&q.body, SetExpr::Select(s) if s.finalize.is_some())
}

fn set_op(op: SetOp, all: bool, left: Vec<Vec<Value>>, right: Vec<Vec<Value>>) -> Vec<Vec<Value>> {
    let count = |rows: &[Vec<Value>]| {
        let mut m: BTreeMap<Vec<Value>, usize> = BTreeMap::new();
        for r in rows {
            *m.entry(r.clone()).or_default() += 1;
        }
        m
    };
    match (op, all) {
        (SetOp::Union, true) => left.into_iter().chain(right).collect(),
        (SetOp::Union, false) => {
            let mut seen = std::collections::BTreeSet::new();
            left.into_iter().chain(right).filter(|r| seen.insert(r.clone())).collect()
        }
        (SetOp::Intersect, _) | (SetOp::Except, _) => {
            let mut rc = count(&right);
            let mut seen = std::collections::BTreeSet::new();
            let mut out = Vec::new();
            for r in left {
                let avail = rc.get(&r).copied().unwrap_or(0);
                let keep = match op {
                    SetOp::Intersect => avail > 0,
                    _ => avail == 0,
                };
                if all {
                    if op == SetOp::Intersect {
                        if avail > 0 {
                            *rc.get_mut(&r).unwrap() -= 1;
                            out.push(r);
                        }
                    } else if avail > 0 {
                        *rc.get_mut(&r).unwrap() -= 1;
                    } else {
                        out.push(r);
                    }
                } else if keep && seen.insert(r.clone()) {
                    out.push(r);
                }
            }
            out
        }
    }
}
