//! FINAL: emitting only results that can no longer change.
//!
//! Two paths. A query over a window subquery reports the rows of closed
//! ranges. Any other query reads only final rows of its base tables, and a
//! grouped query additionally waits until its time bucket is complete.

use super::{window, ColumnInfo, Env, Evaluator, Relation, Scope, truth};
use crate::error::{Error, Result};
use crate::sql::{ChangesSource, Expr, FactorKind, Query, Select, SetExpr, TableFactor, TableRef, WindowSpec};
use crate::storage::{TableState, View};
use crate::value::{Interval, TimeUnit, Value};

impl<'a> Evaluator<'a> {
    pub fn eval_final(&self, q: &Query, env: &Env, outer: Option<&Scope>) -> Result<Relation> {
        let inner = self.tweak(|e| e.in_final = true);
        match find_window(q, env) {
            Some((Some(table), spec)) => inner.final_windows(q, &table, &spec, env, outer),
            Some((None, _)) => Err(Error::NotFinalizable(
                "FINAL windows need a base table as the windowed relation".into(),
            )),
            None => inner.tweak(|e| e.final_mode = true).eval_query(q, env, outer),
        }
    }

    fn final_windows(
        &self,
        q: &Query,
        table: &str,
        spec: &WindowSpec,
        env: &Env,
        outer: Option<&Scope>,
    ) -> Result<Relation> {
        let t = self.db.table(table)?;
        let col = match &spec.column {
            Some(c) => t
                .column_index(c)
                .ok_or_else(|| Error::UnresolvedName(format!("unknown windowing column {c}")))?,
            None => t
                .columns
                .iter()
                .position(|c| {
                    matches!(c.ty, crate::storage::ColumnType::Timestamp | crate::storage::ColumnType::Date)
                })
                .unwrap_or(0),
        };
        let scope = outer.copied().unwrap_or_else(|| Scope::empty());
        let range = self.eval_expr(&spec.range, &scope, env)?;
        let grace = match &spec.grace {
            Some(g) => self.eval_expr(g, &scope, env)?,
            None => match t.increasing.iter().find(|c| c.enabled && c.column == col) {
                Some(c) => c.grace.clone().unwrap_or_else(|| window::zero_like(&range)),
                None => {
                    return Err(Error::NotFinalizable(format!(
                        "FINAL window over {} needs a GRACE clause or an INCREASING constraint on {}",
                        t.name, t.columns[col].name
                    )))
                }
            },
        };

        let mut rel = self.eval_query(q, env, outer)?;
        let end_of = end_column(&rel, spec, &range)?;
        let Some(max) = view_max(t, col, self.view) else {
            rel.rows.clear();
            rel.keys = rel.keys.map(|_| vec![]);
            return Ok(rel);
        };

        let mut keep = Vec::with_capacity(rel.rows.len());
        for row in &rel.rows {
            let we = end_of(row)?;
            let closed = window::is_closed(&we, &grace, &max)?;
            let seen = match &self.final_prev {
                Some(prev) => window::is_closed(&we, &grace, prev)?,
                None => false,
            };
            keep.push(closed && !seen);
        }
        let mut i = 0;
        rel.rows.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        if let Some(keys) = &mut rel.keys {
            let mut i = 0;
            keys.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        *self.final_seen.borrow_mut() = Some(max);
        Ok(rel)
    }

    /// Rows of a base table that are final under its constraints.
    pub fn final_rows(
        &self,
        t: &TableState,
        columns: &[ColumnInfo],
        rows: Vec<Vec<Value>>,
        env: &Env,
    ) -> Result<Vec<Vec<Value>>> {
        if let Some(p) = &t.finalize {
            let ev = self.tweak(|e| e.final_mode = false);
            let mut out = Vec::new();
            for row in rows {
                let scope = Scope::new(columns, &row, None);
                if truth(&ev.eval_expr(&p.expr, &scope, env)?)? == Some(true) {
                    out.push(row);
                }
            }
            return Ok(out);
        }
        if t.insert_only {
            return Ok(rows);
        }
        if let Some(c) = t.increasing.iter().find(|c| c.enabled) {
            let Some(max) = view_max(t, c.column, self.view) else { return Ok(vec![]) };
            let floor = match &c.grace {
                Some(g) => max.sub(g)?,
                None => max,
            };
            return Ok(rows
                .into_iter()
                .filter(|r| r[c.column].sql_cmp(&floor).ok().flatten() == Some(std::cmp::Ordering::Less))
                .collect());
        }
        Err(Error::NotFinalizable(format!(
            "FINAL over {} needs an INSERT ONLY, INCREASING or FINALIZE constraint",
            t.name
        )))
    }

    /// How to tell whether a group of a grouped FINAL query is complete.
    pub fn group_finality(
        &self,
        s: &Select,
        group_exprs: &[Expr],
        env: &Env,
    ) -> Result<GroupFinality> {
        let not_final = |why: &str| Error::NotFinalizable(format!("grouped FINAL query: {why}"));
        let (pos, unit, column) = group_exprs
            .iter()
            .enumerate()
            .find_map(|(i, g)| bucket_key(g).map(|(u, c)| (i, u, c)))
            .ok_or_else(|| not_final("needs a date_trunc or FLOOR time bucket in GROUP BY"))?;
        let [TableRef { factor: TableFactor { kind: FactorKind::Table(name), window: None, .. }, joins }] =
            s.from.as_slice()
        else {
            return Err(not_final("needs a single table or common table expression source"));
        };
        if !joins.is_empty() {
            return Err(not_final("joins are not supported"));
        }
        if let Some(cte) = env.lookup(name) {
            return match &cte.query.body {
                SetExpr::Select(inner) if inner.finalize.is_some() => Ok(GroupFinality {
                    pos,
                    unit,
                    column,
                    test: Completeness::Predicate(inner.finalize.clone().unwrap()),
                }),
                _ => Err(not_final(&format!("{name} has no FINALIZE clause"))),
            };
        }
        let t = self.db.table(name)?;
        if let Some(p) = &t.finalize {
            return Ok(GroupFinality { pos, unit, column, test: Completeness::Predicate(p.expr.clone()) });
        }
        let col = t.column_index(&column).ok_or_else(|| Error::UnresolvedName(format!("unknown column {column}")))?;
        match t.increasing.iter().find(|c| c.enabled && c.column == col) {
            Some(c) => {
                let floor = match view_max(t, col, self.view) {
                    None => None,
                    Some(m) => Some(match &c.grace {
                        Some(g) => m.sub(g)?,
                        None => m,
                    }),
                };
                Ok(GroupFinality { pos, unit, column, test: Completeness::Below(floor) })
            }
            None => Err(not_final(&format!("{name} has no finalization or INCREASING constraint on {column}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Completeness {
    /// Finality predicate over the bucketed column.
    Predicate(Expr),
    /// Everything strictly below the value is final.
    Below(Option<Value>),
}

#[derive(Debug, Clone)]
pub struct GroupFinality {
    pos: usize,
    unit: TimeUnit,
    column: String,
    test: Completeness,
}

impl GroupFinality {
    /// A bucket is complete once its last instant is final.
    pub fn complete(&self, ev: &Evaluator, key: &[Value], env: &Env) -> Result<bool> {
        let Some(start) = key[self.pos].to_timestamp(Some(ev.db.base_date())) else {
            return Ok(false);
        };
        let last = Value::Timestamp(start.plus(Interval::of(1, self.unit)).plus(Interval::from_secs(-1)));
        match &self.test {
            Completeness::Predicate(p) => {
                let columns = [ColumnInfo::new(self.column.clone())];
                let row = [last];
                let scope = Scope::new(&columns, &row, None);
                let ev = ev.tweak(|e| e.final_mode = false);
                match ev.eval_expr(p, &scope, env) {
                    Ok(v) => Ok(truth(&v)? == Some(true)),
                    Err(Error::UnresolvedName(n)) => Err(Error::NotFinalizable(format!(
                        "finalization predicate must depend only on {}: {n}",
                        self.column
                    ))),
                    Err(e) => Err(e),
                }
            }
            Completeness::Below(None) => Ok(false),
            Completeness::Below(Some(floor)) => {
                Ok(last.sql_cmp(floor)? == Some(std::cmp::Ordering::Less))
            }
        }
    }
}

/// `date_trunc(unit, col)` or `FLOOR(col TO unit)`.
fn bucket_key(e: &Expr) -> Option<(TimeUnit, String)> {
    match e {
        Expr::FloorTo { expr, unit } => match expr.as_ref() {
            Expr::Column { name, .. } => Some((*unit, name.clone())),
            _ => None,
        },
        Expr::Function { name, args, .. } if name.eq_ignore_ascii_case("date_trunc") && args.len() == 2 => {
            let unit = match &args[0] {
                Expr::Literal(crate::sql::Literal::Str(s)) => TimeUnit::parse(s)?,
                Expr::Column { qualifier: None, name } => TimeUnit::parse(name)?,
                _ => return None,
            };
            match &args[1] {
                Expr::Column { name, .. } => Some((unit, name.clone())),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Extracts the inclusive window end of an output row, from the end bound
/// column or, failing that, from the start bound.
fn end_column<'r>(
    rel: &Relation,
    spec: &WindowSpec,
    range: &'r Value,
) -> Result<Box<dyn Fn(&[Value]) -> Result<Value> + 'r>> {
    let (start, end) = spec
        .bounds
        .clone()
        .unwrap_or_else(|| ("WIN_START".to_string(), "WIN_END".to_string()));
    if let Some(i) = rel.find(&end) {
        return Ok(Box::new(move |r: &[Value]| Ok(r[i].clone())));
    }
    if let Some(i) = rel.find(&start) {
        return Ok(Box::new(move |r: &[Value]| window::inclusive_end(&r[i], range)));
    }
    Err(Error::NotFinalizable(format!(
        "FINAL window query must output {start} or {end}"
    )))
}

/// Largest value of a column among rows present in `view`, expired ones
/// included (they are still logically part of the table).
pub fn view_max(t: &TableState, col: usize, view: View) -> Option<Value> {
    t.versions
        .iter()
        .filter(|v| v.visible_ignoring_expiry(view))
        .map(|v| &v.values[col])
        .filter(|v| !v.is_null())
        .max()
        .cloned()
}

/// First window subquery reachable from the query, with its base table
/// (None when the windowed relation is not a base table).
pub fn find_window(q: &Query, env: &Env) -> Option<(Option<String>, WindowSpec)> {
    let mut local = Vec::new();
    for c in &q.with {
        local.push((c.name.clone(), c.query.clone()));
    }
    find_in_set(&q.body, env, &local)
        .or_else(|| local.iter().find_map(|(_, cq)| find_window(cq, env)))
}

fn find_in_set(body: &SetExpr, env: &Env, ctes: &[(String, Query)]) -> Option<(Option<String>, WindowSpec)> {
    match body {
        SetExpr::Select(s) => s.from.iter().find_map(|tr| {
            find_in_factor(&tr.factor, env, ctes)
                .or_else(|| tr.joins.iter().find_map(|j| find_in_factor(&j.factor, env, ctes)))
        }),
        SetExpr::Values(_) => None,
        SetExpr::Query(q) | SetExpr::Final(q) => find_window(q, env),
        SetExpr::SetOp { left, right, .. } => {
            find_in_set(left, env, ctes).or_else(|| find_in_set(right, env, ctes))
        }
    }
}

fn find_in_factor(f: &TableFactor, env: &Env, ctes: &[(String, Query)]) -> Option<(Option<String>, WindowSpec)> {
    let is_cte = |name: &str| {
        env.lookup(name).is_some() || ctes.iter().any(|(n, _)| n.eq_ignore_ascii_case(name))
    };
    if let Some(spec) = &f.window {
        let table = match &f.kind {
            FactorKind::Table(name) if !is_cte(name) => Some(name.clone()),
            _ => None,
        };
        return Some((table, (**spec).clone()));
    }
    match &f.kind {
        FactorKind::Table(name) => {
            if let Some((_, q)) = ctes.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)) {
                return find_window(q, env);
            }
            env.lookup(name).and_then(|c| find_window(&c.query, env))
        }
        FactorKind::Derived(q) => find_window(q, env),
        FactorKind::Changes(c) => match &c.source {
            ChangesSource::Query(q) => find_window(q, env),
            ChangesSource::Table(name) => env.lookup(name).and_then(|c| find_window(&c.query, env)),
        },
        FactorKind::Function { .. } => None,
        FactorKind::Nested(list) => list.iter().find_map(|tr| {
            find_in_factor(&tr.factor, env, ctes)
                .or_else(|| tr.joins.iter().find_map(|j| find_in_factor(&j.factor, env, ctes)))
        }),
    }
}
