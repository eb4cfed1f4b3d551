//! Syntactic insert-only proofs and monotonicity of finalization predicates.
//!
//! Both analyses are conservative: UNKNOWN is always a legal answer.

use std::fmt;

use crate::error::{Error, Result};
use crate::sql::{
    BinaryOp, Expr, FactorKind, JoinKind, Query, Select, SelectItem, SetExpr, SetOp, TableFactor,
    TableRef, UnaryOp,
};
use crate::storage::Database;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Proven,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Proven => "PROVEN",
            Verdict::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub depth: usize,
    pub rule: &'static str,
    pub node: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proof {
    pub verdict: Verdict,
    pub trace: Vec<Step>,
    /// The first node no rule could prove.
    pub failing: Option<String>,
}

impl Proof {
    pub fn is_proven(&self) -> bool {
        self.verdict == Verdict::Proven
    }
}

impl fmt::Display for Proof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.verdict)?;
        for s in &self.trace {
            let mark = if s.ok { "ok " } else { "NO " };
            writeln!(f, "{}{mark}{}: {}", "  ".repeat(s.depth + 1), s.rule, s.node)?;
        }
        if let Some(n) = &self.failing {
            writeln!(f, "  first failing node: {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Monotone,
    Unknown,
}

pub fn prove_insert_only(q: &Query, db: &Database) -> Result<Proof> {
    let mut p = Prover { db, ctes: Vec::new(), trace: Vec::new(), failing: None, depth: 0 };
    let ok = p.query(q)?;
    Ok(Proof {
        verdict: if ok { Verdict::Proven } else { Verdict::Unknown },
        trace: p.trace,
        failing: p.failing,
    })
}

struct Prover<'a> {
    db: &'a Database,
    ctes: Vec<(String, bool, Vec<String>)>,
    trace: Vec<Step>,
    failing: Option<String>,
    depth: usize,
}

fn short(s: impl fmt::Display) -> String {
    let s = s.to_string();
    if s.chars().count() > 72 {
        let cut: String = s.chars().take(69).collect();
        format!("{cut}...")
    } else {
        s
    }
}

impl Prover<'_> {
    fn step(&mut self, rule: &'static str, node: impl fmt::Display, ok: bool) -> bool {
        let node = short(node);
        if !ok && self.failing.is_none() {
            self.failing = Some(node.clone());
        }
        self.trace.push(Step { depth: self.depth, rule, node, ok });
        ok
    }

    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        self.depth += 1;
        let r = f(self);
        self.depth -= 1;
        r
    }

    fn query(&mut self, q: &Query) -> Result<bool> {
        let saved = self.ctes.len();
        let mut ok = true;
        for cte in &q.with {
            let proven = self.nested(|p| p.query(&cte.query))?;
            let cols = output_names(&cte.query, self.db, &self.ctes);
            ok &= self.step("with element", &cte.name, proven);
            self.ctes.push((cte.name.to_ascii_lowercase(), proven, cols));
        }
        if q.limit.is_some() {
            // a top-n result can lose rows when better ones arrive
            ok &= self.step("limit", q, false);
        }
        let body = self.nested(|p| p.set_expr(&q.body))?;
        self.ctes.truncate(saved);
        Ok(ok && body)
    }

    fn set_expr(&mut self, body: &SetExpr) -> Result<bool> {
        match body {
            SetExpr::Select(s) => self.select(s),
            SetExpr::Values(rows) => {
                let constant = rows.iter().flatten().all(is_constant);
                Ok(self.step("table value constructor", body, constant))
            }
            SetExpr::Query(q) => self.query(q),
            SetExpr::Final(q) => {
                // FINAL never retracts what it has reported
                Ok(self.step("final", q, true))
            }
            SetExpr::SetOp { op, all, left, right } => {
                let l = self.nested(|p| p.set_expr(left))?;
                let r = self.nested(|p| p.set_expr(right))?;
                let (rule, ok) = match (op, all) {
                    (SetOp::Union, true) => ("union all", l && r),
                    (SetOp::Union, false) => ("union (distinct, not proven)", false),
                    (SetOp::Intersect, _) => ("intersect", l && r),
                    (SetOp::Except, _) => ("except", false),
                };
                Ok(self.step(rule, body, ok))
            }
        }
    }

    fn select(&mut self, s: &Select) -> Result<bool> {
        let mut ok = true;
        if !s.group_by.is_empty() || s.having.is_some() {
            ok &= self.step("no group by or having", s, false);
        } else if s.items.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_aggregate())) {
            ok &= self.step("no aggregates", s, false);
        }
        if s.from.iter().any(has_window) {
            ok &= self.step("no window clause", s, false);
        }
        for item in &s.items {
            if let SelectItem::Expr { expr, .. } = item {
                if !is_row_deterministic(expr) {
                    ok &= self.step("select list is per-row constant", expr, false);
                }
            }
        }
        let mut columns = Vec::new();
        for tr in &s.from {
            ok &= self.nested(|p| p.table_ref(tr, &mut columns))?;
        }
        for pred in [&s.selection, &s.finalize].into_iter().flatten() {
            let m = self.predicate(pred, &columns)?;
            ok &= self.step("monotonic search condition", pred, m);
        }
        if ok {
            self.step("query specification", s, true);
        }
        Ok(ok)
    }

    fn table_ref(&mut self, tr: &TableRef, columns: &mut Vec<String>) -> Result<bool> {
        let mut ok = self.factor(&tr.factor, columns)?;
        for j in &tr.joins {
            let r = self.factor(&j.factor, columns)?;
            let allowed = matches!(j.kind, JoinKind::Inner | JoinKind::Cross | JoinKind::Natural);
            let rule = match j.kind {
                JoinKind::Inner => "inner join",
                JoinKind::Cross => "cross join",
                JoinKind::Natural => "natural join",
                JoinKind::Left => "outer join",
            };
            ok = self.step(rule, &j.factor, ok && r && allowed);
            if let Some(on) = &j.on {
                let m = self.predicate(on, columns)?;
                ok &= self.step("monotonic join condition", on, m);
            }
        }
        Ok(ok)
    }

    fn factor(&mut self, f: &TableFactor, columns: &mut Vec<String>) -> Result<bool> {
        match &f.kind {
            FactorKind::Table(name) => {
                if let Some((_, proven, cols)) =
                    self.ctes.iter().rev().find(|(n, _, _)| n.eq_ignore_ascii_case(name))
                {
                    let (proven, cols) = (*proven, cols.clone());
                    columns.extend(cols);
                    return Ok(self.step("with reference", name, proven));
                }
                let t = self.db.table(name).map_err(|_| Error::UnresolvedName(format!("unknown relation {name}")))?;
                columns.extend(t.column_names());
                Ok(self.step("insert-only table", name, t.insert_only))
            }
            FactorKind::Derived(q) => {
                columns.extend(output_names(q, self.db, &self.ctes));
                let ok = self.nested(|p| p.query(q))?;
                Ok(self.step("derived table", "(subquery)", ok))
            }
            FactorKind::Changes(c) => {
                columns.extend(changes_columns(c, self.db, &self.ctes));
                Ok(self.step("changes", c, true))
            }
            FactorKind::Function { args, .. } => {
                columns.push("COLUMN_VALUE".into());
                let det = args.iter().all(is_row_deterministic);
                Ok(self.step("table function of row values", f, det))
            }
            FactorKind::Nested(list) => {
                let mut ok = true;
                for tr in list {
                    ok &= self.table_ref(tr, columns)?;
                }
                Ok(ok)
            }
        }
    }

    fn predicate(&mut self, e: &Expr, columns: &[String]) -> Result<bool> {
        Ok(monotone(e, self.db, columns, &self.ctes)? == Monotonicity::Monotone)
    }
}

fn has_window(tr: &TableRef) -> bool {
    tr.factor.window.is_some() || tr.joins.iter().any(|j| j.factor.window.is_some())
}

/// Output column names of a query, as far as they can be told statically.
fn output_names(q: &Query, db: &Database, ctes: &[(String, bool, Vec<String>)]) -> Vec<String> {
    fn body(b: &SetExpr, db: &Database, ctes: &[(String, bool, Vec<String>)]) -> Vec<String> {
        match b {
            SetExpr::Select(s) => {
                let mut from = Vec::new();
                for tr in &s.from {
                    for f in std::iter::once(&tr.factor).chain(tr.joins.iter().map(|j| &j.factor)) {
                        from.extend(factor_names(f, db, ctes));
                    }
                }
                let mut out = Vec::new();
                for item in &s.items {
                    match item {
                        SelectItem::Wildcard | SelectItem::QualifiedWildcard(_) => out.extend(from.clone()),
                        SelectItem::Expr { expr, alias } => {
                            out.push(alias.clone().unwrap_or_else(|| crate::eval::output_name(expr)))
                        }
                    }
                }
                out
            }
            SetExpr::Values(rows) => (1..=rows.first().map_or(0, |r| r.len())).map(|i| format!("column{i}")).collect(),
            SetExpr::Query(q) | SetExpr::Final(q) => output_names(q, db, ctes),
            SetExpr::SetOp { left, .. } => body(left, db, ctes),
        }
    }
    body(&q.body, db, ctes)
}

fn factor_names(f: &TableFactor, db: &Database, ctes: &[(String, bool, Vec<String>)]) -> Vec<String> {
    let mut out = match &f.kind {
        FactorKind::Table(name) => match ctes.iter().rev().find(|(n, _, _)| n.eq_ignore_ascii_case(name)) {
            Some((_, _, cols)) => cols.clone(),
            None => db.table(name).map(|t| t.column_names()).unwrap_or_default(),
        },
        FactorKind::Derived(q) => output_names(q, db, ctes),
        FactorKind::Changes(c) => changes_columns(c, db, ctes),
        FactorKind::Function { .. } => vec!["COLUMN_VALUE".into()],
        FactorKind::Nested(list) => list
            .iter()
            .flat_map(|tr| {
                std::iter::once(&tr.factor)
                    .chain(tr.joins.iter().map(|j| &j.factor))
                    .flat_map(|f| factor_names(f, db, ctes))
                    .collect::<Vec<_>>()
            })
            .collect(),
    };
    if let Some(w) = &f.window {
        let (a, b) = w.bounds.clone().unwrap_or_else(|| ("WIN_START".into(), "WIN_END".into()));
        out.push(a);
        out.push(b);
    }
    out
}

fn changes_columns(c: &crate::sql::Changes, db: &Database, ctes: &[(String, bool, Vec<String>)]) -> Vec<String> {
    let mut out = match &c.source {
        crate::sql::ChangesSource::Table(name) => match ctes.iter().rev().find(|(n, _, _)| n.eq_ignore_ascii_case(name)) {
            Some((_, _, cols)) => cols.clone(),
            None => db.table(name).map(|t| t.column_names()).unwrap_or_default(),
        },
        crate::sql::ChangesSource::Query(q) => output_names(q, db, ctes),
    };
    out.extend(["Action", "RowID", "Time", "CommitSeq"].map(String::from));
    out
}

fn is_time_dependent(e: &Expr) -> bool {
    e.any(&|n| match n {
        Expr::CurrentTimestamp | Expr::LastScheduleTime | Expr::Subquery(_) | Expr::Exists { .. } => true,
        Expr::Function { name, .. } => is_clock_function(name),
        _ => false,
    })
}

fn is_clock_function(name: &str) -> bool {
    matches!(name.to_ascii_lowercase().as_str(), "now" | "current_timestamp" | "systimestamp")
}

/// Deterministic in the row alone: no clock, no subqueries.
fn is_row_deterministic(e: &Expr) -> bool {
    !is_time_dependent(e) && !e.contains_aggregate()
}

fn is_constant(e: &Expr) -> bool {
    is_row_deterministic(e) && !e.any(&|n| matches!(n, Expr::Column { .. }))
}

/// Non-decreasing function of the clock: `now()`, `now() +/- constant`,
/// `dateadd(n, unit, now())`.
fn grows_with_now(e: &Expr) -> bool {
    match e {
        Expr::CurrentTimestamp => true,
        Expr::Function { name, args, .. } if is_clock_function(name) && args.is_empty() => true,
        Expr::Function { name, args, .. } if name.eq_ignore_ascii_case("dateadd") && args.len() == 3 => {
            is_constant(&args[0]) && grows_with_now(&args[2])
        }
        Expr::Binary { op: BinaryOp::Plus, left, right } => {
            (grows_with_now(left) && is_constant(right)) || (is_constant(left) && grows_with_now(right))
        }
        Expr::Binary { op: BinaryOp::Minus, left, right } => grows_with_now(left) && is_constant(right),
        _ => false,
    }
}

/// `(SELECT MAX(c) FROM t)` over a column that can only grow.
fn growing_max(e: &Expr, db: &Database, ctes: &[(String, bool, Vec<String>)]) -> bool {
    let Expr::Subquery(q) = e else { return false };
    let SetExpr::Select(s) = &q.body else { return false };
    if !q.is_plain() || s.selection.is_some() || !s.group_by.is_empty() || s.from.len() != 1 {
        return false;
    }
    let [SelectItem::Expr { expr: Expr::Function { name, args, distinct: false, star: false }, .. }] =
        s.items.as_slice()
    else {
        return false;
    };
    let [Expr::Column { name: col, .. }] = args.as_slice() else { return false };
    if !name.eq_ignore_ascii_case("max") {
        return false;
    }
    let tr = &s.from[0];
    if !tr.joins.is_empty() || tr.factor.window.is_some() {
        return false;
    }
    match &tr.factor.kind {
        FactorKind::Table(t) if !ctes.iter().any(|(n, _, _)| n.eq_ignore_ascii_case(t)) => {
            let Ok(t) = db.table(t) else { return false };
            let Some(i) = t.column_index(col) else { return false };
            t.insert_only || t.increasing.iter().any(|c| c.column == i)
        }
        FactorKind::Changes(_) => true,
        _ => false,
    }
}

/// Whether a predicate over one row can only go from false to true as time
/// passes and data arrives.
pub fn check_monotone_predicate(p: &Expr, db: &Database, columns: &[String]) -> Result<Monotonicity> {
    monotone(p, db, columns, &[])
}

fn monotone(
    p: &Expr,
    db: &Database,
    columns: &[String],
    ctes: &[(String, bool, Vec<String>)],
) -> Result<Monotonicity> {
    check_columns(p, columns)?;
    Ok(if monotone_rec(p, db, ctes) { Monotonicity::Monotone } else { Monotonicity::Unknown })
}

fn check_columns(p: &Expr, columns: &[String]) -> Result<()> {
    fn first(e: &Expr, columns: &[String]) -> Option<String> {
        if let Expr::Column { name, .. } = e {
            if !columns.iter().any(|c| c.eq_ignore_ascii_case(name)) {
                return Some(name.clone());
            }
        }
        e.children().into_iter().find_map(|c| first(c, columns))
    }
    match first(p, columns) {
        Some(n) => Err(Error::UnresolvedName(format!("unknown column {n}"))),
        None => Ok(()),
    }
}

fn monotone_rec(p: &Expr, db: &Database, ctes: &[(String, bool, Vec<String>)]) -> bool {
    if !is_time_dependent(p) {
        return !p.contains_aggregate();
    }
    match p {
        Expr::Binary { op: BinaryOp::And | BinaryOp::Or, left, right } => {
            monotone_rec(left, db, ctes) && monotone_rec(right, db, ctes)
        }
        Expr::Binary { op, left, right } => {
            let grows = |e: &Expr| grows_with_now(e) || growing_max(e, db, ctes);
            match op {
                BinaryOp::Lt | BinaryOp::LtEq => is_row_deterministic(left) && grows(right),
                BinaryOp::Gt | BinaryOp::GtEq => grows(left) && is_row_deterministic(right),
                _ => false,
            }
        }
        Expr::Unary { op: UnaryOp::Not, .. } => false,
        Expr::Exists { negated: false, query } => matches!(&query.body, SetExpr::Select(_)) && {
            // EXISTS over data that only grows stays true once true
            let mut p = Prover { db, ctes: ctes.to_vec(), trace: vec![], failing: None, depth: 0 };
            p.query(query).unwrap_or(false)
        },
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::{parse_expr, parse_query, ColumnDef};
    use crate::storage::TableState;

    fn db() -> Database {
        let mut db = Database::default();
        let col = |n: &str, t: &str| ColumnDef { name: n.into(), type_name: t.into(), type_args: vec![] };
        for (name, io) in [("F", true), ("D", true), ("myStream", false), ("watermarks", true)] {
            let mut t = TableState::new(name, &[col("k", "INT"), col("price", "INT"), col("wm", "TIMESTAMP")]).unwrap();
            t.insert_only = io;
            db.tables.insert(Database::key(name), t);
        }
        db
    }

    fn prove(sql: &str) -> Proof {
        prove_insert_only(&parse_query(sql).unwrap(), &db()).unwrap()
    }

    #[test]
    fn example_verdicts() {
        assert!(prove("SELECT * FROM F, D WHERE F.k = D.k").is_proven());
        assert!(!prove("SELECT AVG(price) FROM myStream").is_proven());
        assert!(prove("SELECT * FROM CHANGES(myStream, 'DELTA')").is_proven());
        assert!(!prove("SELECT * FROM myStream").is_proven());
    }

    #[test]
    fn composition_rules() {
        assert!(prove("SELECT k FROM F UNION ALL SELECT k FROM D").is_proven());
        assert!(!prove("SELECT k FROM F UNION SELECT k FROM D").is_proven());
        assert!(!prove("SELECT k FROM F EXCEPT SELECT k FROM D").is_proven());
        assert!(!prove("SELECT * FROM F LEFT JOIN D ON F.k = D.k").is_proven());
        assert!(prove("WITH x AS (SELECT * FROM F) SELECT * FROM x WHERE price > 3").is_proven());
        assert!(!prove("SELECT * FROM F WHERE wm > now()").is_proven());
        assert!(prove("SELECT * FROM F WHERE wm < now() - INTERVAL '1' HOUR").is_proven());
        assert!(prove("VALUES (1, 2)").is_proven());
        assert!(!prove("SELECT * FROM F ORDER BY k LIMIT 3").is_proven());
    }

    #[test]
    fn failing_node_is_reported() {
        let p = prove("SELECT * FROM F, myStream");
        assert_eq!(p.failing.as_deref(), Some("myStream"));
        assert!(p.to_string().starts_with("UNKNOWN"));
    }

    #[test]
    fn monotone_predicates() {
        let db = db();
        let cols = vec!["time".to_string()];
        let m = |s: &str| check_monotone_predicate(&parse_expr(s).unwrap(), &db, &cols).unwrap();
        assert_eq!(m("time < '2023-11-01'"), Monotonicity::Monotone);
        assert_eq!(m("time <= (SELECT max(wm) FROM watermarks)"), Monotonicity::Monotone);
        assert_eq!(m("time > now()"), Monotonicity::Unknown);
        assert_eq!(m("time < now() - INTERVAL '1' DAY AND time > '2020-01-01'"), Monotonicity::Monotone);
        assert_eq!(m("NOT (time < now())"), Monotonicity::Unknown);
        assert_eq!(m("time <= (SELECT max(price) FROM myStream)"), Monotonicity::Unknown);
        assert!(check_monotone_predicate(&parse_expr("zzz < 1").unwrap(), &db, &cols).is_err());
    }
}
