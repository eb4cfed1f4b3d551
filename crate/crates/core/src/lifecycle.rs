//! Expiration passes and the expired-read guard.
//!
//! Rows go not-expired -> expired -> purged. Expired rows stay in storage
//! (invisible) until a purge pass drops them; the purge keeps per-column
//! bounds of what it removed so ERROR-mode reads can still detect queries
//! that reach into purged regions.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::eval::{table_columns, truth, ColumnInfo, Env, Evaluator, Scope};
use crate::sql::{BinaryOp, Expr, UnaryOp};
use crate::storage::{Database, PurgeHorizon, TableState, View};
use crate::value::Value;

/// What a query does when its result depends on expired rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    Ignore,
    Error,
}

impl ReadMode {
    pub fn parse(s: &str) -> Option<ReadMode> {
        match s.to_ascii_uppercase().as_str() {
            "IGNORE" => Some(ReadMode::Ignore),
            "ERROR" => Some(ReadMode::Error),
            _ => None,
        }
    }
}

fn split_and<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e {
        Expr::Binary { op: BinaryOp::And, left, right } => {
            split_and(left, out);
            split_and(right, out);
        }
        other => out.push(other),
    }
}

fn column_refs(e: &Expr) -> Vec<(Option<&str>, &str)> {
    let mut out = Vec::new();
    fn walk<'e>(e: &'e Expr, out: &mut Vec<(Option<&'e str>, &'e str)>) {
        if let Expr::Column { qualifier, name } = e {
            out.push((qualifier.as_deref(), name.as_str()));
        }
        for c in e.children() {
            walk(c, out);
        }
    }
    walk(e, &mut out);
    out
}

/// Conjuncts of the WHERE clause that only read the scanned table.
fn local_conjuncts<'e>(pushdown: Option<&'e Expr>, columns: &[ColumnInfo]) -> Vec<&'e Expr> {
    let mut all = Vec::new();
    if let Some(p) = pushdown {
        split_and(p, &mut all);
    }
    let here = Scope { columns, row: &[], parent: None, group: None };
    all.into_iter()
        .filter(|c| {
            let refs = column_refs(c);
            !refs.is_empty() && refs.iter().all(|(q, n)| here.resolves_locally(*q, n))
        })
        .collect()
}

/// Raises `ExpiredDataError` when an expired row, or a purged region,
/// could satisfy the query's filter on this table.
pub fn expired_read_guard(
    ev: &Evaluator,
    t: &TableState,
    columns: &[ColumnInfo],
    pushdown: Option<&Expr>,
    outer: Option<&Scope>,
    env: &Env,
) -> Result<()> {
    let conjuncts = local_conjuncts(pushdown, columns);
    let policy = || t.expire.as_ref().map_or_else(|| "dropped policy".to_string(), |p| p.text.clone());
    let plain = ev.tweak(|e| {
        e.expired_override = Some(ReadMode::Ignore);
        e.final_mode = false;
    });
    for v in t.versions.iter().filter(|v| v.expired && v.visible_ignoring_expiry(ev.view)) {
        let scope = Scope { columns, row: &v.values, parent: outer, group: None };
        let mut hit = true;
        for c in &conjuncts {
            // evaluation failures count as a possible match
            if let Ok(val) = plain.eval_expr(c, &scope, env) {
                if truth(&val).ok().flatten() != Some(true) {
                    hit = false;
                    break;
                }
            }
        }
        if hit {
            return Err(Error::ExpiredDataError { table: t.name.clone(), policy: policy() });
        }
    }
    for h in &t.horizons {
        let bounds = Bounds { columns, h };
        let mut verdict = Some(true);
        for c in &conjuncts {
            verdict = crate::eval::and3(verdict, bounds.tri(c, &plain, outer, env));
        }
        if verdict != Some(false) {
            return Err(Error::ExpiredDataError { table: t.name.clone(), policy: h.policy.clone() });
        }
    }
    Ok(())
}

/// Three-valued evaluation of a predicate over the value ranges of a purge
/// horizon: `Some(false)` only when no purged row could have satisfied it.
struct Bounds<'b> {
    columns: &'b [ColumnInfo],
    h: &'b PurgeHorizon,
}

impl Bounds<'_> {
    fn column(&self, e: &Expr) -> Option<Option<&(Value, Value)>> {
        let Expr::Column { qualifier, name } = e else { return None };
        let here = Scope { columns: self.columns, row: &[], parent: None, group: None };
        if !here.resolves_locally(qualifier.as_deref(), name) {
            return None;
        }
        let i = self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))?;
        Some(self.h.bounds.get(i).and_then(|b| b.as_ref()))
    }

    fn constant(&self, e: &Expr, ev: &Evaluator, outer: Option<&Scope>, env: &Env) -> Option<Value> {
        let here = Scope { columns: self.columns, row: &[], parent: None, group: None };
        if column_refs(e).iter().any(|(q, n)| here.resolves_locally(*q, n)) {
            return None;
        }
        let scope = Scope { columns: &[], row: &[], parent: outer, group: None };
        ev.eval_expr(e, &scope, env).ok()
    }

    fn tri(&self, e: &Expr, ev: &Evaluator, outer: Option<&Scope>, env: &Env) -> Option<bool> {
        use crate::eval::{and3, or3};
        match e {
            Expr::Binary { op: BinaryOp::And, left, right } => {
                and3(self.tri(left, ev, outer, env), self.tri(right, ev, outer, env))
            }
            Expr::Binary { op: BinaryOp::Or, left, right } => {
                or3(self.tri(left, ev, outer, env), self.tri(right, ev, outer, env))
            }
            Expr::Unary { op: UnaryOp::Not, expr } => self.tri(expr, ev, outer, env).map(|b| !b),
            Expr::Binary { op, left, right } if op.is_comparison() => {
                if let (Some(b), Some(k)) = (self.column(left), self.constant(right, ev, outer, env)) {
                    return range_cmp(b, *op, &k);
                }
                if let (Some(k), Some(b)) = (self.constant(left, ev, outer, env), self.column(right)) {
                    return range_cmp(b, mirror(*op), &k);
                }
                None
            }
            Expr::Between { expr, low, high, negated: false } => {
                let b = self.column(expr)?;
                let lo = self.constant(low, ev, outer, env)?;
                let hi = self.constant(high, ev, outer, env)?;
                and3(range_cmp(b, BinaryOp::GtEq, &lo), range_cmp(b, BinaryOp::LtEq, &hi))
            }
            Expr::InList { expr, list, negated: false } => {
                let b = self.column(expr)?;
                let mut acc = Some(false);
                for item in list {
                    acc = or3(acc, range_cmp(b, BinaryOp::Eq, &self.constant(item, ev, outer, env)?));
                }
                acc
            }
            _ => None,
        }
    }
}

fn mirror(op: BinaryOp) -> BinaryOp {
    match op {
        BinaryOp::Lt => BinaryOp::Gt,
        BinaryOp::LtEq => BinaryOp::GtEq,
        BinaryOp::Gt => BinaryOp::Lt,
        BinaryOp::GtEq => BinaryOp::LtEq,
        other => other,
    }
}

/// Truth of `col op k` for every value in `[lo, hi]`: known true, known
/// false, or mixed.
fn range_cmp(bounds: Option<&(Value, Value)>, op: BinaryOp, k: &Value) -> Option<bool> {
    let Some((lo, hi)) = bounds else { return Some(false) };
    let c = |a: &Value| a.sql_cmp(k).ok().flatten();
    let (l, h) = (c(lo)?, c(hi)?);
    use Ordering::*;
    match op {
        BinaryOp::Lt if h == Less => Some(true),
        BinaryOp::Lt if l != Less => Some(false),
        BinaryOp::LtEq if h != Greater => Some(true),
        BinaryOp::LtEq if l == Greater => Some(false),
        BinaryOp::Gt if l == Greater => Some(true),
        BinaryOp::Gt if h != Greater => Some(false),
        BinaryOp::GtEq if l != Less => Some(true),
        BinaryOp::GtEq if h == Less => Some(false),
        BinaryOp::Eq if l == Greater || h == Less => Some(false),
        BinaryOp::Eq if l == Equal && h == Equal => Some(true),
        BinaryOp::NotEq if l == Greater || h == Less => Some(true),
        BinaryOp::NotEq if l == Equal && h == Equal => Some(false),
        _ => None,
    }
}

/// Marks every live committed row satisfying its table's policy as expired.
pub fn expire_pass(db: &mut Database) -> Result<usize> {
    let mut marks: Vec<(String, Vec<usize>)> = Vec::new();
    {
        let mut ev = Evaluator::new(db, View::Committed(db.clock.seq()));
        ev.expired_override = Some(ReadMode::Ignore);
        for (key, t) in &db.tables {
            let Some(p) = &t.expire else { continue };
            let columns = table_columns(t, &t.name);
            let mut idx = Vec::new();
            for (i, v) in t.versions.iter().enumerate() {
                if v.expired || v.insert_seq.is_none() || v.delete_seq.is_some() {
                    continue;
                }
                let scope = Scope::new(&columns, &v.values, None);
                if truth(&ev.eval_expr(&p.expr, &scope, &Env::default())?)? == Some(true) {
                    idx.push(i);
                }
            }
            marks.push((key.clone(), idx));
        }
    }
    let mut n = 0;
    for (key, idx) in marks {
        let t = db.tables.get_mut(&key).expect("table listed above");
        for i in idx {
            t.versions[i].expired = true;
            n += 1;
        }
    }
    Ok(n)
}

/// Physically drops expired versions, recording a purge horizon per table.
pub fn purge_pass(db: &mut Database) -> usize {
    let now = db.now();
    let mut n = 0;
    for t in db.tables.values_mut() {
        let purged: Vec<&Vec<Value>> = t.versions.iter().filter(|v| v.expired).map(|v| &v.values).collect();
        if purged.is_empty() {
            continue;
        }
        let bounds = (0..t.columns.len())
            .map(|c| {
                let vals = purged.iter().map(|r| &r[c]).filter(|v| !v.is_null());
                let lo = vals.clone().min()?.clone();
                let hi = vals.max()?.clone();
                Some((lo, hi))
            })
            .collect();
        let horizon = PurgeHorizon {
            policy: t.expire.as_ref().map_or_else(|| "dropped policy".into(), |p| p.text.clone()),
            at: now,
            bounds,
            count: purged.len(),
        };
        n += horizon.count;
        t.horizons.push(horizon);
        t.versions.retain(|v| !v.expired);
    }
    n
}

/// Whether `new` accepts everything `old` does and more: `new` is a
/// disjunction with `old` as one of its branches.
pub fn is_broader(old: &Expr, new: &Expr) -> bool {
    fn disjuncts<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
        match e {
            Expr::Binary { op: BinaryOp::Or, left, right } => {
                disjuncts(left, out);
                disjuncts(right, out);
            }
            other => out.push(other),
        }
    }
    if old == new {
        return false;
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    disjuncts(old, &mut a);
    disjuncts(new, &mut b);
    a.iter().all(|x| b.contains(x)) && b.len() > a.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse_expr;

    #[test]
    fn interval_truth() {
        let b = (Value::Int(10), Value::Int(20));
        assert_eq!(range_cmp(Some(&b), BinaryOp::Lt, &Value::Int(25)), Some(true));
        assert_eq!(range_cmp(Some(&b), BinaryOp::Lt, &Value::Int(10)), Some(false));
        assert_eq!(range_cmp(Some(&b), BinaryOp::Lt, &Value::Int(15)), None);
        assert_eq!(range_cmp(Some(&b), BinaryOp::Eq, &Value::Int(30)), Some(false));
        assert_eq!(range_cmp(None, BinaryOp::Eq, &Value::Int(30)), Some(false));
    }

    #[test]
    fn broader_policies() {
        let old = parse_expr("level = 'DEBUG' AND ts < 1").unwrap();
        let new = parse_expr("(level = 'DEBUG' AND ts < 1) OR (level = 'WARN' AND ts < 7)").unwrap();
        assert!(is_broader(&old, &new));
        assert!(!is_broader(&new, &old));
        assert!(!is_broader(&old, &old));
    }
}
