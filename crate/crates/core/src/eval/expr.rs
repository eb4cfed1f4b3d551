//! Scalar expressions, aggregates and built-in functions.

use std::cmp::Ordering;
use std::str::FromStr;

use rust_decimal::prelude::*;

use super::{truth, window, ColumnInfo, Env, Evaluator, Relation, Scope};
use crate::error::{Error, Result};
use crate::sql::{is_aggregate, BinaryOp, Expr, Literal, Query, UnaryOp};
use crate::value::{parse_clock_label, parse_timestamp, Interval, TimeUnit, Timestamp, Value};

impl<'a> Evaluator<'a> {
    pub fn eval_expr(&self, e: &Expr, scope: &Scope, env: &Env) -> Result<Value> {
        match e {
            Expr::Literal(l) => self.literal(l),
            Expr::Column { qualifier, name } => match scope.lookup(qualifier.as_deref(), name) {
                Some(v) => Ok(v.clone()),
                None => Err(Error::UnresolvedName(match qualifier {
                    Some(q) => format!("unknown column {q}.{name}"),
                    None => format!("unknown column {name}"),
                })),
            },
            Expr::Unary { op: UnaryOp::Not, expr } => {
                Ok(match truth(&self.eval_expr(expr, scope, env)?)? {
                    None => Value::Null,
                    Some(b) => Value::Bool(!b),
                })
            }
            Expr::Unary { op: UnaryOp::Neg, expr } => self.eval_expr(expr, scope, env)?.neg(),
            Expr::Binary { op, left, right } => self.binary(*op, left, right, scope, env),
            Expr::IsNull { expr, negated } => {
                let v = self.eval_expr(expr, scope, env)?;
                Ok(Value::Bool(v.is_null() != *negated))
            }
            Expr::Between { expr, low, high, negated } => {
                let v = self.eval_expr(expr, scope, env)?;
                let lo = compare(&v, &self.eval_expr(low, scope, env)?, BinaryOp::GtEq)?;
                let hi = compare(&v, &self.eval_expr(high, scope, env)?, BinaryOp::LtEq)?;
                Ok(negate_if(and3(lo, hi), *negated))
            }
            Expr::InList { expr, list, negated } => {
                let v = self.eval_expr(expr, scope, env)?;
                let mut acc = Some(false);
                for item in list {
                    let eq = compare(&v, &self.eval_expr(item, scope, env)?, BinaryOp::Eq)?;
                    acc = or3(acc, eq);
                    if acc == Some(true) {
                        break;
                    }
                }
                Ok(negate_if(acc, *negated))
            }
            Expr::Function { name, args, distinct, star } => {
                if is_aggregate(name) {
                    self.aggregate(name, args, *distinct, *star, scope, env)
                } else {
                    self.call(name, args, scope, env)
                }
            }
            Expr::FloorTo { expr, unit } => match self.eval_expr(expr, scope, env)? {
                Value::Null => Ok(Value::Null),
                v => Ok(Value::Timestamp(self.as_ts(&v)?.truncate(*unit))),
            },
            Expr::Exists { query, negated } => {
                let rel = self.subquery(query, scope, env)?;
                Ok(Value::Bool(rel.rows.is_empty() == *negated))
            }
            Expr::Subquery(query) => {
                let rel = self.subquery(query, scope, env)?;
                match rel.rows.len() {
                    0 => Ok(Value::Null),
                    1 => Ok(rel.rows[0].first().cloned().unwrap_or(Value::Null)),
                    n => Err(Error::TypeError(format!("scalar subquery returned {n} rows"))),
                }
            }
            Expr::CurrentTimestamp => Ok(Value::Timestamp(self.now)),
            Expr::LastScheduleTime => match self.resume {
                Some(seq) => Ok(Value::Timestamp(self.db.clock.time_of(seq).unwrap_or(self.db.epoch))),
                None => Err(Error::UnresolvedName(
                    "LAST_SCHEDULE_TIME is only defined in a task or cursor".into(),
                )),
            },
        }
    }

    fn subquery(&self, q: &Query, scope: &Scope, env: &Env) -> Result<Relation> {
        let e = self.tweak(|e| {
            e.final_mode = false;
            e.bind_changes = false;
        });
        e.eval_query(q, env, Some(scope))
    }

    fn literal(&self, l: &Literal) -> Result<Value> {
        Ok(match l {
            Literal::Null => Value::Null,
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Number(s) => match s.parse::<i64>() {
                Ok(i) => Value::Int(i),
                Err(_) => Value::Decimal(
                    Decimal::from_str(s)
                        .or_else(|_| Decimal::from_scientific(s))
                        .map_err(|_| Error::TypeError(format!("bad number {s}")))?,
                ),
            },
            Literal::Str(s) => Value::Text(s.clone()),
            Literal::Clock(s) => Value::Timestamp(
                parse_clock_label(s, Some(self.db.base_date()))
                    .ok_or_else(|| Error::TypeError(format!("bad clock label {s}")))?,
            ),
            Literal::Interval { n, unit } => Value::Interval(Interval::of(*n, *unit)),
            Literal::Timestamp(s) | Literal::Date(s) => Value::Timestamp(
                parse_timestamp(s, Some(self.db.base_date()))
                    .ok_or_else(|| Error::TypeError(format!("cannot interpret '{s}' as a timestamp")))?,
            ),
        })
    }

    fn binary(&self, op: BinaryOp, left: &Expr, right: &Expr, scope: &Scope, env: &Env) -> Result<Value> {
        match op {
            BinaryOp::And => {
                let l = truth(&self.eval_expr(left, scope, env)?)?;
                if l == Some(false) {
                    return Ok(Value::Bool(false));
                }
                let r = truth(&self.eval_expr(right, scope, env)?)?;
                Ok(bool3(and3(l, r)))
            }
            BinaryOp::Or => {
                let l = truth(&self.eval_expr(left, scope, env)?)?;
                if l == Some(true) {
                    return Ok(Value::Bool(true));
                }
                let r = truth(&self.eval_expr(right, scope, env)?)?;
                Ok(bool3(or3(l, r)))
            }
            _ => {
                let l = self.eval_expr(left, scope, env)?;
                let r = self.eval_expr(right, scope, env)?;
                binary_values(op, &l, &r)
            }
        }
    }

    fn as_ts(&self, v: &Value) -> Result<Timestamp> {
        v.to_timestamp(Some(self.db.base_date()))
            .ok_or_else(|| Error::TypeError(format!("expected a timestamp, got {} {v}", v.kind())))
    }

    /// Reads a unit argument: a string literal, or a bare word such as
    /// `minute` that does not name a column.
    fn unit_arg(&self, e: &Expr, scope: &Scope, env: &Env) -> Result<TimeUnit> {
        if let Expr::Column { qualifier: None, name } = e {
            if scope.lookup(None, name).is_none() {
                if let Some(u) = TimeUnit::parse(name) {
                    return Ok(u);
                }
            }
        }
        let v = self.eval_expr(e, scope, env)?;
        v.as_str()
            .and_then(TimeUnit::parse)
            .ok_or_else(|| Error::TypeError(format!("unknown time unit {v}")))
    }

    fn aggregate(
        &self,
        name: &str,
        args: &[Expr],
        distinct: bool,
        star: bool,
        scope: &Scope,
        env: &Env,
    ) -> Result<Value> {
        let Some(group) = scope.group else {
            return Err(Error::TypeError(format!("aggregate {name} is not allowed here")));
        };
        let lname = name.to_ascii_lowercase();
        if star {
            return Ok(Value::Int(group.len() as i64));
        }
        let [arg] = args else {
            return Err(Error::TypeError(format!("{name} takes one argument")));
        };
        let mut values = Vec::with_capacity(group.len());
        for row in group {
            let s = Scope { columns: scope.columns, row, parent: scope.parent, group: None };
            let v = self.eval_expr(arg, &s, env)?;
            if !v.is_null() {
                values.push(v);
            }
        }
        if distinct {
            values.sort();
            values.dedup();
        }
        Ok(match lname.as_str() {
            "count" => Value::Int(values.len() as i64),
            "sum" => sum(&values)?,
            "avg" => {
                if values.is_empty() {
                    Value::Null
                } else {
                    sum(&values)?.div(&Value::Int(values.len() as i64))?
                }
            }
            "min" => values.into_iter().min().unwrap_or(Value::Null),
            "max" => values.into_iter().max().unwrap_or(Value::Null),
            _ => unreachable!("not an aggregate: {name}"),
        })
    }

    fn call(&self, name: &str, args: &[Expr], scope: &Scope, env: &Env) -> Result<Value> {
        let lname = name.to_ascii_lowercase();
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::TypeError(format!("{name} takes {n} arguments, got {}", args.len())))
            }
        };
        let arg = |i: usize| self.eval_expr(&args[i], scope, env);
        match lname.as_str() {
            "now" | "current_timestamp" | "systimestamp" => {
                arity(0)?;
                Ok(Value::Timestamp(self.now))
            }
            "dateadd" => {
                arity(3)?;
                let n = arg(0)?;
                let unit = self.unit_arg(&args[1], scope, env)?;
                let t = arg(2)?;
                if n.is_null() || t.is_null() {
                    return Ok(Value::Null);
                }
                let n = n.as_i64().ok_or_else(|| Error::TypeError(format!("dateadd count must be integral, got {n}")))?;
                Ok(Value::Timestamp(self.as_ts(&t)?.plus(Interval::of(n, unit))))
            }
            "date_trunc" => {
                arity(2)?;
                let unit = self.unit_arg(&args[0], scope, env)?;
                match arg(1)? {
                    Value::Null => Ok(Value::Null),
                    v => Ok(Value::Timestamp(self.as_ts(&v)?.truncate(unit))),
                }
            }
            "floor" | "ceil" | "ceiling" | "abs" => {
                arity(1)?;
                let v = arg(0)?;
                let Some(d) = v.as_decimal() else {
                    return match v {
                        Value::Null => Ok(Value::Null),
                        v => Err(Error::TypeError(format!("{name} expects a number, got {v}"))),
                    };
                };
                let r = match lname.as_str() {
                    "floor" => d.floor(),
                    "abs" => d.abs(),
                    _ => d.ceil(),
                };
                Ok(normalize(r))
            }
            "round" => {
                let v = arg(0)?;
                let places = if args.len() > 1 { arg(1)?.as_i64().unwrap_or(0) } else { 0 };
                match v.as_decimal() {
                    Some(d) => Ok(normalize(d.round_dp(places.max(0) as u32))),
                    None => Ok(Value::Null),
                }
            }
            "coalesce" => {
                for i in 0..args.len() {
                    let v = arg(i)?;
                    if !v.is_null() {
                        return Ok(v);
                    }
                }
                Ok(Value::Null)
            }
            "greatest" | "least" => {
                let mut best: Option<Value> = None;
                for i in 0..args.len() {
                    let v = arg(i)?;
                    if v.is_null() {
                        return Ok(Value::Null);
                    }
                    best = Some(match best {
                        None => v,
                        Some(b) => {
                            let o = v.sql_cmp(&b)?.unwrap_or(Ordering::Equal);
                            let take = if lname == "greatest" { o == Ordering::Greater } else { o == Ordering::Less };
                            if take { v } else { b }
                        }
                    });
                }
                Ok(best.unwrap_or(Value::Null))
            }
            "upper" | "lower" | "length" => {
                arity(1)?;
                match arg(0)? {
                    Value::Null => Ok(Value::Null),
                    Value::Text(s) => Ok(match lname.as_str() {
                        "upper" => Value::Text(s.to_uppercase()),
                        "lower" => Value::Text(s.to_lowercase()),
                        _ => Value::Int(s.chars().count() as i64),
                    }),
                    v => Err(Error::TypeError(format!("{name} expects text, got {v}"))),
                }
            }
            "start_time" => {
                arity(2)?;
                let (gid, advance) = (arg(0)?, arg(1)?);
                if gid.is_null() {
                    return Ok(Value::Null);
                }
                let origin = Value::Timestamp(self.db.epoch);
                origin.add(&advance.mul(&gid)?)
            }
            "end_time" => {
                arity(3)?;
                let (gid, advance, range) = (arg(0)?, arg(1)?, arg(2)?);
                if gid.is_null() {
                    return Ok(Value::Null);
                }
                let origin = Value::Timestamp(self.db.epoch);
                let start = origin.add(&advance.mul(&gid)?)?;
                start.add(&range)?.sub(&window::granule_of(&start))
            }
            _ => Err(Error::UnresolvedName(format!("unknown function {name}"))),
        }
    }

    /// Table functions usable in `TABLE(...)` factors.
    pub fn table_function(&self, name: &str, args: &[Expr], scope: &Scope, env: &Env) -> Result<Relation> {
        match name.to_ascii_lowercase().as_str() {
            "range_identifiers" => {
                if args.len() != 3 {
                    return Err(Error::TypeError("range_identifiers takes 3 arguments".into()));
                }
                let v = self.eval_expr(&args[0], scope, env)?;
                let range = self.eval_expr(&args[1], scope, env)?;
                let advance = self.eval_expr(&args[2], scope, env)?;
                let mut rel = Relation::new(vec![ColumnInfo::new("COLUMN_VALUE")]);
                if !v.is_null() {
                    let origin = window::default_start(&v, self.db.epoch);
                    for i in window::range_indices(&v, &origin, &range, &advance, false)? {
                        rel.rows.push(vec![Value::Int(i)]);
                    }
                }
                Ok(rel)
            }
            other => Err(Error::UnresolvedName(format!("unknown table function {other}"))),
        }
    }
}

fn normalize(d: Decimal) -> Value {
    Value::Int(0).add(&Value::Decimal(d)).unwrap_or(Value::Decimal(d))
}

fn sum(values: &[Value]) -> Result<Value> {
    let mut it = values.iter();
    let Some(first) = it.next() else { return Ok(Value::Null) };
    let mut acc = first.clone();
    for v in it {
        acc = acc.add(v)?;
    }
    Ok(acc)
}

pub fn binary_values(op: BinaryOp, l: &Value, r: &Value) -> Result<Value> {
    match op {
        BinaryOp::Plus => l.add(r),
        BinaryOp::Minus => l.sub(r),
        BinaryOp::Mul => l.mul(r),
        BinaryOp::Div => l.div(r),
        BinaryOp::Mod => l.rem(r),
        BinaryOp::Concat => {
            if l.is_null() || r.is_null() {
                Ok(Value::Null)
            } else {
                Ok(Value::Text(format!("{l}{r}")))
            }
        }
        BinaryOp::And | BinaryOp::Or => {
            let (a, b) = (truth(l)?, truth(r)?);
            Ok(bool3(if op == BinaryOp::And { and3(a, b) } else { or3(a, b) }))
        }
        cmp => Ok(bool3(compare(l, r, cmp)?)),
    }
}

pub fn compare(l: &Value, r: &Value, op: BinaryOp) -> Result<Option<bool>> {
    let Some(o) = l.sql_cmp(r)? else { return Ok(None) };
    Ok(Some(match op {
        BinaryOp::Eq => o == Ordering::Equal,
        BinaryOp::NotEq => o != Ordering::Equal,
        BinaryOp::Lt => o == Ordering::Less,
        BinaryOp::LtEq => o != Ordering::Greater,
        BinaryOp::Gt => o == Ordering::Greater,
        BinaryOp::GtEq => o != Ordering::Less,
        other => return Err(Error::TypeError(format!("{} is not a comparison", other.symbol()))),
    }))
}

pub fn and3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

pub fn or3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

fn negate_if(v: Option<bool>, negated: bool) -> Value {
    bool3(v.map(|b| b != negated))
}

fn bool3(v: Option<bool>) -> Value {
    v.map_or(Value::Null, Value::Bool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse_expr;
    use crate::storage::{Database, View};

    fn eval(src: &str) -> Value {
        let db = Database::default();
        let ev = Evaluator::new(&db, View::Dirty);
        ev.eval_expr(&parse_expr(src).unwrap(), &Scope::empty(), &Env::default()).unwrap()
    }

    #[test]
    fn three_valued_logic() {
        assert_eq!(eval("NULL AND FALSE"), Value::Bool(false));
        assert!(eval("NULL AND TRUE").is_null());
        assert_eq!(eval("NULL OR TRUE"), Value::Bool(true));
        assert!(eval("1 = NULL").is_null());
        assert!(eval("NOT (1 IN (2, NULL))").is_null());
        assert_eq!(eval("2 BETWEEN 1 AND 3"), Value::Bool(true));
    }

    #[test]
    fn time_functions() {
        assert_eq!(eval("dateadd(-1, 'day', '2023-11-02 10:00:00')").to_string(), "2023-11-01 10:00:00");
        assert_eq!(eval("date_trunc('minute', '2023-11-02 10:00:42')").to_string(), "2023-11-02 10:00:00");
        assert_eq!(
            eval("FLOOR('2023-11-02 10:42:00' TO HOUR) + INTERVAL '10' SECOND").to_string(),
            "2023-11-02 10:00:10"
        );
    }

    #[test]
    fn arithmetic() {
        assert_eq!(eval("30.00 + 32.00"), Value::Int(62));
        assert_eq!(eval("'a' || 1"), Value::text("a1"));
        assert_eq!(eval("floor(2.5)"), Value::Int(2));
        assert_eq!(eval("coalesce(NULL, 3)"), Value::Int(3));
    }
}
