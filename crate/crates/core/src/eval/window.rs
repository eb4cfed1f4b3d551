//! Window subqueries: range expansion and closure.
//!
//! Ranges are `[S + A*i, S + A*i + R)` for `i >= 0`. The reported end bound
//! is inclusive (`ws + R - granule`), so a five-day window starting
//! 15-NOV-19 prints as ending 19-NOV-19.

use rust_decimal::prelude::*;

use super::{ColumnInfo, Env, Evaluator, Relation, Scope};
use crate::error::{Error, Result};
use crate::sql::WindowSpec;
use crate::value::{Interval, Timestamp, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct WindowParams {
    /// Position of the windowing column in the input relation.
    pub column: usize,
    pub start: Value,
    pub range: Value,
    pub advance: Value,
    pub grace: Option<Value>,
    pub bounds: (String, String),
}

impl<'a> Evaluator<'a> {
    pub fn window_params(&self, spec: &WindowSpec, rel: &Relation, scope: &Scope, env: &Env) -> Result<WindowParams> {
        let column = match &spec.column {
            Some(name) => rel
                .find(name)
                .ok_or_else(|| Error::UnresolvedName(format!("unknown windowing column {name}")))?,
            None => rel
                .visible_columns()
                .into_iter()
                .find(|&i| rel.rows.iter().any(|r| matches!(r[i], Value::Timestamp(_))))
                .unwrap_or(0),
        };
        let range = self.eval_expr(&spec.range, scope, env)?;
        let advance = match &spec.advance {
            Some(a) => self.eval_expr(a, scope, env)?,
            None => range.clone(),
        };
        let start = match &spec.start {
            Some(s) => match self.eval_expr(s, scope, env)? {
                Value::Text(t) => Value::Timestamp(
                    crate::value::parse_timestamp(&t, Some(self.db.base_date()))
                        .ok_or_else(|| Error::TypeError(format!("bad window start '{t}'")))?,
                ),
                v => v,
            },
            None if matches!(range, Value::Interval(_)) => Value::Timestamp(self.db.epoch),
            None => Value::Int(0),
        };
        let grace = match &spec.grace {
            Some(g) => Some(self.eval_expr(g, scope, env)?),
            None => None,
        };
        if !positive(&range) || !positive(&advance) {
            return Err(Error::TypeError("window RANGE and ADVANCE must be positive".into()));
        }
        let bounds = spec
            .bounds
            .clone()
            .unwrap_or_else(|| ("WIN_START".to_string(), "WIN_END".to_string()));
        Ok(WindowParams { column, start, range, advance, grace, bounds })
    }
}

fn positive(v: &Value) -> bool {
    axis(v).is_some_and(|d| d > Decimal::ZERO)
}

/// Position of a value on the windowing axis: seconds for times, the value
/// itself for numbers.
fn axis(v: &Value) -> Option<Decimal> {
    match v {
        Value::Timestamp(t) => Some(Decimal::from(t.secs)),
        Value::Interval(i) => Some(Decimal::from(i.secs)),
        other => other.as_decimal(),
    }
}

/// Smallest step of a value's domain: one day for dates, one second for
/// timestamps, one for numbers.
pub fn granule_of(v: &Value) -> Value {
    match v {
        Value::Timestamp(t) => Value::Interval(t.granule()),
        _ => Value::Int(1),
    }
}

/// Window origin used when none is given: the system epoch for times, zero
/// for numbers.
pub fn default_start(v: &Value, epoch: Timestamp) -> Value {
    match v {
        Value::Timestamp(t) => Value::Timestamp(epoch.with_format(t.format)),
        _ => Value::Int(0),
    }
}

/// Indices `i` of the ranges containing `v`. With `from_zero`, ranges
/// starting before the origin are dropped.
pub fn range_indices(v: &Value, start: &Value, range: &Value, advance: &Value, from_zero: bool) -> Result<Vec<i64>> {
    let err = || Error::TypeError(format!("cannot window value {v} with start {start}, range {range}"));
    let (x, s, r, a) = (
        axis(v).ok_or_else(err)?,
        axis(start).ok_or_else(err)?,
        axis(range).ok_or_else(err)?,
        axis(advance).ok_or_else(err)?,
    );
    if v.kind() != start.kind() {
        return Err(err());
    }
    let hi = ((x - s) / a).floor();
    let lo = ((x - s - r) / a).floor() + Decimal::ONE;
    let hi = hi.to_i64().ok_or_else(err)?;
    let mut lo = lo.to_i64().ok_or_else(err)?;
    if from_zero {
        lo = lo.max(0);
    }
    Ok((lo..=hi).collect())
}

fn bound(start: &Value, advance: &Value, i: i64, like: &Value) -> Result<Value> {
    let v = start.add(&advance.mul(&Value::Int(i))?)?;
    Ok(match (v, like) {
        (Value::Timestamp(t), Value::Timestamp(l)) => Value::Timestamp(t.with_format(l.format)),
        (v, _) => v,
    })
}

/// Inclusive end of the range starting at `ws`.
pub fn inclusive_end(ws: &Value, range: &Value) -> Result<Value> {
    ws.add(range)?.sub(&granule_of(ws))
}

/// Replicates each row once per range containing its windowing value and
/// appends the two bound columns.
pub fn expand(rel: Relation, p: &WindowParams, alias: Option<&str>) -> Result<Relation> {
    let qualifier = alias
        .map(str::to_string)
        .or_else(|| rel.columns.first().and_then(|c| c.qualifier.clone()));
    let mut columns = rel.columns.clone();
    for name in [&p.bounds.0, &p.bounds.1] {
        columns.push(ColumnInfo { qualifier: qualifier.clone(), ..ColumnInfo::new(name.clone()) });
    }
    let mut out = Relation::new(columns);
    for row in rel.rows {
        let v = &row[p.column];
        if v.is_null() {
            continue;
        }
        for i in range_indices(v, &p.start, &p.range, &p.advance, true)? {
            let ws = bound(&p.start, &p.advance, i, v)?;
            let we = inclusive_end(&ws, &p.range)?;
            let mut r = row.clone();
            r.push(ws);
            r.push(we);
            out.rows.push(r);
        }
    }
    Ok(out)
}

/// A range is closed once some value lies beyond its inclusive end plus the
/// grace period.
pub fn is_closed(win_end: &Value, grace: &Value, max: &Value) -> Result<bool> {
    let limit = win_end.add(grace)?;
    Ok(limit.sql_cmp(max)? == Some(std::cmp::Ordering::Less))
}

/// Zero of the grace domain matching the windowing values.
pub fn zero_like(range: &Value) -> Value {
    match range {
        Value::Interval(_) => Value::Interval(Interval::from_secs(0)),
        _ => Value::Int(0),
    }
}

/// Number of ranges that have started but are not yet closed when the
/// largest windowing value is `max`. This is the state a FINAL evaluation
/// has to keep.
pub fn open_range_count(p: &WindowParams, grace: &Value, max: &Value) -> Result<usize> {
    let hi = match range_indices(max, &p.start, &p.range, &p.advance, true)?.last() {
        Some(&i) => i,
        None => return Ok(0),
    };
    let mut n = 0;
    let mut i = hi;
    while i >= 0 {
        let ws = bound(&p.start, &p.advance, i, max)?;
        if is_closed(&inclusive_end(&ws, &p.range)?, grace, max)? {
            break;
        }
        n += 1;
        i -= 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{parse_timestamp, TimeUnit};

    fn d(s: &str) -> Value {
        Value::Timestamp(parse_timestamp(s, None).unwrap())
    }

    fn days(n: i64) -> Value {
        Value::Interval(Interval::of(n, TimeUnit::Day))
    }

    #[test]
    fn hop_membership() {
        let (s, r, a) = (d("15-NOV-19"), days(5), days(2));
        assert_eq!(range_indices(&d("19-NOV-19"), &s, &r, &a, true).unwrap(), vec![0, 1, 2]);
        assert_eq!(range_indices(&d("15-NOV-19"), &s, &r, &a, true).unwrap(), vec![0]);
        assert!(range_indices(&d("14-NOV-19"), &s, &r, &a, true).unwrap().is_empty());
        assert_eq!(range_indices(&d("16-NOV-19"), &s, &r, &a, false).unwrap(), vec![-1, 0]);
    }

    #[test]
    fn bounds_are_inclusive_days() {
        let p = WindowParams {
            column: 0,
            start: d("15-NOV-19"),
            range: days(5),
            advance: days(2),
            grace: None,
            bounds: ("ws".into(), "we".into()),
        };
        let rel = Relation { columns: vec![ColumnInfo::new("t")], rows: vec![vec![d("19-NOV-19")]], keys: None };
        let out = expand(rel, &p, None).unwrap();
        let ends: Vec<String> = out.rows.iter().map(|r| format!("{}..{}", r[1], r[2])).collect();
        assert_eq!(ends, ["15-NOV-19..19-NOV-19", "17-NOV-19..21-NOV-19", "19-NOV-19..23-NOV-19"]);
    }

    #[test]
    fn tumbling_numeric() {
        let idx = range_indices(&Value::Int(7), &Value::Int(0), &Value::Int(5), &Value::Int(5), true).unwrap();
        assert_eq!(idx, vec![1]);
    }

    #[test]
    fn closure_uses_grace() {
        let max = d("30-NOV-19");
        assert!(is_closed(&d("29-NOV-19"), &days(0), &max).unwrap());
        assert!(!is_closed(&d("29-NOV-19"), &days(1), &max).unwrap());
    }
}
