//! Scalar values, timestamps and intervals.
//!
//! Timestamps carry the textual format they were written in so that output
//! echoes the granularity the script used ("12:03", "15-NOV-19", ...). The
//! format never takes part in comparison or hashing.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a timestamp is printed. Also decides the granule used for inclusive
/// window ends: date-only formats step by one day, everything else by one second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TsFormat {
    /// `12:03`
    ClockMinute,
    /// `14:55:50`
    ClockSecond,
    /// `15-NOV-19`
    DayMonYY,
    /// `15-DEC-2019 14:55:05`
    DayMonYYYYTime,
    /// `2023-11-01`
    IsoDate,
    /// `2023-11-01 10:00:00`
    IsoDateTime,
}

impl TsFormat {
    pub fn is_date_only(self) -> bool {
        matches!(self, TsFormat::DayMonYY | TsFormat::IsoDate)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Timestamp {
    /// Seconds since 1970-01-01 00:00:00 (no time zone).
    pub secs: i64,
    pub format: TsFormat,
}

impl Timestamp {
    pub fn new(secs: i64, format: TsFormat) -> Self {
        Timestamp { secs, format }
    }

    pub fn from_naive(dt: NaiveDateTime, format: TsFormat) -> Self {
        Timestamp { secs: dt.and_utc().timestamp(), format }
    }

    pub fn naive(&self) -> NaiveDateTime {
        DateTime::from_timestamp(self.secs, 0)
            .map(|d| d.naive_utc())
            .unwrap_or_default()
    }

    pub fn date(&self) -> NaiveDate {
        self.naive().date()
    }

    pub fn with_format(self, format: TsFormat) -> Self {
        Timestamp { format, ..self }
    }

    /// Smallest representable step for this timestamp's granularity.
    pub fn granule(&self) -> Interval {
        if self.format.is_date_only() {
            Interval::from_secs(86_400)
        } else {
            Interval::from_secs(1)
        }
    }

    pub fn plus(self, iv: Interval) -> Timestamp {
        Timestamp { secs: self.secs + iv.secs, format: self.format }
    }

    /// Truncates to the start of the enclosing `unit`.
    pub fn truncate(self, unit: TimeUnit) -> Timestamp {
        let step = unit.seconds();
        let secs = if unit == TimeUnit::Week {
            // weeks start on Monday
            let dt = self.naive();
            let day = dt.date() - Duration::days(dt.weekday().num_days_from_monday() as i64);
            day.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp()
        } else {
            self.secs.div_euclid(step) * step
        };
        Timestamp { secs, format: self.format }
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.secs == other.secs
    }
}
impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.secs.cmp(&other.secs)
    }
}
impl Hash for Timestamp {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.secs.hash(state)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dt = self.naive();
        let s = match self.format {
            TsFormat::ClockMinute => dt.format("%H:%M").to_string(),
            TsFormat::ClockSecond => dt.format("%H:%M:%S").to_string(),
            TsFormat::DayMonYY => dt.format("%d-%b-%y").to_string().to_uppercase(),
            TsFormat::DayMonYYYYTime => dt.format("%d-%b-%Y %H:%M:%S").to_string().to_uppercase(),
            TsFormat::IsoDate => dt.format("%Y-%m-%d").to_string(),
            TsFormat::IsoDateTime => dt.format("%Y-%m-%d %H:%M:%S").to_string(),
        };
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimeUnit {
    Second,
    Minute,
    Hour,
    Day,
    Week,
}

impl TimeUnit {
    pub fn seconds(self) -> i64 {
        match self {
            TimeUnit::Second => 1,
            TimeUnit::Minute => 60,
            TimeUnit::Hour => 3_600,
            TimeUnit::Day => 86_400,
            TimeUnit::Week => 604_800,
        }
    }

    pub fn parse(word: &str) -> Option<TimeUnit> {
        let w = word.to_ascii_lowercase();
        let w = w.strip_suffix('s').unwrap_or(&w);
        Some(match w {
            "second" | "sec" => TimeUnit::Second,
            "minute" | "min" => TimeUnit::Minute,
            "hour" => TimeUnit::Hour,
            "day" => TimeUnit::Day,
            "week" => TimeUnit::Week,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            TimeUnit::Second => "SECOND",
            TimeUnit::Minute => "MINUTE",
            TimeUnit::Hour => "HOUR",
            TimeUnit::Day => "DAY",
            TimeUnit::Week => "WEEK",
        }
    }
}

/// A signed duration in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub secs: i64,
}

impl Interval {
    pub fn from_secs(secs: i64) -> Self {
        Interval { secs }
    }

    pub fn of(n: i64, unit: TimeUnit) -> Self {
        Interval { secs: n * unit.seconds() }
    }

    /// Largest unit that divides the interval evenly, with the count.
    pub fn natural_unit(&self) -> (i64, TimeUnit) {
        for unit in [TimeUnit::Week, TimeUnit::Day, TimeUnit::Hour, TimeUnit::Minute] {
            if self.secs != 0 && self.secs % unit.seconds() == 0 {
                return (self.secs / unit.seconds(), unit);
            }
        }
        (self.secs, TimeUnit::Second)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, unit) = self.natural_unit();
        write!(f, "INTERVAL '{}' {}", n, unit.keyword())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Decimal(Decimal),
    Text(String),
    Timestamp(Timestamp),
    Interval(Interval),
}

/// Coarse kind of a value, used for type errors and schema checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Null,
    Bool,
    Numeric,
    Text,
    Timestamp,
    Interval,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Null => "null",
            Kind::Bool => "boolean",
            Kind::Numeric => "numeric",
            Kind::Text => "text",
            Kind::Timestamp => "timestamp",
            Kind::Interval => "interval",
        };
        f.write_str(s)
    }
}

impl Value {
    pub fn kind(&self) -> Kind {
        match self {
            Value::Null => Kind::Null,
            Value::Bool(_) => Kind::Bool,
            Value::Int(_) | Value::Decimal(_) => Kind::Numeric,
            Value::Text(_) => Kind::Text,
            Value::Timestamp(_) => Kind::Timestamp,
            Value::Interval(_) => Kind::Interval,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Value::Int(i) => Some(Decimal::from(*i)),
            Value::Decimal(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Decimal(d) if d.fract().is_zero() => i64::try_from(d.trunc()).ok(),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Interprets the value as a timestamp, parsing text when needed.
    /// `base` supplies the date for bare clock labels.
    pub fn to_timestamp(&self, base: Option<NaiveDate>) -> Option<Timestamp> {
        match self {
            Value::Timestamp(t) => Some(*t),
            Value::Text(s) => parse_timestamp(s, base),
            _ => None,
        }
    }

    fn numeric_normalized(d: Decimal) -> Value {
        let n = d.normalize();
        if n.scale() == 0 {
            if let Ok(i) = i64::try_from(n) {
                return Value::Int(i);
            }
        }
        Value::Decimal(n)
    }

    /// SQL comparison. `None` means unknown (a NULL operand).
    pub fn sql_cmp(&self, other: &Value) -> Result<Option<Ordering>> {
        use Value::*;
        Ok(Some(match (self, other) {
            (Null, _) | (_, Null) => return Ok(None),
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Int(_) | Decimal(_), Int(_) | Decimal(_)) => {
                self.as_decimal().unwrap().cmp(&other.as_decimal().unwrap())
            }
            (Text(a), Text(b)) => a.cmp(b),
            (Timestamp(a), Timestamp(b)) => a.cmp(b),
            (Timestamp(a), Text(s)) => {
                let b = parse_timestamp(s, Some(a.date())).ok_or_else(|| coerce_err(s))?;
                a.cmp(&b)
            }
            (Text(s), Timestamp(b)) => {
                let a = parse_timestamp(s, Some(b.date())).ok_or_else(|| coerce_err(s))?;
                a.cmp(b)
            }
            (Interval(a), Interval(b)) => a.cmp(b),
            (a, b) => {
                return Err(Error::TypeError(format!(
                    "cannot compare {} with {}",
                    a.kind(),
                    b.kind()
                )))
            }
        }))
    }

    pub fn add(&self, other: &Value) -> Result<Value> {
        use Value::*;
        Ok(match (self, other) {
            (Null, _) | (_, Null) => Null,
            (Int(a), Int(b)) => a.checked_add(*b).map(Int).ok_or_else(overflow)?,
            (Int(_) | Decimal(_), Int(_) | Decimal(_)) => {
                Self::numeric_normalized(self.as_decimal().unwrap() + other.as_decimal().unwrap())
            }
            (Timestamp(t), Interval(i)) | (Interval(i), Timestamp(t)) => Timestamp(t.plus(*i)),
            (Interval(a), Interval(b)) => Interval(self::Interval::from_secs(a.secs + b.secs)),
            (Text(s), Interval(i)) => {
                let t = parse_timestamp(s, None).ok_or_else(|| coerce_err(s))?;
                Timestamp(t.plus(*i))
            }
            (a, b) => return Err(arith_err("+", a, b)),
        })
    }

    pub fn sub(&self, other: &Value) -> Result<Value> {
        use Value::*;
        Ok(match (self, other) {
            (Null, _) | (_, Null) => Null,
            (Int(a), Int(b)) => a.checked_sub(*b).map(Int).ok_or_else(overflow)?,
            (Int(_) | Decimal(_), Int(_) | Decimal(_)) => {
                Self::numeric_normalized(self.as_decimal().unwrap() - other.as_decimal().unwrap())
            }
            (Timestamp(t), Interval(i)) => Timestamp(t.plus(self::Interval::from_secs(-i.secs))),
            (Timestamp(a), Timestamp(b)) => Interval(self::Interval::from_secs(a.secs - b.secs)),
            (Interval(a), Interval(b)) => Interval(self::Interval::from_secs(a.secs - b.secs)),
            (Text(s), Interval(i)) => {
                let t = parse_timestamp(s, None).ok_or_else(|| coerce_err(s))?;
                Timestamp(t.plus(self::Interval::from_secs(-i.secs)))
            }
            (a, b) => return Err(arith_err("-", a, b)),
        })
    }

    pub fn mul(&self, other: &Value) -> Result<Value> {
        use Value::*;
        Ok(match (self, other) {
            (Null, _) | (_, Null) => Null,
            (Int(a), Int(b)) => a.checked_mul(*b).map(Int).ok_or_else(overflow)?,
            (Int(_) | Decimal(_), Int(_) | Decimal(_)) => {
                Self::numeric_normalized(self.as_decimal().unwrap() * other.as_decimal().unwrap())
            }
            (Interval(i), n @ (Int(_) | Decimal(_))) | (n @ (Int(_) | Decimal(_)), Interval(i)) => {
                let k = n.as_i64().ok_or_else(|| {
                    Error::TypeError("interval multiplier must be integral".into())
                })?;
                Interval(self::Interval::from_secs(i.secs * k))
            }
            (a, b) => return Err(arith_err("*", a, b)),
        })
    }

    pub fn div(&self, other: &Value) -> Result<Value> {
        use Value::*;
        Ok(match (self, other) {
            (Null, _) | (_, Null) => Null,
            (Int(_) | Decimal(_), Int(_) | Decimal(_)) => {
                let d = other.as_decimal().unwrap();
                if d.is_zero() {
                    return Err(Error::DivisionByZero);
                }
                let q = self
                    .as_decimal()
                    .unwrap()
                    .checked_div(d)
                    .ok_or_else(overflow)?;
                Self::numeric_normalized(q)
            }
            (Interval(a), Interval(b)) => {
                if b.secs == 0 {
                    return Err(Error::DivisionByZero);
                }
                Int(a.secs.div_euclid(b.secs))
            }
            (a, b) => return Err(arith_err("/", a, b)),
        })
    }

    pub fn rem(&self, other: &Value) -> Result<Value> {
        use Value::*;
        Ok(match (self, other) {
            (Null, _) | (_, Null) => Null,
            (Int(_) | Decimal(_), Int(_) | Decimal(_)) => {
                let d = other.as_decimal().unwrap();
                if d.is_zero() {
                    return Err(Error::DivisionByZero);
                }
                Self::numeric_normalized(self.as_decimal().unwrap() % d)
            }
            (a, b) => return Err(arith_err("%", a, b)),
        })
    }

    pub fn neg(&self) -> Result<Value> {
        Ok(match self {
            Value::Null => Value::Null,
            Value::Int(i) => Value::Int(-i),
            Value::Decimal(d) => Value::Decimal(-d),
            Value::Interval(i) => Value::Interval(Interval::from_secs(-i.secs)),
            v => return Err(Error::TypeError(format!("cannot negate {}", v.kind()))),
        })
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) | Value::Decimal(_) => 2,
            Value::Text(_) => 3,
            Value::Timestamp(_) => 4,
            Value::Interval(_) => 5,
        }
    }
}

fn overflow() -> Error {
    Error::TypeError("numeric overflow".into())
}

fn coerce_err(s: &str) -> Error {
    Error::TypeError(format!("cannot interpret '{s}' as a timestamp"))
}

fn arith_err(op: &str, a: &Value, b: &Value) -> Error {
    Error::TypeError(format!("operator {op} not defined for {} and {}", a.kind(), b.kind()))
}

/// Total order used for grouping, sorting and multiset keys. Numeric values
/// compare by magnitude regardless of representation.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        use Value::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Int(_) | Decimal(_), Int(_) | Decimal(_)) => {
                self.as_decimal().unwrap().cmp(&other.as_decimal().unwrap())
            }
            (Text(a), Text(b)) => a.cmp(b),
            (Timestamp(a), Timestamp(b)) => a.cmp(b),
            (Interval(a), Interval(b)) => a.cmp(b),
            _ => self.kind_rank().cmp(&other.kind_rank()),
        }
    }
}
impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.kind_rank().hash(state);
        match self {
            Value::Null => {}
            Value::Bool(b) => b.hash(state),
            Value::Int(_) | Value::Decimal(_) => {
                self.as_decimal().unwrap().normalize().to_string().hash(state)
            }
            Value::Text(s) => s.hash(state),
            Value::Timestamp(t) => t.hash(state),
            Value::Interval(i) => i.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Bool(true) => f.write_str("TRUE"),
            Value::Bool(false) => f.write_str("FALSE"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{}", d.normalize()),
            Value::Text(s) => f.write_str(s),
            Value::Timestamp(t) => write!(f, "{t}"),
            Value::Interval(i) => write!(f, "{i}"),
        }
    }
}

/// Parses the timestamp spellings the dialect accepts. Bare clock labels
/// (`12:03`, `14:55:50`) resolve against `base`, defaulting to the epoch date.
pub fn parse_timestamp(s: &str, base: Option<NaiveDate>) -> Option<Timestamp> {
    let s = s.trim();
    let upper = s.to_ascii_uppercase();
    let try_dt = |fmt: &str| NaiveDateTime::parse_from_str(&upper, fmt).ok();
    let try_d = |fmt: &str| NaiveDate::parse_from_str(&upper, fmt).ok();

    if let Some(dt) = try_dt("%d-%b-%Y %H:%M:%S") {
        return Some(Timestamp::from_naive(dt, TsFormat::DayMonYYYYTime));
    }
    if let Some(dt) = try_dt("%Y-%m-%d %H:%M:%S") {
        return Some(Timestamp::from_naive(dt, TsFormat::IsoDateTime));
    }
    if let Some(dt) = try_dt("%Y-%m-%d %H:%M") {
        return Some(Timestamp::from_naive(dt, TsFormat::IsoDateTime));
    }
    if let Some(dt) = try_dt("%Y-%m-%dT%H:%M:%S") {
        return Some(Timestamp::from_naive(dt, TsFormat::IsoDateTime));
    }
    if let Some(d) = try_d("%Y-%m-%d") {
        return Some(Timestamp::from_naive(d.and_hms_opt(0, 0, 0)?, TsFormat::IsoDate));
    }
    // two-digit years: 15-NOV-19
    if upper.len() <= 9 {
        if let Some(d) = try_d("%d-%b-%y") {
            return Some(Timestamp::from_naive(d.and_hms_opt(0, 0, 0)?, TsFormat::DayMonYY));
        }
    }
    if let Some(d) = try_d("%d-%b-%Y") {
        return Some(Timestamp::from_naive(d.and_hms_opt(0, 0, 0)?, TsFormat::DayMonYY));
    }
    parse_clock_label(s, base)
}

/// `HH:MM` or `HH:MM:SS` on the given date.
pub fn parse_clock_label(s: &str, base: Option<NaiveDate>) -> Option<Timestamp> {
    let base = base.unwrap_or_else(epoch_date);
    if let Ok(t) = NaiveTime::parse_from_str(s, "%H:%M:%S") {
        return Some(Timestamp::from_naive(base.and_time(t), TsFormat::ClockSecond));
    }
    if let Ok(t) = NaiveTime::parse_from_str(s, "%H:%M") {
        return Some(Timestamp::from_naive(base.and_time(t), TsFormat::ClockMinute));
    }
    None
}

pub fn epoch_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

/// Seconds into the day of a clock label.
pub fn clock_label_secs(t: &Timestamp) -> i64 {
    let n = t.naive();
    n.num_seconds_from_midnight() as i64
}
