//! Versioned row storage.
//!
//! Every row version carries insert/delete commit sequence numbers. A version
//! whose stamps are absent belongs to the open transaction. Rollback restores
//! a clone taken at BEGIN, so nothing here needs undo logic.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clock::LogicalClock;
use crate::error::{Error, Result};
use crate::sql::{ColumnDef, Expr};
use crate::value::{parse_timestamp, Timestamp, TsFormat, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnType {
    Bool,
    Int,
    Decimal,
    Text,
    Timestamp,
    Date,
    Interval,
    Any,
}

impl ColumnType {
    pub fn from_sql(type_name: &str) -> ColumnType {
        match type_name.to_ascii_uppercase().as_str() {
            "BOOL" | "BOOLEAN" => ColumnType::Bool,
            "INT" | "INTEGER" | "BIGINT" | "SMALLINT" => ColumnType::Int,
            "NUMBER" | "NUMERIC" | "DECIMAL" | "FLOAT" | "REAL" | "DOUBLE" => ColumnType::Decimal,
            "VARCHAR" | "VARCHAR2" | "CHAR" | "TEXT" | "STRING" => ColumnType::Text,
            "TIMESTAMP" | "DATETIME" | "TIME" => ColumnType::Timestamp,
            "DATE" => ColumnType::Date,
            "INTERVAL" => ColumnType::Interval,
            _ => ColumnType::Any,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

/// Converts `v` for storage in a column of type `ty`. Text is accepted for
/// timestamp columns and parsed; `base` dates bare clock labels.
pub fn coerce(v: Value, ty: ColumnType, column: &str, base: NaiveDate) -> Result<Value> {
    let mismatch = |v: &Value| {
        Error::SchemaMismatch(format!("column {column} cannot hold {} value {v}", v.kind()))
    };
    Ok(match (ty, v) {
        (_, Value::Null) => Value::Null,
        (ColumnType::Any, v) => v,
        (ColumnType::Bool, v @ Value::Bool(_)) => v,
        (ColumnType::Int, v @ (Value::Int(_) | Value::Decimal(_))) => match v.as_i64() {
            Some(i) => Value::Int(i),
            None => return Err(mismatch(&v)),
        },
        (ColumnType::Decimal, v @ (Value::Int(_) | Value::Decimal(_))) => v,
        (ColumnType::Text, v @ Value::Text(_)) => v,
        (ColumnType::Timestamp | ColumnType::Date, v @ Value::Timestamp(_)) => v,
        (ColumnType::Timestamp | ColumnType::Date, Value::Text(s)) => {
            match parse_timestamp(&s, Some(base)) {
                Some(t) => Value::Timestamp(t),
                None => return Err(mismatch(&Value::Text(s))),
            }
        }
        (ColumnType::Interval, v @ Value::Interval(_)) => v,
        (_, v) => return Err(mismatch(&v)),
    })
}

/// Renders a base-table row id the way change logs print it.
pub fn format_row_id(id: u64) -> String {
    format!("{id:08}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowVersion {
    pub row_id: u64,
    pub values: Vec<Value>,
    pub insert_time: Timestamp,
    pub insert_seq: Option<u64>,
    /// Statement number inside its transaction, for LOG ordering.
    pub insert_op: u64,
    /// Created as the after-image of an UPDATE.
    pub via_update: bool,
    /// Set for pending and committed deletes alike.
    pub deleted: bool,
    pub delete_time: Option<Timestamp>,
    pub delete_seq: Option<u64>,
    pub delete_op: u64,
    /// Deleted as the before-image of an UPDATE.
    pub by_update: bool,
    pub expired: bool,
}

/// Which versions a read sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// Committed state as of a commit sequence number.
    Committed(u64),
    /// The session's own view: committed data plus the open transaction.
    Dirty,
}

impl RowVersion {
    pub fn visible(&self, view: View) -> bool {
        if self.expired {
            return false;
        }
        self.visible_ignoring_expiry(view)
    }

    pub fn visible_ignoring_expiry(&self, view: View) -> bool {
        match view {
            View::Committed(s) => {
                self.insert_seq.is_some_and(|i| i <= s) && !self.delete_seq.is_some_and(|d| d <= s)
            }
            View::Dirty => !self.deleted,
        }
    }

    pub fn is_pending(&self) -> bool {
        self.insert_seq.is_none() || (self.deleted && self.delete_seq.is_none())
    }
}

/// A boolean expression kept with the text it was declared as.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub expr: Expr,
    pub text: String,
}

impl Predicate {
    pub fn new(expr: Expr) -> Predicate {
        let text = expr.to_string();
        Predicate { expr, text }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncreasingConstraint {
    pub column: usize,
    pub strict: bool,
    /// Interval for timestamp columns, a number for numeric ones.
    pub grace: Option<Value>,
    pub c_max: Option<Value>,
    pub enabled: bool,
    pub deferred: bool,
    pub rely: bool,
    /// Values written by the open transaction, checked at commit when deferred.
    pub pending: Vec<Value>,
}

impl IncreasingConstraint {
    /// Lowest value an insert may carry, `c_max - G`.
    pub fn floor(&self) -> Result<Option<Value>> {
        match (&self.c_max, &self.grace) {
            (None, _) => Ok(None),
            (Some(m), None) => Ok(Some(m.clone())),
            (Some(m), Some(g)) => m.sub(g).map(Some),
        }
    }

    /// Insert rule: `v >= c_max - G`, or `>` when strict.
    pub fn admits(&self, v: &Value) -> Result<bool> {
        let Some(floor) = self.floor()? else { return Ok(true) };
        if v.is_null() {
            return Ok(false);
        }
        let ord = v.sql_cmp(&floor)?;
        Ok(match ord {
            Some(std::cmp::Ordering::Greater) => true,
            Some(std::cmp::Ordering::Equal) => !self.strict,
            _ => false,
        })
    }

    pub fn observe(&mut self, v: &Value) {
        if v.is_null() {
            return;
        }
        if self.c_max.as_ref().is_none_or(|m| v > m) {
            self.c_max = Some(v.clone());
        }
    }
}

/// What a purge pass removed, kept so that ERROR-mode reads can still detect
/// queries reaching into purged regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurgeHorizon {
    pub policy: String,
    pub at: Timestamp,
    /// Per column, the min and max of the purged values (None if all NULL).
    pub bounds: Vec<Option<(Value, Value)>>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableState {
    pub name: String,
    pub columns: Vec<Column>,
    pub versions: Vec<RowVersion>,
    pub next_row_id: u64,
    pub insert_only: bool,
    pub increasing: Vec<IncreasingConstraint>,
    pub finalize: Option<Predicate>,
    pub expire: Option<Predicate>,
    pub horizons: Vec<PurgeHorizon>,
}

impl TableState {
    pub fn new(name: &str, defs: &[ColumnDef]) -> Result<TableState> {
        let mut columns: Vec<Column> = Vec::new();
        for d in defs {
            if columns.iter().any(|c| c.name.eq_ignore_ascii_case(&d.name)) {
                return Err(Error::SchemaMismatch(format!("duplicate column {}", d.name)));
            }
            columns.push(Column { name: d.name.clone(), ty: ColumnType::from_sql(&d.type_name) });
        }
        Ok(TableState {
            name: name.to_string(),
            columns,
            versions: Vec::new(),
            next_row_id: 1,
            insert_only: false,
            increasing: Vec::new(),
            finalize: None,
            expire: None,
            horizons: Vec::new(),
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Coerces a full row to the schema.
    pub fn conform(&self, row: Vec<Value>, base: NaiveDate) -> Result<Vec<Value>> {
        if row.len() != self.columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "table {} has {} columns but {} values were supplied",
                self.name,
                self.columns.len(),
                row.len()
            )));
        }
        row.into_iter()
            .zip(&self.columns)
            .map(|(v, c)| coerce(v, c.ty, &c.name, base))
            .collect()
    }

    pub fn rows(&self, view: View) -> impl Iterator<Item = &RowVersion> {
        self.versions.iter().filter(move |v| v.visible(view))
    }

    pub fn snapshot(&self, view: View) -> Vec<Vec<Value>> {
        self.rows(view).map(|v| v.values.clone()).collect()
    }

    /// Appends a pending version with a fresh row id.
    pub fn push_insert(&mut self, values: Vec<Value>, time: Timestamp, op: u64) -> u64 {
        let id = self.next_row_id;
        self.next_row_id += 1;
        self.push_version(id, values, time, op, false);
        id
    }

    pub fn push_version(&mut self, row_id: u64, values: Vec<Value>, time: Timestamp, op: u64, via_update: bool) {
        self.versions.push(RowVersion {
            row_id,
            values,
            insert_time: time,
            insert_seq: None,
            insert_op: op,
            via_update,
            deleted: false,
            delete_time: None,
            delete_seq: None,
            delete_op: 0,
            by_update: false,
            expired: false,
        });
    }

    pub fn mark_deleted(&mut self, idx: usize, time: Timestamp, op: u64, by_update: bool) {
        let v = &mut self.versions[idx];
        v.deleted = true;
        v.delete_time = Some(time);
        v.delete_op = op;
        v.by_update = by_update;
    }

    /// Stamps every pending change with `seq`. Returns whether anything changed.
    pub fn stamp_pending(&mut self, seq: u64) -> bool {
        let mut touched = false;
        for v in &mut self.versions {
            if v.insert_seq.is_none() {
                v.insert_seq = Some(seq);
                touched = true;
            }
            if v.deleted && v.delete_seq.is_none() {
                v.delete_seq = Some(seq);
                touched = true;
            }
        }
        touched
    }

    pub fn has_pending(&self) -> bool {
        self.versions.iter().any(|v| v.is_pending())
    }

    /// Maximum committed value of a column over every stored version.
    pub fn committed_max(&self, col: usize) -> Option<Value> {
        self.versions
            .iter()
            .filter(|v| v.insert_seq.is_some())
            .map(|v| &v.values[col])
            .filter(|v| !v.is_null())
            .max()
            .cloned()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Database {
    pub tables: BTreeMap<String, TableState>,
    pub clock: LogicalClock,
    /// Default window start for timestamp columns.
    pub epoch: Timestamp,
}

impl Default for Database {
    fn default() -> Self {
        Database {
            tables: BTreeMap::new(),
            clock: LogicalClock::default(),
            epoch: Timestamp::new(0, TsFormat::IsoDateTime),
        }
    }
}

impl Database {
    pub fn key(name: &str) -> String {
        name.to_ascii_lowercase()
    }

    pub fn table(&self, name: &str) -> Result<&TableState> {
        self.tables.get(&Self::key(name)).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn table_mut(&mut self, name: &str) -> Result<&mut TableState> {
        self.tables.get_mut(&Self::key(name)).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn has_table(&self, name: &str) -> bool {
        self.tables.contains_key(&Self::key(name))
    }

    /// Date used to resolve bare clock labels.
    pub fn base_date(&self) -> NaiveDate {
        self.clock.now().date()
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn time_of(&self, seq: u64) -> Timestamp {
        self.clock.time_of(seq).unwrap_or_else(|| Timestamp::new(i64::MIN / 4, TsFormat::IsoDateTime))
    }
}
