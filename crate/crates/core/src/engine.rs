//! The single-session engine: statements, transactions, constraints and the
//! commit pipeline that drives tasks and subscriptions.
//!
//! Transactions snapshot the whole database at BEGIN; rollback restores the
//! snapshot. DDL is autocommitted and takes a commit stamp of its own so that
//! task creation and resumption have a position in commit order.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::analysis::{check_monotone_predicate, Monotonicity};
use crate::clock::CommitStamp;
use crate::cursor::Cursor;
use crate::error::{Error, Result};
use crate::eval::{table_columns, truth, Env, Evaluator, Relation, Scope};
use crate::lifecycle::{self, ReadMode};
use crate::sql::{
    AlterTableAction, Assignment, CreateTable, Delete, Expr, IncreasingDef, Insert, Statement, Update,
};
use crate::storage::{Database, IncreasingConstraint, Predicate, TableState, View};
use crate::task::Task;
use crate::value::{Timestamp, Value};

/// Result of one statement.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Rows(Relation),
    Fetched(Relation),
    Count { verb: &'static str, n: usize },
    Done(String),
}

/// Row-level failures collected instead of aborting a statement.
#[derive(Debug, Default)]
pub struct Rejects {
    pub rows: Vec<(Vec<Value>, Error)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Applied {
    pub inserted: usize,
    pub updated: usize,
    pub deleted: usize,
}

impl Applied {
    pub fn total(&self) -> usize {
        self.inserted + self.updated + self.deleted
    }
}

/// Depth limit for tasks triggering tasks through their targets.
const CASCADE_LIMIT: usize = 16;

pub struct Engine {
    pub db: Database,
    /// Database as of BEGIN.
    txn: Option<Box<Database>>,
    op: u64,
    pub cursors: BTreeMap<String, Cursor>,
    /// In creation order, which is also firing order.
    pub tasks: Vec<Task>,
    pub(crate) subscriptions: Vec<String>,
    pub(crate) next_subscription: u64,
    pub read_mode: Option<ReadMode>,
    events: Vec<String>,
    pub(crate) async_queue: Vec<String>,
    pub(crate) faults: BTreeMap<String, u32>,
    /// Tasks currently executing, outermost first.
    pub(crate) running: Vec<String>,
    /// Change position of the executing task; binds unranged CHANGES.
    pub(crate) task_resume: Option<u64>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(Database::default())
    }
}

impl Engine {
    pub fn new(db: Database) -> Engine {
        Engine {
            db,
            txn: None,
            op: 0,
            cursors: BTreeMap::new(),
            tasks: Vec::new(),
            subscriptions: Vec::new(),
            next_subscription: 1,
            read_mode: None,
            events: Vec::new(),
            async_queue: Vec::new(),
            faults: BTreeMap::new(),
            running: Vec::new(),
            task_resume: None,
        }
    }

    /// Engine whose clock starts at `epoch`, which is also the default
    /// window origin.
    pub fn with_epoch(epoch: Timestamp) -> Engine {
        let db = Database { epoch, clock: crate::clock::LogicalClock::new(epoch), ..Database::default() };
        Engine::new(db)
    }

    /// Messages produced as side effects (task reports, subscription rows,
    /// warnings) since the last call.
    pub fn take_events(&mut self) -> Vec<String> {
        std::mem::take(&mut self.events)
    }

    pub(crate) fn event(&mut self, msg: String) {
        self.events.push(msg);
    }

    pub fn in_txn(&self) -> bool {
        self.txn.is_some()
    }

    pub fn now(&self) -> Timestamp {
        self.db.now()
    }

    pub fn execute_sql(&mut self, sql: &str) -> Result<Vec<Output>> {
        let stmts = crate::sql::parse(sql)?;
        let mut out = Vec::new();
        for s in &stmts {
            out.push(self.execute(s)?);
        }
        Ok(out)
    }

    /// Evaluates a query against the session view.
    pub fn query(&self, sql: &str) -> Result<Relation> {
        let q = crate::sql::parse_query(sql)?;
        self.evaluator().query(&q)
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        let mut ev = Evaluator::new(&self.db, View::Dirty);
        ev.expired_override = self.read_mode;
        if let Some(r) = self.task_resume {
            ev.resume = Some(r);
            ev.bind_changes = true;
        }
        ev
    }

    pub fn execute(&mut self, stmt: &Statement) -> Result<Output> {
        match stmt {
            Statement::Query(q) => Ok(Output::Rows(self.evaluator().query(q)?.visible())),
            Statement::Begin => {
                self.begin()?;
                Ok(Output::Done("BEGIN".into()))
            }
            Statement::Commit => {
                if self.txn.is_none() {
                    self.begin()?;
                }
                self.commit()?;
                Ok(Output::Done("COMMIT".into()))
            }
            Statement::Rollback => {
                self.rollback();
                Ok(Output::Done("ROLLBACK".into()))
            }
            Statement::Insert(i) => self.dml(|e| e.insert(i, None)).map(|n| Output::Count { verb: "INSERT", n }),
            Statement::Update(u) => self.dml(|e| e.update(u)).map(|n| Output::Count { verb: "UPDATE", n }),
            Statement::Delete(d) => self.dml(|e| e.delete(d)).map(|n| Output::Count { verb: "DELETE", n }),
            Statement::Merge(m) => self
                .dml(|e| {
                    let source = e.evaluator().eval_factor(&m.source, &Env::default(), None, None)?;
                    e.merge_rows(m, source, None).map(|a| a.total())
                })
                .map(|n| Output::Count { verb: "MERGE", n }),
            Statement::CreateTable(ct) => {
                self.ddl(|e| e.create_table(ct))?;
                Ok(Output::Done("CREATE TABLE".into()))
            }
            Statement::DropTable(name) => {
                self.ddl(|e| {
                    e.db.tables.remove(&Database::key(name)).ok_or_else(|| Error::UnknownTable(name.clone()))?;
                    Ok(())
                })?;
                Ok(Output::Done("DROP TABLE".into()))
            }
            Statement::AlterTable { table, action } => {
                self.ddl(|e| e.alter_table(table, action))?;
                Ok(Output::Done("ALTER TABLE".into()))
            }
            Statement::Set { name, value } => {
                if !name.eq_ignore_ascii_case("EXPIRED_READS") {
                    return Err(Error::Unsupported(format!("unknown setting {name}")));
                }
                self.read_mode = Some(
                    ReadMode::parse(value)
                        .ok_or_else(|| Error::Unsupported(format!("EXPIRED_READS must be IGNORE or ERROR, not {value}")))?,
                );
                Ok(Output::Done("SET".into()))
            }
            Statement::DeclareCursor { name, with_return, query } => {
                if with_return.is_some() {
                    self.event("warning: cursor returnability is accepted and ignored".into());
                }
                self.declare_cursor(name, query.clone())?;
                Ok(Output::Done("DECLARE CURSOR".into()))
            }
            Statement::Open(name) => {
                self.open_cursor(name)?;
                Ok(Output::Done("OPEN".into()))
            }
            Statement::Fetch { cursor, count } => Ok(Output::Fetched(self.fetch(cursor, *count)?)),
            Statement::Close(name) => {
                self.close_cursor(name)?;
                Ok(Output::Done("CLOSE".into()))
            }
            Statement::Subscribe { schedule, query } => {
                let name = self.subscribe(query.clone(), schedule.clone())?;
                Ok(Output::Done(format!("SUBSCRIBE {name}")))
            }
            Statement::CreateTask(ct) => {
                self.create_task(ct)?;
                Ok(Output::Done("CREATE TASK".into()))
            }
            Statement::AlterTask { name, verb } => {
                self.alter_task(name, *verb)?;
                Ok(Output::Done("ALTER TASK".into()))
            }
            Statement::DropTask(name) => {
                self.drop_task(name)?;
                Ok(Output::Done("DROP TASK".into()))
            }
            Statement::ExecuteTask(name) => {
                self.execute_task(name)?;
                Ok(Output::Done("EXECUTE TASK".into()))
            }
        }
    }

    // ---- transactions ----

    pub fn begin(&mut self) -> Result<()> {
        if self.txn.is_some() {
            return Err(Error::TxnAlreadyOpen);
        }
        self.txn = Some(Box::new(self.db.clone()));
        Ok(())
    }

    pub fn rollback(&mut self) {
        if let Some(snapshot) = self.txn.take() {
            self.db = *snapshot;
        }
    }

    /// Commits the open transaction and runs everything a commit triggers.
    /// A failing synchronous task undoes the whole transaction.
    pub fn commit(&mut self) -> Result<CommitStamp> {
        let Some(snapshot) = self.txn.take() else { return Err(Error::NoOpenTxn) };
        let tasks_before = self.tasks.clone();
        match self.commit_inner() {
            Ok(stamp) => {
                if self.running.is_empty() {
                    self.poll_subscriptions(true);
                }
                Ok(stamp)
            }
            Err(e) => {
                self.db = *snapshot;
                self.tasks = tasks_before;
                Err(e)
            }
        }
    }

    fn commit_inner(&mut self) -> Result<CommitStamp> {
        for t in self.db.tables.values_mut() {
            for c in t.increasing.iter_mut().filter(|c| c.deferred) {
                let pending = std::mem::take(&mut c.pending);
                if c.enabled {
                    for v in &pending {
                        if !c.admits(v)? {
                            return Err(increasing_error(&t.name, &t.columns[c.column].name, v, c));
                        }
                    }
                }
                for v in &pending {
                    c.observe(v);
                }
            }
        }
        let touched: BTreeSet<String> =
            self.db.tables.iter().filter(|(_, t)| t.has_pending()).map(|(k, _)| k.clone()).collect();
        let stamp = self.db.clock.commit();
        for t in self.db.tables.values_mut() {
            t.stamp_pending(stamp.seq);
        }
        self.after_commit(&touched)?;
        Ok(stamp)
    }

    /// Runs a statement under autocommit when no transaction is open. The
    /// statement is atomic; constraint violations abort an explicit
    /// transaction as a whole.
    fn dml<T>(&mut self, f: impl FnOnce(&mut Engine) -> Result<T>) -> Result<T> {
        let auto = self.txn.is_none();
        if auto {
            self.begin()?;
        }
        let before = self.db.clone();
        self.op += 1;
        match f(self) {
            Ok(v) => {
                if auto {
                    self.commit()?;
                }
                Ok(v)
            }
            Err(e) => {
                self.db = before;
                if auto || aborts_transaction(&e) {
                    self.rollback();
                }
                Err(e)
            }
        }
    }

    fn ddl(&mut self, f: impl FnOnce(&mut Engine) -> Result<()>) -> Result<CommitStamp> {
        if self.txn.is_some() {
            return Err(Error::TxnOpen("DDL".into()));
        }
        f(self)?;
        Ok(self.db.clock.commit())
    }

    pub fn advance_clock(&mut self, to: Timestamp) -> Result<()> {
        if to < self.db.now() {
            return Err(Error::ClockRegression { now: self.db.now().to_string(), to: to.to_string() });
        }
        if self.txn.is_some() {
            // tasks and subscriptions wait for the session to be quiescent
            return self.db.clock.advance(to);
        }
        self.run_ticks(to)?;
        self.poll_subscriptions(false);
        Ok(())
    }

    // ---- DDL ----

    fn create_table(&mut self, ct: &CreateTable) -> Result<()> {
        if self.db.has_table(&ct.name) {
            return Err(Error::DuplicateTable(ct.name.clone()));
        }
        let mut t = TableState::new(&ct.name, &ct.columns)?;
        t.insert_only = ct.insert_only;
        for def in &ct.increasing {
            let c = self.increasing_constraint(&t, def)?;
            t.increasing.push(c);
        }
        if let Some(e) = &ct.expire {
            t.expire = Some(Predicate::new(e.clone()));
        }
        self.db.tables.insert(Database::key(&ct.name), t);
        Ok(())
    }

    fn increasing_constraint(&self, t: &TableState, def: &IncreasingDef) -> Result<IncreasingConstraint> {
        let column = t
            .column_index(&def.column)
            .ok_or_else(|| Error::UnresolvedName(format!("unknown column {} of {}", def.column, t.name)))?;
        let grace = match &def.grace {
            Some(g) => Some(self.evaluator().eval_expr(g, &Scope::empty(), &Env::default())?),
            None => None,
        };
        Ok(IncreasingConstraint {
            column,
            strict: def.strict,
            grace,
            c_max: t.committed_max(column),
            enabled: def.enabled.unwrap_or(true),
            deferred: def.deferred.unwrap_or(false),
            rely: def.rely.unwrap_or(false),
            pending: Vec::new(),
        })
    }

    fn alter_table(&mut self, table: &str, action: &AlterTableAction) -> Result<()> {
        let key = Database::key(table);
        if !self.db.tables.contains_key(&key) {
            return Err(Error::UnknownTable(table.to_string()));
        }
        match action {
            AlterTableAction::InsertOnly => self.db.tables.get_mut(&key).unwrap().insert_only = true,
            AlterTableAction::DropInsertOnly => {
                let open: Vec<&str> = self
                    .cursors
                    .values()
                    .filter(|c| c.is_open() && c.deps.contains(&key))
                    .map(|c| c.name.as_str())
                    .collect();
                if !open.is_empty() {
                    return Err(Error::DependentCursorOpen(format!(
                        "cannot drop INSERT ONLY from {table}: open continuous cursors depend on it ({})",
                        open.join(", ")
                    )));
                }
                self.db.tables.get_mut(&key).unwrap().insert_only = false;
            }
            AlterTableAction::Increasing(def) => {
                let c = self.increasing_constraint(&self.db.tables[&key], def)?;
                let t = self.db.tables.get_mut(&key).unwrap();
                t.increasing.retain(|old| old.column != c.column);
                t.increasing.push(c);
            }
            AlterTableAction::Finalize(p) => {
                let t = &self.db.tables[&key];
                if check_monotone_predicate(p, &self.db, &t.column_names())? != Monotonicity::Monotone {
                    return Err(Error::NonMonotonePredicate(p.to_string()));
                }
                self.db.tables.get_mut(&key).unwrap().finalize = Some(Predicate::new(p.clone()));
            }
            AlterTableAction::Expire { verb, predicate } => {
                let t = self.db.tables.get_mut(&key).unwrap();
                match (verb, &t.expire) {
                    (crate::sql::ExpireVerb::Add, Some(_)) => return Err(Error::PolicyExists(t.name.clone())),
                    (crate::sql::ExpireVerb::Modify, None) => return Err(Error::NoPolicy(t.name.clone())),
                    (crate::sql::ExpireVerb::Modify, Some(old)) if lifecycle::is_broader(&old.expr, predicate) => {
                        let msg = format!(
                            "warning: new expiration policy of {} is broader than the current one",
                            t.name
                        );
                        t.expire = Some(Predicate::new(predicate.clone()));
                        self.event(msg);
                        return Ok(());
                    }
                    _ => {}
                }
                t.expire = Some(Predicate::new(predicate.clone()));
            }
            AlterTableAction::DropExpire => {
                let t = self.db.tables.get_mut(&key).unwrap();
                if t.expire.take().is_none() {
                    return Err(Error::NoPolicy(t.name.clone()));
                }
            }
        }
        Ok(())
    }

    // ---- DML ----

    /// Executes an INSERT statement. With `rejects`, row-level failures are
    /// collected instead of failing the statement.
    pub(crate) fn insert(&mut self, i: &Insert, rejects: Option<&mut Rejects>) -> Result<usize> {
        let rel = self.evaluator().query(&i.source)?.visible();
        self.insert_relation(&i.table, &i.columns, rel, rejects)
    }

    pub(crate) fn insert_relation(
        &mut self,
        table: &str,
        columns: &[String],
        rel: Relation,
        rejects: Option<&mut Rejects>,
    ) -> Result<usize> {
        let t = self.db.table(table)?;
        let width = t.columns.len();
        let positions: Vec<usize> = if columns.is_empty() {
            if rel.columns.len() != width {
                return Err(Error::SchemaMismatch(format!(
                    "table {} has {} columns but {} values were supplied",
                    t.name,
                    width,
                    rel.columns.len()
                )));
            }
            (0..width).collect()
        } else {
            if columns.len() != rel.columns.len() {
                return Err(Error::SchemaMismatch(format!(
                    "{} columns named but {} values supplied",
                    columns.len(),
                    rel.columns.len()
                )));
            }
            columns
                .iter()
                .map(|c| t.column_index(c).ok_or_else(|| Error::UnresolvedName(format!("unknown column {c} of {}", t.name))))
                .collect::<Result<_>>()?
        };
        let rows = rel
            .rows
            .into_iter()
            .map(|r| {
                let mut full = vec![Value::Null; width];
                for (v, &p) in r.into_iter().zip(&positions) {
                    full[p] = v;
                }
                full
            })
            .collect();
        self.insert_rows(table, rows, rejects)
    }

    /// Inserts full-width rows with every write-side check. Rows of one call
    /// form one statement for the increasing constraint's batch rule.
    pub(crate) fn insert_rows(
        &mut self,
        table: &str,
        rows: Vec<Vec<Value>>,
        mut rejects: Option<&mut Rejects>,
    ) -> Result<usize> {
        let base = self.db.base_date();
        let mut accepted = Vec::new();
        {
            let ev = self.evaluator();
            let t = self.db.table(table)?;
            for row in rows {
                let checked = t.conform(row.clone(), base).and_then(|r| {
                    check_increasing_insert(t, &r)?;
                    check_finalize_insert(&ev, t, &r)?;
                    Ok(r)
                });
                match (checked, rejects.as_deref_mut()) {
                    (Ok(r), _) => accepted.push(r),
                    (Err(e), Some(rj)) if row_level(&e) => rj.rows.push((row, e)),
                    (Err(e), _) => return Err(e),
                }
            }
        }
        let now = self.db.now();
        let op = self.next_op();
        let t = self.db.table_mut(table)?;
        for r in &accepted {
            observe_increasing(t, r);
            t.push_insert(r.clone(), now, op);
        }
        Ok(accepted.len())
    }

    fn next_op(&mut self) -> u64 {
        self.op += 1;
        self.op
    }

    /// Visible rows of `table` matching `pred`, as version indices.
    fn matching(&self, table: &str, pred: Option<&Expr>) -> Result<Vec<usize>> {
        let t = self.db.table(table)?;
        let ev = self.evaluator();
        let columns = table_columns(t, &t.name);
        let mut out = Vec::new();
        for (i, v) in t.versions.iter().enumerate() {
            if !v.visible(View::Dirty) {
                continue;
            }
            if let Some(p) = pred {
                let scope = Scope::new(&columns, &v.values, None);
                if truth(&ev.eval_expr(p, &scope, &Env::default())?)? != Some(true) {
                    continue;
                }
            }
            out.push(i);
        }
        out.sort_by_key(|&i| t.versions[i].row_id);
        Ok(out)
    }

    fn update(&mut self, u: &Update) -> Result<usize> {
        let t = self.db.table(&u.table)?;
        if t.insert_only {
            return Err(Error::InsertOnlyViolation(t.name.clone()));
        }
        let idx = self.matching(&u.table, u.selection.as_ref())?;
        let columns = table_columns(t, &t.name);
        let mut changes = Vec::new();
        {
            let ev = self.evaluator();
            for &i in &idx {
                let old = &t.versions[i].values;
                let scope = Scope::new(&columns, old, None);
                let new = assign(&ev, t, old, &u.assignments, &scope)?;
                changes.push((i, new));
            }
        }
        self.apply_updates(&u.table, changes)
    }

    /// Replaces versions with new images keeping their row ids.
    pub(crate) fn apply_updates(&mut self, table: &str, changes: Vec<(usize, Vec<Value>)>) -> Result<usize> {
        let base = self.db.base_date();
        let mut conformed = Vec::new();
        {
            let ev = self.evaluator();
            let t = self.db.table(table)?;
            if !changes.is_empty() && t.insert_only {
                return Err(Error::InsertOnlyViolation(t.name.clone()));
            }
            for (i, new) in changes {
                let new = t.conform(new, base)?;
                let old = &t.versions[i].values;
                check_finalize_mutation(&ev, t, old)?;
                check_finalize_mutation(&ev, t, &new)?;
                check_increasing_removal(t, old)?;
                check_increasing_insert(t, &new)?;
                conformed.push((i, new));
            }
        }
        let now = self.db.now();
        let op = self.next_op();
        let t = self.db.table_mut(table)?;
        let n = conformed.len();
        for (i, new) in conformed {
            let row_id = t.versions[i].row_id;
            t.mark_deleted(i, now, op, true);
            observe_increasing(t, &new);
            t.push_version(row_id, new, now, op, true);
        }
        Ok(n)
    }

    fn delete(&mut self, d: &Delete) -> Result<usize> {
        let t = self.db.table(&d.table)?;
        if t.insert_only {
            return Err(Error::InsertOnlyViolation(t.name.clone()));
        }
        let idx = self.matching(&d.table, d.selection.as_ref())?;
        self.apply_deletes(&d.table, idx)
    }

    pub(crate) fn apply_deletes(&mut self, table: &str, idx: Vec<usize>) -> Result<usize> {
        {
            let ev = self.evaluator();
            let t = self.db.table(table)?;
            if !idx.is_empty() && t.insert_only {
                return Err(Error::InsertOnlyViolation(t.name.clone()));
            }
            for &i in &idx {
                check_finalize_mutation(&ev, t, &t.versions[i].values)?;
                check_increasing_removal(t, &t.versions[i].values)?;
            }
        }
        let now = self.db.now();
        let op = self.next_op();
        let t = self.db.table_mut(table)?;
        for &i in &idx {
            t.mark_deleted(i, now, op, false);
        }
        Ok(idx.len())
    }

    // ---- lifecycle passes ----

    pub fn expire_pass(&mut self) -> Result<usize> {
        if self.txn.is_some() {
            return Err(Error::TxnOpen("an expiration pass".into()));
        }
        lifecycle::expire_pass(&mut self.db)
    }

    pub fn purge_pass(&mut self) -> Result<usize> {
        if self.txn.is_some() {
            return Err(Error::TxnOpen("a purge pass".into()));
        }
        Ok(lifecycle::purge_pass(&mut self.db))
    }

    pub fn inject_fault(&mut self, task: &str, times: u32) {
        *self.faults.entry(task.to_ascii_lowercase()).or_default() += times;
    }

    // ---- catalog ----

    pub fn catalog(&self) -> Catalog {
        let tables = self
            .db
            .tables
            .values()
            .map(|t| TableEntry {
                name: t.name.clone(),
                columns: t.columns.iter().map(|c| format!("{} {:?}", c.name, c.ty)).collect(),
                insert_only: t.insert_only,
                increasing: t
                    .increasing
                    .iter()
                    .map(|c| {
                        let mut s = format!(
                            "{}INCREASING {}",
                            if c.strict { "STRICTLY " } else { "" },
                            t.columns[c.column].name
                        );
                        if let Some(g) = &c.grace {
                            s.push_str(&format!(" GRACE {g}"));
                        }
                        if let Some(m) = &c.c_max {
                            s.push_str(&format!(" (c_max {m})"));
                        }
                        s
                    })
                    .collect(),
                finalize: t.finalize.as_ref().map(|p| p.text.clone()),
                expire: t.expire.as_ref().map(|p| p.text.clone()),
                live_rows: t.rows(View::Dirty).count(),
                expired_rows: t.versions.iter().filter(|v| v.expired).count(),
                purge_horizons: t.horizons.len(),
            })
            .collect();
        let tasks = self
            .tasks
            .iter()
            .map(|t| TaskEntry {
                name: t.name.clone(),
                state: t.state.to_string(),
                last_execution: t.last_time.to_string(),
                last_seq: t.last_seq,
                definition: t.to_string(),
            })
            .collect();
        let cursors = self
            .cursors
            .values()
            .map(|c| CursorEntry {
                name: c.name.clone(),
                state: format!("{:?}", c.state).to_ascii_uppercase(),
                resume_seq: c.resume,
                query: c.query.to_string(),
            })
            .collect();
        Catalog { now: self.db.now().to_string(), commit_seq: self.db.clock.seq(), tables, tasks, cursors }
    }
}

#[derive(Debug, Serialize)]
pub struct Catalog {
    pub now: String,
    pub commit_seq: u64,
    pub tables: Vec<TableEntry>,
    pub tasks: Vec<TaskEntry>,
    pub cursors: Vec<CursorEntry>,
}

#[derive(Debug, Serialize)]
pub struct TableEntry {
    pub name: String,
    pub columns: Vec<String>,
    pub insert_only: bool,
    pub increasing: Vec<String>,
    pub finalize: Option<String>,
    pub expire: Option<String>,
    pub live_rows: usize,
    pub expired_rows: usize,
    pub purge_horizons: usize,
}

#[derive(Debug, Serialize)]
pub struct TaskEntry {
    pub name: String,
    pub state: String,
    pub last_execution: String,
    pub last_seq: u64,
    pub definition: String,
}

#[derive(Debug, Serialize)]
pub struct CursorEntry {
    pub name: String,
    pub state: String,
    pub resume_seq: u64,
    pub query: String,
}

fn aborts_transaction(e: &Error) -> bool {
    matches!(
        e,
        Error::InsertOnlyViolation(_)
            | Error::IncreasingViolation(_)
            | Error::FinalizedRowInsert { .. }
            | Error::FinalizedRowMutation { .. }
    )
}

/// Errors that a task's error clause may absorb row by row.
pub(crate) fn row_level(e: &Error) -> bool {
    matches!(
        e,
        Error::SchemaMismatch(_)
            | Error::IncreasingViolation(_)
            | Error::FinalizedRowInsert { .. }
            | Error::FinalizedRowMutation { .. }
            | Error::TypeError(_)
            | Error::ApplyConflict(_)
            | Error::DivisionByZero
    )
}

pub(crate) fn assign(
    ev: &Evaluator,
    t: &TableState,
    old: &[Value],
    assignments: &[Assignment],
    scope: &Scope,
) -> Result<Vec<Value>> {
    let mut new = old.to_vec();
    for a in assignments {
        let i = t
            .column_index(&a.column)
            .ok_or_else(|| Error::UnresolvedName(format!("unknown column {} of {}", a.column, t.name)))?;
        new[i] = ev.eval_expr(&a.value, scope, &Env::default())?;
    }
    Ok(new)
}

fn increasing_error(table: &str, column: &str, v: &Value, c: &IncreasingConstraint) -> Error {
    let floor = c.floor().ok().flatten().map_or_else(|| "none".to_string(), |f| f.to_string());
    let op = if c.strict { ">" } else { ">=" };
    Error::IncreasingViolation(format!(
        "{table}.{column}: value {v} violates INCREASING (must be {op} {floor})"
    ))
}

fn check_increasing_insert(t: &TableState, row: &[Value]) -> Result<()> {
    for c in t.increasing.iter().filter(|c| c.enabled && !c.deferred) {
        let v = &row[c.column];
        if !c.admits(v)? {
            return Err(increasing_error(&t.name, &t.columns[c.column].name, v, c));
        }
    }
    Ok(())
}

/// Delete rule: only rows at the current maximum may go (none when strict).
fn check_increasing_removal(t: &TableState, row: &[Value]) -> Result<()> {
    for c in t.increasing.iter().filter(|c| c.enabled) {
        let (v, Some(max)) = (&row[c.column], &c.c_max) else { continue };
        if v.is_null() {
            continue;
        }
        let ok = match v.sql_cmp(max)? {
            Some(std::cmp::Ordering::Greater) => true,
            Some(std::cmp::Ordering::Equal) => !c.strict,
            _ => false,
        };
        if !ok {
            let op = if c.strict { ">" } else { ">=" };
            return Err(Error::IncreasingViolation(format!(
                "{}.{}: cannot remove a row with value {v} (must be {op} c_max {max}); use expiration",
                t.name, t.columns[c.column].name
            )));
        }
    }
    Ok(())
}

fn observe_increasing(t: &mut TableState, row: &[Value]) {
    for c in &mut t.increasing {
        if c.deferred {
            c.pending.push(row[c.column].clone());
        } else {
            c.observe(&row[c.column]);
        }
    }
}

fn is_final_row(ev: &Evaluator, t: &TableState, row: &[Value]) -> Result<bool> {
    let Some(p) = &t.finalize else { return Ok(false) };
    let columns = table_columns(t, &t.name);
    let scope = Scope::new(&columns, row, None);
    Ok(truth(&ev.eval_expr(&p.expr, &scope, &Env::default())?)? == Some(true))
}

fn check_finalize_insert(ev: &Evaluator, t: &TableState, row: &[Value]) -> Result<()> {
    if is_final_row(ev, t, row)? {
        return Err(Error::FinalizedRowInsert { table: t.name.clone() });
    }
    Ok(())
}

fn check_finalize_mutation(ev: &Evaluator, t: &TableState, row: &[Value]) -> Result<()> {
    if is_final_row(ev, t, row)? {
        return Err(Error::FinalizedRowMutation { table: t.name.clone() });
    }
    Ok(())
}

impl Engine {
    /// Runs ON COMMIT tasks touched by a commit, then queues asynchronous ones.
    fn after_commit(&mut self, touched: &BTreeSet<String>) -> Result<()> {
        if touched.is_empty() {
            return Ok(());
        }
        if self.running.len() >= CASCADE_LIMIT {
            return Err(Error::TaskFailed {
                task: self.running.last().cloned().unwrap_or_default(),
                reason: format!("task cascade deeper than {CASCADE_LIMIT}"),
            });
        }
        let mut sync = Vec::new();
        for t in &self.tasks {
            if !t.is_active() || self.running.iter().any(|r| r.eq_ignore_ascii_case(&t.name)) {
                continue;
            }
            match t.commit_trigger(touched) {
                Some(false) => sync.push(t.name.clone()),
                Some(true) => {
                    if !self.async_queue.iter().any(|n| n.eq_ignore_ascii_case(&t.name)) {
                        self.async_queue.push(t.name.clone());
                    }
                }
                None => {}
            }
        }
        for name in sync {
            self.run_task(&name, true)?;
        }
        Ok(())
    }
}
