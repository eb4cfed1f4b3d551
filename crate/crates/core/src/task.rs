//! Continuous DML tasks: scheduling, execution with error policies, the
//! MERGE and APPLY CHANGES actions, and the PAUSE/RESUME/STOP state machine.

use std::collections::BTreeSet;
use std::fmt;

use crate::changes::Action;
use crate::engine::{assign, Applied, Engine, Rejects};
use crate::error::{Error, Result};
use crate::eval::{row_action, table_columns, truth, Env, Relation, Scope};
use crate::sql::walk::base_tables;
use crate::sql::{
    CreateTask, Merge, Query, RejectLimit, ScheduleEnd, Select, SetExpr, Statement, TableFactor, TableRef, TaskAction,
    TaskVerb, Trigger,
};
use crate::storage::{Database, View};
use crate::value::{Interval, Timestamp, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskState {
    Active,
    Paused,
    Stopped,
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskState::Active => "ACTIVE",
            TaskState::Paused => "PAUSED",
            TaskState::Stopped => "STOPPED",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub def: CreateTask,
    pub state: TaskState,
    /// Commit seq the next execution reads changes from.
    pub last_seq: u64,
    pub last_time: Timestamp,
    /// Base tables of the source, lower case.
    pub deps: BTreeSet<String>,
    pub next_due: Option<Timestamp>,
    pub runs: u64,
}

impl Task {
    pub fn is_active(&self) -> bool {
        self.state == TaskState::Active
    }

    /// `Some(asynchronous)` when an ON COMMIT trigger matches the touched
    /// tables.
    pub fn commit_trigger(&self, touched: &BTreeSet<String>) -> Option<bool> {
        self.def.schedule.triggers.iter().find_map(|t| match t {
            Trigger::OnCommit { tables, asynchronous } => {
                let hit = if tables.is_empty() {
                    self.deps.iter().any(|d| touched.contains(d))
                } else {
                    tables.iter().any(|d| touched.contains(&Database::key(d)))
                };
                hit.then_some(*asynchronous)
            }
            _ => None,
        })
    }

    pub fn period(&self) -> Option<Interval> {
        self.def.schedule.triggers.iter().find_map(|t| match t {
            Trigger::Periodic { n, unit } => Some(Interval::of(*n, *unit)),
            _ => None,
        })
    }

    fn reject_limit(&self) -> u64 {
        match self.def.action.error_logging().and_then(|e| e.reject_limit.as_ref()) {
            Some(RejectLimit::Count(n)) => *n,
            Some(RejectLimit::Unlimited) => u64::MAX,
            None => 0,
        }
    }

    fn retry_limit(&self) -> u64 {
        self.def.action.error_logging().and_then(|e| e.retry_limit).unwrap_or(0)
    }
}

fn source_tables(action: &TaskAction) -> BTreeSet<String> {
    match action {
        TaskAction::Insert(i) => base_tables(&i.source),
        TaskAction::Merge(m) => base_tables(&factor_query(&m.source)),
        TaskAction::ApplyChanges { source, .. } => base_tables(source),
    }
}

fn factor_query(f: &TableFactor) -> Query {
    Query::from_body(SetExpr::Select(Box::new(Select {
        continuous: false,
        distinct: false,
        items: vec![crate::sql::SelectItem::Wildcard],
        from: vec![TableRef { factor: f.clone(), joins: vec![] }],
        selection: None,
        finalize: None,
        group_by: vec![],
        having: None,
    })))
}

impl Engine {
    fn task_index(&self, name: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    pub fn task(&self, name: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn create_task(&mut self, def: &CreateTask) -> Result<()> {
        if self.in_txn() {
            return Err(Error::TxnOpen("CREATE TASK".into()));
        }
        if self.task(&def.name).is_some() {
            return Err(Error::DuplicateTask(def.name.clone()));
        }
        let target = def.action.target();
        if !self.db.has_table(target) {
            return Err(Error::UnknownTarget(target.to_string()));
        }
        if let Some(into) = def.action.error_logging().and_then(|e| e.into.as_ref()) {
            if !self.db.has_table(into) {
                return Err(Error::UnknownTarget(into.clone()));
            }
        }
        if def.schedule.triggers.is_empty() {
            return Err(Error::Unsupported("a task schedule needs at least one trigger".into()));
        }
        let stamp = self.db.clock.commit();
        let mut task = Task {
            name: def.name.clone(),
            def: def.clone(),
            state: TaskState::Active,
            last_seq: if def.initial_snapshot { 0 } else { stamp.seq },
            last_time: stamp.time,
            deps: source_tables(&def.action),
            next_due: None,
            runs: 0,
        };
        task.next_due = task.period().map(|p| stamp.time.plus(p));
        self.tasks.push(task);
        Ok(())
    }

    pub fn alter_task(&mut self, name: &str, verb: TaskVerb) -> Result<()> {
        if self.in_txn() {
            return Err(Error::TxnOpen("ALTER TASK".into()));
        }
        let i = self.task_index(name)?;
        let from = self.tasks[i].state;
        let to = match verb {
            TaskVerb::Pause => TaskState::Paused,
            TaskVerb::Resume => TaskState::Active,
            TaskVerb::Stop => TaskState::Stopped,
        };
        if from == TaskState::Stopped && to == TaskState::Paused {
            return Err(Error::IllegalTransition { task: self.tasks[i].name.clone(), from: from.to_string(), to: to.to_string() });
        }
        let stamp = self.db.clock.commit();
        let t = &mut self.tasks[i];
        if from == TaskState::Stopped && to == TaskState::Active {
            // the stopped interval is skipped
            t.last_seq = stamp.seq;
            t.last_time = stamp.time;
            t.next_due = t.period().map(|p| stamp.time.plus(p));
        }
        t.state = to;
        Ok(())
    }

    pub fn drop_task(&mut self, name: &str) -> Result<()> {
        if self.in_txn() {
            return Err(Error::TxnOpen("DROP TASK".into()));
        }
        let i = self.task_index(name)?;
        self.db.clock.commit();
        let t = self.tasks.remove(i);
        self.async_queue.retain(|n| !n.eq_ignore_ascii_case(&t.name));
        Ok(())
    }

    pub fn execute_task(&mut self, name: &str) -> Result<()> {
        if self.in_txn() {
            return Err(Error::TxnOpen("EXECUTE TASK".into()));
        }
        let i = self.task_index(name)?;
        if !self.tasks[i].is_active() {
            return Err(Error::IllegalTransition {
                task: self.tasks[i].name.clone(),
                from: self.tasks[i].state.to_string(),
                to: "EXECUTING".into(),
            });
        }
        let name = self.tasks[i].name.clone();
        self.run_task(&name, true)?;
        self.poll_subscriptions(true);
        Ok(())
    }

    /// Advances the clock to `to`, running periodic tasks at each due time
    /// and queued asynchronous tasks at the first step.
    pub(crate) fn run_ticks(&mut self, to: Timestamp) -> Result<()> {
        let mut drained = false;
        loop {
            let due = self
                .tasks
                .iter()
                .filter(|t| t.is_active())
                .filter_map(|t| t.next_due.filter(|d| *d <= to).map(|d| (d, t.name.clone())))
                .min_by_key(|(d, _)| *d);
            let Some((at, name)) = due else { break };
            self.db.clock.advance(at.max(self.db.now()))?;
            if !drained {
                self.drain_async();
                drained = true;
            }
            self.stop_expired_tasks()?;
            let Some(i) = self.tasks.iter().position(|t| t.name == name) else { continue };
            if self.tasks[i].is_active() {
                self.run_task(&name, false)?;
            }
            if let Some(i) = self.tasks.iter().position(|t| t.name == name) {
                let t = &mut self.tasks[i];
                if let Some(p) = t.period() {
                    t.next_due = Some(at.plus(p));
                }
            }
        }
        self.db.clock.advance(to)?;
        if !drained {
            self.drain_async();
        }
        self.stop_expired_tasks()
    }

    fn drain_async(&mut self) {
        for name in std::mem::take(&mut self.async_queue) {
            if self.task(&name).is_some_and(|t| t.is_active()) {
                // asynchronous failures are reported, never propagated
                let _ = self.run_task(&name, false);
            }
        }
    }

    fn stop_expired_tasks(&mut self) -> Result<()> {
        let now = self.db.now();
        let base = self.db.base_date();
        let mut stop = Vec::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if let (TaskState::Active, Some(ScheduleEnd::At(e))) = (t.state, &t.def.schedule.end) {
                let v = self.evaluator().eval_expr(e, &Scope::empty(), &Env::default())?;
                let at = v
                    .to_timestamp(Some(base))
                    .ok_or_else(|| Error::TypeError(format!("task end time must be a timestamp, got {v}")))?;
                if now >= at {
                    stop.push(i);
                }
            }
        }
        for i in stop {
            self.tasks[i].state = TaskState::Stopped;
            let msg = format!("task {}: end time reached, STOPPED", self.tasks[i].name);
            self.event(msg);
        }
        Ok(())
    }

    /// One execution of a task including retries. With `propagate`, a final
    /// failure is returned as an error; otherwise it is only reported.
    pub(crate) fn run_task(&mut self, name: &str, propagate: bool) -> Result<()> {
        let i = self.task_index(name)?;
        let task = self.tasks[i].clone();
        let (from, to) = (task.last_seq, self.db.clock.seq());
        let retries = task.retry_limit();
        self.running.push(task.name.clone());
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match self.attempt(&task, from) {
                Ok(r) => break Ok(r),
                Err((e, rejects)) if attempts > retries => break Err((e, rejects)),
                Err(_) => {}
            }
        };
        self.running.pop();
        match outcome {
            Ok((applied, rejected)) => {
                if let Ok(i) = self.task_index(&task.name) {
                    let t = &mut self.tasks[i];
                    t.last_seq = to;
                    t.last_time = self.db.now();
                    t.runs += 1;
                    if let Some(ScheduleEnd::AfterCount(n)) = t.def.schedule.end {
                        if t.runs >= n {
                            t.state = TaskState::Stopped;
                        }
                    }
                }
                let mut msg = format!(
                    "task {}: applied I/U/D = {}/{}/{}",
                    task.name, applied.inserted, applied.updated, applied.deleted
                );
                if rejected > 0 {
                    msg.push_str(&format!(", rejected {rejected}"));
                }
                self.event(msg);
                Ok(())
            }
            Err((e, rejects)) => {
                let reason = match &e {
                    Error::TaskFailed { reason, .. } => reason.clone(),
                    other => other.to_string(),
                };
                self.event(format!("task {}: failed after {attempts} attempt(s): {reason}", task.name));
                if !rejects.rows.is_empty() && !self.in_txn() {
                    // the log outlives the failed execution
                    let logged = self.begin().and_then(|_| self.log_rejects(&task, &rejects));
                    match logged {
                        Ok(()) if self.in_txn() => {
                            let _ = self.commit();
                        }
                        _ => self.rollback(),
                    }
                }
                if propagate {
                    Err(Error::TaskFailed { task: task.name.clone(), reason })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// A single attempt inside its own transaction.
    #[allow(clippy::type_complexity)]
    fn attempt(&mut self, task: &Task, from: u64) -> std::result::Result<(Applied, usize), (Error, Rejects)> {
        if let Some(n) = self.faults.get_mut(&task.name.to_ascii_lowercase()) {
            if *n > 0 {
                *n -= 1;
                let e = Error::TaskFailed { task: task.name.clone(), reason: "injected fault".into() };
                return Err((e, Rejects::default()));
            }
        }
        self.begin().map_err(|e| (e, Rejects::default()))?;
        let saved = self.task_resume.replace(from);
        let mut rejects = Rejects::default();
        let applied = self.apply_action(&task.def.action, &mut rejects);
        self.task_resume = saved;
        let limit = task.reject_limit();
        let applied = match applied {
            Ok(_) if rejects.rows.len() as u64 > limit => Err(Error::TaskFailed {
                task: task.name.clone(),
                reason: format!("{} rejected row(s) exceed REJECT LIMIT {limit}", rejects.rows.len()),
            }),
            other => other,
        };
        let applied = match applied.and_then(|a| self.log_rejects(task, &rejects).map(|_| a)) {
            Ok(a) => a,
            Err(e) => {
                self.rollback();
                return Err((e, rejects));
            }
        };
        let dirty = self.db.tables.values().any(|t| t.has_pending());
        if dirty {
            self.commit().map_err(|e| (e, Rejects::default()))?;
        } else {
            self.rollback();
        }
        Ok((applied, rejects.rows.len()))
    }

    fn apply_action(&mut self, action: &TaskAction, rejects: &mut Rejects) -> Result<Applied> {
        match action {
            TaskAction::Insert(i) => {
                let n = self.insert(i, Some(rejects))?;
                Ok(Applied { inserted: n, ..Applied::default() })
            }
            TaskAction::Merge(m) => {
                let source = self.evaluator().eval_factor(&m.source, &Env::default(), None, None)?;
                self.merge_rows(m, source, Some(rejects))
            }
            TaskAction::ApplyChanges { source, target, .. } => {
                let rel = self.evaluator().query(source)?;
                self.apply_changes(target, rel, Some(rejects))
            }
        }
    }

    fn log_rejects(&mut self, task: &Task, rejects: &Rejects) -> Result<()> {
        let Some(policy) = task.def.action.error_logging() else { return Ok(()) };
        let Some(into) = &policy.into else { return Ok(()) };
        if rejects.rows.is_empty() {
            return Ok(());
        }
        let tag = match &policy.tag {
            Some(e) => self.evaluator().eval_expr(e, &Scope::empty(), &Env::default())?,
            None => Value::Null,
        };
        let now = Value::Timestamp(self.db.now());
        let t = self.db.table(into)?;
        let rows = rejects
            .rows
            .iter()
            .map(|(row, err)| {
                t.columns
                    .iter()
                    .map(|c| match c.name.to_ascii_lowercase().as_str() {
                        "task" | "task_name" => Value::text(task.name.clone()),
                        "tag" => tag.clone(),
                        "reason" | "error" | "message" => Value::text(err.to_string()),
                        "kind" => Value::text(err.kind()),
                        "row" | "payload" | "data" => Value::text(format!(
                            "({})",
                            row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
                        )),
                        "time" | "ts" | "logged_at" => now.clone(),
                        _ => Value::Null,
                    })
                    .collect()
            })
            .collect();
        self.insert_rows(into, rows, None)?;
        Ok(())
    }

    /// MERGE applied source row by source row against the current target.
    pub(crate) fn merge_rows(&mut self, m: &Merge, source: Relation, mut rejects: Option<&mut Rejects>) -> Result<Applied> {
        let mut total = Applied::default();
        for srow in &source.rows {
            match self.merge_one(m, &source, srow) {
                Ok(a) => {
                    total.inserted += a.inserted;
                    total.updated += a.updated;
                    total.deleted += a.deleted;
                }
                Err(e) => match rejects.as_deref_mut() {
                    Some(rj) if crate::engine::row_level(&e) => rj.rows.push((srow.clone(), e)),
                    _ => return Err(e),
                },
            }
        }
        Ok(total)
    }

    fn merge_one(&mut self, m: &Merge, source: &Relation, srow: &[Value]) -> Result<Applied> {
        let qualifier = m.target_alias.as_deref().unwrap_or(&m.target);
        let mut updates = Vec::new();
        let mut deletes = Vec::new();
        let mut insert = None;
        {
            let ev = self.evaluator();
            let t = self.db.table(&m.target)?;
            let tcols = table_columns(t, qualifier);
            let src = Scope::new(&source.columns, srow, None);
            let env = Env::default();
            let mut matched = Vec::new();
            for (i, v) in t.versions.iter().enumerate() {
                if !v.visible(View::Dirty) {
                    continue;
                }
                let scope = Scope::new(&tcols, &v.values, Some(&src));
                if truth(&ev.eval_expr(&m.on, &scope, &env)?)? == Some(true) {
                    matched.push(i);
                }
            }
            if !matched.is_empty() {
                if let Some(mm) = &m.matched {
                    for i in matched {
                        let old = &t.versions[i].values;
                        let new = assign(&ev, t, old, &mm.assignments, &Scope::new(&tcols, old, Some(&src)))?;
                        let delete = match &mm.delete_where {
                            Some(p) => truth(&ev.eval_expr(p, &Scope::new(&tcols, &new, Some(&src)), &env)?)? == Some(true),
                            None => false,
                        };
                        if delete {
                            deletes.push(i);
                        } else {
                            updates.push((i, new));
                        }
                    }
                }
            } else if let Some(ni) = &m.not_matched {
                let mut row = vec![Value::Null; t.columns.len()];
                let positions: Vec<usize> = if ni.columns.is_empty() {
                    (0..t.columns.len()).collect()
                } else {
                    ni.columns
                        .iter()
                        .map(|(_, c)| {
                            t.column_index(c)
                                .ok_or_else(|| Error::UnresolvedName(format!("unknown column {c} of {}", t.name)))
                        })
                        .collect::<Result<_>>()?
                };
                if positions.len() != ni.values.len() {
                    return Err(Error::SchemaMismatch(format!(
                        "MERGE insert names {} columns but supplies {} values",
                        positions.len(),
                        ni.values.len()
                    )));
                }
                for (p, e) in positions.into_iter().zip(&ni.values) {
                    row[p] = ev.eval_expr(e, &src, &env)?;
                }
                insert = Some(row);
            }
        }
        let mut a = Applied::default();
        if !updates.is_empty() {
            a.updated = self.apply_updates(&m.target, updates)?;
        }
        if !deletes.is_empty() {
            a.deleted = self.apply_deletes(&m.target, deletes)?;
        }
        if let Some(row) = insert {
            a.inserted = self.insert_rows(&m.target, vec![row], None)?;
        }
        Ok(a)
    }

    /// Applies change records to `target` in (RowID, commit) order.
    pub fn apply_changes(&mut self, target: &str, rel: Relation, mut rejects: Option<&mut Rejects>) -> Result<Applied> {
        let action_col = rel.find_meta("Action");
        let rowid_col = rel.find_meta("RowID");
        let seq_col = rel.find_meta("CommitSeq");
        let t = self.db.table(target)?;
        let rowid_target = t.column_index("RowID$");
        let mapping: Vec<Option<MapFrom>> = t
            .columns
            .iter()
            .map(|c| {
                if c.name.eq_ignore_ascii_case("RowID$") {
                    rowid_col.map(MapFrom::Column)
                } else if c.name.eq_ignore_ascii_case("delta$") {
                    Some(MapFrom::ActionName)
                } else {
                    rel.columns
                        .iter()
                        .position(|rc| !rc.meta && !rc.hidden && rc.name.eq_ignore_ascii_case(&c.name))
                        .map(MapFrom::Column)
                }
            })
            .collect();
        let mut records: Vec<(&Vec<Value>, Action)> = rel
            .rows
            .iter()
            .map(|r| (r, action_col.and_then(|i| row_action(&r[i])).unwrap_or(Action::Insert)))
            .collect();
        let key = |r: &Vec<Value>| {
            (
                rowid_col.map(|i| r[i].clone()).unwrap_or(Value::Null),
                seq_col.map(|i| r[i].clone()).unwrap_or(Value::Null),
            )
        };
        records.sort_by(|(a, x), (b, y)| key(a).cmp(&key(b)).then(x.cmp(y)));

        let mut total = Applied::default();
        for (r, action) in records {
            let image: Vec<Value> = mapping
                .iter()
                .map(|m| match m {
                    Some(MapFrom::Column(i)) => r[*i].clone(),
                    Some(MapFrom::ActionName) => Value::text(action.name()),
                    None => Value::Null,
                })
                .collect();
            let result = self.apply_record(target, action, image, rowid_target, &mapping);
            match result {
                Ok(a) => {
                    total.inserted += a.inserted;
                    total.updated += a.updated;
                    total.deleted += a.deleted;
                }
                Err(e) => match rejects.as_deref_mut() {
                    Some(rj) if crate::engine::row_level(&e) => rj.rows.push((r.clone(), e)),
                    _ => return Err(e),
                },
            }
        }
        Ok(total)
    }

    fn apply_record(
        &mut self,
        target: &str,
        action: Action,
        image: Vec<Value>,
        rowid_target: Option<usize>,
        mapping: &[Option<MapFrom>],
    ) -> Result<Applied> {
        let found = {
            let t = self.db.table(target)?;
            let same = |v: &[Value]| match rowid_target {
                Some(c) => v[c] == image[c],
                None => mapping
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| matches!(m, Some(MapFrom::Column(_))))
                    .all(|(i, _)| v[i] == image[i]),
            };
            let mut hits: Vec<(u64, usize)> = t
                .versions
                .iter()
                .enumerate()
                .filter(|(_, v)| v.visible(View::Dirty) && same(&v.values))
                .map(|(i, v)| (v.row_id, i))
                .collect();
            hits.sort();
            hits.first().map(|&(_, i)| i)
        };
        let mut a = Applied::default();
        match (action, found) {
            (Action::Delete, Some(i)) => a.deleted = self.apply_deletes(target, vec![i])?,
            (Action::Delete, None) => {
                return Err(Error::ApplyConflict(format!("no row of {target} matches a DELETE change")));
            }
            // matched by RowID$; by payload the image would only find its
            // own duplicates, the before-image went with the paired DELETE
            (Action::Update, Some(i)) if rowid_target.is_some() => {
                a.updated = self.apply_updates(target, vec![(i, image)])?
            }
            (Action::Update, _) | (Action::Insert, _) => a.inserted = self.insert_rows(target, vec![image], None)?,
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy)]
enum MapFrom {
    Column(usize),
    ActionName,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Statement::CreateTask(self.def.clone()))
    }
}
