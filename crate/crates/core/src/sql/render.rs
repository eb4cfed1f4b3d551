//! Canonical text for syntax trees. Output is single-line, keywords upper
//! case, and parses back to an equal tree.

use std::fmt::{self, Display, Formatter, Write};

use crate::sql::ast::*;
use crate::sql::parser::is_reserved;

pub fn ident(name: &str) -> String {
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$');
    if plain && !is_reserved(name) && !matches!(name.to_ascii_uppercase().as_str(), "CASE") {
        name.to_string()
    } else {
        format!("\"{name}\"")
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn join<T: Display>(items: &[T], sep: &str) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(sep)
}

impl Display for Statement {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Query(q) => write!(f, "{q}")?,
            Statement::Subscribe { schedule, query } => {
                f.write_str("SUBSCRIBE ")?;
                if let Some(s) = schedule {
                    write!(f, "{s} ")?;
                }
                write!(f, "TO {query}")?;
            }
            Statement::DeclareCursor { name, with_return, query } => {
                write!(f, "CREATE CONTINUOUS CURSOR {}", ident(name))?;
                match with_return {
                    Some(true) => f.write_str(" WITH RETURN")?,
                    Some(false) => f.write_str(" WITHOUT RETURN")?,
                    None => {}
                }
                write!(f, " AS {query}")?;
            }
            Statement::Open(c) => write!(f, "OPEN {}", ident(c))?,
            Statement::Fetch { cursor, count } => {
                f.write_str("FETCH ")?;
                if let Some(n) = count {
                    write!(f, "{n} ")?;
                }
                write!(f, "FROM {}", ident(cursor))?;
            }
            Statement::Close(c) => write!(f, "CLOSE {}", ident(c))?,
            Statement::Insert(i) => write!(f, "{i}")?,
            Statement::Update(u) => {
                write!(f, "UPDATE {} SET {}", ident(&u.table), join(&u.assignments, ", "))?;
                if let Some(w) = &u.selection {
                    write!(f, " WHERE {w}")?;
                }
            }
            Statement::Delete(d) => {
                write!(f, "DELETE FROM {}", ident(&d.table))?;
                if let Some(w) = &d.selection {
                    write!(f, " WHERE {w}")?;
                }
            }
            Statement::Merge(m) => write!(f, "{m}")?,
            Statement::CreateTable(ct) => write!(f, "{ct}")?,
            Statement::DropTable(t) => write!(f, "DROP TABLE {}", ident(t))?,
            Statement::AlterTable { table, action } => {
                write!(f, "ALTER TABLE {} ", ident(table))?;
                match action {
                    AlterTableAction::InsertOnly => f.write_str("INSERT ONLY")?,
                    AlterTableAction::DropInsertOnly => f.write_str("DROP INSERT ONLY")?,
                    AlterTableAction::Increasing(d) => write!(f, "{d}")?,
                    AlterTableAction::Finalize(e) => write!(f, "FINALIZE WHERE {e}")?,
                    AlterTableAction::Expire { verb, predicate } => {
                        let v = match verb {
                            ExpireVerb::Add => "ADD",
                            ExpireVerb::Modify => "MODIFY",
                        };
                        write!(f, "{v} EXPIRE WHERE {predicate}")?
                    }
                    AlterTableAction::DropExpire => f.write_str("DROP EXPIRE")?,
                }
            }
            Statement::CreateTask(t) => write!(f, "{t}")?,
            Statement::AlterTask { name, verb } => {
                let v = match verb {
                    TaskVerb::Pause => "PAUSE",
                    TaskVerb::Resume => "RESUME",
                    TaskVerb::Stop => "STOP",
                };
                write!(f, "ALTER TASK {} {v}", ident(name))?
            }
            Statement::DropTask(t) => write!(f, "DROP TASK {}", ident(t))?,
            Statement::ExecuteTask(t) => write!(f, "EXECUTE TASK {}", ident(t))?,
            Statement::Begin => f.write_str("BEGIN")?,
            Statement::Commit => f.write_str("COMMIT")?,
            Statement::Rollback => f.write_str("ROLLBACK")?,
            Statement::Set { name, value } => write!(f, "SET {} = {}", ident(name), quote(value))?,
        }
        f.write_str(";")
    }
}

impl Display for Insert {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "INSERT INTO {}", ident(&self.table))?;
        if !self.columns.is_empty() {
            let cols: Vec<String> = self.columns.iter().map(|c| ident(c)).collect();
            write!(f, " ({})", cols.join(", "))?;
        }
        write!(f, " {}", self.source)?;
        if let Some(el) = &self.error_logging {
            write!(f, " {el}")?;
        }
        Ok(())
    }
}

impl Display for Assignment {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if let Some(q) = &self.qualifier {
            write!(f, "{}.", ident(q))?;
        }
        write!(f, "{} = {}", ident(&self.column), self.value)
    }
}

impl Display for Merge {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "MERGE INTO {}", ident(&self.target))?;
        if let Some(a) = &self.target_alias {
            write!(f, " {}", ident(a))?;
        }
        write!(f, " USING {} ON {}", self.source, self.on)?;
        if let Some(m) = &self.matched {
            write!(f, " WHEN MATCHED THEN UPDATE SET {}", join(&m.assignments, ", "))?;
            if let Some(d) = &m.delete_where {
                write!(f, " DELETE WHERE {d}")?;
            }
        }
        if let Some(n) = &self.not_matched {
            f.write_str(" WHEN NOT MATCHED THEN INSERT")?;
            if !n.columns.is_empty() {
                let cols: Vec<String> = n
                    .columns
                    .iter()
                    .map(|(q, c)| match q {
                        Some(q) => format!("{}.{}", ident(q), ident(c)),
                        None => ident(c),
                    })
                    .collect();
                write!(f, " ({})", cols.join(", "))?;
            }
            write!(f, " VALUES ({})", join(&n.values, ", "))?;
        }
        if let Some(el) = &self.error_logging {
            write!(f, " {el}")?;
        }
        Ok(())
    }
}

impl Display for ErrorLogging {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("LOG ERRORS")?;
        if let Some(t) = &self.into {
            write!(f, " INTO {}", ident(t))?;
            if let Some(tag) = &self.tag {
                write!(f, " ({tag})")?;
            }
        }
        match &self.reject_limit {
            Some(RejectLimit::Count(n)) => write!(f, " REJECT LIMIT {n}")?,
            Some(RejectLimit::Unlimited) => f.write_str(" REJECT LIMIT UNLIMITED")?,
            None => {}
        }
        if let Some(n) = self.retry_limit {
            write!(f, " RETRY LIMIT {n}")?;
        }
        Ok(())
    }
}

impl Display for CreateTable {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "CREATE TABLE {} (", ident(&self.name))?;
        let mut parts: Vec<String> = self
            .columns
            .iter()
            .map(|c| {
                let mut s = format!("{} {}", ident(&c.name), c.type_name);
                if !c.type_args.is_empty() {
                    let a: Vec<String> = c.type_args.iter().map(|n| n.to_string()).collect();
                    let _ = write!(s, "({})", a.join(", "));
                }
                s
            })
            .collect();
        parts.extend(self.increasing.iter().map(|d| d.to_string()));
        write!(f, "{})", parts.join(", "))?;
        if self.insert_only {
            f.write_str(" INSERT ONLY")?;
        }
        if let Some(e) = &self.expire {
            write!(f, " EXPIRE WHERE {e}")?;
        }
        Ok(())
    }
}

impl Display for IncreasingDef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("CONSTRAINT ")?;
        if self.strict {
            f.write_str("STRICTLY ")?;
        }
        write!(f, "INCREASING {}", ident(&self.column))?;
        if let Some(g) = &self.grace {
            write!(f, " GRACE {g}")?;
        }
        match self.enabled {
            Some(true) => f.write_str(" ENABLED")?,
            Some(false) => f.write_str(" DISABLED")?,
            None => {}
        }
        match self.deferred {
            Some(true) => f.write_str(" DEFERRED")?,
            Some(false) => f.write_str(" IMMEDIATE")?,
            None => {}
        }
        match self.rely {
            Some(true) => f.write_str(" RELY")?,
            Some(false) => f.write_str(" NORELY")?,
            None => {}
        }
        Ok(())
    }
}

impl Display for CreateTask {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("CREATE ")?;
        if self.continuous {
            f.write_str("CONTINUOUS ")?;
        }
        write!(f, "TASK {} {}", ident(&self.name), self.schedule)?;
        if self.initial_snapshot {
            f.write_str(" WITH INITIAL SNAPSHOT")?;
        }
        f.write_str(" AS ")?;
        match &self.action {
            TaskAction::Insert(i) => write!(f, "{i}"),
            TaskAction::Merge(m) => write!(f, "{m}"),
            TaskAction::ApplyChanges { source, target, error_logging } => {
                write!(f, "APPLY CHANGES USING {source} TO {}", ident(target))?;
                if let Some(el) = error_logging {
                    write!(f, " {el}")?;
                }
                Ok(())
            }
        }
    }
}

impl Display for Schedule {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.triggers.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(" "))?;
        match &self.end {
            Some(ScheduleEnd::AfterCount(n)) => write!(f, " END AFTER {n}"),
            Some(ScheduleEnd::At(e)) => write!(f, " END AT {e}"),
            None => Ok(()),
        }
    }
}

impl Display for Trigger {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::OnCommit { tables, asynchronous } => {
                f.write_str("ON COMMIT")?;
                if !tables.is_empty() {
                    let t: Vec<String> = tables.iter().map(|t| ident(t)).collect();
                    write!(f, " ON {}", t.join(", "))?;
                }
                if *asynchronous {
                    f.write_str(" ASYNCHRONOUSLY")?;
                }
                Ok(())
            }
            Trigger::Periodic { n, unit } => write!(f, "PERIODIC EVERY {n} {}", unit.keyword()),
            Trigger::OnDemand => f.write_str("ON DEMAND"),
        }
    }
}

impl Display for Query {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if !self.with.is_empty() {
            let ctes: Vec<String> = self
                .with
                .iter()
                .map(|c| format!("{} AS ({})", ident(&c.name), c.query))
                .collect();
            write!(f, "WITH {} ", ctes.join(", "))?;
        }
        write!(f, "{}", self.body)?;
        if !self.order_by.is_empty() {
            let items: Vec<String> = self
                .order_by
                .iter()
                .map(|o| if o.desc { format!("{} DESC", o.expr) } else { o.expr.to_string() })
                .collect();
            write!(f, " ORDER BY {}", items.join(", "))?;
        }
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}

impl Display for SetExpr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Select(s) => write!(f, "{s}"),
            SetExpr::Values(rows) => {
                let r: Vec<String> = rows.iter().map(|r| format!("({})", join(r, ", "))).collect();
                write!(f, "VALUES {}", r.join(", "))
            }
            SetExpr::Query(q) => write!(f, "({q})"),
            SetExpr::Final(q) => write!(f, "FINAL({q})"),
            SetExpr::SetOp { op, all, left, right } => {
                let word = match op {
                    SetOp::Union => "UNION",
                    SetOp::Intersect => "INTERSECT",
                    SetOp::Except => "EXCEPT",
                };
                let all = if *all { " ALL" } else { "" };
                // UNION/EXCEPT are left-associative and bind looser than INTERSECT
                let wrap = |e: &SetExpr, right_side: bool| -> String {
                    let needs = match e {
                        SetExpr::SetOp { op: inner, .. } => {
                            let inner_tight = *inner == SetOp::Intersect;
                            let outer_tight = *op == SetOp::Intersect;
                            if right_side {
                                !inner_tight || outer_tight
                            } else {
                                outer_tight && !inner_tight
                            }
                        }
                        _ => false,
                    };
                    if needs {
                        format!("({e})")
                    } else {
                        e.to_string()
                    }
                };
                write!(f, "{} {word}{all} {}", wrap(left, false), wrap(right, true))
            }
        }
    }
}

impl Display for Select {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.continuous {
            f.write_str("CONTINUOUS ")?;
        }
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        f.write_str(&join(&self.items, ", "))?;
        if !self.from.is_empty() {
            write!(f, " FROM {}", join(&self.from, ", "))?;
        }
        if let Some(w) = &self.selection {
            write!(f, " WHERE {w}")?;
        }
        if let Some(w) = &self.finalize {
            write!(f, " FINALIZE WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            write!(f, " GROUP BY {}", join(&self.group_by, ", "))?;
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        Ok(())
    }
}

impl Display for SelectItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            SelectItem::Wildcard => f.write_str("*"),
            SelectItem::QualifiedWildcard(q) => write!(f, "{}.*", ident(q)),
            SelectItem::Expr { expr, alias: Some(a) } => write!(f, "{expr} AS {}", ident(a)),
            SelectItem::Expr { expr, alias: None } => write!(f, "{expr}"),
        }
    }
}

impl Display for TableRef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.factor)?;
        for j in &self.joins {
            let kw = match j.kind {
                JoinKind::Inner => "JOIN",
                JoinKind::Left => "LEFT JOIN",
                JoinKind::Cross => "CROSS JOIN",
                JoinKind::Natural => "NATURAL JOIN",
            };
            write!(f, " {kw} {}", j.factor)?;
            if let Some(on) = &j.on {
                write!(f, " ON {on}")?;
            }
        }
        Ok(())
    }
}

impl Display for TableFactor {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FactorKind::Table(t) => f.write_str(&ident(t))?,
            FactorKind::Derived(q) => write!(f, "({q})")?,
            FactorKind::Changes(c) => write!(f, "{c}")?,
            FactorKind::Function { name, args } => {
                write!(f, "TABLE({}({}))", ident(name), join(args, ", "))?
            }
            FactorKind::Nested(refs) => write!(f, "({})", join(refs, ", "))?,
        }
        if let Some(a) = &self.alias {
            write!(f, " {}", ident(a))?;
        }
        if let Some(w) = &self.window {
            write!(f, " {w}")?;
        }
        Ok(())
    }
}

impl Display for Changes {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("CHANGES(")?;
        match &self.source {
            ChangesSource::Table(t) => f.write_str(&ident(t))?,
            ChangesSource::Query(q) => write!(f, "{q}")?,
        }
        if let Some(s) = &self.start {
            write!(f, ", {s}")?;
        }
        if let Some(fmt_) = &self.format {
            write!(f, ", {}", quote(fmt_))?;
        }
        f.write_str(")")
    }
}

impl Display for WindowSpec {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("WINDOW (")?;
        let mut parts = Vec::new();
        if let Some(c) = &self.column {
            parts.push(ident(c));
        }
        if let Some(s) = &self.start {
            parts.push(format!("START WITH {s}"));
        }
        parts.push(format!("RANGE {}", self.range));
        if let Some(a) = &self.advance {
            parts.push(format!("ADVANCE {a}"));
        }
        if let Some(g) = &self.grace {
            parts.push(format!("GRACE {g}"));
        }
        if let Some((a, b)) = &self.bounds {
            parts.push(format!("BOUNDS ({}, {})", ident(a), ident(b)));
        }
        write!(f, "{})", parts.join(" "))
    }
}

impl Display for Literal {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("NULL"),
            Literal::Bool(true) => f.write_str("TRUE"),
            Literal::Bool(false) => f.write_str("FALSE"),
            Literal::Number(n) => f.write_str(n),
            Literal::Str(s) => f.write_str(&quote(s)),
            Literal::Clock(c) => f.write_str(c),
            Literal::Interval { n, unit } => write!(f, "INTERVAL '{n}' {}", unit.keyword()),
            Literal::Timestamp(s) => write!(f, "TIMESTAMP {}", quote(s)),
            Literal::Date(s) => write!(f, "DATE {}", quote(s)),
        }
    }
}

/// Binding strength used to decide where parentheses are needed.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary { op: UnaryOp::Not, .. } => 3,
        Expr::Exists { negated: true, .. } => 3,
        Expr::IsNull { .. } | Expr::Between { .. } | Expr::InList { .. } => 4,
        Expr::Unary { op: UnaryOp::Neg, .. } => 7,
        _ => 9,
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    if precedence(e) < min {
        format!("({e})")
    } else {
        e.to_string()
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Column { qualifier: Some(q), name } => write!(f, "{}.{}", ident(q), ident(name)),
            Expr::Column { qualifier: None, name } => f.write_str(&ident(name)),
            Expr::Unary { op: UnaryOp::Not, expr } => write!(f, "NOT {}", wrap(expr, 3)),
            Expr::Unary { op: UnaryOp::Neg, expr } => write!(f, "-{}", wrap(expr, 8)),
            Expr::Binary { op, left, right } => {
                let p = op.precedence();
                let mut r = wrap(right, p + 1);
                if r.starts_with('-') {
                    // keep `a - -1` from lexing as a comment
                    r = format!("({r})");
                }
                write!(f, "{} {} {r}", wrap(left, p), op.symbol())
            }
            Expr::IsNull { expr, negated } => {
                let not = if *negated { "NOT " } else { "" };
                write!(f, "{} IS {not}NULL", wrap(expr, 4))
            }
            Expr::Between { expr, low, high, negated } => {
                let not = if *negated { "NOT " } else { "" };
                write!(f, "{} {not}BETWEEN {} AND {}", wrap(expr, 4), wrap(low, 5), wrap(high, 5))
            }
            Expr::InList { expr, list, negated } => {
                let not = if *negated { "NOT " } else { "" };
                write!(f, "{} {not}IN ({})", wrap(expr, 4), join(list, ", "))
            }
            Expr::Function { name, args, distinct, star } => {
                if *star {
                    return write!(f, "{name}(*)");
                }
                let d = if *distinct { "DISTINCT " } else { "" };
                write!(f, "{name}({d}{})", join(args, ", "))
            }
            Expr::FloorTo { expr, unit } => write!(f, "FLOOR({expr} TO {})", unit.keyword()),
            Expr::Exists { query, negated } => {
                let not = if *negated { "NOT " } else { "" };
                write!(f, "{not}EXISTS ({query})")
            }
            Expr::Subquery(q) => write!(f, "({q})"),
            Expr::CurrentTimestamp => f.write_str("CURRENT_TIMESTAMP"),
            Expr::LastScheduleTime => f.write_str("LAST_SCHEDULE_TIME"),
        }
    }
}
