//! Hand-written recursive-descent parser.

use crate::error::SyntaxError;
use crate::sql::ast::*;
use crate::sql::lexer::{tokenize, Tok, Token};
use crate::value::{parse_timestamp, TimeUnit};

type PResult<T> = Result<T, SyntaxError>;

/// Words that cannot be used as bare aliases or table names. Rendering
/// quotes identifiers that collide with them.
pub const RESERVED: &[&str] = &[
    "ALL", "AND", "APPLY", "AS", "ASC", "BETWEEN", "BY", "CHANGES", "CROSS", "CURRENT_TIMESTAMP",
    "DELETE", "DESC", "DISTINCT", "EMIT", "END", "EXCEPT", "EXIST", "EXISTS", "FALSE", "FINAL",
    "FINALIZE", "FROM", "FULL", "GROUP", "HAVING", "IN", "INNER", "INSERT", "INTERSECT", "INTO",
    "IS", "JOIN", "LAST_SCHEDULE_TIME", "LEFT", "LIMIT", "LOG", "MATCHED", "MERGE", "NATURAL",
    "NOT", "NULL", "ON", "OR", "ORDER", "OUTER", "RIGHT", "SELECT", "SET", "THEN", "TO", "TRUE",
    "UNION", "UPDATE", "USING", "VALUES", "WHEN", "WHERE", "WINDOW", "WITH",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

/// Parses a script of `;`-separated statements.
pub fn parse(src: &str) -> PResult<Vec<Statement>> {
    let mut p = Parser::new(src)?;
    let mut out = Vec::new();
    loop {
        while p.eat(&Tok::Semi) {}
        if p.at_eof() {
            break;
        }
        out.push(p.statement()?);
        if !p.at_eof() && !p.eat(&Tok::Semi) {
            return Err(p.error("expected ';'"));
        }
    }
    Ok(out)
}

/// Parses exactly one statement (a trailing `;` is optional).
pub fn parse_statement(src: &str) -> PResult<Statement> {
    let mut stmts = parse(src)?;
    match stmts.len() {
        1 => Ok(stmts.remove(0)),
        0 => Err(SyntaxError { line: 1, col: 1, message: "empty statement".into() }),
        _ => Err(SyntaxError { line: 1, col: 1, message: "expected a single statement".into() }),
    }
}

pub fn parse_query(src: &str) -> PResult<Query> {
    let mut p = Parser::new(src)?;
    let q = p.query()?;
    p.eat(&Tok::Semi);
    p.expect_eof()?;
    Ok(q)
}

pub fn parse_expr(src: &str) -> PResult<Expr> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> PResult<Parser> {
        Ok(Parser { toks: tokenize(src)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        self.peek_at(0)
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn expect_eof(&self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.error("expected end of input"))
        }
    }

    fn error(&self, msg: &str) -> SyntaxError {
        let t = &self.toks[self.pos.min(self.toks.len() - 1)];
        SyntaxError {
            line: t.line,
            col: t.col,
            message: format!("{msg}, found {}", t.tok.describe()),
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn is_kw_at(&self, k: usize, kw: &str) -> bool {
        matches!(self.peek_at(k), Tok::Ident { text, quoted: false } if text.eq_ignore_ascii_case(kw))
    }

    fn is_kw(&self, kw: &str) -> bool {
        self.is_kw_at(0, kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn eat_kws(&mut self, kws: &[&str]) -> bool {
        if kws.iter().enumerate().all(|(i, k)| self.is_kw_at(i, k)) {
            for _ in kws {
                self.next();
            }
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {kw}")))
        }
    }

    /// Any identifier, reserved or not (used after `.` and in positions
    /// where keywords cannot appear).
    fn any_ident(&mut self) -> PResult<Ident> {
        match self.peek().clone() {
            Tok::Ident { text, .. } => {
                self.next();
                Ok(text)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    /// A non-reserved identifier.
    fn ident(&mut self) -> PResult<Ident> {
        match self.peek().clone() {
            Tok::Ident { text, quoted } if quoted || !is_reserved(&text) => {
                self.next();
                Ok(text)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn peek_plain_ident(&self) -> bool {
        matches!(self.peek(), Tok::Ident { text, quoted } if *quoted || !is_reserved(text))
    }

    fn optional_alias(&mut self) -> PResult<Option<Ident>> {
        if self.eat_kw("AS") {
            return Ok(Some(self.ident()?));
        }
        if self.peek_plain_ident() {
            return Ok(Some(self.ident()?));
        }
        Ok(None)
    }

    fn starts_query(&self) -> bool {
        self.is_kw("SELECT")
            || self.is_kw("WITH")
            || self.is_kw("VALUES")
            || (self.is_kw("FINAL") && matches!(self.peek_at(1), Tok::LParen))
    }

    fn starts_query_after_paren(&self) -> bool {
        matches!(self.peek(), Tok::LParen)
            && (["SELECT", "WITH", "VALUES"].iter().any(|k| self.is_kw_at(1, k))
                || (self.is_kw_at(1, "FINAL") && matches!(self.peek_at(2), Tok::LParen))
                || matches!(self.peek_at(1), Tok::LParen))
    }

    fn number_u64(&mut self) -> PResult<u64> {
        match self.peek().clone() {
            Tok::Number(n) => {
                let v = n.parse::<u64>().map_err(|_| self.error("expected integer"))?;
                self.next();
                Ok(v)
            }
            _ => Err(self.error("expected integer")),
        }
    }

    // ---------------------------------------------------------------
    // statements

    fn statement(&mut self) -> PResult<Statement> {
        if self.starts_query() || matches!(self.peek(), Tok::LParen) {
            return Ok(Statement::Query(self.query()?));
        }
        if self.eat_kw("SUBSCRIBE") {
            let schedule = self.schedule()?;
            self.expect_kw("TO")?;
            let query = self.query()?;
            return Ok(Statement::Subscribe { schedule, query });
        }
        if self.is_kw("CREATE") {
            self.next();
            if self.eat_kw("TABLE") {
                return self.create_table();
            }
            if self.eat_kw("TASK") {
                return self.create_task(false);
            }
            if self.eat_kws(&["CONTINUOUS", "TASK"]) {
                return self.create_task(true);
            }
            if self.eat_kws(&["CONTINUOUS", "CURSOR"]) {
                return self.declare_cursor();
            }
            return Err(self.error("expected TABLE, TASK or CONTINUOUS"));
        }
        if self.eat_kws(&["CONTINUOUS", "CURSOR"]) {
            return self.declare_cursor();
        }
        if self.eat_kw("OPEN") {
            return Ok(Statement::Open(self.ident()?));
        }
        if self.eat_kw("FETCH") {
            self.eat_kw("NEXT");
            let count = if matches!(self.peek(), Tok::Number(_)) {
                Some(self.number_u64()?)
            } else {
                None
            };
            if !self.eat_kw("FROM") {
                self.eat_kw("IN");
            }
            return Ok(Statement::Fetch { cursor: self.ident()?, count });
        }
        if self.eat_kw("CLOSE") {
            return Ok(Statement::Close(self.ident()?));
        }
        if self.is_kw("INSERT") {
            return Ok(Statement::Insert(self.insert()?));
        }
        if self.eat_kw("UPDATE") {
            let table = self.ident()?;
            self.expect_kw("SET")?;
            let assignments = self.assignments()?;
            let selection = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
            return Ok(Statement::Update(Update { table, assignments, selection }));
        }
        if self.eat_kw("DELETE") {
            self.expect_kw("FROM")?;
            let table = self.ident()?;
            let selection = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
            return Ok(Statement::Delete(Delete { table, selection }));
        }
        if self.is_kw("MERGE") {
            return Ok(Statement::Merge(self.merge()?));
        }
        if self.eat_kw("DROP") {
            if self.eat_kw("TABLE") {
                return Ok(Statement::DropTable(self.ident()?));
            }
            if self.eat_kw("TASK") {
                return Ok(Statement::DropTask(self.ident()?));
            }
            return Err(self.error("expected TABLE or TASK"));
        }
        if self.eat_kw("ALTER") {
            if self.eat_kw("TABLE") {
                return self.alter_table();
            }
            if self.eat_kw("TASK") {
                let name = self.ident()?;
                let verb = if self.eat_kw("PAUSE") {
                    TaskVerb::Pause
                } else if self.eat_kw("RESUME") {
                    TaskVerb::Resume
                } else if self.eat_kw("STOP") {
                    TaskVerb::Stop
                } else {
                    return Err(self.error("expected PAUSE, RESUME or STOP"));
                };
                return Ok(Statement::AlterTask { name, verb });
            }
            return Err(self.error("expected TABLE or TASK"));
        }
        if self.eat_kws(&["EXECUTE", "TASK"]) {
            return Ok(Statement::ExecuteTask(self.ident()?));
        }
        if self.eat_kw("BEGIN") || self.eat_kws(&["START", "TRANSACTION"]) {
            if !self.eat_kw("TRANSACTION") {
                self.eat_kw("WORK");
            }
            return Ok(Statement::Begin);
        }
        if self.eat_kw("COMMIT") {
            self.eat_kw("WORK");
            return Ok(Statement::Commit);
        }
        if self.eat_kw("ROLLBACK") {
            self.eat_kw("WORK");
            return Ok(Statement::Rollback);
        }
        if self.eat_kw("SET") {
            let name = self.ident()?;
            if !self.eat(&Tok::Eq) {
                self.expect_kw("TO")?;
            }
            let value = match self.next() {
                Tok::Ident { text, .. } => text,
                Tok::Str(s) => s,
                Tok::Number(n) => n,
                _ => return Err(self.error("expected setting value")),
            };
            return Ok(Statement::Set { name, value });
        }
        Err(self.error("expected statement"))
    }

    fn declare_cursor(&mut self) -> PResult<Statement> {
        let name = self.ident()?;
        let with_return = if self.eat_kws(&["WITH", "RETURN"]) {
            Some(true)
        } else if self.eat_kws(&["WITHOUT", "RETURN"]) {
            Some(false)
        } else {
            None
        };
        if !self.eat_kw("AS") && !self.eat_kw("IS") {
            return Err(self.error("expected AS or IS"));
        }
        let query = self.query()?;
        Ok(Statement::DeclareCursor { name, with_return, query })
    }

    fn insert(&mut self) -> PResult<Insert> {
        self.expect_kw("INSERT")?;
        self.expect_kw("INTO")?;
        let table = self.ident()?;
        let mut columns = Vec::new();
        if matches!(self.peek(), Tok::LParen) && !self.starts_query_after_paren() {
            self.next();
            loop {
                columns.push(self.ident()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen, "')'")?;
        }
        let source = if self.is_kw("VALUES") {
            let values_pos = self.pos;
            self.next();
            let rows = self.values_rows()?;
            if columns.is_empty() && rows.len() == 1 && (self.starts_query() || self.starts_query_after_paren()) {
                // `INSERT INTO t VALUES(a, b) SELECT ...` names the target columns
                for e in &rows[0] {
                    match e {
                        Expr::Column { qualifier: None, name } => columns.push(name.clone()),
                        _ => {
                            self.pos = values_pos;
                            return Err(self.error("expected column names before query"));
                        }
                    }
                }
                self.query()?
            } else {
                let mut q = Query::from_body(SetExpr::Values(rows));
                self.order_limit(&mut q)?;
                q
            }
        } else {
            self.query()?
        };
        let error_logging = self.error_logging()?;
        Ok(Insert { table, columns, source, error_logging })
    }

    fn assignments(&mut self) -> PResult<Vec<Assignment>> {
        let mut out = Vec::new();
        loop {
            let first = self.ident()?;
            let (qualifier, column) = if self.eat(&Tok::Dot) {
                (Some(first), self.any_ident()?)
            } else {
                (None, first)
            };
            self.expect(&Tok::Eq, "'='")?;
            let value = self.expr()?;
            out.push(Assignment { qualifier, column, value });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(out)
    }

    fn merge(&mut self) -> PResult<Merge> {
        self.expect_kw("MERGE")?;
        self.expect_kw("INTO")?;
        let target = self.ident()?;
        let target_alias = self.optional_alias()?;
        self.expect_kw("USING")?;
        let source = self.table_factor()?;
        self.expect_kw("ON")?;
        let on = self.expr()?;
        let mut matched = None;
        let mut not_matched = None;
        while self.eat_kw("WHEN") {
            if self.eat_kws(&["NOT", "MATCHED"]) {
                self.expect_kw("THEN")?;
                self.expect_kw("INSERT")?;
                let mut columns = Vec::new();
                if self.eat(&Tok::LParen) {
                    loop {
                        let first = self.ident()?;
                        if self.eat(&Tok::Dot) {
                            columns.push((Some(first), self.any_ident()?));
                        } else {
                            columns.push((None, first));
                        }
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RParen, "')'")?;
                }
                self.expect_kw("VALUES")?;
                self.expect(&Tok::LParen, "'('")?;
                let values = self.expr_list()?;
                self.expect(&Tok::RParen, "')'")?;
                not_matched = Some(MergeInsert { columns, values });
            } else {
                self.expect_kw("MATCHED")?;
                self.expect_kw("THEN")?;
                self.expect_kw("UPDATE")?;
                self.expect_kw("SET")?;
                let assignments = self.assignments()?;
                let delete_where = if self.eat_kws(&["DELETE", "WHERE"]) {
                    Some(self.expr()?)
                } else {
                    None
                };
                matched = Some(MergeMatched { assignments, delete_where });
            }
        }
        let error_logging = self.error_logging()?;
        Ok(Merge { target, target_alias, source, on, matched, not_matched, error_logging })
    }

    fn error_logging(&mut self) -> PResult<Option<ErrorLogging>> {
        if !self.eat_kws(&["LOG", "ERRORS"]) {
            return Ok(None);
        }
        let mut el = ErrorLogging { into: None, tag: None, reject_limit: None, retry_limit: None };
        if self.eat_kw("INTO") {
            el.into = Some(self.ident()?);
            if self.eat(&Tok::LParen) {
                el.tag = Some(self.expr()?);
                self.expect(&Tok::RParen, "')'")?;
            }
        }
        loop {
            if self.eat_kws(&["REJECT", "LIMIT"]) {
                el.reject_limit = Some(if self.eat_kw("UNLIMITED") {
                    RejectLimit::Unlimited
                } else {
                    RejectLimit::Count(self.number_u64()?)
                });
            } else if self.eat_kws(&["RETRY", "LIMIT"]) {
                el.retry_limit = Some(self.number_u64()?);
            } else {
                break;
            }
        }
        Ok(Some(el))
    }

    fn create_table(&mut self) -> PResult<Statement> {
        let name = self.ident()?;
        let mut ct = CreateTable {
            name,
            columns: vec![],
            increasing: vec![],
            insert_only: false,
            expire: None,
        };
        self.expect(&Tok::LParen, "'('")?;
        loop {
            if self.eat_kws(&["INSERT", "ONLY"]) {
                ct.insert_only = true;
            } else if self.is_kw("CONSTRAINT") {
                ct.increasing.push(self.increasing_def()?);
            } else {
                let cname = self.ident()?;
                let type_name = self.any_ident()?.to_ascii_uppercase();
                let mut type_args = Vec::new();
                if self.eat(&Tok::LParen) {
                    loop {
                        type_args.push(self.number_u64()? as u32);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RParen, "')'")?;
                }
                ct.columns.push(ColumnDef { name: cname, type_name, type_args });
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen, "')'")?;
        loop {
            if self.eat_kws(&["INSERT", "ONLY"]) {
                ct.insert_only = true;
            } else if self.is_kw("CONSTRAINT") {
                ct.increasing.push(self.increasing_def()?);
            } else if self.eat_kw("EXPIRE") {
                self.eat_kw("WHERE");
                ct.expire = Some(self.expr()?);
            } else {
                break;
            }
        }
        Ok(Statement::CreateTable(ct))
    }

    fn increasing_def(&mut self) -> PResult<IncreasingDef> {
        self.expect_kw("CONSTRAINT")?;
        let strict = self.eat_kw("STRICTLY");
        self.expect_kw("INCREASING")?;
        let column = self.ident()?;
        let mut d = IncreasingDef {
            strict,
            column,
            grace: None,
            enabled: None,
            deferred: None,
            rely: None,
        };
        if self.eat_kw("GRACE") {
            d.grace = Some(self.expr()?);
        }
        loop {
            if self.eat_kw("ENABLE") || self.eat_kw("ENABLED") {
                d.enabled = Some(true);
            } else if self.eat_kw("DISABLE") || self.eat_kw("DISABLED") {
                d.enabled = Some(false);
            } else if self.eat_kw("DEFERRED") {
                d.deferred = Some(true);
            } else if self.eat_kw("IMMEDIATE") {
                d.deferred = Some(false);
            } else if self.eat_kw("RELY") {
                d.rely = Some(true);
            } else if self.eat_kw("NORELY") || self.eat_kw("NONRELY") {
                d.rely = Some(false);
            } else if ["VALIDATE", "NOVALIDATE", "NONVALIDATE"].iter().any(|k| self.is_kw(k)) {
                return Err(self.error(
                    "INCREASING constraints cannot be validated against existing data; remove the validation option",
                ));
            } else {
                break;
            }
        }
        Ok(d)
    }

    fn alter_table(&mut self) -> PResult<Statement> {
        let table = self.ident()?;
        let action = if self.eat_kws(&["INSERT", "ONLY"]) {
            AlterTableAction::InsertOnly
        } else if self.eat_kws(&["DROP", "INSERT", "ONLY"]) {
            AlterTableAction::DropInsertOnly
        } else if self.eat_kws(&["DROP", "EXPIRE"]) {
            AlterTableAction::DropExpire
        } else if self.is_kw("CONSTRAINT") {
            AlterTableAction::Increasing(self.increasing_def()?)
        } else if self.is_kw("ADD") && self.is_kw_at(1, "CONSTRAINT") {
            self.next();
            AlterTableAction::Increasing(self.increasing_def()?)
        } else if self.eat_kw("FINALIZE") {
            self.eat_kw("WHERE");
            AlterTableAction::Finalize(self.expr()?)
        } else if self.eat_kws(&["ADD", "EXPIRE"]) || self.eat_kw("EXPIRE") {
            self.eat_kw("WHERE");
            AlterTableAction::Expire { verb: ExpireVerb::Add, predicate: self.expr()? }
        } else if self.eat_kws(&["MODIFY", "EXPIRE"]) {
            self.eat_kw("WHERE");
            AlterTableAction::Expire { verb: ExpireVerb::Modify, predicate: self.expr()? }
        } else {
            return Err(self.error("expected ALTER TABLE action"));
        };
        Ok(Statement::AlterTable { table, action })
    }

    fn create_task(&mut self, continuous: bool) -> PResult<Statement> {
        let name = self.ident()?;
        let schedule = self.schedule()?.unwrap_or_else(Schedule::on_commit);
        let mut initial_snapshot = self.eat_kws(&["WITH", "INITIAL", "SNAPSHOT"]);
        self.expect_kw("AS")?;
        let action = if self.is_kw("INSERT") {
            TaskAction::Insert(self.insert()?)
        } else if self.is_kw("MERGE") {
            TaskAction::Merge(self.merge()?)
        } else if self.eat_kws(&["APPLY", "CHANGES", "USING"]) {
            let source = self.query()?;
            self.expect_kw("TO")?;
            let target = self.ident()?;
            let error_logging = self.error_logging()?;
            TaskAction::ApplyChanges { source, target, error_logging }
        } else {
            return Err(self.error("expected INSERT, MERGE or APPLY CHANGES"));
        };
        if self.eat_kws(&["WITH", "INITIAL", "SNAPSHOT"]) {
            initial_snapshot = true;
        }
        Ok(Statement::CreateTask(CreateTask { name, continuous, schedule, initial_snapshot, action }))
    }

    fn schedule(&mut self) -> PResult<Option<Schedule>> {
        let mut triggers = Vec::new();
        let mut end = None;
        loop {
            if self.is_kw("COMMIT") || (self.is_kw("ON") && self.is_kw_at(1, "COMMIT")) {
                self.eat_kw("ON");
                self.next();
                let mut tables = Vec::new();
                if self.is_kw("ON") && !self.is_kw_at(1, "COMMIT") && !self.is_kw_at(1, "DEMAND") {
                    self.next();
                    loop {
                        tables.push(self.ident()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                let asynchronous = self.eat_kw("ASYNCHRONOUS") || self.eat_kw("ASYNCHRONOUSLY");
                triggers.push(Trigger::OnCommit { tables, asynchronous });
            } else if self.eat_kws(&["ON", "DEMAND"]) || self.eat_kw("DEMAND") {
                triggers.push(Trigger::OnDemand);
            } else if self.eat_kw("PERIODIC") {
                self.eat_kw("EVERY");
                let (n, unit) = self.size()?;
                triggers.push(Trigger::Periodic { n, unit });
            } else if self.eat_kws(&["END", "AFTER"]) {
                let n = self.number_u64()?;
                if !self.eat_kw("EXECUTIONS") {
                    self.eat_kw("TIMES");
                }
                end = Some(ScheduleEnd::AfterCount(n));
            } else if self.eat_kws(&["END", "AT"]) {
                end = Some(ScheduleEnd::At(self.expr()?));
            } else {
                break;
            }
        }
        if triggers.is_empty() {
            if end.is_some() {
                return Err(self.error("schedule end option needs a trigger"));
            }
            return Ok(None);
        }
        Ok(Some(Schedule { triggers, end }))
    }

    /// `INTERVAL '5' DAY`, `'5' DAYS` or `30 SECONDS`.
    fn size(&mut self) -> PResult<(i64, TimeUnit)> {
        self.eat_kw("INTERVAL");
        let n = match self.next() {
            Tok::Number(s) | Tok::Str(s) => {
                s.trim().parse::<i64>().map_err(|_| self.error("expected integer amount"))?
            }
            _ => return Err(self.error("expected interval amount")),
        };
        let unit = self.time_unit()?;
        Ok((n, unit))
    }

    fn time_unit(&mut self) -> PResult<TimeUnit> {
        match self.peek().clone() {
            Tok::Ident { text, .. } => match TimeUnit::parse(&text) {
                Some(u) => {
                    self.next();
                    Ok(u)
                }
                None => Err(self.error("expected time unit")),
            },
            _ => Err(self.error("expected time unit")),
        }
    }

    // ---------------------------------------------------------------
    // queries

    fn query(&mut self) -> PResult<Query> {
        let mut with = Vec::new();
        if self.eat_kw("WITH") {
            loop {
                let name = self.ident()?;
                self.expect_kw("AS")?;
                self.expect(&Tok::LParen, "'('")?;
                let query = self.query()?;
                self.expect(&Tok::RParen, "')'")?;
                with.push(Cte { name, query });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        let body = self.set_expr()?;
        let mut q = Query { with, body, order_by: vec![], limit: None };
        self.order_limit(&mut q)?;
        if self.is_kw("EMIT") {
            let hint = if self.is_kw_at(1, "FINAL") {
                "EMIT FINAL is not supported; wrap the query in FINAL(...)"
            } else {
                "EMIT CHANGES is not supported; select from CHANGES(...) instead"
            };
            return Err(self.error(hint));
        }
        Ok(q)
    }

    fn order_limit(&mut self, q: &mut Query) -> PResult<()> {
        if self.eat_kws(&["ORDER", "BY"]) {
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_kw("DESC") {
                    true
                } else {
                    self.eat_kw("ASC");
                    false
                };
                q.order_by.push(OrderItem { expr, desc });
                if !self.list_continues() {
                    break;
                }
            }
        }
        if self.eat_kw("LIMIT") {
            q.limit = Some(self.number_u64()?);
        }
        Ok(())
    }

    /// Consumes a list comma unless what follows is a CHANGES argument
    /// (a time or format), which ends the enclosing source query.
    fn list_continues(&mut self) -> bool {
        if !matches!(self.peek(), Tok::Comma) {
            return false;
        }
        let changes_arg = match self.peek_at(1) {
            Tok::Str(_) | Tok::Clock(_) => true,
            Tok::Ident { text, quoted: false } => {
                text.eq_ignore_ascii_case("LAST_SCHEDULE_TIME")
                    || ((text.eq_ignore_ascii_case("TIMESTAMP") || text.eq_ignore_ascii_case("DATE"))
                        && matches!(self.peek_at(2), Tok::Str(_)))
            }
            _ => false,
        };
        if changes_arg {
            return false;
        }
        self.next();
        true
    }

    fn set_expr(&mut self) -> PResult<SetExpr> {
        let mut left = self.set_intersect()?;
        loop {
            let op = if self.eat_kw("UNION") {
                SetOp::Union
            } else if self.eat_kw("EXCEPT") {
                SetOp::Except
            } else {
                break;
            };
            let all = self.eat_kw("ALL");
            if !all {
                self.eat_kw("DISTINCT");
            }
            let right = self.set_intersect()?;
            left = SetExpr::SetOp { op, all, left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn set_intersect(&mut self) -> PResult<SetExpr> {
        let mut left = self.set_primary()?;
        while self.eat_kw("INTERSECT") {
            let all = self.eat_kw("ALL");
            if !all {
                self.eat_kw("DISTINCT");
            }
            let right = self.set_primary()?;
            left = SetExpr::SetOp {
                op: SetOp::Intersect,
                all,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn set_primary(&mut self) -> PResult<SetExpr> {
        if self.is_kw("SELECT") {
            self.next();
            let mut final_form = false;
            if self.is_kw("FINAL") && !matches!(self.peek_at(1), Tok::LParen | Tok::Comma) {
                self.next();
                final_form = true;
            }
            let select = self.select_body()?;
            let body = SetExpr::Select(Box::new(select));
            return Ok(if final_form {
                SetExpr::Final(Box::new(Query::from_body(body)))
            } else {
                body
            });
        }
        if self.eat_kw("VALUES") {
            return Ok(SetExpr::Values(self.values_rows()?));
        }
        if self.is_kw("FINAL") && matches!(self.peek_at(1), Tok::LParen) {
            self.next();
            self.next();
            let q = self.query()?;
            self.expect(&Tok::RParen, "')'")?;
            return Ok(SetExpr::Final(Box::new(q)));
        }
        if self.eat(&Tok::LParen) {
            let q = self.query()?;
            self.expect(&Tok::RParen, "')'")?;
            return Ok(SetExpr::Query(Box::new(q)));
        }
        Err(self.error("expected SELECT, VALUES, FINAL or '('"))
    }

    fn values_rows(&mut self) -> PResult<Vec<Vec<Expr>>> {
        let mut rows = Vec::new();
        loop {
            self.expect(&Tok::LParen, "'('")?;
            rows.push(self.expr_list()?);
            self.expect(&Tok::RParen, "')'")?;
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(rows)
    }

    fn expr_list(&mut self) -> PResult<Vec<Expr>> {
        let mut out = vec![self.expr()?];
        while self.eat(&Tok::Comma) {
            out.push(self.expr()?);
        }
        Ok(out)
    }

    /// The part of a query specification after `SELECT [FINAL]`.
    fn select_body(&mut self) -> PResult<Select> {
        let continuous = self.eat_kw("CONTINUOUS");
        let distinct = if self.eat_kw("DISTINCT") {
            true
        } else {
            self.eat_kw("ALL");
            false
        };
        let mut items = Vec::new();
        loop {
            items.push(self.select_item()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        let mut s = Select {
            continuous,
            distinct,
            items,
            from: vec![],
            selection: None,
            finalize: None,
            group_by: vec![],
            having: None,
        };
        if self.eat_kw("FROM") {
            s.from = self.from_list()?;
        }
        if self.eat_kw("WHERE") {
            s.selection = Some(self.expr()?);
        }
        self.finalize_clause(&mut s)?;
        if self.eat_kws(&["GROUP", "BY"]) {
            loop {
                s.group_by.push(self.expr()?);
                if !self.list_continues() {
                    break;
                }
            }
        }
        if self.eat_kw("HAVING") {
            s.having = Some(self.expr()?);
        }
        self.finalize_clause(&mut s)?;
        Ok(s)
    }

    fn finalize_clause(&mut self, s: &mut Select) -> PResult<()> {
        if self.is_kw("FINALIZE") {
            if s.finalize.is_some() {
                return Err(self.error("duplicate FINALIZE clause"));
            }
            self.next();
            self.eat_kw("WHERE");
            s.finalize = Some(self.expr()?);
        }
        Ok(())
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        if self.eat(&Tok::Star) {
            return Ok(SelectItem::Wildcard);
        }
        if let (Tok::Ident { text, .. }, Tok::Dot, Tok::Star) =
            (self.peek().clone(), self.peek_at(1).clone(), self.peek_at(2).clone())
        {
            self.next();
            self.next();
            self.next();
            return Ok(SelectItem::QualifiedWildcard(text));
        }
        let expr = self.expr()?;
        let alias = self.optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn from_list(&mut self) -> PResult<Vec<TableRef>> {
        let mut out = vec![self.table_ref()?];
        while self.list_continues() {
            out.push(self.table_ref()?);
        }
        Ok(out)
    }

    fn table_ref(&mut self) -> PResult<TableRef> {
        let factor = self.table_factor()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.eat_kw("JOIN") || self.eat_kws(&["INNER", "JOIN"]) {
                JoinKind::Inner
            } else if self.eat_kws(&["LEFT", "JOIN"]) || self.eat_kws(&["LEFT", "OUTER", "JOIN"]) {
                JoinKind::Left
            } else if self.eat_kws(&["CROSS", "JOIN"]) {
                JoinKind::Cross
            } else if self.eat_kws(&["NATURAL", "JOIN"]) {
                JoinKind::Natural
            } else {
                break;
            };
            let factor = self.table_factor()?;
            let on = if matches!(kind, JoinKind::Inner | JoinKind::Left) {
                self.expect_kw("ON")?;
                Some(self.expr()?)
            } else {
                None
            };
            joins.push(Join { kind, factor, on });
        }
        Ok(TableRef { factor, joins })
    }

    fn table_factor(&mut self) -> PResult<TableFactor> {
        let kind = if self.starts_query_after_paren() {
            self.next();
            let q = self.query()?;
            self.expect(&Tok::RParen, "')'")?;
            FactorKind::Derived(Box::new(q))
        } else if self.eat(&Tok::LParen) {
            let refs = self.from_list()?;
            self.expect(&Tok::RParen, "')'")?;
            FactorKind::Nested(refs)
        } else if self.is_kw("CHANGES") && matches!(self.peek_at(1), Tok::LParen) {
            self.next();
            self.next();
            let c = self.changes_args()?;
            FactorKind::Changes(Box::new(c))
        } else if self.is_kw("TABLE") && matches!(self.peek_at(1), Tok::LParen) {
            self.next();
            self.next();
            let name = self.ident()?;
            self.expect(&Tok::LParen, "'('")?;
            let args = if matches!(self.peek(), Tok::RParen) { vec![] } else { self.expr_list()? };
            self.expect(&Tok::RParen, "')'")?;
            self.expect(&Tok::RParen, "')'")?;
            FactorKind::Function { name, args }
        } else {
            FactorKind::Table(self.ident()?)
        };
        let mut alias = self.optional_alias()?;
        let window = if self.is_kw("WINDOW") {
            self.next();
            Some(Box::new(self.window_spec()?))
        } else {
            None
        };
        if alias.is_none() && window.is_some() {
            alias = self.optional_alias()?;
        }
        Ok(TableFactor { kind, alias, window })
    }

    fn changes_args(&mut self) -> PResult<Changes> {
        let source = if self.starts_query() || self.starts_query_after_paren() {
            ChangesSource::Query(self.query()?)
        } else {
            ChangesSource::Table(self.ident()?)
        };
        let mut start = None;
        let mut format = None;
        while self.eat(&Tok::Comma) {
            if format.is_some() {
                return Err(self.error("unexpected argument after CHANGES format"));
            }
            match self.peek().clone() {
                Tok::Str(s) if parse_timestamp(&s, None).is_none() => {
                    self.next();
                    format = Some(s);
                }
                _ => {
                    if start.is_some() {
                        return Err(self.error("CHANGES accepts one start time"));
                    }
                    start = Some(self.expr()?);
                }
            }
        }
        self.expect(&Tok::RParen, "')'")?;
        Ok(Changes { source, start, format })
    }

    fn window_spec(&mut self) -> PResult<WindowSpec> {
        if self.eat_kw("HOPPING") || self.is_kw("TUMBLING") {
            let tumbling = self.eat_kw("TUMBLING");
            self.expect(&Tok::LParen, "'('")?;
            self.expect_kw("SIZE")?;
            let (n, unit) = self.size()?;
            let range = Expr::Literal(Literal::Interval { n, unit });
            let mut advance = None;
            if !tumbling && self.eat(&Tok::Comma) {
                self.expect_kw("ADVANCE")?;
                self.eat_kw("BY");
                let (n, unit) = self.size()?;
                advance = Some(Expr::Literal(Literal::Interval { n, unit }));
            }
            self.expect(&Tok::RParen, "')'")?;
            return Ok(WindowSpec { column: None, start: None, range, advance, grace: None, bounds: None });
        }
        self.expect(&Tok::LParen, "'('")?;
        let option_kw = ["START", "START_WITH", "RANGE", "ADVANCE", "GRACE", "BOUNDS"];
        let column = if option_kw.iter().any(|k| self.is_kw(k)) {
            None
        } else {
            Some(self.ident()?)
        };
        let (mut start, mut range, mut advance, mut grace, mut bounds) = (None, None, None, None, None);
        loop {
            if self.eat_kws(&["START", "WITH"]) || self.eat_kw("START_WITH") {
                start = Some(self.expr()?);
            } else if self.eat_kw("RANGE") {
                range = Some(self.expr()?);
            } else if self.eat_kw("ADVANCE") {
                self.eat_kw("BY");
                advance = Some(self.expr()?);
            } else if self.eat_kw("GRACE") {
                grace = Some(self.expr()?);
            } else if self.eat_kw("BOUNDS") {
                self.expect(&Tok::LParen, "'('")?;
                let a = self.ident()?;
                self.expect(&Tok::Comma, "','")?;
                let b = self.ident()?;
                self.expect(&Tok::RParen, "')'")?;
                bounds = Some((a, b));
            } else {
                break;
            }
        }
        let range = range.ok_or_else(|| self.error("window needs a RANGE"))?;
        self.expect(&Tok::RParen, "')'")?;
        Ok(WindowSpec { column, start, range, advance, grace, bounds })
    }

    // ---------------------------------------------------------------
    // expressions

    fn expr(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut left = self.and_expr()?;
        while self.eat_kw("OR") {
            let right = self.and_expr()?;
            left = Expr::binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut left = self.not_expr()?;
        while self.eat_kw("AND") {
            let right = self.not_expr()?;
            left = Expr::binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.is_kw("NOT") && (self.is_kw_at(1, "EXISTS") || self.is_kw_at(1, "EXIST")) {
            self.next();
            self.next();
            let q = self.paren_query()?;
            return Ok(Expr::Exists { query: Box::new(q), negated: true });
        }
        if self.eat_kw("NOT") {
            let e = self.not_expr()?;
            return Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(e) });
        }
        self.predicate()
    }

    fn paren_query(&mut self) -> PResult<Query> {
        self.expect(&Tok::LParen, "'('")?;
        let q = self.query()?;
        self.expect(&Tok::RParen, "')'")?;
        Ok(q)
    }

    fn predicate(&mut self) -> PResult<Expr> {
        let mut left = self.additive()?;
        loop {
            let op = match self.peek() {
                Tok::Eq => Some(BinaryOp::Eq),
                Tok::NotEq => Some(BinaryOp::NotEq),
                Tok::Lt => Some(BinaryOp::Lt),
                Tok::LtEq => Some(BinaryOp::LtEq),
                Tok::Gt => Some(BinaryOp::Gt),
                Tok::GtEq => Some(BinaryOp::GtEq),
                _ => None,
            };
            if let Some(op) = op {
                self.next();
                let right = self.additive()?;
                left = Expr::binary(op, left, right);
                continue;
            }
            if self.is_kw("IS") {
                self.next();
                let negated = self.eat_kw("NOT");
                self.expect_kw("NULL")?;
                left = Expr::IsNull { expr: Box::new(left), negated };
                continue;
            }
            let negated = self.is_kw("NOT")
                && (self.is_kw_at(1, "BETWEEN") || self.is_kw_at(1, "IN"));
            if negated {
                self.next();
            }
            if self.eat_kw("BETWEEN") {
                let low = self.additive()?;
                self.expect_kw("AND")?;
                let high = self.additive()?;
                left = Expr::Between {
                    expr: Box::new(left),
                    low: Box::new(low),
                    high: Box::new(high),
                    negated,
                };
                continue;
            }
            if self.eat_kw("IN") {
                self.expect(&Tok::LParen, "'('")?;
                let list = self.expr_list()?;
                self.expect(&Tok::RParen, "')'")?;
                left = Expr::InList { expr: Box::new(left), list, negated };
                continue;
            }
            break;
        }
        Ok(left)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Plus,
                Tok::Minus => BinaryOp::Minus,
                Tok::Concat => BinaryOp::Concat,
                _ => break,
            };
            self.next();
            let right = self.multiplicative()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                Tok::Percent => BinaryOp::Mod,
                _ => break,
            };
            self.next();
            let right = self.unary()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            let e = self.unary()?;
            return Ok(Expr::Unary { op: UnaryOp::Neg, expr: Box::new(e) });
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.next();
                Ok(Expr::Literal(Literal::Number(n)))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Literal(Literal::Str(s)))
            }
            Tok::Clock(c) => {
                self.next();
                Ok(Expr::Literal(Literal::Clock(c)))
            }
            Tok::LParen => {
                if self.starts_query_after_paren() && !matches!(self.peek_at(1), Tok::LParen) {
                    let q = self.paren_query()?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                self.next();
                let e = self.expr()?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident { text, quoted } => {
                if !quoted {
                    if let Some(e) = self.keyword_primary(&text)? {
                        return Ok(e);
                    }
                    if is_reserved(&text) {
                        return Err(self.error("expected expression"));
                    }
                }
                self.next();
                if matches!(self.peek(), Tok::LParen) {
                    return self.function_call(text);
                }
                if self.eat(&Tok::Dot) {
                    let name = self.any_ident()?;
                    return Ok(Expr::Column { qualifier: Some(text), name });
                }
                Ok(Expr::Column { qualifier: None, name: text })
            }
            _ => Err(self.error("expected expression")),
        }
    }

    fn keyword_primary(&mut self, word: &str) -> PResult<Option<Expr>> {
        let upper = word.to_ascii_uppercase();
        let next_is_str = matches!(self.peek_at(1), Tok::Str(_));
        let e = match upper.as_str() {
            "NULL" => {
                self.next();
                Expr::Literal(Literal::Null)
            }
            "TRUE" | "FALSE" => {
                self.next();
                Expr::Literal(Literal::Bool(upper == "TRUE"))
            }
            "INTERVAL" if next_is_str || matches!(self.peek_at(1), Tok::Number(_)) => {
                self.next();
                let n = match self.next() {
                    Tok::Str(s) | Tok::Number(s) => s
                        .trim()
                        .parse::<i64>()
                        .map_err(|_| self.error("expected integer interval amount"))?,
                    _ => unreachable!(),
                };
                let unit = self.time_unit()?;
                // `DAY TO SECOND` qualifiers do not change the value
                if self.is_kw("TO") && matches!(self.peek_at(1), Tok::Ident { text, .. } if TimeUnit::parse(text).is_some())
                {
                    self.next();
                    self.next();
                }
                Expr::Literal(Literal::Interval { n, unit })
            }
            "DATE" | "TIMESTAMP" if next_is_str => {
                self.next();
                let Tok::Str(s) = self.next() else { unreachable!() };
                if upper == "DATE" {
                    Expr::Literal(Literal::Date(s))
                } else {
                    Expr::Literal(Literal::Timestamp(s))
                }
            }
            "EXISTS" | "EXIST" if matches!(self.peek_at(1), Tok::LParen) => {
                self.next();
                let q = self.paren_query()?;
                Expr::Exists { query: Box::new(q), negated: false }
            }
            "CURRENT_TIMESTAMP" if !matches!(self.peek_at(1), Tok::LParen) => {
                self.next();
                Expr::CurrentTimestamp
            }
            "LAST_SCHEDULE_TIME" => {
                self.next();
                Expr::LastScheduleTime
            }
            "CASE" => return Err(self.error("CASE expressions are not supported")),
            _ => return Ok(None),
        };
        Ok(Some(e))
    }

    fn function_call(&mut self, name: Ident) -> PResult<Expr> {
        self.expect(&Tok::LParen, "'('")?;
        let lname = name.to_ascii_lowercase();
        if self.eat(&Tok::Star) {
            self.expect(&Tok::RParen, "')'")?;
            return Ok(Expr::Function { name, args: vec![], distinct: false, star: true });
        }
        if matches!(self.peek(), Tok::RParen) {
            self.next();
            return Ok(Expr::Function { name, args: vec![], distinct: false, star: false });
        }
        let distinct = self.eat_kw("DISTINCT");
        let mut args = Vec::new();
        if lname == "date_trunc" {
            // the unit may be written as a bare word: date_trunc(minute, time)
            if let (Tok::Ident { text, quoted: false }, Tok::Comma) =
                (self.peek().clone(), self.peek_at(1).clone())
            {
                if TimeUnit::parse(&text).is_some() {
                    self.next();
                    args.push(Expr::Literal(Literal::Str(text)));
                    self.next();
                }
            }
        }
        let first = self.expr()?;
        if lname == "floor" && args.is_empty() && self.eat_kw("TO") {
            let unit = self.time_unit()?;
            self.expect(&Tok::RParen, "')'")?;
            return Ok(Expr::FloorTo { expr: Box::new(first), unit });
        }
        args.push(first);
        while self.eat(&Tok::Comma) {
            args.push(self.expr()?);
        }
        self.expect(&Tok::RParen, "')'")?;
        Ok(Expr::Function { name, args, distinct, star: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_star() {
        let s = parse_statement("SELECT * FROM myStream;").unwrap();
        let Statement::Query(q) = s else { panic!() };
        let SetExpr::Select(sel) = q.body else { panic!() };
        assert_eq!(sel.items, vec![SelectItem::Wildcard]);
        assert_eq!(sel.from[0].factor.kind, FactorKind::Table("myStream".into()));
    }

    #[test]
    fn subscribe_wraps_changes() {
        let s = parse_statement("SUBSCRIBE TO SELECT * FROM CHANGES(myStream);").unwrap();
        let Statement::Subscribe { schedule: None, query } = s else { panic!() };
        let SetExpr::Select(sel) = query.body else { panic!() };
        assert!(matches!(sel.from[0].factor.kind, FactorKind::Changes(_)));
    }

    #[test]
    fn increasing_with_grace() {
        let s = parse_statement(
            "ALTER TABLE events CONSTRAINT INCREASING time GRACE INTERVAL '20' second;",
        )
        .unwrap();
        let Statement::AlterTable { action: AlterTableAction::Increasing(d), .. } = s else {
            panic!()
        };
        assert_eq!(d.grace, Some(Expr::Literal(Literal::Interval { n: 20, unit: TimeUnit::Second })));
        assert!(!d.strict);
    }

    #[test]
    fn validate_is_rejected() {
        let e = parse_statement("ALTER TABLE e CONSTRAINT INCREASING t NOVALIDATE").unwrap_err();
        assert!(e.message.contains("validation"), "{e}");
    }

    #[test]
    fn changes_arguments() {
        let q = parse_query("SELECT * FROM CHANGES(T, 12:00, 'DELTA')").unwrap();
        let SetExpr::Select(sel) = q.body else { panic!() };
        let FactorKind::Changes(c) = &sel.from[0].factor.kind else { panic!() };
        assert_eq!(c.start, Some(Expr::Literal(Literal::Clock("12:00".into()))));
        assert_eq!(c.format.as_deref(), Some("DELTA"));

        let q = parse_query(
            "SELECT * FROM CHANGES(SELECT * FROM Stocks ORDER BY price DESC LIMIT 10, 'DELTA')",
        )
        .unwrap();
        let SetExpr::Select(sel) = q.body else { panic!() };
        let FactorKind::Changes(c) = &sel.from[0].factor.kind else { panic!() };
        let ChangesSource::Query(inner) = &c.source else { panic!() };
        assert_eq!(inner.limit, Some(10));
        assert_eq!(c.format.as_deref(), Some("DELTA"));
    }

    #[test]
    fn group_by_stops_before_format() {
        let q = parse_query(
            "SELECT * FROM CHANGES(SELECT k, COUNT(*), MAX(S.val) FROM S GROUP BY k, 'DELTA')",
        )
        .unwrap();
        let SetExpr::Select(sel) = q.body else { panic!() };
        let FactorKind::Changes(c) = &sel.from[0].factor.kind else { panic!() };
        assert_eq!(c.format.as_deref(), Some("DELTA"));
    }

    #[test]
    fn select_final_normalizes() {
        let a = parse_query("SELECT FINAL a, COUNT(*) AS c FROM t GROUP BY a").unwrap();
        let b = parse_query("FINAL(SELECT a, COUNT(*) AS c FROM t GROUP BY a)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn emit_is_rejected() {
        let e = parse_statement("SELECT a FROM t EMIT CHANGES").unwrap_err();
        assert!(e.message.contains("CHANGES(...)"));
        let e = parse_statement("SELECT a FROM t EMIT FINAL").unwrap_err();
        assert!(e.message.contains("FINAL(...)"));
    }

    #[test]
    fn window_forms() {
        let q = parse_query(
            "SELECT * FROM events WINDOW(time START_WITH '15-NOV-19' RANGE INTERVAL '5' DAY ADVANCE INTERVAL '2' DAY BOUNDS (ws, we))",
        )
        .unwrap();
        let SetExpr::Select(sel) = q.body else { panic!() };
        let w = sel.from[0].factor.window.as_ref().unwrap();
        assert_eq!(w.column.as_deref(), Some("time"));
        assert_eq!(w.bounds, Some(("ws".into(), "we".into())));

        let q = parse_query("SELECT AVG(price) FROM s WINDOW HOPPING (SIZE 30 SECONDS, ADVANCE BY 10 SECONDS)")
            .unwrap();
        let SetExpr::Select(sel) = q.body else { panic!() };
        let w = sel.from[0].factor.window.as_ref().unwrap();
        assert_eq!(w.column, None);
        assert_eq!(w.advance, Some(Expr::Literal(Literal::Interval { n: 10, unit: TimeUnit::Second })));
    }

    #[test]
    fn task_default_schedule() {
        let s = parse_statement("CREATE TASK q AS INSERT INTO LogT SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA')")
            .unwrap();
        let Statement::CreateTask(t) = s else { panic!() };
        assert_eq!(t.schedule, Schedule::on_commit());
    }

    #[test]
    fn schedule_combination() {
        let s = parse_statement(
            "CREATE TASK q PERIODIC EVERY 10 SECONDS ON COMMIT AS APPLY CHANGES USING SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA') TO TR",
        )
        .unwrap();
        let Statement::CreateTask(t) = s else { panic!() };
        assert_eq!(t.schedule.triggers.len(), 2);
        assert_eq!(t.action.target(), "TR");
    }

    #[test]
    fn insert_values_as_column_list() {
        let s = parse_statement("INSERT INTO t VALUES(a, b) SELECT x, y FROM s").unwrap();
        let Statement::Insert(i) = s else { panic!() };
        assert_eq!(i.columns, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn not_exist_spelling() {
        let e = parse_expr("NOT EXIST (SELECT 1 FROM t)").unwrap();
        assert!(matches!(e, Expr::Exists { negated: true, .. }));
    }

    #[test]
    fn error_position() {
        let e = parse("SELECT *\nFROM WHERE").unwrap_err();
        assert_eq!((e.line, e.col), (2, 6));
    }
}
