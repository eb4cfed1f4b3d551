//! Syntax tree for the dialect. Every node renders back to text (see
//! `render.rs`) such that parsing the rendering yields an equal tree.

use serde::{Deserialize, Serialize};

use crate::value::TimeUnit;

pub type Ident = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Statement {
    Query(Query),
    Subscribe { schedule: Option<Schedule>, query: Query },
    DeclareCursor { name: Ident, with_return: Option<bool>, query: Query },
    Open(Ident),
    Fetch { cursor: Ident, count: Option<u64> },
    Close(Ident),
    Insert(Insert),
    Update(Update),
    Delete(Delete),
    Merge(Merge),
    CreateTable(CreateTable),
    DropTable(Ident),
    AlterTable { table: Ident, action: AlterTableAction },
    CreateTask(CreateTask),
    AlterTask { name: Ident, verb: TaskVerb },
    DropTask(Ident),
    ExecuteTask(Ident),
    Begin,
    Commit,
    Rollback,
    Set { name: Ident, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub with: Vec<Cte>,
    pub body: SetExpr,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

impl Query {
    pub fn from_body(body: SetExpr) -> Query {
        Query { with: vec![], body, order_by: vec![], limit: None }
    }

    pub fn is_plain(&self) -> bool {
        self.with.is_empty() && self.order_by.is_empty() && self.limit.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cte {
    pub name: Ident,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderItem {
    pub expr: Expr,
    pub desc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetOp {
    Union,
    Intersect,
    Except,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SetExpr {
    Select(Box<Select>),
    Values(Vec<Vec<Expr>>),
    /// A parenthesized query used as a set operand.
    Query(Box<Query>),
    Final(Box<Query>),
    SetOp { op: SetOp, all: bool, left: Box<SetExpr>, right: Box<SetExpr> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Select {
    pub continuous: bool,
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Vec<TableRef>,
    pub selection: Option<Expr>,
    pub finalize: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(Ident),
    Expr { expr: Expr, alias: Option<Ident> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRef {
    pub factor: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JoinKind {
    Inner,
    Left,
    Cross,
    Natural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Join {
    pub kind: JoinKind,
    pub factor: TableFactor,
    pub on: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFactor {
    pub kind: FactorKind,
    pub alias: Option<Ident>,
    pub window: Option<Box<WindowSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FactorKind {
    Table(Ident),
    Derived(Box<Query>),
    Changes(Box<Changes>),
    /// `TABLE(fn(args))`
    Function { name: Ident, args: Vec<Expr> },
    /// Parenthesized FROM list, `(a, b)`.
    Nested(Vec<TableRef>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Changes {
    pub source: ChangesSource,
    pub start: Option<Expr>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChangesSource {
    Table(Ident),
    Query(Query),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Absent only for the HOPPING/TUMBLING shorthand, which windows on the
    /// first timestamp column.
    pub column: Option<Ident>,
    pub start: Option<Expr>,
    pub range: Expr,
    pub advance: Option<Expr>,
    pub grace: Option<Expr>,
    pub bounds: Option<(Ident, Ident)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Plus,
    Minus,
    Mul,
    Div,
    Mod,
    Concat,
}

impl BinaryOp {
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq
            | BinaryOp::NotEq
            | BinaryOp::Lt
            | BinaryOp::LtEq
            | BinaryOp::Gt
            | BinaryOp::GtEq => 4,
            BinaryOp::Plus | BinaryOp::Minus | BinaryOp::Concat => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 6,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "OR",
            BinaryOp::And => "AND",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Concat => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Null,
    Bool(bool),
    /// Kept as written so `30.00` round-trips.
    Number(String),
    Str(String),
    /// Bare clock label such as `12:03`.
    Clock(String),
    Interval { n: i64, unit: TimeUnit },
    Timestamp(String),
    Date(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Literal(Literal),
    Column { qualifier: Option<Ident>, name: Ident },
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { op: BinaryOp, left: Box<Expr>, right: Box<Expr> },
    IsNull { expr: Box<Expr>, negated: bool },
    Between { expr: Box<Expr>, low: Box<Expr>, high: Box<Expr>, negated: bool },
    InList { expr: Box<Expr>, list: Vec<Expr>, negated: bool },
    /// Scalar and aggregate calls. `star` marks `COUNT(*)`.
    Function { name: Ident, args: Vec<Expr>, distinct: bool, star: bool },
    /// `FLOOR(e TO HOUR)`
    FloorTo { expr: Box<Expr>, unit: TimeUnit },
    Exists { query: Box<Query>, negated: bool },
    Subquery(Box<Query>),
    /// `CURRENT_TIMESTAMP` written without parentheses.
    CurrentTimestamp,
    LastScheduleTime,
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column { qualifier: None, name: name.to_string() }
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    /// Calls `f` on every direct child expression (not descending into
    /// subqueries).
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Literal(_)
            | Expr::Column { .. }
            | Expr::Exists { .. }
            | Expr::Subquery(_)
            | Expr::CurrentTimestamp
            | Expr::LastScheduleTime => vec![],
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::FloorTo { expr, .. } => {
                vec![expr]
            }
            Expr::Binary { left, right, .. } => vec![left, right],
            Expr::Between { expr, low, high, .. } => vec![expr, low, high],
            Expr::InList { expr, list, .. } => {
                let mut v = vec![expr.as_ref()];
                v.extend(list.iter());
                v
            }
            Expr::Function { args, .. } => args.iter().collect(),
        }
    }

    /// Whether any node of the expression (outside subqueries) satisfies `p`.
    pub fn any(&self, p: &dyn Fn(&Expr) -> bool) -> bool {
        p(self) || self.children().into_iter().any(|c| c.any(p))
    }

    pub fn contains_aggregate(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Function { name, .. } if is_aggregate(name)))
    }
}

pub fn is_aggregate(name: &str) -> bool {
    matches!(
        name.to_ascii_lowercase().as_str(),
        "count" | "sum" | "avg" | "min" | "max"
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insert {
    pub table: Ident,
    pub columns: Vec<Ident>,
    pub source: Query,
    pub error_logging: Option<ErrorLogging>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub qualifier: Option<Ident>,
    pub column: Ident,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub table: Ident,
    pub assignments: Vec<Assignment>,
    pub selection: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delete {
    pub table: Ident,
    pub selection: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub target: Ident,
    pub target_alias: Option<Ident>,
    pub source: TableFactor,
    pub on: Expr,
    pub matched: Option<MergeMatched>,
    pub not_matched: Option<MergeInsert>,
    pub error_logging: Option<ErrorLogging>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeMatched {
    pub assignments: Vec<Assignment>,
    pub delete_where: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeInsert {
    /// `(qualifier, column)` pairs; empty means all target columns in order.
    pub columns: Vec<(Option<Ident>, Ident)>,
    pub values: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: Ident,
    /// Upper-cased type name, e.g. `VARCHAR`.
    pub type_name: String,
    pub type_args: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateTable {
    pub name: Ident,
    pub columns: Vec<ColumnDef>,
    pub increasing: Vec<IncreasingDef>,
    pub insert_only: bool,
    pub expire: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncreasingDef {
    pub strict: bool,
    pub column: Ident,
    pub grace: Option<Expr>,
    pub enabled: Option<bool>,
    pub deferred: Option<bool>,
    pub rely: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpireVerb {
    Add,
    Modify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlterTableAction {
    InsertOnly,
    DropInsertOnly,
    Increasing(IncreasingDef),
    Finalize(Expr),
    Expire { verb: ExpireVerb, predicate: Expr },
    DropExpire,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskVerb {
    Pause,
    Resume,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateTask {
    pub name: Ident,
    /// `CREATE CONTINUOUS TASK`
    pub continuous: bool,
    pub schedule: Schedule,
    pub initial_snapshot: bool,
    pub action: TaskAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskAction {
    Insert(Insert),
    Merge(Merge),
    ApplyChanges { source: Query, target: Ident, error_logging: Option<ErrorLogging> },
}

impl TaskAction {
    pub fn target(&self) -> &str {
        match self {
            TaskAction::Insert(i) => &i.table,
            TaskAction::Merge(m) => &m.target,
            TaskAction::ApplyChanges { target, .. } => target,
        }
    }

    pub fn error_logging(&self) -> Option<&ErrorLogging> {
        match self {
            TaskAction::Insert(i) => i.error_logging.as_ref(),
            TaskAction::Merge(m) => m.error_logging.as_ref(),
            TaskAction::ApplyChanges { error_logging, .. } => error_logging.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub triggers: Vec<Trigger>,
    pub end: Option<ScheduleEnd>,
}

impl Schedule {
    pub fn on_commit() -> Schedule {
        Schedule {
            triggers: vec![Trigger::OnCommit { tables: vec![], asynchronous: false }],
            end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trigger {
    OnCommit { tables: Vec<Ident>, asynchronous: bool },
    Periodic { n: i64, unit: TimeUnit },
    OnDemand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleEnd {
    AfterCount(u64),
    At(Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RejectLimit {
    Count(u64),
    Unlimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorLogging {
    pub into: Option<Ident>,
    pub tag: Option<Expr>,
    pub reject_limit: Option<RejectLimit>,
    pub retry_limit: Option<u64>,
}
