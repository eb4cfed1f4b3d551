//! Workload generators and checks shared by the property tests and the
//! acceptance report. Every check returns `Err` with a readable reason.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Instant;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamsql::analysis::prove_insert_only;
use streamsql::changes::{compact, table_log, Action, ChangeRecord};
use streamsql::engine::Engine;
use streamsql::eval::Relation;
use streamsql::sql::{parse, Statement};
use streamsql::value::{Interval, Value};

pub type Bag = Vec<Vec<String>>;

pub fn run(e: &mut Engine, sql: &str) -> Result<(), String> {
    e.execute_sql(sql).map(|_| ()).map_err(|err| format!("{sql}: {err}"))
}

pub fn bag(rel: &Relation) -> Bag {
    let mut rows: Bag = rel.rows.iter().map(|r| r.iter().map(Value::to_string).collect()).collect();
    rows.sort();
    rows
}

pub fn query_bag(e: &Engine, sql: &str) -> Result<Bag, String> {
    e.query(sql).map(|r| bag(&r.visible())).map_err(|err| format!("{sql}: {err}"))
}

fn ints(e: &Engine, sql: &str) -> Result<Vec<Vec<i64>>, String> {
    let rel = e.query(sql).map_err(|err| format!("{sql}: {err}"))?;
    Ok(rel.rows.iter().map(|r| r.iter().map(|v| v.as_i64().unwrap_or(i64::MIN)).collect()).collect())
}

fn render(rows: Vec<Vec<i64>>) -> Bag {
    let mut out: Bag = rows.into_iter().map(|r| r.iter().map(i64::to_string).collect()).collect();
    out.sort();
    out
}

pub fn tick(e: &mut Engine, secs: i64) -> Result<(), String> {
    let to = e.now().plus(Interval::from_secs(secs));
    e.advance_clock(to).map_err(|err| err.to_string())
}

/// Bag containment `small <= big`.
pub fn contained(small: &Bag, big: &Bag) -> bool {
    let mut counts: BTreeMap<&Vec<String>, i64> = BTreeMap::new();
    for r in big {
        *counts.entry(r).or_default() += 1;
    }
    small.iter().all(|r| {
        let c = counts.entry(r).or_default();
        *c -= 1;
        *c >= 0
    })
}

// ---------------------------------------------------------------------------
// DML workloads over two-column integer tables

#[derive(Debug, Clone)]
pub enum Op {
    Insert(i64, i64),
    /// `SET c2 = v WHERE c1 = k`
    Update(i64, i64),
    /// `SET c2 = c2 + 1 WHERE c2 < v`
    Bump(i64),
    Delete(i64),
}

#[derive(Debug, Clone)]
pub struct Txn {
    pub ops: Vec<Op>,
    pub rollback: bool,
}

pub fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..12i64, 0..50i64).prop_map(|(k, v)| Op::Insert(k, v)),
        2 => (0..12i64, 0..50i64).prop_map(|(k, v)| Op::Update(k, v)),
        1 => (0..50i64).prop_map(Op::Bump),
        2 => (0..12i64).prop_map(Op::Delete),
    ]
}

pub fn workload_strategy(max_txns: usize) -> impl Strategy<Value = Vec<Txn>> {
    vec(
        (vec(op_strategy(), 1..5), proptest::bool::weighted(0.15)).prop_map(|(ops, rollback)| Txn { ops, rollback }),
        1..max_txns,
    )
}

pub fn random_op(rng: &mut ChaCha8Rng, keys: i64) -> Op {
    match rng.gen_range(0..9) {
        0..=3 => Op::Insert(rng.gen_range(0..keys), rng.gen_range(0..50)),
        4 | 5 => Op::Update(rng.gen_range(0..keys), rng.gen_range(0..50)),
        6 => Op::Bump(rng.gen_range(0..50)),
        _ => Op::Delete(rng.gen_range(0..keys)),
    }
}

pub fn op_sql(op: &Op, table: &str, c1: &str, c2: &str) -> String {
    match op {
        Op::Insert(k, v) => format!("INSERT INTO {table} VALUES ({k}, {v})"),
        Op::Update(k, v) => format!("UPDATE {table} SET {c2} = {v} WHERE {c1} = {k}"),
        Op::Bump(v) => format!("UPDATE {table} SET {c2} = {c2} + 1 WHERE {c2} < {v}"),
        Op::Delete(k) => format!("DELETE FROM {table} WHERE {c1} = {k}"),
    }
}

// ---------------------------------------------------------------------------
// Replay: snapshot(s1) + DELTA(s1, s2) == snapshot(s2), and LOG agrees

fn replay(mut rows: BTreeMap<String, Vec<Value>>, recs: &[ChangeRecord]) -> Result<BTreeMap<String, Vec<Value>>, String> {
    for r in recs {
        match r.action {
            Action::Delete => match rows.remove(&r.row_id) {
                Some(old) if old == r.values => {}
                Some(old) => return Err(format!("DELETE {} carries {:?}, row holds {:?}", r.row_id, r.values, old)),
                None => return Err(format!("DELETE of absent row {}", r.row_id)),
            },
            Action::Insert | Action::Update => {
                if rows.insert(r.row_id.clone(), r.values.clone()).is_some() {
                    return Err(format!("{} of present row {}", r.action, r.row_id));
                }
            }
        }
    }
    Ok(rows)
}

fn rows_bag(rows: &BTreeMap<String, Vec<Value>>) -> Bag {
    let mut out: Bag = rows.values().map(|r| r.iter().map(Value::to_string).collect()).collect();
    out.sort();
    out
}

pub fn check_replay(w: &[Txn]) -> Result<(), String> {
    let mut e = Engine::default();
    run(&mut e, "CREATE TABLE T (k INT, v INT)")?;
    let mut points: Vec<(u64, Bag)> = vec![(e.db.clock.seq(), vec![])];
    for txn in w {
        run(&mut e, "BEGIN")?;
        for op in &txn.ops {
            run(&mut e, &op_sql(op, "T", "k", "v"))?;
        }
        if txn.rollback {
            run(&mut e, "ROLLBACK")?;
        } else {
            run(&mut e, "COMMIT")?;
            points.push((e.db.clock.seq(), query_bag(&e, "SELECT k, v FROM T")?));
        }
    }
    let t = e.db.table("T").map_err(|err| err.to_string())?;
    for (i, (s1, snap1)) in points.iter().enumerate() {
        let base = replay(BTreeMap::new(), &compact(&table_log(t, 0, *s1)))?;
        if rows_bag(&base) != *snap1 {
            return Err(format!("DELTA(0, {s1}) does not rebuild the snapshot"));
        }
        for (s2, snap2) in &points[i..] {
            let delta = replay(base.clone(), &compact(&table_log(t, *s1, *s2)))
                .map_err(|err| format!("DELTA({s1}, {s2}): {err}"))?;
            if rows_bag(&delta) != *snap2 {
                return Err(format!("snapshot({s1}) + DELTA({s1}, {s2}) != snapshot({s2})"));
            }
            let log = replay(base.clone(), &table_log(t, *s1, *s2)).map_err(|err| format!("LOG({s1}, {s2}): {err}"))?;
            if log != delta {
                return Err(format!("LOG and DELTA application disagree over ({s1}, {s2}]"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Insert-only analyzer soundness

const ANALYZER_TABLES: &str = "CREATE TABLE S (a INT, b INT, INSERT ONLY);
CREATE TABLE U (a INT, b INT, INSERT ONLY);
CREATE TABLE R (a INT, b INT);";

/// A random relation with columns (a, b).
pub fn random_query(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let leaf = |rng: &mut ChaCha8Rng| -> String {
        match rng.gen_range(0..5) {
            0 | 1 => "SELECT a, b FROM S".into(),
            2 => "SELECT a, b FROM U".into(),
            3 => "SELECT a, b FROM R".into(),
            _ => "SELECT a, b FROM CHANGES(R)".into(),
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    let c = rng.gen_range(0..30);
    let sub = |rng: &mut ChaCha8Rng| random_query(rng, depth - 1);
    match rng.gen_range(0..15) {
        0 | 1 => leaf(rng),
        2 => {
            let pred = [
                format!("a > {c}"),
                format!("b <= {c}"),
                "a = b".to_string(),
                format!("a + b > {c}"),
                format!("NOT (a = {c})"),
                format!("a BETWEEN {c} AND {}", c + 10),
                format!("(a < {c} OR b > {c})"),
            ]
            .choose(rng)
            .unwrap()
            .clone();
            format!("SELECT a, b FROM ({}) x WHERE {pred}", sub(rng))
        }
        3 => format!("SELECT b AS a, a + b AS b FROM ({}) x", sub(rng)),
        4 => format!("SELECT a, b FROM ({}) x UNION ALL SELECT a, b FROM ({}) y", sub(rng), sub(rng)),
        5 => format!("SELECT x.a, y.b FROM ({}) x JOIN ({}) y ON x.a = y.a", sub(rng), sub(rng)),
        6 => format!("SELECT x.a, y.b FROM ({}) x, ({}) y WHERE x.b = y.b", sub(rng), sub(rng)),
        7 => format!(
            "SELECT a, b FROM ({}) x WHERE EXISTS (SELECT 1 FROM ({}) y WHERE y.a = x.a)",
            sub(rng),
            sub(rng)
        ),
        8 => format!(
            "SELECT a, b FROM ({}) x WHERE NOT EXISTS (SELECT 1 FROM ({}) y WHERE y.a = x.a)",
            sub(rng),
            sub(rng)
        ),
        9 => format!("SELECT a, count(*) AS b FROM ({}) x GROUP BY a", sub(rng)),
        10 => format!("SELECT DISTINCT a, b FROM ({}) x", sub(rng)),
        11 => format!("SELECT a, b FROM ({}) x ORDER BY a, b LIMIT 3", sub(rng)),
        12 => format!("SELECT x.a, y.b FROM ({}) x LEFT JOIN ({}) y ON x.a = y.a", sub(rng), sub(rng)),
        13 => format!("SELECT a, b FROM ({}) x WHERE a >= (SELECT max(a) FROM ({}) y)", sub(rng), sub(rng)),
        _ => format!("SELECT a, b FROM ({}) x UNION SELECT a, b FROM ({}) y", sub(rng), sub(rng)),
    }
}

pub struct AnalyzerReport {
    pub proven: usize,
    pub unknown: usize,
}

/// Generates queries until `want` are judged PROVEN and checks each against
/// random workloads: after every commit the old result must be contained in
/// the new one.
pub fn check_analyzer(want: usize, seed: u64) -> Result<AnalyzerReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AnalyzerReport { proven: 0, unknown: 0 };
    let mut schema = Engine::default();
    for stmt in ANALYZER_TABLES.split(';').filter(|s| !s.trim().is_empty()) {
        run(&mut schema, stmt)?;
    }
    let mut attempts = 0;
    while report.proven < want {
        attempts += 1;
        if attempts > want * 50 {
            return Err(format!("only {} PROVEN queries in {attempts} attempts", report.proven));
        }
        let depth = rng.gen_range(1..4);
        let sql = random_query(&mut rng, depth);
        let Statement::Query(q) = parse(&sql).map_err(|err| format!("{sql}: {err}"))?.remove(0) else {
            return Err(format!("{sql}: not a query"));
        };
        let proof = prove_insert_only(&q, &schema.db).map_err(|err| format!("{sql}: {err}"))?;
        if !proof.is_proven() {
            report.unknown += 1;
            continue;
        }
        report.proven += 1;
        for round in 0..2 {
            let mut e = Engine::default();
            for stmt in ANALYZER_TABLES.split(';').filter(|s| !s.trim().is_empty()) {
                run(&mut e, stmt)?;
            }
            let mut prev = query_bag(&e, &sql)?;
            for step in 0..10 {
                run(&mut e, "BEGIN")?;
                for _ in 0..rng.gen_range(1..4) {
                    let table = *["S", "U", "R", "R"].choose(&mut rng).unwrap();
                    let op = if table == "R" {
                        random_op(&mut rng, 8)
                    } else {
                        Op::Insert(rng.gen_range(0..8), rng.gen_range(0..30))
                    };
                    run(&mut e, &op_sql(&op, table, "a", "b"))?;
                }
                run(&mut e, "COMMIT")?;
                let now = query_bag(&e, &sql)?;
                if !contained(&prev, &now) {
                    return Err(format!("PROVEN query lost rows (round {round}, commit {step}): {sql}"));
                }
                prev = now;
            }
        }
    }
    Ok(report)
}

/// Verdicts for the three textbook cases.
pub fn check_analyzer_examples() -> Result<(), String> {
    let mut e = Engine::default();
    for stmt in ANALYZER_TABLES.split(';').filter(|s| !s.trim().is_empty()) {
        run(&mut e, stmt)?;
    }
    for (sql, proven) in [
        ("SELECT * FROM S JOIN U ON S.a = U.a", true),
        ("SELECT a, count(*) FROM S GROUP BY a", false),
        ("SELECT * FROM CHANGES(R)", true),
        ("SELECT * FROM R", false),
    ] {
        let Statement::Query(q) = parse(sql).map_err(|err| err.to_string())?.remove(0) else { unreachable!() };
        let got = prove_insert_only(&q, &e.db).map_err(|err| err.to_string())?.is_proven();
        if got != proven {
            return Err(format!("{sql}: expected PROVEN={proven}, got {got}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Continuous DML against brute-force recomputation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    ChangeLog,
    Replication,
    ScdJoin,
    TopTen,
    Aggregation,
}

pub const SHAPES: [Shape; 5] = [Shape::ChangeLog, Shape::Replication, Shape::ScdJoin, Shape::TopTen, Shape::Aggregation];

struct ShapeDef {
    ddl: &'static [&'static str],
    /// (table, key column, value column) receiving random DML.
    sources: &'static [(&'static str, &'static str, &'static str)],
}

fn shape_def(shape: Shape) -> ShapeDef {
    match shape {
        Shape::ChangeLog => ShapeDef {
            ddl: &[
                "CREATE TABLE T (k INT, v INT)",
                "CREATE TABLE LogT (k INT, v INT, Action VARCHAR(10), RowID VARCHAR(16), Time TIMESTAMP)",
                "CREATE TASK q AS INSERT INTO LogT SELECT CONTINUOUS * FROM CHANGES(T, LAST_SCHEDULE_TIME, 'DELTA')",
            ],
            sources: &[("T", "k", "v")],
        },
        Shape::Replication => ShapeDef {
            ddl: &[
                "CREATE TABLE T (k INT, v INT)",
                "CREATE TABLE TR (k INT, v INT)",
                "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA') TO TR",
            ],
            sources: &[("T", "k", "v")],
        },
        Shape::ScdJoin => ShapeDef {
            ddl: &[
                "CREATE TABLE F (fk INT, amount INT)",
                "CREATE TABLE D (dk INT, name INT)",
                "CREATE TABLE J (fk INT, amount INT, dk INT, name INT)",
                "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * \
                 FROM CHANGES(SELECT * FROM F, D WHERE F.fk = D.dk, 'DELTA') TO J",
            ],
            sources: &[("F", "fk", "amount"), ("D", "dk", "name"), ("D", "dk", "name")],
        },
        Shape::TopTen => ShapeDef {
            ddl: &[
                "CREATE TABLE Stocks (id INT, price INT)",
                "CREATE TABLE Top (id INT, price INT)",
                "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * \
                 FROM CHANGES(SELECT * FROM Stocks ORDER BY price DESC, id LIMIT 10, 'DELTA') TO Top",
            ],
            sources: &[("Stocks", "id", "price")],
        },
        Shape::Aggregation => ShapeDef {
            ddl: &[
                "CREATE TABLE S (g INT, val INT)",
                "CREATE TABLE Agg (g INT, n INT, mx INT)",
                "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * \
                 FROM CHANGES(SELECT g, COUNT(*) n, MAX(S.val) mx FROM S GROUP BY g, 'DELTA') TO Agg",
            ],
            sources: &[("S", "g", "val")],
        },
    }
}

/// Rebuilds a table from its change log: records are grouped by commit time,
/// deletes first.
fn replay_change_log(rows: &[Vec<Value>]) -> Result<Bag, String> {
    let mut by_time: BTreeMap<String, Vec<&Vec<Value>>> = BTreeMap::new();
    for r in rows {
        by_time.entry(format!("{:?}", r[4])).or_default().push(r);
    }
    let mut state: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut times: Vec<_> = by_time.into_iter().collect();
    times.sort_by(|a, b| a.1[0][4].sql_cmp(&b.1[0][4]).ok().flatten().unwrap_or(std::cmp::Ordering::Equal));
    for (_, recs) in times {
        for deletes in [true, false] {
            for r in &recs {
                let payload = vec![r[0].to_string(), r[1].to_string()];
                let id = r[3].to_string();
                let is_delete = r[2].as_str() == Some("DELETE");
                if is_delete != deletes {
                    continue;
                }
                if is_delete {
                    if state.remove(&id) != Some(payload) {
                        return Err(format!("log DELETE of {id} does not match the logged row"));
                    }
                } else if state.insert(id.clone(), payload).is_some() {
                    return Err(format!("log adds {id} twice"));
                }
            }
        }
    }
    let mut out: Bag = state.into_values().collect();
    out.sort();
    Ok(out)
}

/// Target contents the task must have produced, computed from the base tables.
fn expected(shape: Shape, e: &Engine) -> Result<Bag, String> {
    Ok(match shape {
        Shape::ChangeLog | Shape::Replication => render(ints(e, "SELECT k, v FROM T")?),
        Shape::ScdJoin => {
            let f = ints(e, "SELECT fk, amount FROM F")?;
            let d = ints(e, "SELECT dk, name FROM D")?;
            let mut out = Vec::new();
            for x in &f {
                for y in &d {
                    if x[0] == y[0] {
                        out.push(vec![x[0], x[1], y[0], y[1]]);
                    }
                }
            }
            render(out)
        }
        Shape::TopTen => {
            let mut s = ints(e, "SELECT id, price FROM Stocks")?;
            s.sort_by(|a, b| b[1].cmp(&a[1]).then(a[0].cmp(&b[0])));
            s.truncate(10);
            render(s)
        }
        Shape::Aggregation => {
            let mut groups: BTreeMap<i64, (i64, i64)> = BTreeMap::new();
            for r in ints(e, "SELECT g, val FROM S")? {
                let g = groups.entry(r[0]).or_insert((0, i64::MIN));
                g.0 += 1;
                g.1 = g.1.max(r[1]);
            }
            render(groups.into_iter().map(|(g, (n, mx))| vec![g, n, mx]).collect())
        }
    })
}

fn actual(shape: Shape, e: &Engine) -> Result<Bag, String> {
    match shape {
        Shape::ChangeLog => {
            let rel = e.query("SELECT k, v, Action, RowID, Time FROM LogT").map_err(|err| err.to_string())?;
            replay_change_log(&rel.rows)
        }
        Shape::Replication => query_bag(e, "SELECT k, v FROM TR"),
        Shape::ScdJoin => query_bag(e, "SELECT fk, amount, dk, name FROM J"),
        Shape::TopTen => query_bag(e, "SELECT id, price FROM Top"),
        Shape::Aggregation => query_bag(e, "SELECT g, n, mx FROM Agg"),
    }
}

/// Runs `steps` random committed transactions; after each one the target
/// must equal the recomputation.
pub fn check_task_shape(shape: Shape, steps: usize, seed: u64) -> Result<(), String> {
    let def = shape_def(shape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Engine::default();
    for stmt in def.ddl {
        run(&mut e, stmt)?;
    }
    for step in 0..steps {
        tick(&mut e, 1)?;
        run(&mut e, "BEGIN")?;
        for _ in 0..rng.gen_range(1..4) {
            let (table, c1, c2) = *def.sources.choose(&mut rng).unwrap();
            run(&mut e, &op_sql(&random_op(&mut rng, 12), table, c1, c2))?;
        }
        run(&mut e, "COMMIT").map_err(|err| format!("{shape:?} step {step}: {err}"))?;
        let (want, got) = (expected(shape, &e)?, actual(shape, &e)?);
        if want != got {
            return Err(format!("{shape:?} step {step}: target {got:?} != recomputation {want:?}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tumbling and hopping FINAL windows against their task + cursor rewrites

const REWRITE_DDL: &[&str] = &[
    "CREATE TABLE Orders (eventTime TIMESTAMP, productId INT, INSERT ONLY)",
    "ALTER TABLE Orders CONSTRAINT INCREASING eventTime GRACE INTERVAL '10' SECOND",
    "CREATE TABLE t (eventHour TIMESTAMP, productId INT, orderCount INT, INSERT ONLY)",
    "CREATE TABLE th (gid INT, productId INT, orderCount INT, INSERT ONLY)",
    "CREATE CONTINUOUS CURSOR tumble AS FINAL(
        SELECT eventHour, productId, COUNT(*) as orderCount
        FROM Orders WINDOW (eventTime RANGE INTERVAL '1' HOUR GRACE INTERVAL '10' SECONDS
                            BOUNDS (eventHour, win_end))
        GROUP BY eventHour, productId)",
    "CREATE CONTINUOUS TASK tumbleTask AS
        INSERT INTO t (eventHour, productId, orderCount)
        SELECT FLOOR(eventTime TO HOUR) as eventHour, productId, COUNT(*) as orderCount
        FROM Orders o
        WHERE EXISTS (SELECT 1 FROM Orders o2
                      WHERE o2.eventTime >= FLOOR(o.eventTime TO HOUR) + INTERVAL '1' HOUR + INTERVAL '10' SECONDS)
          AND NOT EXISTS (SELECT 1 FROM t WHERE t.eventHour = FLOOR(o.eventTime TO HOUR))
        GROUP BY eventHour, productId",
    "CREATE CONTINUOUS CURSOR tumbleRewrite AS FINAL(SELECT eventHour, productId, orderCount FROM t)",
    "CREATE CONTINUOUS CURSOR hop AS FINAL(
        SELECT win_start, win_end, productId, COUNT(*) as orderCount
        FROM Orders WINDOW(eventTime RANGE INTERVAL '1' HOUR ADVANCE INTERVAL '20' MINUTES
                           GRACE INTERVAL '10' SECONDS BOUNDS (win_start, win_end))
        GROUP BY win_start, win_end, productId)",
    "CREATE CONTINUOUS TASK hopTask AS
        INSERT INTO th (gid, productId, orderCount)
        SELECT g.COLUMN_VALUE as gid, o.productId, COUNT(*) as orderCount
        FROM Orders o, TABLE(range_identifiers(o.eventTime, INTERVAL '1' HOUR, INTERVAL '20' MINUTES)) g
        WHERE EXISTS (SELECT 1 FROM Orders oi
                      WHERE oi.eventTime >= start_time(g.COLUMN_VALUE, INTERVAL '20' MINUTES)
                                            + INTERVAL '1' HOUR + INTERVAL '10' SECONDS)
          AND NOT EXISTS (SELECT 1 FROM th WHERE th.gid = g.COLUMN_VALUE)
        GROUP BY gid, productId",
    "CREATE CONTINUOUS CURSOR hopRewrite AS FINAL(
        SELECT start_time(gid, INTERVAL '20' MINUTES) as win_start,
               end_time(gid, INTERVAL '20' MINUTES, INTERVAL '1' HOUR) as win_end,
               productId, orderCount
        FROM th)",
    "OPEN tumble",
    "OPEN tumbleRewrite",
    "OPEN hop",
    "OPEN hopRewrite",
];

pub struct RewriteReport {
    pub tumble_rows: usize,
    pub hop_rows: usize,
}

/// One random Orders workload; returns how many window rows both forms emitted.
pub fn check_rewrites(seed: u64) -> Result<RewriteReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Engine::default();
    tick(&mut e, 1_700_000_000)?;
    for stmt in REWRITE_DDL {
        run(&mut e, stmt)?;
    }
    let mut emitted: BTreeMap<&str, Bag> = BTreeMap::new();
    let mut event = 1_700_000_000 + rng.gen_range(0..3600);
    for _ in 0..rng.gen_range(10..40) {
        let n = rng.gen_range(1..4);
        let rows: Vec<String> = (0..n)
            .map(|_| {
                // mostly forward, sometimes a little late or far beyond the grace
                event += rng.gen_range(0..900);
                let late = if rng.gen_bool(0.3) { rng.gen_range(0..20) } else { 0 };
                let ts = streamsql::value::Timestamp::new(event - late, streamsql::value::TsFormat::IsoDateTime);
                format!("('{}', {})", Value::Timestamp(ts), rng.gen_range(1..4))
            })
            .collect();
        tick(&mut e, 1)?;
        let sql = format!("INSERT INTO Orders VALUES {}", rows.join(", "));
        match e.execute_sql(&sql) {
            Ok(_) => {}
            Err(err) if err.kind() == "IncreasingViolation" => continue,
            Err(err) => return Err(format!("{sql}: {err}")),
        }
        for cursor in ["tumble", "tumbleRewrite", "hop", "hopRewrite"] {
            let rel = e.fetch(cursor, None).map_err(|err| format!("FETCH {cursor}: {err}"))?;
            emitted.entry(cursor).or_default().extend(bag(&rel));
        }
    }
    let mut sorted = |name: &str| {
        let mut b = emitted.remove(name).unwrap_or_default();
        b.sort();
        b
    };
    let (tumble, tumble_rw, hop, hop_rw) = (sorted("tumble"), sorted("tumbleRewrite"), sorted("hop"), sorted("hopRewrite"));
    if tumble != tumble_rw {
        return Err(format!("seed {seed}: tumbling window {tumble:?} != rewrite {tumble_rw:?}"));
    }
    if hop != hop_rw {
        return Err(format!("seed {seed}: hopping window {hop:?} != rewrite {hop_rw:?}"));
    }
    Ok(RewriteReport { tumble_rows: tumble.len(), hop_rows: hop.len() })
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
