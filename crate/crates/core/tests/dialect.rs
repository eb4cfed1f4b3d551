//! Parses the streaming statements used throughout the docs and goldens and
//! checks that rendering is a fixed point.

use streamsql::sql::{parse, Statement};

const ACCEPTED: &[&str] = &[
    "SELECT * FROM myStream",
    "SELECT AVG(price) FROM myStream",
    "SELECT * FROM CHANGES(SELECT AVG(price) FROM myStream)",
    "SELECT AVG(price) FROM myStream WINDOW HOPPING (SIZE 30 SECONDS, ADVANCE BY 10 SECONDS)",
    "ALTER TABLE myStream FINALIZE (time <= TIMESTAMP '2023-01-01 00:00:00')",
    "FINAL(SELECT AVG(price) FROM myStream WINDOW HOPPING (SIZE 30 SECONDS, ADVANCE BY 10 SECONDS))",
    "FINAL(SELECT AVG(price) FROM myStream WINDOW HOPPING (SIZE 30 SECONDS, ADVANCE BY 10 SECONDS) \
     FINALIZE (time <= TIMESTAMP '2023-01-01 00:00:00'))",
    "ALTER TABLE myStream EXPIRE (time <= TIMESTAMP '2023-01-01 00:00:00')",
    "CREATE TABLE T (Key VARCHAR(10), Val INT) INSERT ONLY",
    "ALTER TABLE T INSERT ONLY",
    "ALTER TABLE T DROP INSERT ONLY",
    "CONTINUOUS CURSOR c IS SELECT * FROM myStream",
    "CREATE CONTINUOUS CURSOR c AS SELECT * FROM CHANGES(myStream)",
    "SUBSCRIBE TO SELECT * FROM CHANGES(myStream)",
    "SUBSCRIBE TO SELECT * FROM myStream",
    "SUBSCRIBE PERIODIC EVERY 10 SECONDS TO SELECT * FROM myStream",
    "CREATE TASK q ON COMMIT AS INSERT INTO LogT SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA')",
    "CREATE TASK q AS INSERT INTO LogT SELECT CONTINUOUS * FROM CHANGES(T, LAST_SCHEDULE_TIME, 'DELTA')",
    "CREATE TASK q ON COMMIT AS \
     MERGE INTO TR USING (SELECT CONTINUOUS Key, Val, RowID RowId$, Action delta$ \
                          FROM CHANGES(T, LAST_SCHEDULE_TIME, 'DELTA')) S \
     ON (TR.RowID$ = S.RowID$ AND (S.delta$ != 'INSERT')) \
     WHEN MATCHED THEN UPDATE SET TR.Key = S.Key, TR.Val = S.Val, TR.RowID$ = S.RowID$, TR.delta$ = S.delta$ \
     DELETE WHERE TR.delta$ = 'DELETE' \
     WHEN NOT MATCHED THEN INSERT (TR.Key, TR.Val) VALUES (S.Key, S.Val)",
    "CREATE TASK q AS INSERT INTO TR SELECT CONTINUOUS S.Key, S.Val FROM (SELECT * FROM CHANGES(T, 'DELTA')) S",
    "CREATE TASK q ON COMMIT AS APPLY CHANGES USING SELECT CONTINUOUS * \
     FROM CHANGES(SELECT * FROM CHANGES(T, 'DELTA'), 'DELTA') TO LogT",
    "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA') TO TR",
    "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * \
     FROM CHANGES(SELECT * FROM F, D WHERE F.k = D.k, 'DELTA') TO T",
    "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * \
     FROM CHANGES(SELECT * FROM Stocks ORDER BY price DESC LIMIT 10, 'DELTA') TO T",
    "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * \
     FROM CHANGES(SELECT g, COUNT(*), MAX(S.val) FROM S GROUP BY g, 'DELTA') TO T",
    "CREATE TASK q PERIODIC EVERY 10 SECONDS ON COMMIT AS \
     APPLY CHANGES USING SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA') TO TR",
    "CREATE TASK q COMMIT ASYNCHRONOUSLY AS INSERT INTO LogT SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA')",
    "CREATE TASK q COMMIT ON T, U ASYNCHRONOUS AS INSERT INTO LogT SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA')",
    "CREATE TASK q DEMAND END AFTER 3 EXECUTIONS AS INSERT INTO LogT SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA')",
    "CREATE TASK q AS APPLY CHANGES USING SELECT CONTINUOUS * FROM CHANGES(T, 'DELTA') TO TR \
     LOG ERRORS INTO errs ('q') REJECT LIMIT 10 RETRY LIMIT 2 WITH INITIAL SNAPSHOT",
    "ALTER TASK q PAUSE",
    "ALTER TASK q RESUME",
    "ALTER TASK q STOP",
    "DROP TASK q",
    "ALTER TABLE events CONSTRAINT INCREASING time",
    "ALTER TABLE events CONSTRAINT STRICTLY INCREASING time",
    "ALTER TABLE events CONSTRAINT INCREASING time GRACE INTERVAL '20' second",
    "ALTER TABLE events CONSTRAINT INCREASING time GRACE INTERVAL '1' DAY TO SECOND",
    "SELECT location, win_start, win_end, sum(measure) sum_m \
     FROM events WINDOW(time START_WITH '15-NOV-19' RANGE INTERVAL '5' DAY ADVANCE INTERVAL '2' DAY \
     BOUNDS (win_start, win_end)) \
     GROUP BY location, win_start, win_end",
    "CREATE CONTINUOUS CURSOR c AS \
     SELECT Action, location, win_start, win_end, sum_m FROM CHANGES( \
       SELECT location, win_start, win_end, sum(measure) sum_m \
       FROM events WINDOW(time START_WITH '15-NOV-19' RANGE INTERVAL '5' DAY ADVANCE INTERVAL '2' DAY \
       BOUNDS (win_start, win_end)) \
       GROUP BY location, win_start, win_end)",
    "CREATE CONTINUOUS CURSOR c AS \
     FINAL(SELECT location, win_start, win_end, sum(measure) sum_m \
       FROM events WINDOW(time START_WITH '15-NOV-19' RANGE INTERVAL '5' DAY ADVANCE INTERVAL '2' DAY \
       BOUNDS (win_start, win_end)) \
       GROUP BY location, win_start, win_end)",
    "CREATE CONTINUOUS CURSOR c AS \
     FINAL(SELECT win_start, win_end, productId, COUNT(*) as orderCount \
       FROM Orders WINDOW(eventTime RANGE INTERVAL '1' HOUR ADVANCE INTERVAL '10' MINUTES \
       GRACE INTERVAL '10' SECONDS BOUNDS (win_start, win_end)) \
       GROUP BY win_start, win_end, productId)",
    "CREATE TABLE ledger (time timestamp, account integer, credit number)",
    "ALTER TABLE ledger FINALIZE WHERE time < '2023-11-01'",
    "FINAL(SELECT * FROM ledger)",
    "CREATE TABLE events (metric text, time timestamp, measure number, INSERT ONLY)",
    "WITH finalized_events AS (SELECT * FROM events FINALIZE WHERE time <= (SELECT max(wm) FROM watermarks)) \
     FINAL(SELECT metric, date_trunc(minute, time) minute, sum(measure) sum_m \
           FROM finalized_events GROUP BY metric, minute)",
    "CREATE TABLE LOGS (level varchar, message varchar, ts timestamp) \
     EXPIRE WHERE (level = 'DEBUG' and ts < dateadd(-1, 'day', now()))",
    "ALTER TABLE LOGS MODIFY EXPIRE WHERE (level = 'DEBUG' and ts < dateadd(-1, 'day', now())) \
     OR (level = 'WARN' and ts < dateadd(-7, 'day', now()))",
    "ALTER TABLE LOGS ADD EXPIRE WHERE level = 'INFO'",
    "ALTER TABLE LOGS DROP EXPIRE",
    "SELECT FLOOR(eventTime TO HOUR) AS eventHour, productId, COUNT(*) AS orderCount FROM Orders \
     WHERE EXISTS (SELECT 1 FROM Orders o2 WHERE o2.eventTime >= FLOOR(eventTime TO HOUR) + INTERVAL '10' SECONDS) \
     AND NOT EXISTS (SELECT 1 FROM t WHERE t.eventHour = eventHour) \
     GROUP BY eventHour, productId",
    "SET EXPIRED_READS = IGNORE",
    "FETCH 2 FROM c",
    "FETCH c",
    "CLOSE c",
    "BEGIN",
    "COMMIT",
    "ROLLBACK",
];

const REJECTED: &[(&str, &str)] = &[
    ("SELECT location, sum(measure) sum_m FROM events GROUP BY location EMIT CHANGES", "EMIT CHANGES"),
    ("SELECT location, sum(measure) sum_m FROM events GROUP BY location EMIT FINAL", "EMIT FINAL"),
    ("ALTER TABLE events CONSTRAINT INCREASING time VALIDATE", "validat"),
    ("ALTER TABLE events CONSTRAINT INCREASING time NOVALIDATE", "validat"),
];

fn single(sql: &str) -> Statement {
    let mut stmts = parse(sql).unwrap_or_else(|e| panic!("{sql}\n  {e}"));
    assert_eq!(stmts.len(), 1, "{sql}");
    stmts.remove(0)
}

#[test]
fn corpus_parses_and_renders_to_a_fixed_point() {
    for sql in ACCEPTED {
        let stmt = single(sql);
        let text = stmt.to_string();
        let again = single(&text);
        assert_eq!(again, stmt, "render changed the statement:\n  {sql}\n  {text}");
        assert_eq!(again.to_string(), text);
    }
}

#[test]
fn unsupported_forms_get_a_diagnostic() {
    for (sql, needle) in REJECTED {
        let err = parse(sql).expect_err(sql).to_string();
        assert!(err.to_lowercase().contains(&needle.to_lowercase()), "{sql}: {err}");
    }
}
