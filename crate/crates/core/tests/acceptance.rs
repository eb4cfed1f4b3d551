//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the report.
//! The test fails when a criterion outside `KNOWN_RED` fails, or when a
//! known-red criterion starts passing (so the list gets updated).

mod common;

use std::path::PathBuf;

use common::*;
use proptest::test_runner::{Config, TestRunner};
use streamsql::cursor::format_tuples;
use streamsql::engine::{Engine, Output};
use streamsql::script::{format_table, parse_script, run_script, Item};
use streamsql::value::{parse_clock_label, parse_timestamp};

/// Criteria that cannot pass as written. 4: the printed batches 4 and 5 are
/// not consistent with the printed input rows (see the decision log).
const KNOWN_RED: &[u32] = &[4];

type Check = Result<String, String>;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../goldens").join(format!("{name}.sql"))
}

fn read_golden(name: &str) -> Result<String, String> {
    std::fs::read_to_string(golden_path(name)).map_err(|e| format!("{name}.sql: {e}"))
}

/// Runs a golden script; returns the engine in its final state.
fn golden(name: &str) -> Result<(Engine, String), String> {
    let text = read_golden(name)?;
    let mut e = Engine::default();
    let out = run_script(&mut e, &text);
    if out.exit_code != 0 {
        return Err(format!("{name}.sql exit {}: {}", out.exit_code, out.failures.join("; ")));
    }
    Ok((e, out.transcript))
}

fn table(e: &Engine, sql: &str) -> Result<Vec<String>, String> {
    e.query(sql).map(|r| format_table(&r.visible())).map_err(|err| format!("{sql}: {err}"))
}

fn expect_lines(what: &str, got: Vec<String>, want: &[&str]) -> Result<(), String> {
    if got != want {
        return Err(format!("{what}: got {got:?}, want {want:?}"));
    }
    Ok(())
}

/// Replays a script statement by statement and collects the rows of every
/// `FETCH <cursor>`.
fn fetch_batches(name: &str, cursor: &str) -> Result<Vec<Vec<String>>, String> {
    let text = read_golden(name)?;
    let mut e = Engine::default();
    let mut batches = Vec::new();
    let mut expect_error = false;
    for item in parse_script(&text)? {
        match item {
            Item::Directive { name, arg, .. } if name == "clock" => {
                let base = Some(e.db.base_date());
                let t = parse_clock_label(&arg, base).or_else(|| parse_timestamp(&arg, base)).ok_or("bad clock")?;
                e.advance_clock(t).map_err(|err| err.to_string())?;
            }
            Item::Directive { name, .. } if name == "expect-error" => expect_error = true,
            Item::Directive { .. } | Item::Expect { .. } => {}
            Item::Sql { text, .. } => {
                let res = e.execute_sql(&text);
                if std::mem::take(&mut expect_error) {
                    continue;
                }
                let outs = res.map_err(|err| format!("{}: {err}", text.trim()))?;
                let words: Vec<String> = text.split_whitespace().map(|w| w.trim_end_matches(';').to_ascii_lowercase()).collect();
                if words.first().map(String::as_str) == Some("fetch") && words.last() == Some(&cursor.to_ascii_lowercase()) {
                    for o in outs {
                        if let Output::Fetched(rel) = o {
                            batches.push(format_tuples(&rel));
                        }
                    }
                }
            }
        }
    }
    Ok(batches)
}

fn last_value(row: &str) -> String {
    row.trim_end_matches(')').rsplit(", ").next().unwrap_or("").to_string()
}

fn c1_change_log() -> Check {
    let (res, secs) = timed(|| golden("change_log"));
    let (e, _) = res?;
    if secs >= 1.0 {
        return Err(format!("replay took {secs:.2}s"));
    }
    expect_lines(
        "LogT at 12:05",
        table(&e, "SELECT * FROM LogT")?,
        &[
            "Key | Val | Action | RowID | Time",
            "A | 1 | INSERT | 00000001 | 12:01",
            "B | 2 | INSERT | 00000002 | 12:01",
            "C | 3 | INSERT | 00000003 | 12:01",
            "B | 2 | DELETE | 00000002 | 12:03",
            "B | 20 | UPDATE | 00000002 | 12:03",
            "C | 3 | DELETE | 00000003 | 12:04",
        ],
    )?;
    expect_lines(
        "CHANGES(T, 12:02, 'DELTA') at 12:05",
        table(&e, "SELECT * FROM CHANGES(T, 12:02, 'DELTA')")?,
        &[
            "Key | Val | Action | RowID | Time",
            "B | 2 | DELETE | 00000002 | 12:03",
            "B | 20 | UPDATE | 00000002 | 12:03",
            "C | 3 | DELETE | 00000003 | 12:04",
        ],
    )?;
    Ok(format!("golden matches, LogT has 6 records, replay {:.0} ms", secs * 1000.0))
}

fn c2_replication() -> Check {
    let (e, transcript) = golden("replication")?;
    expect_lines("TR at 12:05", table(&e, "SELECT Key, Val FROM TR")?, &["Key | Val", "A | 1", "B | 20"])?;
    if !transcript.contains("A | 1\nB | 2\nC | 3\n") {
        return Err("TR = {(A,1),(B,2),(C,3)} never shown at 12:02".into());
    }
    Ok("TR = {(A,1),(B,2),(C,3)} at 12:02 and {(A,1),(B,20)} at 12:05".into())
}

fn bid_accepted(grace: &str) -> Result<bool, String> {
    let mut e = Engine::default();
    for sql in [
        "CREATE TABLE bids (broker VARCHAR(20), address VARCHAR(20), ts TIMESTAMP, price NUMBER)",
        &format!("ALTER TABLE bids CONSTRAINT INCREASING ts GRACE INTERVAL '{grace}' second"),
    ] {
        run(&mut e, sql)?;
    }
    for (at, ts) in [("14:55:00", "14:55:00"), ("14:55:10", "14:55:10"), ("14:55:20", "14:55:20")] {
        e.advance_clock(parse_clock_label(at, Some(e.db.base_date())).unwrap()).map_err(|x| x.to_string())?;
        run(&mut e, &format!("INSERT INTO bids VALUES ('b', 'SF Main St #1', '15-DEC-2019 {ts}', 450000)"))?;
    }
    e.advance_clock(parse_clock_label("14:55:50", Some(e.db.base_date())).unwrap()).map_err(|x| x.to_string())?;
    match e.execute_sql("INSERT INTO bids VALUES ('late', 'SF Main St #1', '15-DEC-2019 14:55:05', 440000)") {
        Ok(_) => Ok(true),
        Err(err) if err.kind() == "IncreasingViolation" => Ok(false),
        Err(err) => Err(err.to_string()),
    }
}

fn c3_bids() -> Check {
    golden("bids_grace")?;
    match (bid_accepted("30")?, bid_accepted("10")?) {
        (true, false) => Ok("14:55:05 bid accepted with 30 s grace, rejected with 10 s".into()),
        other => Err(format!("accepted (30 s, 10 s) = {other:?}")),
    }
}

const PRINTED_DELTA_BATCHES: [&[&str]; 5] = [
    &["(+, SF, 15-NOV-19, 19-NOV-19, 30)"],
    &["(-, SF, 15-NOV-19, 19-NOV-19, 30)", "(+, SF, 15-NOV-19, 19-NOV-19, 62)"],
    &[
        "(-, SF, 15-NOV-19, 19-NOV-19, 62)",
        "(+, SF, 15-NOV-19, 19-NOV-19, 92)",
        "(+, SF, 17-NOV-19, 21-NOV-19, 30)",
    ],
    &[
        "(-, SF, 15-NOV-19, 19-NOV-19, 92)",
        "(+, SF, 15-NOV-19, 19-NOV-19, 121)",
        "(-, SF, 17-NOV-19, 21-NOV-19, 30)",
        "(+, SF, 17-NOV-19, 21-NOV-19, 61)",
    ],
    &[
        "(-, SF, 15-NOV-19, 19-NOV-19, 121)",
        "(+, SF, 15-NOV-19, 19-NOV-19, 154)",
        "(-, SF, 17-NOV-19, 21-NOV-19, 61)",
        "(+, SF, 17-NOV-19, 21-NOV-19, 95)",
        "(+, SF, 19-NOV-19, 23-NOV-19, 34)",
    ],
];

fn c4_delta_batches() -> Check {
    golden("windows_delta")?;
    let batches = fetch_batches("windows_delta", "c")?;
    let rows: Vec<&String> = batches.iter().flatten().collect();
    let tail: Vec<&str> = rows[rows.len().saturating_sub(2)..].iter().map(|s| s.as_str()).collect();
    if tail != ["(-, SF, 29-NOV-19, 03-DEC-19, 34)", "(+, SF, 29-NOV-19, 03-DEC-19, 68)"] {
        return Err(format!("final two rows {tail:?}"));
    }
    for (i, want) in PRINTED_DELTA_BATCHES.iter().enumerate() {
        let got = batches.get(i).cloned().unwrap_or_default();
        if got != *want {
            return Err(format!(
                "batch {} differs from the printed sequence: got {got:?}; final two rows match",
                i + 1
            ));
        }
    }
    Ok("first five batches verbatim, final rows match".into())
}

fn final_sums(name: &str) -> Result<Vec<String>, String> {
    golden(name)?;
    Ok(fetch_batches(name, "c")?.iter().flatten().map(|r| last_value(r)).collect())
}

fn c5_final_windows() -> Check {
    let strict = final_sums("windows_final")?;
    if strict != ["157", "158", "132", "68", "69", "136"] {
        return Err(format!("INCREASING time: emitted {strict:?}"));
    }
    let grace = final_sums("windows_final_grace")?;
    if grace != ["157", "158", "132", "68", "69"] {
        return Err(format!("GRACE 1 day: emitted {grace:?}"));
    }
    Ok(format!("emitted {{{}}}, with grace {{{}}}", strict.join(","), grace.join(",")))
}

fn c6_task_states() -> Check {
    let (e, _) = golden("task_states")?;
    // p was paused over 12:04 and saw that change; s was stopped and did not
    let saw_b = |log: &str| -> Result<bool, String> {
        Ok(table(&e, &format!("SELECT Key FROM {log} WHERE Key = 'B'"))?.iter().any(|l| l == "B"))
    };
    let (p_saw, s_saw) = (saw_b("LogT")?, saw_b("LogS")?);
    if !p_saw || s_saw {
        return Err(format!("pause kept 12:04 change: {p_saw}; stop skipped it: {}", !s_saw));
    }
    let mut e = Engine::default();
    run(&mut e, "CREATE TABLE T (k INT)")?;
    run(&mut e, "CREATE TABLE L (k INT)")?;
    run(&mut e, "CREATE TASK q AS INSERT INTO L SELECT CONTINUOUS k FROM CHANGES(T, LAST_SCHEDULE_TIME, 'DELTA')")?;
    run(&mut e, "ALTER TASK q STOP")?;
    match e.execute_sql("ALTER TASK q PAUSE") {
        Err(err) if err.kind() == "IllegalTransition" => {}
        other => return Err(format!("STOPPED -> PAUSED gave {other:?}")),
    }
    Ok("PAUSE keeps the resume position, STOP/RESUME skips, STOPPED -> PAUSED rejected".into())
}

fn c7_task_oracles() -> Check {
    let (res, secs) = timed(|| {
        for (i, shape) in SHAPES.iter().enumerate() {
            check_task_shape(*shape, 200, 1000 + i as u64)?;
        }
        Ok::<_, String>(())
    });
    res?;
    if secs >= 30.0 {
        return Err(format!("took {secs:.1}s"));
    }
    Ok(format!("5 shapes x 200 steps agree with recomputation in {secs:.1}s"))
}

fn c8_replay() -> Check {
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 500, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner
        .run(&workload_strategy(12), |w| {
            check_replay(&w).map_err(proptest::test_runner::TestCaseError::fail)
        })
        .map_err(|e| e.to_string())?;
    Ok("500 workloads: DELTA and LOG replay rebuild every snapshot".into())
}

fn c9_analyzer() -> Check {
    check_analyzer_examples()?;
    let r = check_analyzer(100, 2024)?;
    Ok(format!("100 PROVEN queries never lost rows ({} UNKNOWN skipped); example verdicts hold", r.unknown))
}

fn c10_rewrites() -> Check {
    let (mut tumble, mut hop) = (0, 0);
    for seed in 0..50 {
        let r = check_rewrites(seed)?;
        tumble += r.tumble_rows;
        hop += r.hop_rows;
    }
    if tumble == 0 || hop == 0 {
        return Err("workloads never closed a window".into());
    }
    Ok(format!("50 workloads agree ({tumble} tumbling and {hop} hopping rows)"))
}

fn c11_lifecycle() -> Check {
    golden("ledger_finalize")?;
    let (_, transcript) = golden("watermark_final")?;
    if !transcript.contains("(+, cpu, 2023-11-20 10:01:00, 20)") {
        return Err("late event was not counted in the open minute".into());
    }
    golden("logs_expire")?;
    Ok("ledger, watermark and LOGS expiry goldens pass".into())
}

fn c12_determinism() -> Check {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../goldens");
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|d| d.ok()?.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix(".sql").map(str::to_string))
        .collect();
    names.sort();
    let corpus = || -> Result<String, String> {
        let mut all = String::new();
        for n in &names {
            all.push_str(&golden(n)?.1);
        }
        Ok(all)
    };
    let (a, b) = (corpus()?, corpus()?);
    if a != b {
        return Err("transcripts differ between runs".into());
    }
    Ok(format!("{} scripts, {} transcript bytes identical across two runs", names.len(), a.len()))
}

#[test]
fn acceptance_report() {
    let criteria: [(u32, &str, fn() -> Check); 12] = [
        (1, "change-log golden", c1_change_log),
        (2, "replication golden", c2_replication),
        (3, "bids grace", c3_bids),
        (4, "windowed delta cursor", c4_delta_batches),
        (5, "FINAL windows", c5_final_windows),
        (6, "task state machine", c6_task_states),
        (7, "task oracle equivalence", c7_task_oracles),
        (8, "replay invariant", c8_replay),
        (9, "insert-only analyzer soundness", c9_analyzer),
        (10, "window rewrite equivalence", c10_rewrites),
        (11, "finalization and expiration", c11_lifecycle),
        (12, "determinism", c12_determinism),
    ];
    let mut unexpected = Vec::new();
    for (n, title, check) in criteria {
        let result = check();
        let known = KNOWN_RED.contains(&n);
        match &result {
            Ok(detail) => println!("PASS {n:>2} {title}: {detail}"),
            Err(why) => println!("FAIL {n:>2} {title}: {why}{}", if known { " [known]" } else { "" }),
        }
        if result.is_ok() == known {
            unexpected.push(n);
        }
    }
    assert!(unexpected.is_empty(), "criteria with an unexpected outcome: {unexpected:?}");
}
