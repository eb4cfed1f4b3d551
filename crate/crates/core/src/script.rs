//! Script runner for golden transcripts.
//!
//! A script is SQL interleaved with `--@` directives:
//!
//! ```text
//! --@clock 12:01
//! SELECT * FROM T;
//! --@expect
//! -- Key | Val
//! -- A | 1
//! --@end
//! --@expect-error IncreasingViolation
//! INSERT INTO bids VALUES (...);
//! ```
//!
//! `--@expect` blocks check the output of the item just before them.
//! `--@expect-error` applies to the next statement.

use std::fmt::Write as _;

use similar::TextDiff;

use crate::analysis::prove_insert_only;
use crate::cursor::format_tuples;
use crate::engine::{Engine, Output};
use crate::error::Error;
use crate::eval::Relation;
use crate::sql::Statement;
use crate::value::{parse_clock_label, parse_timestamp};

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Sql { text: String, line: usize },
    Directive { name: String, arg: String, line: usize },
    /// Expected output; `start`/`end` are the 0-based lines of the
    /// `--@expect` and `--@end` markers.
    Expect { lines: Vec<String>, start: usize, end: usize },
}

pub fn parse_script(text: &str) -> Result<Vec<Item>, String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut items = Vec::new();
    let mut buf = String::new();
    let mut buf_line = 0;
    let mut i = 0;
    while i < lines.len() {
        let raw = lines[i];
        let t = raw.trim();
        if buf.is_empty() {
            if let Some(d) = t.strip_prefix("--@") {
                let (name, arg) = d.split_once(char::is_whitespace).unwrap_or((d, ""));
                if name == "expect" {
                    let start = i;
                    let mut body = Vec::new();
                    i += 1;
                    loop {
                        let Some(l) = lines.get(i) else {
                            return Err(format!("line {}: --@expect without --@end", start + 1));
                        };
                        let l = l.trim_end();
                        if l.trim() == "--@end" {
                            break;
                        }
                        let l = l.trim_start();
                        let l = l.strip_prefix("--").unwrap_or(l);
                        body.push(l.strip_prefix(' ').unwrap_or(l).to_string());
                        i += 1;
                    }
                    items.push(Item::Expect { lines: body, start, end: i });
                } else {
                    items.push(Item::Directive { name: name.to_string(), arg: arg.trim().to_string(), line: i + 1 });
                }
                i += 1;
                continue;
            }
            if t.is_empty() || t.starts_with("--") {
                i += 1;
                continue;
            }
            buf_line = i + 1;
        }
        buf.push_str(raw);
        buf.push('\n');
        if t.ends_with(';') && buf.matches('\'').count() % 2 == 0 {
            items.push(Item::Sql { text: std::mem::take(&mut buf), line: buf_line });
        }
        i += 1;
    }
    if !buf.trim().is_empty() {
        return Err(format!("line {buf_line}: statement is not terminated by ';'"));
    }
    Ok(items)
}

/// Renders a relation as a header line and one line per row.
pub fn format_table(rel: &Relation) -> Vec<String> {
    let mut out = vec![rel.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(" | ")];
    for r in &rel.rows {
        out.push(r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" | "));
    }
    if rel.rows.is_empty() {
        out.push("(no rows)".into());
    }
    out
}

pub fn format_output(o: &Output) -> Vec<String> {
    match o {
        Output::Rows(rel) => format_table(rel),
        Output::Fetched(rel) if rel.rows.is_empty() => vec!["NO_DATA".into()],
        Output::Fetched(rel) => format_tuples(rel),
        Output::Count { verb, n } => vec![format!("{verb} {n}")],
        Output::Done(msg) => vec![msg.clone()],
    }
}

pub fn format_error(e: &Error) -> String {
    format!("ERROR {}: {e}", e.kind())
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub transcript: String,
    /// Unified diffs of failed expectations, and unexpected errors.
    pub failures: Vec<String>,
    pub exit_code: i32,
    /// Script text with every expect block replaced by the actual output.
    pub updated: String,
}

/// Runs a script. Exit code 0 when every expectation holds, 1 on a mismatch,
/// 2 when the script stops on an unexpected error.
pub fn run_script(engine: &mut Engine, text: &str) -> RunOutcome {
    let mut out = RunOutcome::default();
    let items = match parse_script(text) {
        Ok(items) => items,
        Err(e) => {
            out.failures.push(e);
            out.exit_code = 2;
            out.updated = text.to_string();
            return out;
        }
    };
    let src: Vec<&str> = text.lines().collect();
    let mut updated: Vec<String> = Vec::new();
    let mut copied = 0;
    let mut last: Vec<String> = Vec::new();
    let mut expect_error: Option<String> = None;
    let mut prove_next = false;

    for item in &items {
        match item {
            Item::Expect { lines, start, end } => {
                updated.extend(src[copied..=*start].iter().map(|s| s.to_string()));
                updated.extend(last.iter().map(|l| if l.is_empty() { "--".to_string() } else { format!("-- {l}") }));
                updated.push(src[*end].to_string());
                copied = end + 1;
                if *lines != last {
                    let want = lines.join("\n") + "\n";
                    let got = last.join("\n") + "\n";
                    let diff = TextDiff::from_lines(&want, &got)
                        .unified_diff()
                        .header("expected", "actual")
                        .to_string();
                    out.failures.push(format!("expectation at line {} differs:\n{diff}", start + 1));
                    if out.exit_code == 0 {
                        out.exit_code = 1;
                    }
                }
            }
            Item::Directive { name, arg, line } => {
                let _ = writeln!(out.transcript, "[{}] --@{name} {arg}", engine.now());
                let result = directive(engine, name, arg, &mut expect_error, &mut prove_next);
                last = match result {
                    Ok(lines) => lines,
                    Err(e) => {
                        out.failures.push(format!("line {line}: --@{name}: {e}"));
                        out.exit_code = 2;
                        let _ = writeln!(out.transcript, "{e}");
                        break;
                    }
                };
                last.extend(engine.take_events());
                for l in &last {
                    let _ = writeln!(out.transcript, "{l}");
                }
            }
            Item::Sql { text: sql, line } => {
                let echo = sql.split_whitespace().collect::<Vec<_>>().join(" ");
                let _ = writeln!(out.transcript, "[{}] {echo}", engine.now());
                let (lines, err) = run_sql(engine, sql, std::mem::take(&mut prove_next));
                last = lines;
                last.extend(engine.take_events());
                for l in &last {
                    let _ = writeln!(out.transcript, "{l}");
                }
                match (err, expect_error.take()) {
                    (None, None) => {}
                    (Some(e), Some(kind)) if e.kind() == kind => {}
                    (Some(e), Some(kind)) => {
                        out.failures.push(format!("line {line}: expected error {kind}, got {}", format_error(&e)));
                        out.exit_code = 1;
                    }
                    (None, Some(kind)) => {
                        out.failures.push(format!("line {line}: expected error {kind}, statement succeeded"));
                        out.exit_code = 1;
                    }
                    (Some(e), None) => {
                        out.failures.push(format!("line {line}: {}", format_error(&e)));
                        out.exit_code = 2;
                        break;
                    }
                }
            }
        }
    }
    updated.extend(src[copied.min(src.len())..].iter().map(|s| s.to_string()));
    out.updated = updated.join("\n");
    if text.ends_with('\n') {
        out.updated.push('\n');
    }
    out
}

/// Executes the statements of one script item; output stops at the first
/// error, which is returned alongside.
fn run_sql(engine: &mut Engine, sql: &str, prove: bool) -> (Vec<String>, Option<Error>) {
    let stmts = match crate::sql::parse(sql) {
        Ok(s) => s,
        Err(e) => {
            let e = Error::from(e);
            return (vec![format_error(&e)], Some(e));
        }
    };
    let mut lines = Vec::new();
    for s in &stmts {
        let result = if prove {
            let q = match s {
                Statement::Query(q) | Statement::DeclareCursor { query: q, .. } | Statement::Subscribe { query: q, .. } => q,
                _ => {
                    let e = Error::Unsupported("--@prove needs a query".into());
                    lines.push(format_error(&e));
                    return (lines, Some(e));
                }
            };
            prove_insert_only(q, &engine.db).map(|p| p.to_string().lines().map(str::to_string).collect())
        } else {
            engine.execute(s).map(|o| format_output(&o))
        };
        match result {
            Ok(l) => lines.extend(l),
            Err(e) => {
                lines.push(format_error(&e));
                return (lines, Some(e));
            }
        }
    }
    (lines, None)
}

fn directive(
    engine: &mut Engine,
    name: &str,
    arg: &str,
    expect_error: &mut Option<String>,
    prove_next: &mut bool,
) -> Result<Vec<String>, String> {
    let err = |e: Error| format_error(&e);
    match name {
        "clock" => {
            let base = Some(engine.db.base_date());
            let t = parse_clock_label(arg, base)
                .or_else(|| parse_timestamp(arg, base))
                .ok_or_else(|| format!("bad clock value '{arg}'"))?;
            engine.advance_clock(t).map_err(err)?;
            Ok(vec![])
        }
        "expect-error" => {
            *expect_error = Some(arg.to_string());
            Ok(vec![])
        }
        "prove" => {
            *prove_next = true;
            Ok(vec![])
        }
        "expire-pass" => Ok(vec![format!("expired {}", engine.expire_pass().map_err(err)?)]),
        "purge-pass" => Ok(vec![format!("purged {}", engine.purge_pass().map_err(err)?)]),
        "cancel" => {
            engine.cancel(arg).map_err(err)?;
            Ok(vec![format!("CANCEL {arg}")])
        }
        "inject-fault" => {
            let mut parts = arg.split_whitespace();
            let task = parts.next().ok_or("--@inject-fault needs a task name")?;
            let n = parts.next().map_or(Ok(1), str::parse).map_err(|e| format!("bad fault count: {e}"))?;
            engine.inject_fault(task, n);
            Ok(vec![])
        }
        "tasks" => Ok(engine
            .tasks
            .iter()
            .map(|t| format!("{} | {} | {}", t.name, t.state, t.last_time))
            .collect()),
        "dump-catalog" => {
            let json = serde_json::to_string_pretty(&engine.catalog()).map_err(|e| e.to_string())?;
            std::fs::write(arg, json + "\n").map_err(|e| format!("cannot write {arg}: {e}"))?;
            Ok(vec![format!("catalog written to {arg}")])
        }
        "catalog" => {
            let json = serde_json::to_string_pretty(&engine.catalog()).map_err(|e| e.to_string())?;
            Ok(json.lines().map(str::to_string).collect())
        }
        other => Err(format!("unknown directive --@{other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_statements_and_directives() {
        let items = parse_script(
            "--@clock 12:00\nCREATE TABLE T(a INT);\n-- plain comment\nINSERT INTO T\n  VALUES (1);\n--@expect\n-- INSERT 1\n--@end\n",
        )
        .unwrap();
        assert_eq!(items.len(), 4);
        assert!(matches!(&items[2], Item::Sql { line: 4, .. }));
        assert!(matches!(&items[3], Item::Expect { lines, .. } if lines == &["INSERT 1"]));
    }

    #[test]
    fn semicolon_inside_string_does_not_end_statement() {
        let items = parse_script("INSERT INTO T VALUES ('a;\nb');\n").unwrap();
        assert_eq!(items.len(), 1);
    }

    #[test]
    fn update_rewrites_expect_blocks() {
        let mut e = Engine::default();
        let script = "CREATE TABLE T(a INT);\nINSERT INTO T VALUES (1);\n--@expect\n-- wrong\n--@end\n";
        let out = run_script(&mut e, script);
        assert_eq!(out.exit_code, 1);
        assert_eq!(out.updated, "CREATE TABLE T(a INT);\nINSERT INTO T VALUES (1);\n--@expect\n-- INSERT 1\n--@end\n");
    }
}
