use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn engine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_engine")).args(args).env_remove("ENGINE_EPOCH").output().unwrap()
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("engine-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const PASSING: &str = "\
CREATE TABLE T (k INT);
INSERT INTO T VALUES (1);
SELECT k FROM T;
--@expect
-- k
-- 1
--@end
";

#[test]
fn run_exit_codes() {
    let ok = scratch("ok.sql", PASSING);
    let o = engine(&["run", ok.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("[00:00] SELECT k FROM T;\nk\n1\n"));

    let bad = scratch("bad.sql", &PASSING.replace("-- 1\n", "-- 2\n"));
    let o = engine(&["run", "-q", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).is_empty());

    let o = engine(&["run", "/nonexistent/script.sql"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn golden_update_rewrites_expectations() {
    let p = scratch("update.sql", &PASSING.replace("-- 1\n", "-- 2\n"));
    let o = engine(&["run", "--golden-update", "-q", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&p).unwrap(), PASSING);
}

#[test]
fn epoch_from_environment() {
    let p = scratch("epoch.sql", "SELECT now();\n");
    let o = Command::new(env!("CARGO_BIN_EXE_engine"))
        .args(["run", p.to_str().unwrap()])
        .env("ENGINE_EPOCH", "2019-11-15 08:00:00")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("2019-11-15"), "{}", stdout(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_engine"))
        .args(["run", p.to_str().unwrap()])
        .env("ENGINE_EPOCH", "yesterday")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prove_reports_verdicts() {
    let p = scratch(
        "prove.sql",
        "CREATE TABLE S (a INT) INSERT ONLY;\nCREATE TABLE R (a INT);\nSELECT a FROM S;\n",
    );
    let o = engine(&["prove", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PROVEN"));

    let p = scratch("unknown.sql", "CREATE TABLE R (a INT);\nSELECT a FROM R;\n");
    let o = engine(&["prove", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn diff_exit_codes() {
    let a = scratch("a.txt", "x\ny\n");
    let b = scratch("b.txt", "x\nz\n");
    assert_eq!(engine(&["diff", a.to_str().unwrap(), a.to_str().unwrap()]).status.code(), Some(0));
    let o = engine(&["diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("-y\n+z\n"));
}

#[test]
fn repl_reads_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_engine"))
        .arg("repl")
        .env_remove("ENGINE_EPOCH")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"CREATE TABLE T (k INT);\nINSERT INTO T\nVALUES (7);\nSELECT k FROM T;\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("... "), "{out}");
    assert!(out.contains("k\n7\n"), "{out}");
}
