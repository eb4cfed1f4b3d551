//! Command line front end: run golden scripts, an interactive session, the
//! insert-only analyzer, and transcript diffs.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use similar::TextDiff;
use streamsql::engine::Engine;
use streamsql::script::{format_error, run_script};
use streamsql::value::parse_timestamp;

#[derive(Parser)]
#[command(name = "engine", about = "Deterministic streaming SQL engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a script and check its --@expect blocks.
    Run {
        script: PathBuf,
        /// Rewrite the expect blocks with the actual output.
        #[arg(long)]
        golden_update: bool,
        /// Print only failures.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Read statements and directives from stdin.
    Repl,
    /// Print the insert-only proof of every query in a SQL file. Other
    /// statements (DDL) are executed first so the queries can resolve.
    Prove { file: PathBuf },
    /// Compare two transcripts.
    Diff { a: PathBuf, b: PathBuf },
}

fn engine() -> Result<Engine, String> {
    match std::env::var("ENGINE_EPOCH") {
        Ok(s) => parse_timestamp(&s, None)
            .map(Engine::with_epoch)
            .ok_or_else(|| format!("ENGINE_EPOCH: cannot parse '{s}' as a timestamp")),
        Err(_) => Ok(Engine::default()),
    }
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { script, golden_update, quiet } => run(&script, golden_update, quiet),
        Command::Repl => repl(),
        Command::Prove { file } => prove(&file),
        Command::Diff { a, b } => diff(&a, &b),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("engine: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(path: &PathBuf, update: bool, quiet: bool) -> Result<u8, String> {
    let text = read(path)?;
    let out = run_script(&mut engine()?, &text);
    if !quiet {
        print!("{}", out.transcript);
    }
    for f in &out.failures {
        eprintln!("{}: {f}", path.display());
    }
    if update && out.exit_code != 2 {
        if out.updated != text {
            std::fs::write(path, &out.updated).map_err(|e| format!("{}: {e}", path.display()))?;
            eprintln!("{}: expectations updated", path.display());
        }
        return Ok(0);
    }
    Ok(out.exit_code as u8)
}

fn repl() -> Result<u8, String> {
    let mut engine = engine()?;
    let stdin = std::io::stdin();
    let mut pending = String::new();
    let mut code = 0;
    prompt(&engine, pending.is_empty());
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| e.to_string())?;
        pending.push_str(&line);
        pending.push('\n');
        let t = line.trim();
        let complete = (pending.trim_start().starts_with("--@") || t.ends_with(';'))
            && pending.matches('\'').count() % 2 == 0;
        if complete || (pending.trim().is_empty()) {
            let out = run_script(&mut engine, &pending);
            for l in out.transcript.lines().filter(|l| !l.starts_with('[')) {
                println!("{l}");
            }
            for f in &out.failures {
                println!("{f}");
            }
            code = code.max(out.exit_code.min(1) as u8);
            pending.clear();
        }
        prompt(&engine, pending.is_empty());
    }
    println!();
    Ok(code)
}

fn prompt(engine: &Engine, fresh: bool) {
    if fresh {
        print!("{}> ", engine.now());
    } else {
        print!("... ");
    }
    let _ = std::io::stdout().flush();
}

fn prove(path: &PathBuf) -> Result<u8, String> {
    use streamsql::sql::Statement;
    let text = read(path)?;
    let stmts = streamsql::sql::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut engine = engine()?;
    let mut code = 0;
    for s in &stmts {
        let query = match s {
            Statement::Query(q) | Statement::DeclareCursor { query: q, .. } | Statement::Subscribe { query: q, .. } => q,
            other => {
                engine.execute(other).map_err(|e| format_error(&e))?;
                continue;
            }
        };
        println!("{query}");
        match streamsql::analysis::prove_insert_only(query, &engine.db) {
            Ok(p) => {
                if !p.is_proven() {
                    code = 1;
                }
                print!("{p}");
            }
            Err(e) => {
                code = 2;
                println!("{}", format_error(&e));
            }
        }
        println!();
    }
    Ok(code)
}

fn diff(a: &PathBuf, b: &PathBuf) -> Result<u8, String> {
    let (x, y) = (read(a)?, read(b)?);
    if x == y {
        return Ok(0);
    }
    let d = TextDiff::from_lines(&x, &y);
    print!("{}", d.unified_diff().header(&a.display().to_string(), &b.display().to_string()));
    Ok(1)
}
