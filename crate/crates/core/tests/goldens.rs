//! Runs every script under goldens/ and checks its expect blocks.
//! Set GOLDEN_UPDATE=1 to rewrite the blocks from actual output.

use std::path::PathBuf;

use streamsql::engine::Engine;
use streamsql::script::run_script;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../goldens")
}

#[test]
fn golden_scripts() {
    let update = std::env::var_os("GOLDEN_UPDATE").is_some();
    let mut paths: Vec<_> = std::fs::read_dir(golden_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "sql"))
        .collect();
    paths.sort();
    assert!(!paths.is_empty());
    let mut bad = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p).unwrap();
        let out = run_script(&mut Engine::default(), &text);
        if update && out.exit_code != 2 && out.updated != text {
            std::fs::write(&p, &out.updated).unwrap();
        }
        if out.exit_code != 0 {
            bad.push(format!("{}: exit {}\n{}", p.display(), out.exit_code, out.failures.join("\n")));
        }
    }
    assert!(bad.is_empty(), "{}", bad.join("\n\n"));
}
