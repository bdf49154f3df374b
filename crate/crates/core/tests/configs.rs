use std::fs;
use std::path::Path;

use harnack_lab::runner::ExperimentConfig;

fn toml_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(toml_files(&p));
        } else if p.extension().is_some_and(|x| x == "toml") {
            out.push(p);
        }
    }
    out
}

#[test]
fn shipped_configs_expand() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let files = toml_files(&root);
    assert!(files.len() >= 28, "{}", files.len());
    for p in files {
        let cfg = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let jobs = cfg.jobs().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(!jobs.is_empty(), "{}", p.display());
    }
}
