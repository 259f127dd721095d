//! Acceptance: the full generate -> augment -> split -> evaluate pipeline
//! rerun with identical seeds produces byte-identical artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alpr"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &mut Command) {
    let out = cmd.output().expect("spawn alpr");
    assert!(
        out.status.success(),
        "command failed\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Map of relative path -> file bytes for a whole tree.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn run_pipeline(root: &Path) {
    let synth = root.join("synth");
    run(bin()
        .args(["gen", "--seed", "7", "--count", "30", "--registry"])
        .arg(configs_dir().join("states.tsv"))
        .arg("--fonts")
        .arg(configs_dir().join("fonts"))
        .arg("--out")
        .arg(&synth));

    let aug = root.join("aug");
    run(bin()
        .args(["augment", "--seed", "9", "--in"])
        .arg(synth.join("manifest.jsonl"))
        .arg("--config")
        .arg(configs_dir().join("augment-pretrain.cfg"))
        .arg("--out")
        .arg(&aug));

    let split = root.join("split");
    run(bin()
        .args(["split", "--ratio", "0.2", "--seed", "3", "--out"])
        .arg(&split)
        .arg(aug.join("manifest.jsonl")));

    run(bin()
        .args(["eval-rec", "--pred"])
        .arg(split.join("val.jsonl"))
        .arg("--gt")
        .arg(split.join("val.jsonl"))
        .arg("--out")
        .arg(root.join("report.json")));
}

#[test]
fn criterion_10_end_to_end_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run_a = dir.path().join("run_a");
    let run_b = dir.path().join("run_b");
    run_pipeline(&run_a);
    run_pipeline(&run_b);

    let a = snapshot(&run_a);
    let b = snapshot(&run_b);
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "file sets differ"
    );
    assert!(a.contains_key("report.json"));
    assert!(a.contains_key("synth/manifest.jsonl"));
    assert!(a.keys().any(|k| k.starts_with("aug/images/")));
    for (path, bytes) in &a {
        assert_eq!(bytes, &b[path], "{path} differs between reruns");
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed <= Duration::from_secs(300),
        "pipeline rerun exceeded budget: {elapsed:?}"
    );
    println!(
        "PASS criterion 10: end-to-end determinism over {} artifacts ({elapsed:?})",
        a.len()
    );
}
