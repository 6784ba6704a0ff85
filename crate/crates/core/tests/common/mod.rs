//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use stressbench::corpus::{parse_alignments, read_split};
use stressbench::sslfeat::FrameFeatureFile;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stressbench"))
}

/// Runs `stressbench args...` inside `dir`, panicking with stderr on failure.
pub fn run(dir: &Path, args: &[&str]) -> String {
    let out = bin().args(args).current_dir(dir).output().expect("spawn stressbench");
    assert!(
        out.status.success(),
        "stressbench {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Deterministic stand-in for self-supervised frame features: 16 columns of
/// smooth functions of time.
pub fn write_frames(dir: &Path, corpus: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let parsed = parse_alignments(corpus).unwrap();
    for u in &parsed.utterances {
        let frames = (u.last_timestamp() / 0.02).ceil() as usize + 2;
        let mut data = Vec::with_capacity(frames * 16);
        for f in 0..frames {
            for c in 0..16 {
                data.push(((f as f32 * 0.1 + c as f32).sin() * (c as f32 + 1.0)).to_owned());
            }
        }
        std::fs::write(dir.join(format!("{}.sbfr", u.id)), FrameFeatureFile::new(16, 20, data).to_bytes()).unwrap();
    }
    let _ = read_split(corpus.with_file_name("split.tsv")).unwrap();
}

/// Every batch command of the CLI on a small synthetic corpus, all paths
/// relative to `root`.
pub fn full_pipeline(root: &Path) {
    std::fs::create_dir_all(root).unwrap();
    let r = |args: &[&str]| run(root, args);
    r(&["synth-corpus", "--words", "30", "--test-words", "10", "--delta", "1", "--seed", "7", "--out", "corpus"]);
    r(&["mix-noise", "--in", "corpus", "--out", "noisy", "--snr", "0,20", "--seed", "3"]);
    r(&["enhance", "--in", "noisy/snr_0", "--out", "enhanced/wiener_0", "--method", "wiener"]);
    r(&["enhance", "--in", "noisy/snr_0", "--out", "enhanced/spectral_sub_0", "--method", "spectral-sub", "--alpha", "2", "--beta", "0.02"]);
    r(&["import-enhanced", "--dir", "enhanced/wiener_0", "--manifest", "corpus/audio_manifest.tsv", "--label", "wiener"]);
    write_frames(&root.join("frames"), &root.join("corpus/alignments.tsv"));
    std::fs::write(root.join("train.toml"), "epochs = 15\npatience = 5\n").unwrap();
    r(&["make-folds", "--corpus", "corpus/alignments.tsv", "--split", "corpus/split.tsv", "--k", "5", "--seed", "1", "--out", "folds.tsv"]);
    for (name, audio) in [("clean", "corpus"), ("noisy_0", "noisy/snr_0"), ("wiener_0", "enhanced/wiener_0")] {
        let feats = format!("features/{name}.sbft");
        r(&["extract-features", "--corpus", "corpus/alignments.tsv", "--type", "heuristic", "--audio", audio, "--out", &feats]);
    }
    r(&["extract-features", "--corpus", "corpus/alignments.tsv", "--type", "ssl", "--frames-dir", "frames", "--out", "features/ssl.sbft"]);
    for (feats, cond) in [("clean", "clean"), ("noisy_0", "noisy@0"), ("wiener_0", "wiener@0"), ("ssl", "clean")] {
        let f = format!("features/{feats}.sbft");
        let out = format!("runs/{feats}");
        r(&["evaluate", "--features", &f, "--folds", "folds.tsv", "--config", "train.toml", "--condition", cond, "--out", &out]);
    }
    r(&["train", "--features", "features/clean.sbft", "--folds", "folds.tsv", "--config", "train.toml", "--out", "models"]);
    r(&["report", "--runs", "runs", "--out", "report.tsv"]);

    let study_root = root.join("study");
    for d in ["clean", "wiener", "spectral_sub", "noisy"] {
        std::fs::create_dir_all(study_root.join(d)).unwrap();
    }
    for e in std::fs::read_dir(root.join("corpus")).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "wav") {
            let name = p.file_name().unwrap();
            std::fs::copy(&p, study_root.join("clean").join(name)).unwrap();
            std::fs::copy(root.join("enhanced/wiener_0").join(name), study_root.join("wiener").join(name)).unwrap();
            std::fs::copy(root.join("enhanced/spectral_sub_0").join(name), study_root.join("spectral_sub").join(name)).unwrap();
            std::fs::copy(root.join("noisy/snr_0").join(name), study_root.join("noisy").join(name)).unwrap();
        }
    }
    r(&["study-build", "--corpus", "corpus/alignments.tsv", "--audio", "study", "--system", "wiener", "--system", "spectral_sub", "--system", "noisy", "--per-dataset", "10", "--seed", "2", "--out", "study/trials.json"]);
    let trials: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("study/trials.json")).unwrap()).unwrap();
    let mut log = String::new();
    for (i, t) in trials["trials"].as_array().unwrap().iter().enumerate() {
        let c = &t["candidates"][i % 3];
        log.push_str(&serde_json::json!({
            "subject_id": "s1", "trial_id": t["trial_id"], "dataset": t["dataset"],
            "system": c["system"], "response_ms": 100, "timestamp_ms": 0
        }).to_string());
        log.push('\n');
    }
    std::fs::write(root.join("study/responses.jsonl"), log).unwrap();
    r(&["study-stats", "--log", "study/responses.jsonl", "--trials", "study/trials.json",
        "--predictions", "wiener=runs/wiener_0/predictions.tsv", "--out", "study/table.tsv"]);
}

/// Relative path -> bytes for every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(base: &Path, d: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Files that differ between two pipeline runs.
pub fn differing(a: &Path, b: &Path) -> Vec<String> {
    let (sa, sb) = (snapshot(a), snapshot(b));
    let mut bad: Vec<String> = sa
        .iter()
        .filter(|(k, v)| sb.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    bad.extend(sb.keys().filter(|k| !sa.contains_key(*k)).map(|k| k.display().to_string()));
    bad
}
