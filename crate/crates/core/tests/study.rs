use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

use stressbench::corpus::{synth_corpus, Dataset, SyllableKey, SynthCorpus, SynthSpec};
use stressbench::study::*;

const SYSTEMS: [&str; 3] = ["wiener", "spectral_sub", "passthrough"];

fn systems() -> Vec<String> {
    SYSTEMS.iter().map(|s| s.to_string()).collect()
}

/// Writes the corpus audio under `clean/` and under one directory per system.
fn study_tree(root: &Path, words: usize) -> SynthCorpus {
    let c = synth_corpus(
        &SynthSpec {
            words,
            ..SynthSpec::default()
        },
        11,
    )
    .unwrap();
    for dir in std::iter::once("clean").chain(SYSTEMS) {
        std::fs::create_dir_all(root.join(dir)).unwrap();
        for (u, w) in c.utterances.iter().zip(&c.audio) {
            stressbench::audio::write_wav(w, root.join(dir).join(&u.audio_path)).unwrap();
        }
    }
    c
}

fn all_words(c: &SynthCorpus) -> Vec<(usize, usize)> {
    c.utterances
        .iter()
        .enumerate()
        .flat_map(|(ui, u)| (0..u.words.len()).map(move |wi| (ui, wi)))
        .collect()
}

#[test]
fn fifty_words_give_fifty_trials() {
    let dir = tempfile::tempdir().unwrap();
    let c = study_tree(dir.path(), 50);
    let set = build_study(&c.utterances, &all_words(&c), dir.path(), "clean", &systems(), 4).unwrap();
    assert_eq!(set.trials.len(), 50);
    let mut refs: Vec<&str> = set
        .trials
        .iter()
        .flat_map(|t| t.candidates.iter().map(|c| c.clip.audio_ref.as_str()))
        .collect();
    assert_eq!(refs.len(), 150);
    refs.sort_unstable();
    refs.dedup();
    assert_eq!(refs.len(), 150);
    for t in &set.trials {
        let mut labels: Vec<&str> = t.candidates.iter().map(|c| c.system.as_str()).collect();
        labels.sort_unstable();
        let mut want = SYSTEMS.to_vec();
        want.sort_unstable();
        assert_eq!(labels, want);
        // Refs reveal nothing about the system.
        assert!(t.candidates.iter().all(|c| !SYSTEMS.iter().any(|s| c.clip.audio_ref.contains(s))));
    }
    let again = build_study(&c.utterances, &all_words(&c), dir.path(), "clean", &systems(), 4).unwrap();
    assert_eq!(set, again);
    let back: TrialSet = serde_json::from_str(&set.to_json()).unwrap();
    assert_eq!(back, set);
}

#[test]
fn missing_candidate_audio_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let c = study_tree(dir.path(), 8);
    std::fs::remove_file(dir.path().join("wiener").join(&c.utterances[0].audio_path)).unwrap();
    match build_study(&c.utterances, &all_words(&c), dir.path(), "clean", &systems(), 0) {
        Err(StudyError::MissingAudio(m)) => {
            assert!(m.iter().all(|s| s.contains(&c.utterances[0].id) && s.contains("wiener")));
            assert_eq!(m.len(), c.utterances[0].words.len());
        }
        other => panic!("{other:?}"),
    }
    let two = vec!["a".to_string(), "b".to_string()];
    assert!(matches!(
        build_study(&c.utterances, &all_words(&c), dir.path(), "clean", &two, 0),
        Err(StudyError::Systems(_))
    ));
}

/// Chi-square statistic of the six candidate orders over many seeds; 15.09 is
/// the 0.99 quantile with 5 degrees of freedom.
#[test]
fn candidate_order_is_uniform() {
    let n = 1200u64;
    let mut counts: BTreeMap<[usize; 3], f64> = BTreeMap::new();
    for seed in 0..n {
        let s = stressbench::rng::derive_seed(99, &format!("study/t{seed:03}"));
        *counts.entry(candidate_order(s)).or_default() += 1.0;
    }
    assert_eq!(counts.len(), 6);
    let expected = n as f64 / 6.0;
    let chi2: f64 = counts.values().map(|o| (o - expected).powi(2) / expected).sum();
    assert!(chi2 < 15.09, "chi2 = {chi2}");
}

/// 25 subjects × 50 trials with choices fixed by a formula, so the counts
/// can be tallied independently.
fn synthetic_log(set: &TrialSet) -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    for s in 0..25 {
        for (i, t) in set.trials.iter().enumerate() {
            let slot = ["A", "B", "C"][(s * 7 + i * 3 + s * i) % 3];
            out.push((format!("subj{s:02}"), t.trial_id.clone(), slot.to_string()));
        }
    }
    out
}

struct Harness {
    _dir: tempfile::TempDir,
    log_path: std::path::PathBuf,
    set: TrialSet,
    app: axum::Router,
}

fn harness(words: usize) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let c = study_tree(dir.path(), words);
    let set = build_study(&c.utterances, &all_words(&c), dir.path(), "clean", &systems(), 5).unwrap();
    let log_path = dir.path().join("responses.jsonl");
    let svc = StudyService::new(set.clone(), dir.path(), &log_path)
        .unwrap()
        .with_clock(Box::new(|| 1_700_000_000_000));
    Harness {
        app: router(Arc::new(svc)),
        _dir: dir,
        log_path,
        set,
    }
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn json_call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn session(app: &axum::Router, subject: &str) -> String {
    let (s, v) = json_call(app, "POST", "/sessions", Some(json!({ "subject_id": subject }))).await;
    assert_eq!(s, StatusCode::CREATED);
    v["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn subject_runs_through_all_trials() {
    let h = harness(10);
    let sid = session(&h.app, "ann").await;
    for i in 0..h.set.trials.len() {
        let (s, v) = json_call(&h.app, "GET", &format!("/sessions/{sid}/next"), None).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["done"], false);
        assert_eq!(v["progress"]["answered"], i);
        let trial = &v["trial"];
        assert_eq!(trial["candidates"].as_array().unwrap().len(), 3);
        assert!(!trial.to_string().contains("wiener"));
        let tid = trial["trial_id"].as_str().unwrap().to_string();
        let (s, _) = json_call(
            &h.app,
            "POST",
            &format!("/sessions/{sid}/responses"),
            Some(json!({ "trial_id": tid, "choice": "B", "response_ms": 900 })),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
    }
    let (_, v) = json_call(&h.app, "GET", &format!("/sessions/{sid}/next"), None).await;
    assert_eq!(v["done"], true);
    assert_eq!(v["progress"]["answered"], h.set.trials.len());

    // A new session for the same subject resumes at completion.
    let sid2 = session(&h.app, "ann").await;
    let (_, v) = json_call(&h.app, "GET", &format!("/sessions/{sid2}/next"), None).await;
    assert_eq!(v["done"], true);
}

#[tokio::test]
async fn rejects_duplicates_bad_choices_and_stale_sessions() {
    let h = harness(4);
    let sid = session(&h.app, "bo").await;
    let tid = h.set.trials[0].trial_id.clone();
    let uri = format!("/sessions/{sid}/responses");
    let (s, _) = json_call(&h.app, "POST", &uri, Some(json!({ "trial_id": tid, "choice": "A" }))).await;
    assert_eq!(s, StatusCode::OK);
    let before = std::fs::read(&h.log_path).unwrap();
    let (s, _) = json_call(&h.app, "POST", &uri, Some(json!({ "trial_id": tid, "choice": "C" }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(std::fs::read(&h.log_path).unwrap(), before);

    let t1 = h.set.trials[1].trial_id.clone();
    for bad in ["D", "wiener", ""] {
        let (s, v) = json_call(&h.app, "POST", &uri, Some(json!({ "trial_id": t1, "choice": bad }))).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    }
    let (s, _) = json_call(&h.app, "POST", &uri, Some(json!({ "trial_id": "t999", "choice": "A" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(std::fs::read(&h.log_path).unwrap(), before);

    let (s, _) = json_call(&h.app, "GET", "/sessions/nope/next", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = json_call(&h.app, "POST", "/sessions/nope/responses", Some(json!({ "trial_id": tid, "choice": "A" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = json_call(&h.app, "POST", "/sessions", Some(json!({ "subject_id": " " }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn audio_is_served_as_wav_word_clips() {
    let h = harness(4);
    let t = &h.set.trials[0];
    let req = Request::builder()
        .uri(format!("/audio/{}", t.candidates[0].clip.audio_ref))
        .body(Body::empty())
        .unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "audio/wav");
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let reader = hound::WavReader::new(std::io::Cursor::new(bytes.to_vec())).unwrap();
    let expected = ((t.end_s - t.start_s) * 16000.0).round() as i64;
    assert!((i64::from(reader.len()) - expected).abs() <= 1);

    let (s, _) = call(&h.app, "GET", "/audio/t000-wiener", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, body) = call(&h.app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("<title>"));
}

#[tokio::test]
async fn replayed_log_reproduces_hand_counted_stats() {
    let h = harness(50);
    assert_eq!(h.set.trials.len(), 50);
    let plan = synthetic_log(&h.set);
    let mut sessions = BTreeMap::new();
    for (subject, tid, slot) in &plan {
        if !sessions.contains_key(subject) {
            sessions.insert(subject.clone(), session(&h.app, subject).await);
        }
        let sid = &sessions[subject];
        let (s, _) = json_call(
            &h.app,
            "POST",
            &format!("/sessions/{sid}/responses"),
            Some(json!({ "trial_id": tid, "choice": slot, "response_ms": 1 })),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
    }

    // Independent tally: slot -> system through the trial file.
    let mut counts: BTreeMap<&str, usize> = SYSTEMS.iter().map(|s| (*s, 0)).collect();
    for (_, tid, slot) in &plan {
        let t = h.set.trials.iter().find(|t| &t.trial_id == tid).unwrap();
        *counts.get_mut(t.system_for_slot(slot).unwrap()).unwrap() += 1;
    }
    let total = plan.len();
    assert_eq!(total, 1250);

    let (_, served) = json_call(&h.app, "GET", "/stats", None).await;
    let served: StudyStats = serde_json::from_value(served).unwrap();
    let d = &served.datasets[&Dataset::Synth];
    assert_eq!(d.responses, total);
    assert_eq!(d.trials, 50);
    for (sys, n) in &counts {
        assert_eq!(d.systems[*sys].choices, *n);
        assert_eq!(d.systems[*sys].percent, 100.0 * *n as f64 / total as f64);
    }
    let sum: f64 = d.systems.values().map(|s| s.percent).sum();
    assert!((sum - 100.0).abs() <= 0.01);

    let replayed = compute_stats(&read_log(&h.log_path).unwrap(), &systems());
    assert_eq!(replayed, served);
    let reopened = StudyService::new(h.set.clone(), Path::new("."), &h.log_path).unwrap();
    assert_eq!(reopened.stats(), served);
}

#[test]
fn reference_percentages_reproduce_from_consistent_counts() {
    // Smallest response totals whose counts round to the reference rows.
    let rows = [
        (Dataset::Ita, [45.91, 30.34, 23.75]),
        (Dataset::Ger, [37.60, 34.88, 27.52]),
    ];
    let names = ["diffusion", "denoiser", "dtln"];
    let mut log = Vec::new();
    for (d, pcts) in rows {
        let (n, counts) = (1..5000usize)
            .find_map(|n| {
                let c: Vec<usize> = pcts.iter().map(|p| (p * n as f64 / 100.0).round() as usize).collect();
                let ok = c.iter().sum::<usize>() == n
                    && c.iter().zip(pcts).all(|(&k, p)| format!("{:.2}", 100.0 * k as f64 / n as f64) == format!("{p:.2}"));
                ok.then_some((n, c))
            })
            .unwrap();
        let mut i = 0;
        for (sys, k) in names.iter().zip(&counts) {
            for _ in 0..*k {
                log.push(Response {
                    subject_id: format!("s{i}"),
                    trial_id: format!("{d}{i}"),
                    dataset: d,
                    system: sys.to_string(),
                    response_ms: 0,
                    timestamp_ms: 0,
                });
                i += 1;
            }
        }
        assert_eq!(i, n);
    }
    let mut st = compute_stats(&log, &names.map(String::from));
    let mut acc = BTreeMap::new();
    acc.insert((Dataset::Ita, "diffusion".to_string()), 82.65);
    acc.insert((Dataset::Ger, "diffusion".to_string()), 76.86);
    st.attach_accuracy(&acc);
    let table = export_table(&st);
    assert!(table.contains("ITA\tdiffusion\t45.91%\t82.65%"));
    assert!(table.contains("ITA\tdenoiser\t30.34%\t-"));
    assert!(table.contains("ITA\tdtln\t23.75%"));
    assert!(table.contains("GER\tdiffusion\t37.60%\t76.86%"));
    assert!(table.contains("GER\tdenoiser\t34.88%"));
    assert!(table.contains("GER\tdtln\t27.52%"));
    let rows = import_table(&table).unwrap();
    assert_eq!(rows_to_table(&rows), table);
    for r in &rows {
        let st = &st.datasets[&r.dataset].systems[&r.system];
        assert_eq!(r.choice_percent, (st.percent * 100.0).round() / 100.0);
        assert_eq!(r.choices, st.choices);
    }
}

#[test]
fn paired_accuracy_is_restricted_to_study_words() {
    let dir = tempfile::tempdir().unwrap();
    let c = study_tree(dir.path(), 20);
    let picked = select_words(&c.utterances, 6, 3);
    assert_eq!(picked.len(), 6);
    let set = build_study(&c.utterances, &picked, dir.path(), "clean", &systems(), 1).unwrap();

    // Predictions for every syllable of the corpus, wrong on a fixed pattern.
    let mut preds: PredictionSet = BTreeMap::new();
    for (si, sys) in SYSTEMS.iter().enumerate() {
        let m = preds.entry(sys.to_string()).or_default();
        let mut n = 0usize;
        for u in &c.utterances {
            for w in &u.words {
                for s in &w.syllables {
                    let gold = s.stress.label();
                    let pred = if (n + si) % 5 == 0 { 1 - gold } else { gold };
                    m.insert(SyllableKey::new(&u.id, &w.id, s.index as u16), vec![(gold, pred)]);
                    n += 1;
                }
            }
        }
    }
    let acc = paired_accuracy(&set, &preds).unwrap();
    for sys in SYSTEMS {
        let keys: Vec<SyllableKey> = set.trials.iter().flat_map(|t| t.syllable_keys()).collect();
        let ok = keys.iter().filter(|k| preds[sys][*k][0].0 == preds[sys][*k][0].1).count();
        assert_eq!(acc[&(Dataset::Synth, sys.to_string())], 100.0 * ok as f64 / keys.len() as f64);
    }

    // Two models on one syllable, one right and one wrong: half a hit.
    let mut doubled = preds.clone();
    let k0 = set.trials[0].syllable_keys()[0].clone();
    let (g, _) = doubled["wiener"][&k0][0];
    doubled.get_mut("wiener").unwrap().insert(k0.clone(), vec![(g, g), (g, 1 - g)]);
    let keys: Vec<SyllableKey> = set.trials.iter().flat_map(|t| t.syllable_keys()).collect();
    let ok: usize = keys.iter().map(|k| doubled["wiener"][k].iter().filter(|(a, b)| a == b).count()).sum();
    let acc2 = paired_accuracy(&set, &doubled).unwrap();
    assert_eq!(acc2[&(Dataset::Synth, "wiener".to_string())], 100.0 * ok as f64 / (keys.len() + 1) as f64);

    let mut partial = preds.clone();
    let first = set.trials[0].syllable_keys()[0].clone();
    partial.get_mut("wiener").unwrap().remove(&first);
    assert!(matches!(
        paired_accuracy(&set, &partial),
        Err(StudyError::MissingPrediction { .. })
    ));
}
