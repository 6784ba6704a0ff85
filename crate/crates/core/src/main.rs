use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use stressbench::corpus::{
    filter_polysyllabic, make_folds, parse_alignments, read_folds, read_split, syllable_table, synth_corpus,
    write_folds, SynthSpec, Utterance,
};
use stressbench::degrade::batch_degrade;
use stressbench::enhance::{
    enhance_dir, import_enhanced, Enhancer, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_HEAD_MS, DEFAULT_SMOOTHING,
};
use stressbench::eval::{load_runs, parse_predictions_tsv, run_cv, Condition, Report};
use stressbench::featfile::FeatureTable;
use stressbench::model::TrainConfig;
use stressbench::prosody::{feature_table, ProsodyConfig, SkippedSyllable};
use stressbench::sslfeat::ssl_feature_table;
use stressbench::study;

#[derive(Parser)]
#[command(name = "stressbench", version, about = "Syllable-stress detection benchmark under noise and enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    SpectralSub,
    Wiener,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureType {
    Heuristic,
    Ssl,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with controllable stress separation.
    SynthCorpus {
        #[arg(long, default_value_t = 200)]
        words: usize,
        /// Extra held-out words, marked `test` in split.tsv.
        #[arg(long, default_value_t = 0)]
        test_words: usize,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        jitter: f64,
        #[arg(long, default_value_t = 2)]
        min_syllables: usize,
        #[arg(long, default_value_t = 2)]
        max_syllables: usize,
        #[arg(long, default_value_t = 4)]
        words_per_utterance: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mix white noise into every WAV of a directory at each SNR.
    MixNoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 5.0, 10.0, 20.0])]
        snr: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enhance every WAV of a directory with a built-in baseline.
    Enhance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
        smoothing: f64,
        #[arg(long, default_value_t = DEFAULT_HEAD_MS)]
        head_ms: f64,
    },
    /// Validate an externally enhanced tree against the reference durations.
    ImportEnhanced {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        label: String,
        /// Where to write the index (default: DIR/import.tsv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-syllable feature table.
    ExtractFeatures {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "type", value_enum, default_value = "heuristic")]
        kind: FeatureType,
        #[arg(long, required_if_eq("kind", "heuristic"))]
        audio: Option<PathBuf>,
        #[arg(long, required_if_eq("kind", "ssl"))]
        frames_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Word-grouped, stress-balanced fold assignment.
    MakeFolds {
        #[arg(long)]
        corpus: PathBuf,
        /// Restrict folds to utterances marked `train`.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per fold and save checkpoints.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        folds: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate and write run.json plus predictions.tsv.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        folds: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// "clean", "noisy@SNR" or "SYSTEM@SNR".
        #[arg(long, default_value = "clean")]
        condition: Condition,
        /// Feature label for the report (default: from the feature layout).
        #[arg(long)]
        feature_type: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect run.json files into a condition-by-SNR table.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build listening-study trials.
    StudyBuild {
        #[arg(long)]
        corpus: PathBuf,
        /// Root holding one directory per system plus the clean directory.
        #[arg(long)]
        audio: PathBuf,
        #[arg(long, default_value = "clean")]
        clean: String,
        /// Exactly three system directory names.
        #[arg(long = "system", num_args = 1)]
        systems: Vec<String>,
        #[arg(long, default_value_t = 25)]
        per_dataset: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the listening study over HTTP.
    StudyServe {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "responses.jsonl")]
        log: PathBuf,
        /// Directory with the browser client (index.html and assets).
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Similarity table from a response log.
    StudyStats {
        #[arg(long)]
        log: PathBuf,
        /// Trial file; lists systems never chosen and enables --predictions.
        #[arg(long)]
        trials: Option<PathBuf>,
        /// SYSTEM=predictions.tsv from `evaluate`, one per system.
        #[arg(long = "predictions", requires = "trials")]
        predictions: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_corpus(path: &Path) -> Result<Vec<Utterance>> {
    let parsed = parse_alignments(path).with_context(|| format!("reading {}", path.display()))?;
    for r in &parsed.rejected {
        eprintln!("rejected: {r}");
    }
    Ok(filter_polysyllabic(parsed.utterances))
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(TrainConfig::from_toml(&text)?)
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn report_skipped(skipped: &[SkippedSyllable]) {
    if !skipped.is_empty() {
        eprintln!("{} syllables skipped", skipped.len());
        for s in skipped.iter().take(20) {
            eprintln!("  {}: {}", s.key, s.reason);
        }
    }
}

fn fail_on(failures: &[(PathBuf, String)]) -> Result<()> {
    for (p, e) in failures {
        eprintln!("{}: {e}", p.display());
    }
    if !failures.is_empty() {
        bail!("{} files failed", failures.len());
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            // Many error types already embed their source in the message.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthCorpus {
            words,
            test_words,
            delta,
            jitter,
            min_syllables,
            max_syllables,
            words_per_utterance,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                words,
                test_words,
                min_syllables,
                max_syllables,
                delta,
                jitter,
                words_per_utterance,
            };
            let c = synth_corpus(&spec, seed)?;
            c.write_to_dir(&out)?;
            println!("{} utterances written to {}", c.utterances.len(), out.display());
        }
        Command::MixNoise { input, out, snr, seed } => {
            let report = batch_degrade(&input, &out, &snr, seed)?;
            println!("{} mixtures written", report.rows.len());
            fail_on(&report.failures)?;
        }
        Command::Enhance {
            input,
            out,
            method,
            alpha,
            beta,
            smoothing,
            head_ms,
        } => {
            let e = match method {
                Method::SpectralSub => Enhancer::spectral_subtraction(alpha, beta),
                Method::Wiener => Enhancer::wiener(smoothing),
            };
            fail_on(&enhance_dir(&input, &out, &e, head_ms)?)?;
        }
        Command::ImportEnhanced {
            dir,
            manifest,
            label,
            out,
        } => {
            let tree = import_enhanced(&dir, &manifest, &label)?;
            let out = out.unwrap_or_else(|| dir.join("import.tsv"));
            write(&out, tree.to_tsv())?;
            println!("{} files accepted as {label}", tree.files.len());
        }
        Command::ExtractFeatures {
            corpus,
            kind,
            audio,
            frames_dir,
            out,
        } => {
            let utts = load_corpus(&corpus)?;
            let (table, skipped) = match kind {
                FeatureType::Heuristic => {
                    feature_table(&utts, audio.as_deref().expect("clap enforces"), &ProsodyConfig::default())
                }
                FeatureType::Ssl => ssl_feature_table(&utts, frames_dir.as_deref().expect("clap enforces")),
            };
            report_skipped(&skipped);
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            if table.is_empty() {
                bail!("no syllable could be featurised");
            }
            table.write(&out)?;
            println!("{} rows, dim {}", table.len(), table.dim);
        }
        Command::MakeFolds {
            corpus,
            split,
            k,
            seed,
            out,
        } => {
            let mut utts = load_corpus(&corpus)?;
            if let Some(split) = split {
                let train: std::collections::HashSet<String> =
                    read_split(&split)?.into_iter().filter(|(_, t)| *t).map(|(u, _)| u).collect();
                utts.retain(|u| train.contains(&u.id));
            }
            let folds = make_folds(&syllable_table(&utts), k, seed)?;
            write(&out, write_folds(&folds))?;
        }
        Command::Train {
            features,
            folds,
            config,
            out,
        } => {
            let table = FeatureTable::read(&features)?;
            let folds = read_folds(&folds)?;
            let cfg = load_config(config.as_deref())?;
            let run = run_cv(&table, &folds, &cfg, Condition::Clean, "", None)?;
            std::fs::create_dir_all(&out)?;
            for (i, t) in run.trained.iter().enumerate() {
                t.model.save(&out.join(format!("fold{i}.sbck")))?;
                let mut h = String::from("epoch\ttrain_loss\tval_loss\tval_accuracy\n");
                for r in &t.history {
                    h.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.4}\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy));
                }
                write(&out.join(format!("fold{i}_history.tsv")), h)?;
            }
            write(&out.join("folds.json"), serde_json::to_string_pretty(&run.folds)? + "\n")?;
            println!("{} fold models written to {}", run.trained.len(), out.display());
        }
        Command::Evaluate {
            features,
            folds,
            config,
            condition,
            feature_type,
            out,
        } => {
            let table = FeatureTable::read(&features)?;
            let folds = read_folds(&folds)?;
            let cfg = load_config(config.as_deref())?;
            let ft = feature_type.unwrap_or_else(|| feature_label(&table));
            let run = run_cv(&table, &folds, &cfg, condition, &ft, None)?;
            run.write_to(&out)?;
            let (a, b) = run.headline();
            println!("{} {}: {}", run.condition, ft, stressbench::eval::fmt_cell(a, b));
        }
        Command::Report { runs, out } => {
            let runs = load_runs(&runs)?;
            let report = Report::from_runs(&runs);
            write(&out, report.to_tsv())?;
            print!("{}", report.to_text());
        }
        Command::StudyBuild {
            corpus,
            audio,
            clean,
            systems,
            per_dataset,
            seed,
            out,
        } => {
            let utts = load_corpus(&corpus)?;
            let words = study::select_words(&utts, per_dataset, seed);
            let set = study::build_study(&utts, &words, &audio, &clean, &systems, seed)?;
            write(&out, set.to_json())?;
            println!("{} trials", set.trials.len());
        }
        Command::StudyServe {
            trials,
            audio,
            port,
            host,
            log,
            static_dir,
        } => {
            let set = study::TrialSet::read(&trials)?;
            let mut svc = study::StudyService::new(set, &audio, &log)?;
            if let Some(d) = static_dir {
                svc = svc.with_static_dir(d);
            }
            let app = study::router(Arc::new(svc));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        Command::StudyStats {
            log,
            trials,
            predictions,
            out,
        } => {
            let responses = study::read_log(&log)?;
            let set = trials.as_deref().map(study::TrialSet::read).transpose()?;
            let systems = set.as_ref().map(|s| s.systems.clone()).unwrap_or_default();
            let mut stats = study::compute_stats(&responses, &systems);
            if let Some(set) = &set {
                let mut preds = study::PredictionSet::new();
                for spec in &predictions {
                    let (system, path) = spec
                        .split_once('=')
                        .with_context(|| format!("expected SYSTEM=FILE, got {spec:?}"))?;
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
                    let m = preds.entry(system.to_string()).or_default();
                    for p in parse_predictions_tsv(&text)? {
                        m.entry(p.key).or_default().push((p.label, p.post));
                    }
                }
                if !preds.is_empty() {
                    stats.attach_accuracy(&study::paired_accuracy(set, &preds)?);
                }
            }
            let table = study::export_table(&stats);
            match out {
                Some(p) => write(&p, &table)?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn feature_label(table: &FeatureTable) -> String {
    if table.layout_hash == stressbench::featfile::layout_hash(&stressbench::prosody::heuristic_layout()) {
        "heuristic".into()
    } else if table.layout_hash == stressbench::featfile::layout_hash(&stressbench::sslfeat::ssl_layout(table.dim)) {
        "ssl".into()
    } else {
        format!("dim{}", table.dim)
    }
}
