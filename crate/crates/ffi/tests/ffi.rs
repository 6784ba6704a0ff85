use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use stressbench_ffi::*;

fn tone(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / 16000.0).sin())
        .collect()
}

unsafe fn waveform(samples: &[f64]) -> *mut SbWaveform {
    let mut w = ptr::null_mut();
    assert_eq!(sb_waveform_new(samples.as_ptr(), samples.len(), 16000, &mut w), SbStatus::Ok);
    w
}

unsafe fn samples(w: *const SbWaveform) -> Vec<f64> {
    let mut v = vec![0.0; sb_waveform_len(w)];
    assert_eq!(sb_waveform_samples(w, v.as_mut_ptr(), v.len()), SbStatus::Ok);
    v
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(sb_last_error()).to_string_lossy().into_owned() }
}

#[test]
fn noise_hits_the_target_snr() {
    unsafe {
        let clean = waveform(&tone(16000));
        let mut noisy = ptr::null_mut();
        let mut snr = f64::NAN;
        assert_eq!(sb_add_noise(clean, 5.0, 42, &mut noisy, &mut snr), SbStatus::Ok);
        assert!((snr - 5.0).abs() < 0.01);
        assert_eq!(sb_waveform_len(noisy), 16000);
        assert_eq!(sb_waveform_sample_rate(noisy), 16000);

        let mut again = ptr::null_mut();
        assert_eq!(sb_add_noise(clean, 5.0, 42, &mut again, ptr::null_mut()), SbStatus::Ok);
        assert_eq!(samples(noisy), samples(again));
        for w in [clean, noisy, again] {
            sb_waveform_free(w);
        }
    }
}

#[test]
fn enhancers_match_the_library() {
    unsafe {
        let clean = waveform(&tone(16000));
        let mut noisy = ptr::null_mut();
        assert_eq!(sb_add_noise(clean, 0.0, 1, &mut noisy, ptr::null_mut()), SbStatus::Ok);
        let lib_noisy = stressbench::audio::Waveform::new(samples(noisy), 16000).unwrap();

        let mut out = ptr::null_mut();
        assert_eq!(sb_enhance_wiener(noisy, 0.98, 200.0, &mut out), SbStatus::Ok);
        let expected = stressbench::enhance::enhance(&lib_noisy, &stressbench::enhance::Enhancer::wiener(0.98), 200.0).unwrap();
        assert_eq!(samples(out), expected.samples);
        sb_waveform_free(out);

        let mut out = ptr::null_mut();
        assert_eq!(sb_enhance_spectral_subtraction(noisy, 2.0, 0.02, 200.0, &mut out), SbStatus::Ok);
        assert_eq!(sb_waveform_len(out), 16000);
        sb_waveform_free(out);

        let mut out = ptr::null_mut();
        assert_eq!(sb_enhance_spectral_subtraction(noisy, -1.0, 0.02, 200.0, &mut out), SbStatus::InvalidArgument);
        assert!(out.is_null());
        assert!(!last_error().is_empty());
        sb_waveform_free(noisy);
        sb_waveform_free(clean);
    }
}

#[test]
fn wav_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("x.wav").to_str().unwrap()).unwrap();
    unsafe {
        let w = waveform(&tone(800));
        assert_eq!(sb_waveform_write(w, path.as_ptr()), SbStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(sb_waveform_read(path.as_ptr(), &mut back), SbStatus::Ok);
        for (a, b) in samples(w).iter().zip(samples(back)) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
        let mut small = [0.0; 4];
        assert_eq!(sb_waveform_samples(back, small.as_mut_ptr(), 4), SbStatus::BufferTooSmall);
        sb_waveform_free(back);
        sb_waveform_free(w);

        let missing = CString::new(dir.path().join("none.wav").to_str().unwrap()).unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(sb_waveform_read(missing.as_ptr(), &mut h), SbStatus::Io);
        assert!(last_error().contains("none.wav"));
        assert_eq!(sb_waveform_read(ptr::null(), &mut h), SbStatus::NullPointer);
        assert_eq!(sb_add_noise(ptr::null(), 0.0, 0, &mut h, ptr::null_mut()), SbStatus::NullPointer);
        let silent = waveform(&[0.0; 100]);
        assert_eq!(sb_add_noise(silent, 0.0, 0, &mut h, ptr::null_mut()), SbStatus::InvalidArgument);
        sb_waveform_free(silent);
        sb_waveform_free(ptr::null_mut());
    }
}

#[test]
fn postprocess_and_accuracy() {
    unsafe {
        let probs = [0.2, 0.7, 0.7, 0.1];
        let mut labels = [9u8; 4];
        assert_eq!(sb_postprocess(probs.as_ptr(), 4, labels.as_mut_ptr()), SbStatus::Ok);
        assert_eq!(labels, [0, 1, 0, 0]);
        assert_eq!(sb_postprocess(probs.as_ptr(), 0, labels.as_mut_ptr()), SbStatus::InvalidArgument);

        let gold = [0u8, 1, 1, 0];
        let mut acc = 0.0;
        assert_eq!(sb_accuracy(labels.as_ptr(), gold.as_ptr(), 4, &mut acc), SbStatus::Ok);
        assert_eq!(acc, 75.0);
        assert_eq!(sb_accuracy(labels.as_ptr(), gold.as_ptr(), 0, &mut acc), SbStatus::InvalidArgument);
    }
}

#[test]
fn model_checkpoint_predicts_like_the_library() {
    use stressbench::model::{fit, Rows, TrainConfig};
    let dim = 4;
    let n = 40;
    let x: Vec<f64> = (0..n * dim).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let y: Vec<u8> = (0..n).map(|i| u8::from(x[i * dim] > 0.0)).collect();
    let rows = Rows { dim, x: x.clone(), y, words: Vec::new() };
    let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let model = fit(&rows, &rows, &cfg).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.sbck");
    model.save(&p).unwrap();
    let expected = model.predict_proba(&x).unwrap();

    let cpath = CString::new(p.to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(sb_model_load(cpath.as_ptr(), &mut m), SbStatus::Ok);
        assert_eq!(sb_model_input_dim(m), dim);
        let mut probs = vec![0.0; n];
        assert_eq!(sb_model_predict(m, x.as_ptr(), n, probs.as_mut_ptr()), SbStatus::Ok);
        assert_eq!(probs, expected);
        let mut bad = x.clone();
        bad[3] = f64::NAN;
        assert_eq!(sb_model_predict(m, bad.as_ptr(), n, probs.as_mut_ptr()), SbStatus::Numeric);
        sb_model_free(m);

        std::fs::write(&p, b"not a model").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(sb_model_load(cpath.as_ptr(), &mut m), SbStatus::Format);
        assert!(m.is_null());
    }
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

/// Builds a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let header_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libstressbench_ffi.a");
    if std::process::Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "stressbench.h"

int main(void) {
    double x[16000];
    for (int i = 0; i < 16000; i++) x[i] = 0.3 * sin(2.0 * 3.14159265358979 * 200.0 * i / 16000.0);
    SbWaveform *clean = NULL, *noisy = NULL, *enhanced = NULL;
    if (sb_waveform_new(x, 16000, 16000, &clean) != SB_STATUS_OK) return 1;
    double snr = 0.0;
    if (sb_add_noise(clean, 10.0, 7, &noisy, &snr) != SB_STATUS_OK) return 2;
    if (fabs(snr - 10.0) > 0.01) return 3;
    if (sb_enhance_wiener(noisy, 0.98, 200.0, &enhanced) != SB_STATUS_OK) return 4;
    if (sb_waveform_len(enhanced) != 16000) return 5;
    if (sb_waveform_read(NULL, &noisy) != SB_STATUS_NULL_POINTER) return 6;
    printf("ok %s %s\n", sb_version(), sb_last_error());
    sb_waveform_free(enhanced);
    sb_waveform_free(noisy);
    sb_waveform_free(clean);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let out = std::process::Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = std::process::Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok 0.1.0 path is null"));
}
