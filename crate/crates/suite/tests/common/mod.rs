//! Fixtures for the determinism check. Commands run in-process through
//! the CLI library.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Runs one CLI command and fails on error.
pub fn ok(args: &[&str]) {
    let argv = std::iter::once("sleepgmu").chain(args.iter().copied());
    if let Err(e) = sleepgmu_cli::run_args(argv) {
        panic!("sleepgmu {args:?} failed: {e}");
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

/// A small, quick configuration for synthetic runs.
pub fn small_config(dir: &Path, epochs: usize, max_epochs: usize) -> PathBuf {
    write(
        &dir.join("config.json"),
        &format!(
            r#"{{
  "arch": {{"embed_dim": 16, "heads": 4, "ff_hidden": 32, "blocks": 1, "gmu_shared_dim": 16, "classifier_hidden": 32}},
  "train": {{"max_epochs": {max_epochs}}},
  "synth": {{"epochs": {epochs}}}
}}"#
        ),
    )
}

/// Two-channel PSG recording at 100 Hz with `stages.len()` epochs. Each
/// stage gets its own dominant frequency.
pub fn toy_psg(dir: &Path, stages: &[&str]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut signals = String::from("timestamp,channel,value\n");
    for (k, stage) in stages.iter().enumerate() {
        let hz = 2.0 + 3.0 * (stage.len() + k % 2) as f64;
        for i in 0..3000 {
            let t = (k * 3000 + i) as f64 / 100.0;
            let eeg = (2.0 * std::f64::consts::PI * hz * t).sin() + 0.01 * t;
            let eog = (2.0 * std::f64::consts::PI * 0.5 * t).cos() * (k + 1) as f64;
            writeln!(signals, "{t:.2},eeg,{eeg:.6}").unwrap();
            writeln!(signals, "{t:.2},eog,{eog:.6}").unwrap();
        }
    }
    write(&dir.join("signals.csv"), &signals);
    let mut labels = String::from("epoch_index,stage\n");
    for (k, s) in stages.iter().enumerate() {
        writeln!(labels, "{k},{s}").unwrap();
    }
    write(&dir.join("labels.csv"), &labels);
}

/// Wearable recording of `epochs` windows: respiration at 50 Hz, heart rate
/// every 5 s with the samples at `missing_hr` seconds left out, and step
/// events only in the first window.
pub fn toy_wearable(dir: &Path, epochs: usize, missing_hr: &[f64]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut signals = String::from("timestamp,channel,value\n");
    for i in 0..epochs * 1500 {
        let t = i as f64 * 0.02;
        writeln!(signals, "{t:.2},respiration,{:.6}", (0.25 * t).sin()).unwrap();
    }
    for i in 0..epochs * 6 {
        let t = i as f64 * 5.0;
        if !missing_hr.contains(&t) {
            writeln!(signals, "{t:.1},heart_rate,{}", 60 + 3 * (i % 7)).unwrap();
        }
    }
    writeln!(signals, "3.01,steps,2\n10.5,steps,1").unwrap();
    write(&dir.join("signals.csv"), &signals);
    let mut labels = String::from("epoch_index,stage\n");
    for k in 0..epochs {
        writeln!(labels, "{k},{}", ["0", "1", "2", "3", "5"][k % 5]).unwrap();
    }
    write(&dir.join("labels.csv"), &labels);
}

pub fn wearable_config(dir: &Path) -> PathBuf {
    write(&dir.join("wearable.json"), r#"{"preprocess": {"mode": "wearable", "wake_margin": null}}"#)
}

/// Relative path and bytes of every artifact in `dir` (timestamp log excluded).
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    sleepgmu_cli::commands::artifact_files(dir)
        .unwrap()
        .into_iter()
        .map(|f| {
            let bytes = std::fs::read(&f).unwrap();
            (f.strip_prefix(dir).unwrap().to_path_buf(), bytes)
        })
        .collect()
}
