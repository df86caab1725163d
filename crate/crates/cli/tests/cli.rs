use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use poplab::io::read_corpus;

fn poplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poplab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = poplab(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn synth_files_carry_the_requested_imbalance_and_noise() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "synth",
        "--output-dir",
        d,
        "--seed",
        "7",
        "--set",
        "synth.K=10",
        "--set",
        "synth.r=100",
        "--set",
        "synth.n=1000",
        "--set",
        "synth.noise=sym",
        "--set",
        "synth.rho=0.2",
    ]);
    let train = read_corpus(&dir.path().join("train.csv")).unwrap();
    let s = train.summary();
    assert_eq!(s.empirical_imbalance_ratio, Some(100.0));
    let rate = s.empirical_noise_rate.unwrap();
    let se = (0.2 * 0.8 / train.len() as f64).sqrt();
    assert!((rate - 0.2).abs() <= 3.0 * se, "{rate}");
    // stats.json agrees with the recomputation
    let stats = json(&dir.path().join("stats.json"));
    assert!((stats["train"]["empirical_noise_rate"].as_f64().unwrap() - rate).abs() <= 1e-15);

    let eval = read_corpus(&dir.path().join("eval.csv")).unwrap();
    assert_eq!(eval.summary().per_class_counts, vec![1000; 10]);
    assert_eq!(eval.clean_labels().unwrap(), eval.noisy_labels());
}

#[test]
fn balanced_noiseless_synth_matches_eval_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "synth",
        "--output-dir",
        d,
        "--set",
        "synth.r=1",
        "--set",
        "synth.rho=0",
        "--set",
        "synth.n=200",
        "--set",
        "synth.K=4",
    ]);
    let train = read_corpus(&dir.path().join("train.csv")).unwrap();
    let eval = read_corpus(&dir.path().join("eval.csv")).unwrap();
    assert_eq!(
        train.summary().per_class_counts,
        eval.summary().per_class_counts
    );
    assert_eq!(train.clean_labels().unwrap(), train.noisy_labels());
}

fn manifest_without_timestamp(dir: &Path) -> Value {
    let mut m = json(&dir.join("manifest.json"));
    m.as_object_mut()
        .unwrap()
        .remove("created_unix")
        .expect("timestamp present");
    m
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn reruns_are_byte_identical_outside_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let run = || {
        ok(&[
            "influence",
            "--output-dir",
            d,
            "--set",
            "synth.n=100",
            "--set",
            "synth.K=3",
            "--set",
            "synth.r=5",
            "--set",
            "groups.method=kmeans",
            "--set",
            "groups.count=3",
            "--set",
            "train.epochs=2",
            "--set",
            "fr.lambda=0.5",
            "--jobs",
            "2",
        ]);
        (files(dir.path()), manifest_without_timestamp(dir.path()))
    };
    let first = run();
    let second = run();
    assert!(first == second);
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 5);
}

#[test]
fn influence_per_group_differences_recompose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "influence",
        "--output-dir",
        d,
        "--set",
        "synth.n=150",
        "--set",
        "synth.K=4",
        "--set",
        "synth.r=10",
        "--set",
        "groups.method=kmeans",
        "--set",
        "groups.count=4",
        "--set",
        "train.epochs=3",
    ]);
    let summary = json(&dir.path().join("influence.json"));
    let reports = summary["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    let rows = csv_rows(&dir.path().join("acc_p.csv"));
    for r in reports {
        let g = r["removed_group"].as_u64().unwrap().to_string();
        let (mut weighted, mut n) = (0.0, 0.0);
        for row in rows.iter().filter(|row| row[0] == g) {
            let c: f64 = row[2].parse().unwrap();
            n += c;
            if !row[3].is_empty() {
                weighted += c * row[3].parse::<f64>().unwrap();
            }
        }
        let overall = r["overall_difference"].as_f64().unwrap();
        assert!(
            (weighted / n - overall).abs() <= 1e-12,
            "{g}: {} vs {overall}",
            weighted / n
        );
    }
}

#[test]
fn ttest_reproduces_spot_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["ttest", "--output-dir", dir.path().to_str().unwrap()]);
    let rows = csv_rows(&dir.path().join("ttest.csv"));
    assert_eq!(rows.len(), 24);
    let find = |m: &str, f: &str, ds: &str| {
        rows.iter()
            .find(|r| r[0] == m && r[1] == f && r[2] == ds)
            .unwrap()
            .clone()
    };
    assert_eq!(
        find("CE", "KNN", "CIFAR-10")[3..],
        ["2.962", "0.013", "true"]
    );
    assert_eq!(
        find("NLS", "G2", "CIFAR-10")[3..],
        ["4.909", "<0.0005", "true"]
    );
    assert_eq!(
        find("PL", "KNN", "CIFAR-100")[3..],
        ["-0.620", "0.548", "false"]
    );
    // the p-value tolerance is checked on the unrounded value by the acceptance suite
    let la = find("Logit-adj", "G2", "CIFAR-10");
    assert_eq!((la[3].as_str(), la[5].as_str()), ("0.255", "false"));
}

#[test]
fn theory_table_is_consistent_with_its_summary() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "theory",
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--set",
        "theory.mc_samples=20000",
    ]);
    let rows = csv_rows(&dir.path().join("theory.csv"));
    assert_eq!(rows.len(), 101);
    let v: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert!(v.iter().all(|r| r.len() == 12 && r[11] == r[9] - r[10]));
    assert_eq!((v[0][0], v[100][0]), (-8.0, 8.0));
    let summary = json(&dir.path().join("summary.json"));
    let gh = &summary["g_minus_h"];
    let max = v.iter().map(|r| r[11]).fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().map(|r| r[11]).fold(f64::INFINITY, f64::min);
    assert_eq!(gh["spread"].as_f64(), Some(max - min));
    assert_eq!(gh["constant"].as_bool(), Some(max - min <= 1e-9));
    assert_eq!(summary["bayes_threshold"].as_f64(), Some(0.0));
    assert_eq!(summary["monte_carlo"]["clean"].as_array().unwrap().len(), 4);
}

#[test]
fn compare_rows_follow_the_class_count() {
    let dir = tempfile::tempdir().unwrap();
    let base = serde_json::json!({
        "synth": { "n": 120, "K": 5, "r": 10.0, "d": 4 },
        "groups": { "method": "kmeans", "count": 3 },
        "train": { "epochs": 3 },
        "fr": { "lambda": 0.0 },
        "output": { "dir": dir.path().join("out") },
    });
    let mut treated = base.clone();
    treated["fr"]["lambda"] = 1.0.into();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    fs::write(&a, base.to_string()).unwrap();
    fs::write(&b, treated.to_string()).unwrap();
    ok(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    let rows = csv_rows(&dir.path().join("out/compare_classes.csv"));
    assert_eq!(rows.len(), 5);
    for r in &rows {
        let (x, y, d): (f64, f64, f64) = (
            r[2].parse().unwrap(),
            r[3].parse().unwrap(),
            r[4].parse().unwrap(),
        );
        assert_eq!(d, y - x);
    }
    assert_eq!(
        csv_rows(&dir.path().join("out/compare_groups.csv")).len(),
        3
    );
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["extra_config_hashes"].as_array().unwrap().len(), 1);
}

#[test]
fn seed_flag_is_overridden_by_set() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "ttest",
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--seed",
        "11",
        "--set",
        "groups.seed=2",
    ]);
    let c = json(&dir.path().join("config.json"));
    assert_eq!(
        (
            c["synth"]["seed"].as_u64(),
            c["groups"]["seed"].as_u64(),
            c["train"]["seed"].as_u64()
        ),
        (Some(11), Some(2), Some(11))
    );
}

#[test]
fn bad_inputs_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"epochs": "many"}}"#).unwrap();
    let missing = dir.path().join("missing.json");
    for args in [
        vec!["train", "--config", bad.to_str().unwrap()],
        vec!["train", "--config", missing.to_str().unwrap()],
        vec!["train", "--set", "loss.kind=hinge"],
        vec![
            "influence",
            "--set",
            "groups.method=none",
            "--set",
            "synth.n=20",
        ],
        vec!["ttest", "/no/such/fixture.csv"],
    ] {
        let out = poplab(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "));
    }
}
