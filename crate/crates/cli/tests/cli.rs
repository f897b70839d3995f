use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pnd_core::ingestion::IngestStats;
use pnd_core::synth::GroundTruth;

fn pnd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pnd(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn simulate(dir: &Path, posts: usize, seed: u64) -> (PathBuf, GroundTruth) {
    ok(dir, &["simulate", "--out", "syn", "--posts", &posts.to_string(), "--seed", &seed.to_string()]);
    let syn = dir.join("syn");
    let truth = serde_json::from_str(&fs::read_to_string(syn.join("ground_truth.json")).unwrap()).unwrap();
    (syn, truth)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().to_string(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn ingest_and_stats_match_generator_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (syn, truth) = simulate(tmp.path(), 600, 5);
    let cfg = "syn/config.toml";
    ok(tmp.path(), &["--config", cfg, "ingest"]);
    let stats: IngestStats =
        serde_json::from_str(&fs::read_to_string(syn.join("out/ingest_stats.json")).unwrap()).unwrap();
    assert_eq!(stats, truth.ingest);

    ok(tmp.path(), &["--config", cfg, "stats"]);
    let hist = fs::read_to_string(syn.join("out/sector_histogram.csv")).unwrap();
    let sectors: BTreeMap<String, usize> = hist
        .lines()
        .skip(1)
        .map(|l| {
            let (s, n) = l.rsplit_once(',').unwrap();
            (s.trim_matches('"').to_string(), n.parse().unwrap())
        })
        .collect();
    assert_eq!(sectors, truth.sector_posts);
    assert!(hist.lines().nth(1).unwrap().starts_with("Healthcare,"));

    let daily = fs::read_to_string(syn.join("out/daily_counts.csv")).unwrap();
    let (mut posts, mut comments) = (BTreeMap::new(), BTreeMap::new());
    for line in daily.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let date = f[0].parse().unwrap();
        let (p, c): (usize, usize) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        if p > 0 {
            posts.insert(date, p);
        }
        if c > 0 {
            comments.insert(date, c);
        }
    }
    assert_eq!(posts, truth.daily_posts);
    assert_eq!(comments, truth.daily_comments);
}

#[test]
fn label_reports_distribution_and_reruns_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (syn, truth) = simulate(tmp.path(), 400, 9);
    let cfg = "syn/config.toml";
    ok(tmp.path(), &["--config", cfg, "ingest"]);
    let stdout = ok(tmp.path(), &["--config", cfg, "label"]);
    assert!(stdout.contains("slope threshold 0.18"));
    let text = fs::read_to_string(syn.join("out/class_distribution.txt")).unwrap();
    assert_eq!(text, truth.distribution.to_string());

    let first = snapshot(&syn.join("out"));
    ok(tmp.path(), &["--config", cfg, "ingest"]);
    ok(tmp.path(), &["--config", cfg, "label"]);
    assert_eq!(snapshot(&syn.join("out")), first);
}

#[test]
fn full_pipeline_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (syn, _) = simulate(tmp.path(), 300, 3);
    let run = |threads: &str| {
        let base = ["--config", "syn/config.toml", "--threads", threads];
        for cmd in [&["ingest"][..], &["label"], &["train", "--epochs", "5"], &["eval", "--epochs", "5", "--folds", "3"]] {
            let args: Vec<&str> = base.iter().chain(cmd).copied().collect();
            ok(tmp.path(), &args);
        }
        let args: Vec<&str> = base
            .iter()
            .chain(&["explain", "--instances", "6", "--background", "4", "--samples", "64"])
            .copied()
            .collect();
        ok(tmp.path(), &args);
        let snap = snapshot(&syn.join("out"));
        fs::remove_dir_all(syn.join("out")).unwrap();
        snap
    };
    let one = run("1");
    let four = run("4");
    let differing: Vec<&String> = one.keys().filter(|k| one.get(*k) != four.get(*k)).collect();
    assert!(differing.is_empty() && one.len() == four.len(), "differ: {differing:?}");
    for name in ["model.json", "vocab.tsv", "eval_table.csv", "attributions.csv", "ranking.csv"] {
        assert!(one.contains_key(name), "{name} written");
    }
    let ranking = String::from_utf8(one["ranking.csv"].clone()).unwrap();
    assert!(ranking.starts_with("rank,term,mean_abs_value\n1,"));
}

#[test]
fn explain_rejects_a_checkpoint_from_another_vocabulary() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), 200, 4);
    let cfg = "syn/config.toml";
    for cmd in ["ingest", "label"] {
        ok(tmp.path(), &["--config", cfg, cmd]);
    }
    ok(tmp.path(), &["--config", cfg, "train", "--epochs", "2", "--min-count", "3"]);
    fs::rename(tmp.path().join("syn/out/model.json"), tmp.path().join("other.json")).unwrap();
    ok(tmp.path(), &["--config", cfg, "train", "--epochs", "2"]);
    let out = pnd(tmp.path(), &["--config", cfg, "explain", "--checkpoint", "../other.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("explain:"));
}

#[test]
fn missing_input_exits_with_data_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pnd(tmp.path(), &["ingest", "--posts", "nowhere.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ingest:") && err.contains("nowhere.jsonl"), "{err}");
}

#[test]
fn malformed_records_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("posts.jsonl"), "{\"id\": \"p1\"\n").unwrap();
    fs::write(d.join("comments.jsonl"), "").unwrap();
    fs::create_dir(d.join("ohlcv")).unwrap();
    fs::write(d.join("sectors.csv"), "symbol,sector\n").unwrap();
    let out = pnd(d, &["ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("posts.jsonl"));
}

#[test]
fn empty_inputs_give_zero_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("posts.jsonl"), "").unwrap();
    fs::write(d.join("comments.jsonl"), "").unwrap();
    fs::create_dir(d.join("ohlcv")).unwrap();
    fs::write(d.join("sectors.csv"), "symbol,sector\n").unwrap();
    ok(d, &["ingest"]);
    let stats: IngestStats = serde_json::from_str(&fs::read_to_string(d.join("out/ingest_stats.json")).unwrap()).unwrap();
    assert_eq!(stats, IngestStats::default());
    ok(d, &["label"]);
    ok(d, &["stats"]);
}

#[test]
fn single_sector_corpus_has_one_histogram_bar() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let post = |id: &str, sym: &str| {
        format!("{{\"id\":\"{id}\",\"author\":\"a\",\"created\":1614600000,\"title\":\"${sym} going up\",\"body\":\"\"}}\n")
    };
    fs::write(d.join("posts.jsonl"), post("p1", "ABCD") + &post("p2", "EFGH") + &post("p3", "ABCD")).unwrap();
    fs::write(d.join("comments.jsonl"), "").unwrap();
    fs::write(d.join("sectors.csv"), "symbol,sector\nABCD,Healthcare\nEFGH,Healthcare\n").unwrap();
    let stdout = ok(d, &["stats"]);
    assert_eq!(stdout.lines().filter(|l| l.contains('#')).count(), 1);
    assert_eq!(fs::read_to_string(d.join("out/sector_histogram.csv")).unwrap(), "sector,posts\nHealthcare,3\n");
}

#[test]
fn usage_errors_exit_one_and_help_shows_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(pnd(tmp.path(), &["label", "--slope-threshold", "steep"]).status.code(), Some(1));
    assert_eq!(pnd(tmp.path(), &["--config", "absent.toml", "stats"]).status.code(), Some(1));
    fs::write(tmp.path().join("bad.toml"), "[market]\nslope = 1\n").unwrap();
    assert_eq!(pnd(tmp.path(), &["--config", "bad.toml", "label"]).status.code(), Some(1));

    let help = ok(tmp.path(), &["label", "--help"]);
    assert!(help.contains("[default: 2.0]") && help.contains("[default: 0.18]"), "{help}");
    for sub in ["ingest", "train", "eval", "explain", "simulate", "stats"] {
        let help = ok(tmp.path(), &[sub, "--help"]);
        assert!(help.contains("--config") && help.contains("--threads"), "{sub}: {help}");
        assert!(help.matches("[default:").count() >= 2, "{sub} documents its defaults: {help}");
    }
}
