use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use cafd::neighbors::{rank_by_datis, NeighborConfig};
use cafd::{load_bundle, RankedList};

fn cafd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cafd"))
        .args(args)
        .output()
        .expect("spawn cafd")
}

fn ok(args: &[&str]) -> String {
    let out = cafd(args);
    assert!(
        out.status.success(),
        "cafd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) -> String {
    let config = dir.join("synth.json");
    fs::write(&config, r#"{"seed": 3, "n_train": 400, "n_test": 200, "latent_dim": 8}"#).unwrap();
    let out = dir.join("bundle");
    ok(&["synth", "--config", p(&config), "--out", p(&out)]).trim().to_string()
}

#[test]
fn every_subcommand_on_a_tiny_bundle() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = synth(dir);
    let clusters = dir.join("bundle/clusters.csv");
    assert!(clusters.exists());

    let aligner = dir.join("aligner.json");
    let r2 = ok(&["align", "--bundle", &manifest, "--out", p(&aligner)]);
    let r2: f64 = r2.trim().strip_prefix("r2 ").unwrap().parse().unwrap();
    assert!(r2 > 0.999, "{r2}");

    let rcs = dir.join("rcs");
    ok(&["rcs", "--bundle", &manifest, "--aligner", p(&aligner), "--out", p(&rcs)]);
    let cfr = dir.join("cfr");
    ok(&["cfr", "--bundle", &manifest, "--aligner", p(&aligner), "--rcs", p(&rcs), "--out", p(&cfr)]);
    let cfr_csv = fs::read_to_string(cfr.join("cfr.csv")).unwrap();
    assert!(cfr_csv.starts_with("concept_id,name,total_count,faulty_count,cfr\n"));

    let features = dir.join("features");
    let shape = ok(&[
        "features", "--bundle", &manifest, "--aligner", p(&aligner), "--cfr", p(&cfr), "--out", p(&features),
    ]);
    assert_eq!(shape.trim(), "400 x 42");
    assert!(features.join("test_features.tensor").exists());

    let model = dir.join("model");
    ok(&["train", "--bundle", &manifest, "--out", p(&model)]);
    let ranking = dir.join("cafd.csv");
    ok(&["rank", "--bundle", &manifest, "--model", p(&model), "--out", p(&ranking)]);
    let text = fs::read_to_string(&ranking).unwrap();
    assert!(text.starts_with("rank,input_id,score\n"));
    assert_eq!(text.lines().count(), 201);

    let fitted = dir.join("cafd_fitted.csv");
    ok(&["rank", "--bundle", &manifest, "--out", p(&fitted)]);
    assert_eq!(fs::read(&fitted).unwrap(), fs::read(&ranking).unwrap());

    let gini = dir.join("gini.csv");
    ok(&["baseline", "--bundle", &manifest, "--method", "deepgini", "--out", p(&gini)]);

    let fdr = ok(&["fdr", "--bundle", &manifest, "--ranking", p(&ranking), "--clusters", p(&clusters)]);
    assert_eq!(fdr.lines().count(), 7);
    assert!(fdr.starts_with("budget,b,detected,total,fdr\n0.01,2,"));
    let dbscan = ok(&[
        "fdr", "--bundle", &manifest, "--ranking", p(&ranking), "--dbscan-eps", "3.0", "--dbscan-minpts", "2",
        "--budgets", "0.05",
    ]);
    assert_eq!(dbscan.lines().count(), 2);

    let table = ok(&[
        "compare",
        "--bundle",
        &manifest,
        "--ranking",
        &format!("cafd={}", p(&ranking)),
        "--ranking",
        &format!("deepgini={}", p(&gini)),
        "--clusters",
        p(&clusters),
        "--out",
        p(&dir.join("compare.csv")),
    ]);
    assert!(table.starts_with("budget"));
    assert!(table.contains("p-value"));

    let importance = ok(&["importance", "--bundle", &manifest]);
    let json: serde_json::Value = serde_json::from_str(&importance).unwrap();
    assert_eq!(json["rfe_order"].as_array().unwrap().len(), 42);

    let bench = ok(&["bench", "--bundle", &manifest, "--model", p(&model)]);
    let mut parts = bench.split_whitespace();
    assert_eq!(parts.next(), Some("CAFD"));
    assert!(parts.next().unwrap().parse::<f64>().is_ok());
    assert!(parts.next().is_none());

    assert!(start.elapsed().as_secs_f64() < 10.0, "{:?}", start.elapsed());
}

#[test]
fn datis_baseline_matches_library_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path());
    let out = tmp.path().join("datis.csv");
    ok(&["baseline", "--bundle", &manifest, "--method", "datis", "--knn-k", "7", "--out", p(&out)]);
    let bundle = load_bundle(&manifest).unwrap();
    let expected = rank_by_datis(&bundle, &NeighborConfig { k: 7, ..NeighborConfig::default() }).unwrap();
    assert_eq!(RankedList::read_csv(&out).unwrap(), expected);
    let again = tmp.path().join("datis2.csv");
    ok(&["--threads", "1", "baseline", "--bundle", &manifest, "--method", "datis", "--knn-k", "7", "--out", p(&again)]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path());
    synth(b.path());
    for name in ["latent_train.tensor", "probs_test.tensor", "concept_text.tensor", "clusters.csv", "manifest.json"] {
        assert_eq!(
            fs::read(a.path().join("bundle").join(name)).unwrap(),
            fs::read(b.path().join("bundle").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn exit_codes() {
    assert_eq!(cafd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cafd(&["rank", "--bundle", "x.json", "--out", "r.csv", "--bogus"]).status.code(), Some(1));
    assert_eq!(cafd(&["--help"]).status.code(), Some(0));
    assert_eq!(cafd(&["fdr", "--bundle", "x.json", "--ranking", "r.csv"]).status.code(), Some(1));
    assert_eq!(
        cafd(&["fdr", "--bundle", "x.json", "--ranking", "r.csv", "--clusters", "c.csv", "--dbscan-eps", "1"])
            .status
            .code(),
        Some(1)
    );

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = cafd(&["rank", "--bundle", p(&missing), "--out", p(&tmp.path().join("r.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[rank]"), "{err}");

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"n_planted": 100}"#).unwrap();
    let out = cafd(&["synth", "--config", p(&bad), "--out", p(&tmp.path().join("b"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[synth]"));
}
