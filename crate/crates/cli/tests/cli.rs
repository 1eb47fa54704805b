use std::path::Path;
use std::process::{Command, Output};

use cfsd::data::{Corpus, Split};
use cfsd::train::{config_hash, evaluate, model_from_checkpoint};
use cfsd::Checkpoint64;

fn cfsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfsd")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cfsd(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_synth(dir: &Path) {
    ok(&["--out", dir.to_str().unwrap(), "gen-synth", "--users", "60", "--items", "30"]);
}

fn train_config(dir: &Path) -> String {
    let p = dir.join("train.json");
    std::fs::write(&p, r#"{"max_epochs":2,"model":{"d_w":8,"d_h":8,"d_c":8,"d_z":8,"d_a":4,"d_m":8}}"#).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn wilcoxon_on_paired_mse_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("mse.csv");
    std::fs::write(
        &csv,
        "dataset,CISD,Ours\nGourmet,0.9641,0.9478\nVideo,1.0830,1.0305\nKindle,0.6104,0.5702\nElec,1.2253,1.2373\nYelp,1.4473,1.3981\n",
    )
    .unwrap();
    let d = dir.path().to_str().unwrap();
    let out = ok(&["--out", d, "wilcoxon", "--csv", csv.to_str().unwrap(), "--a", "CISD", "--b", "Ours"]);
    assert!(out.contains("W-=1 ") && out.contains("p=0.0398"), "{out}");
    let exact = ok(&["--out", d, "wilcoxon", "--csv", csv.to_str().unwrap(), "--a", "CISD", "--b", "Ours", "--mode", "exact"]);
    assert!(exact.contains("p=0.0625"), "{exact}");
    let bad = cfsd(&["--out", d, "wilcoxon", "--csv", csv.to_str().unwrap(), "--a", "NARRE"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfsd(&["--out", dir.path().to_str().unwrap(), "ingest", "--source", "/no/such/reviews.json", "--type", "amazon"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/reviews.json"));
    assert_eq!(cfsd(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn computation_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("zeros.csv");
    std::fs::write(&csv, "d\n0\n0\n").unwrap();
    let out = cfsd(&["--out", dir.path().to_str().unwrap(), "wilcoxon", "--csv", csv.to_str().unwrap(), "--a", "d"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_is_deterministic_and_honours_data_root() {
    let src = tempfile::tempdir().unwrap();
    small_synth(src.path());
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut outputs = Vec::new();
    for d in [&a, &b] {
        let out = Command::new(env!("CARGO_BIN_EXE_cfsd"))
            .env("CFSD_DATA_ROOT", src.path())
            .args(["--out", d.path().to_str().unwrap(), "ingest", "--source", "synth.jsonl", "--type", "amazon"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(String::from_utf8(out.stdout).unwrap());
    }
    assert!(outputs[0].contains("users=60 items=30 reviews=600"), "{}", outputs[0]);
    assert_eq!(
        std::fs::read(a.path().join("corpus.json")).unwrap(),
        std::fs::read(b.path().join("corpus.json")).unwrap()
    );
}

#[test]
fn train_twice_gives_identical_checkpoints_and_valid_manifests() {
    let data = tempfile::tempdir().unwrap();
    small_synth(data.path());
    let corpus = data.path().join("corpus.json");
    let cfg = train_config(data.path());
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(&["--out", d.path().to_str().unwrap(), "--config", &cfg, "--seed", "670849", "train", "--corpus", corpus.to_str().unwrap()]);
    }
    let ca = std::fs::read(a.path().join("checkpoint.bin")).unwrap();
    assert_eq!(ca, std::fs::read(b.path().join("checkpoint.bin")).unwrap());

    let text = std::fs::read_to_string(a.path().join("train.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["config_hash"].as_str().unwrap(), config_hash(&m["config"]).unwrap());
    assert_eq!(m["seeds"][0], 670849);
    for (_, p) in m["artifacts"].as_object().unwrap() {
        assert!(a.path().join(p.as_str().unwrap()).exists());
    }
    let ckpt = Checkpoint64::load(&a.path().join("checkpoint.bin")).unwrap();
    assert_eq!(ckpt.config["max_epochs"], 2);
}

#[test]
fn analyze_at_zero_beta_matches_biased_evaluation() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path().to_str().unwrap();
    small_synth(d.path());
    let corpus = format!("{dir}/corpus.json");
    let ckpt = format!("{dir}/checkpoint.bin");
    ok(&["--out", dir, "--config", &train_config(d.path()), "train", "--corpus", &corpus]);
    ok(&["--out", dir, "analyze", "--checkpoint", &ckpt, "--corpus", &corpus, "--beta", "0"]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("report.json")).unwrap()).unwrap();
    let (model, _) = model_from_checkpoint(&Checkpoint64::load(Path::new(&ckpt)).unwrap()).unwrap();
    let ev = evaluate(&model, &Corpus::load(Path::new(&corpus)).unwrap(), Split::Test).unwrap();
    assert_eq!(report["mse"].as_f64().unwrap(), ev.mse);
    let diff = std::fs::read_to_string(d.path().join("dist_diff.csv")).unwrap();
    assert!(diff.lines().skip(1).all(|l| l.ends_with(",0")), "{diff}");

    let sweep = ok(&["--out", dir, "sweep-beta", "--checkpoint", &ckpt, "--corpus", &corpus, "--betas", "0,0.1"]);
    assert!(sweep.contains("selected beta="));
    let csv = std::fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let neg = cfsd(&["--out", dir, "sweep-beta", "--checkpoint", &ckpt, "--corpus", &corpus, "--betas=-0.1"]);
    assert_eq!(neg.status.code(), Some(2));
}
