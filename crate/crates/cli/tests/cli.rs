use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use arelu::nnet::TinyNetwork;
use serde_json::Value;

fn arelu(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arelu"))
        .current_dir(dir)
        .env_remove("ARELU_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn arelu")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = arelu(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn without_wall_time(jsonl: &str) -> Vec<Value> {
    jsonl
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            assert!(v.as_object_mut().unwrap().remove("wall_ms").is_some());
            v
        })
        .collect()
}

const QUICK: &[&str] = &["--steps=40", "--log-every=10", "--per-class=10"];

#[test]
fn missing_keys_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = arelu(tmp.path(), &["train"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing required config keys: seed, loss"), "{err}");

    let out = arelu(tmp.path(), &["tau-sweep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn train_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--loss=arelu", "--tau=calibrate", "--seed=1"];
    args.extend(QUICK);
    ok(tmp.path(), &args);
    let run = tmp.path().join("runs/train-seed1");
    for f in ["train.jsonl", "metrics.json", "checkpoint.json", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let manifest = read_json(&run.join("manifest.json"));
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["settings"]["loss"], "arelu");
    assert_eq!(manifest["settings"]["steps"], "40");

    let log = without_wall_time(&fs::read_to_string(run.join("train.jsonl")).unwrap());
    assert_eq!(log.len(), 4);
    assert_eq!(log[3]["step"], 40);
    let metrics = read_json(&run.join("metrics.json"));
    assert_eq!(metrics["objective"]["kind"], "arelu");

    let net = TinyNetwork::load_json(run.join("checkpoint.json")).unwrap();
    assert_eq!(net.widths(), &[16, 64, 10]);
}

#[test]
fn reruns_are_identical_apart_from_wall_time() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["train", "--loss=entmax", "--seed=7", "--out", out];
        args.extend(QUICK);
        ok(tmp.path(), &args);
    }
    let read = |d: &str| fs::read_to_string(tmp.path().join(d).join("train.jsonl")).unwrap();
    assert_eq!(without_wall_time(&read("a")), without_wall_time(&read("b")));
    let strip = |s: String| s.lines().map(|l| l.split(",\"wall_ms\"").next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(strip(read("a")), strip(read("b")));
    assert_eq!(
        fs::read(tmp.path().join("a/checkpoint.json")).unwrap(),
        fs::read(tmp.path().join("b/checkpoint.json")).unwrap()
    );
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.cfg"), "# quick run\nseed = 3\nloss=softmax\nsteps=50\nlog_every=10\nper-class=10\n").unwrap();
    ok(tmp.path(), &["train", "--config", "run.cfg", "--steps=20"]);
    let run = tmp.path().join("runs/train-seed3");
    let manifest = read_json(&run.join("manifest.json"));
    assert_eq!(manifest["settings"]["steps"], "20");
    assert_eq!(manifest["settings"]["loss"], "softmax");
    assert_eq!(fs::read_to_string(run.join("train.jsonl")).unwrap().lines().count(), 2);

    fs::write(tmp.path().join("bad.cfg"), "seed=1\nno-such-key=2\n").unwrap();
    assert_eq!(arelu(tmp.path(), &["calibrate", "--config=bad.cfg"]).status.code(), Some(2));
}

#[test]
fn manifest_settings_reproduce_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--loss=sparsemax", "--seed=5", "--hidden=24,12", "--out", "first"];
    args.extend(QUICK);
    ok(tmp.path(), &args);
    let manifest = read_json(&tmp.path().join("first/manifest.json"));
    let cfg: String = manifest["settings"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| format!("{k}={}\n", v.as_str().unwrap()))
        .collect();
    fs::write(tmp.path().join("replay.cfg"), cfg).unwrap();
    ok(tmp.path(), &["train", "--config=replay.cfg", "--out", "second"]);
    let read = |d: &str| fs::read_to_string(tmp.path().join(d).join("train.jsonl")).unwrap();
    assert_eq!(without_wall_time(&read("first")), without_wall_time(&read("second")));
    assert_eq!(read_json(&tmp.path().join("first/metrics.json")), read_json(&tmp.path().join("second/metrics.json")));
}

#[test]
fn bench_writes_one_csv_for_all_dims() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["bench", "--dims=1000,8000,32000", "--batch=2", "--iters=1", "--warmup=0", "--out=b"]);
    let csv = fs::read_to_string(tmp.path().join("b/bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "transform,alpha,tau,dim,batch,iters,mean_ns,p50_ns,p95_ns");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 15);
    for dim in ["1000", "8000", "32000"] {
        assert_eq!(rows.iter().filter(|r| r[3] == dim).count(), 5);
    }
    assert!(rows.iter().all(|r| r[5] == "1" && r[6] == r[7] && r[7] == r[8]));
    assert!(tmp.path().join("b/manifest.json").is_file());
}

#[test]
fn bench_rejects_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(arelu(tmp.path(), &["bench", "--transforms=softmax,nope"]).status.code(), Some(2));
    assert_eq!(arelu(tmp.path(), &["bench", "--precision=f16"]).status.code(), Some(2));
    assert_eq!(arelu(tmp.path(), &["bench", "--dims=1", "--out=x"]).status.code(), Some(2));
}

#[test]
fn env_var_sets_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_arelu"))
        .current_dir(tmp.path())
        .env("ARELU_OUT_DIR", "from-env")
        .args(["calibrate", "--seed=2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cal = read_json(&tmp.path().join("from-env/calibration.json"));
    assert!(cal["tau"].as_f64().unwrap().is_finite());

    ok(tmp.path(), &["calibrate", "--seed=2", "--out=flag"]);
    assert_eq!(read_json(&tmp.path().join("flag/calibration.json")), cal);
}

#[test]
fn experiment_commands_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let header = |path: &str| fs::read_to_string(tmp.path().join(path)).unwrap().lines().next().unwrap().to_string();

    ok(tmp.path(), &["tau-sweep", "--seed=0", "--taus=0,1", "--steps=20", "--per-class=10", "--out=t"]);
    assert_eq!(header("t/tau_sweep.csv"), "tau,step,loss,accuracy,sparsity_mean");

    ok(tmp.path(), &["ntk-check", "--seed=0", "--widths=32,64", "--points=4", "--out=n"]);
    assert_eq!(
        header("n/ntk.csv"),
        "transform,width,eta,step,probe,cosine,rel_error,predicted_norm,observed_norm,kernel_min_eig"
    );
    assert_eq!(read_json(&tmp.path().join("n/summary.json")).as_array().unwrap().len(), 6);

    ok(tmp.path(), &["sparsity", "--seed=0", "--steps=20", "--per-class=10", "--buckets=5", "--out=s"]);
    assert_eq!(header("s/sparsity.csv"), "transform,bucket_lo,bucket_hi,count");
    let summary = read_json(&tmp.path().join("s/summary.json"));
    assert_eq!(summary[0]["mean"], 0.0);

    ok(
        tmp.path(),
        &["empty-seq", "--seed=0", "--vocab=12", "--max-len=4", "--train-size=30", "--dev-size=5", "--steps=10", "--out=e"],
    );
    let csv = fs::read_to_string(tmp.path().join("e/empty_seq.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "transform,examples,empty_preferred,rate_pct,eos_zero_at_start,exact_match");
    assert_eq!(csv.lines().count(), 5);
}
