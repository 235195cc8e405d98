use std::fs;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
[data.scenario]
duration_s = 120.0
[data.caps]
unlabeled = 300
train = 150
val = 100
test = 100
[methods.pretrain]
max_epochs = 3
[methods.downstream]
max_epochs = 10
[sweep]
available_station_counts = [1, 8]
seeds = [0, 1]
"#;

fn csifuse(dir: &Path, args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_csifuse"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(["--config", "c.toml", "--threads", "1"])
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    dir
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn simulate_writes_frames_trajectory_and_metadata() {
    let dir = setup();
    csifuse(dir.path(), &["--out-dir", "sim", "simulate"]);
    let sim = dir.path().join("sim");
    assert!(header(&sim.join("frames.csv")).starts_with("station,timestamp,re0,im0,re1,im1"));
    assert_eq!(header(&sim.join("trajectory.csv")), "t,x,y,label");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(sim.join("scenario.json")).unwrap()).unwrap();
    assert_eq!(meta["scenario"]["duration_s"], 120.0);
    assert!(fs::read_to_string(sim.join("manifest.toml")).unwrap().contains("frames.csv"));
}

#[test]
fn dataset_from_frames_matches_in_memory_build() {
    let dir = setup();
    csifuse(dir.path(), &["--seed", "3", "--out-dir", "sim", "simulate"]);
    csifuse(dir.path(), &["--seed", "3", "--out-dir", "a", "build-dataset", "--frames", "sim/frames.csv", "--metadata", "sim/scenario.json"]);
    csifuse(dir.path(), &["--seed", "3", "--out-dir", "b", "build-dataset"]);
    for split in ["unlabeled", "train", "val", "test"] {
        let a = fs::read(dir.path().join(format!("a/{split}.csid"))).unwrap();
        let b = fs::read(dir.path().join(format!("b/{split}.csid"))).unwrap();
        assert!(a == b, "{split} differs");
    }
}

#[test]
fn pretrain_train_evaluate_chain() {
    let dir = setup();
    let d = dir.path();
    csifuse(d, &["--out-dir", "ds", "build-dataset"]);
    csifuse(d, &["--out-dir", "pt", "pretrain", "--dataset", "ds/unlabeled.csid", "--p-mask", "0.4", "--lambda", "20"]);
    csifuse(d, &["--out-dir", "tr", "train", "--labeled", "ds/train.csid", "--extractor", "pt/extractor.ckpt", "--aug", "sma", "--aug-strategy", "online", "--label-ratio", "0.5"]);
    csifuse(d, &["--out-dir", "ev", "evaluate", "--model", "tr/model.ckpt", "--test", "ds/test.csid", "--k", "2,8", "--policy", "exhaustive"]);
    let metrics = fs::read_to_string(d.join("ev/metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("model,2,1.0,0,,,"));
    assert!(lines[1].contains(",28,"), "C(8,6) = 28 combinations: {}", lines[1]);
    let manifest = fs::read_to_string(d.join("pt/manifest.toml")).unwrap();
    assert!(manifest.contains("pretrain_p_mask = 0.4"));
    assert!(manifest.contains("lambda = 20.0"));

    csifuse(d, &["--out-dir", "pca", "pca-export", "--extractor", "pt/extractor.ckpt", "--train", "ds/train.csid", "--test", "ds/test.csid", "--k", "8,1"]);
    let pca = fs::read_to_string(d.join("pca/pca.csv")).unwrap();
    assert!(pca.starts_with("split,pc1,pc2,label,condition"));
    assert_eq!(pca.lines().filter(|l| l.starts_with("test,")).count(), 200);
    assert_eq!(pca.lines().filter(|l| l.starts_with("train,")).count(), 150);
}

#[test]
fn constant_evaluation_and_identity_training() {
    let dir = setup();
    let d = dir.path();
    csifuse(d, &["--out-dir", "ds", "build-dataset"]);
    csifuse(d, &["--out-dir", "ev", "evaluate", "--constant", "--test", "ds/test.csid", "--k", "8"]);
    assert!(fs::read_to_string(d.join("ev/metrics.csv")).unwrap().contains("\nconstant,8,"));
    csifuse(d, &["--out-dir", "tr", "train", "--labeled", "ds/train.csid", "--extractor", "identity", "--aug", "re", "--erase-range", "0.2,0.3"]);
    assert!(d.join("tr/model.ckpt").exists());
}

#[test]
fn sweep_is_deterministic_and_report_reproduces_summary() {
    let dir = setup();
    let d = dir.path();
    csifuse(d, &["--out-dir", "s1", "sweep", "--methods", "constant,naive"]);
    csifuse(d, &["--out-dir", "s2", "sweep", "--methods", "constant,naive"]);
    let strip = |p: &str| -> Vec<String> {
        fs::read_to_string(d.join(p)).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    let a = strip("s1/metrics.csv");
    assert_eq!(a, strip("s2/metrics.csv"));
    // 2 methods x 2 k x 1 ratio x 2 seeds, plus the header.
    assert_eq!(a.len(), 9);
    csifuse(d, &["--out-dir", "rp", "report", "--metrics", "s1/metrics.csv"]);
    assert_eq!(fs::read(d.join("rp/summary.csv")).unwrap(), fs::read(d.join("s1/summary.csv")).unwrap());
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = setup();
    let out = Command::new(env!("CARGO_BIN_EXE_csifuse"))
        .current_dir(dir.path())
        .args(["evaluate", "--constant", "--test", "missing.csid"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csid"));
}
