use std::path::Path;
use std::process::{Command, Output};

fn lcfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcfc")).args(args).env_remove("OMNI_SEED").output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn run_writes_results_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let mut metrics = Vec::new();
    for _ in 0..2 {
        let out = lcfc(&["run", "--backends", "km,hc", "--out", a.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        metrics.push(std::fs::read(a.join("metrics.json")).unwrap());
    }
    for f in ["metrics.json", "assign_km.json", "assign_km.csv", "assign_hc.json", "timings.json", "config.json"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    assert!(metrics[0] == metrics[1], "metrics.json differs between identical runs");
    let m = json(&a.join("metrics.json"));
    assert_eq!(m["scheme"]["m"], 3);
    assert_eq!(m["scheme"]["l"], 1);
    assert!(m["runs"][0]["rmse"].as_f64().unwrap() < 1e-3);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let seed_of = |name: &str, env: Option<&str>, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lcfc"));
        cmd.args(["run", "--backends", "km", "--out", out_dir.to_str().unwrap()]).args(extra).env_remove("OMNI_SEED");
        if let Some(v) = env {
            cmd.env("OMNI_SEED", v);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        json(&out_dir.join("config.json"))["seed"].as_u64().unwrap()
    };
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, "seed = 5\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    assert_eq!(seed_of("default", None, &[]), 0);
    assert_eq!(seed_of("env", Some("7"), &[]), 7);
    assert_eq!(seed_of("file", Some("7"), &["--config", cfg]), 5);
    assert_eq!(seed_of("flag", Some("7"), &["--config", cfg, "--seed", "9"]), 9);

    let bad = Command::new(env!("CARGO_BIN_EXE_lcfc")).args(["run", "--out", dir.path().join("x").to_str().unwrap()]).env("OMNI_SEED", "abc").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn config_file_sections() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rings.conf");
    std::fs::write(&cfg, "# two rings\ndataset = rings\nsynth_n = 200\nsynth_k = 2\nsynth_noise = 0.05\nbackends = sc\n\n[sc]\nsigma = knn:5\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = lcfc(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&out_dir.join("metrics.json"));
    let sc = &m["runs"][0]["backends"][0];
    assert_eq!(sc["config"]["sigma"], serde_json::json!({"mode": "knn_median", "value": 5}), "{sc}");
    assert_eq!(sc["kappa"].as_f64().unwrap(), 1.0);

    std::fs::write(&cfg, "[sc]\nbogus = 1\n").unwrap();
    assert_eq!(code(&lcfc(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let infeasible = lcfc(&["run", "-m", "3", "-l", "2", "-t", "2", "--out", out]);
    assert_eq!(code(&infeasible), 3);
    assert!(String::from_utf8_lossy(&infeasible.stderr).contains("infeasible"));

    assert_eq!(code(&lcfc(&["run", "--p", "10007", "--q", "5", "--out", out])), 3);
    assert_eq!(code(&lcfc(&["run", "--dataset", "/no/such/file.csv", "--out", out])), 4);
    assert_eq!(code(&lcfc(&["run", "--partition", "sideways", "--out", out])), 2);
    assert_eq!(code(&lcfc(&["run", "--backends", "kmeans", "--out", out])), 2);
}

#[test]
fn transcript_replay() {
    let dir = tempfile::tempdir().unwrap();
    let tr = dir.path().join("run.lcfc");
    let live = dir.path().join("live.csv");
    let out = lcfc(&[
        "reconstruct",
        "-m",
        "5",
        "-l",
        "1",
        "-t",
        "1",
        "--save-transcript",
        tr.to_str().unwrap(),
        "--dump-matrix",
        live.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let replayed = dir.path().join("replayed.csv");
    let out = lcfc(&["replay", tr.to_str().unwrap(), "--dump-matrix", replayed.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&live).unwrap(), std::fs::read(&replayed).unwrap());

    // m = 5 with threshold 3 tolerates two missing reports.
    let partial = dir.path().join("partial.csv");
    let out = lcfc(&["replay", tr.to_str().unwrap(), "--drop-client", "0", "--drop-client", "3", "--dump-matrix", partial.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&live).unwrap(), std::fs::read(&partial).unwrap());

    let out = lcfc(&["replay", tr.to_str().unwrap(), "--drop-client", "0", "--drop-client", "1", "--drop-client", "2"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("incomplete transcript"));
}

#[test]
fn privacy_audit_report() {
    let out = lcfc(&["privacy-audit", "--p", "31", "--l", "1", "--t", "1", "--m", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["mi_bits"].as_f64().unwrap(), 0.0);

    let out = lcfc(&["privacy-audit", "--p", "31", "--l", "1", "--t", "1", "--m", "5", "--colluders", "2"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["mi_bits"].as_f64().unwrap() > 0.0);
}

#[test]
fn bench_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = lcfc(&["bench", "--n", "60", "--l", "1,2", "-m", "7", "-t", "1", "-d", "4", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,d,m,l,t,encode_s,client_distance_s,decode_s,total_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("60,4,7,2,1,"));
}
