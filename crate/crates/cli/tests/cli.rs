use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

use fbrep::envs::{Env, EnvId};
use fbrep::model::{FbArch, FbModel};

const SMALL: &str = r#"
[hyperparams]
hidden = [16]
cycles_per_epoch = 2
updates_per_cycle = 3
batch_size = 16

[hyperparams.eval]
goals = 3
every = 1
"#;

fn fb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fb")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn train_small(dir: &Path, tag: &str, epochs: usize, seed: u64) -> (PathBuf, PathBuf) {
    let cfg = write(dir, "small.toml", SMALL);
    let model = dir.join(format!("{tag}.fb"));
    let metrics = dir.join(format!("{tag}.csv"));
    let out = fb(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--env",
        "discrete_maze",
        "--d",
        "8",
        "--epochs",
        &epochs.to_string(),
        "--seed",
        &seed.to_string(),
        "--model",
        model.to_str().unwrap(),
        "--metrics",
        metrics.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (model, metrics)
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn train_is_deterministic_and_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (a, csv) = train_small(dir.path(), "a", 2, 11);
    let (b, _) = train_small(dir.path(), "b", 2, 11);
    let (c, _) = train_small(dir.path(), "c", 2, 12);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_ne!(bytes, std::fs::read(&c).unwrap());

    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,fb_loss,reg_loss,covB_err,eval_score");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,") && lines[2].starts_with("1,"));

    let (model, hp) = fbrep_cli::load_model(&a).unwrap();
    assert_eq!((model.d(), hp.seed, hp.hidden.clone()), (8, 11, vec![16]));
}

#[test]
fn zero_epochs_gives_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let (model, csv) = train_small(dir.path(), "init", 0, 3);
    let (m, _) = FbModel::load(&model).unwrap();
    assert_eq!(m.env().id(), EnvId::DiscreteMaze);
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 1);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[hyperparams]\ngamma = 2.0\n");
    let model = dir.path().join("m.fb");
    let out = fb(&["train", "--config", bad.to_str().unwrap(), "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));

    let garbled = write(dir.path(), "garbled.toml", "env = [");
    assert_eq!(fb(&["train", "--config", garbled.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(fb(&["train", "--env", "mars", "--epochs", "0"]).status.code(), Some(2));
    assert_eq!(fb(&["train", "--config", "/no/such/file.toml"]).status.code(), Some(2));
    assert_eq!(fb(&["train", "--model", "/no/such/dir/m.fb"]).status.code(), Some(2));
    assert!(!model.exists());
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "hot.toml",
        "[hyperparams]\nhidden = [16]\nlearning_rate = 1e9\ncycles_per_epoch = 5\nbatch_size = 16\n[hyperparams.eval]\nevery = 0\n",
    );
    let model = dir.path().join("m.fb");
    let metrics = dir.path().join("m.csv");
    let out = fb(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--d",
        "8",
        "--epochs",
        "3",
        "--model",
        model.to_str().unwrap(),
        "--metrics",
        metrics.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!model.exists());
    assert!(metrics.exists());
}

#[test]
fn export_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = train_small(dir.path(), "m", 0, 1);
    let out = fb(&["export", "--model", model.to_str().unwrap(), "--kind", "B"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 104);
    assert_eq!(lines[0].split(',').count(), 1 + 8);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 9));

    let f_out = dir.path().join("f.csv");
    let out = fb(&["export", "--model", model.to_str().unwrap(), "--kind", "F", "--out", f_out.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&f_out).unwrap().lines().count(), 105);

    assert_eq!(fb(&["export", "--model", model.to_str().unwrap(), "--kind", "G"]).status.code(), Some(2));
    assert_eq!(fb(&["export", "--model", "/no/such/model.fb"]).status.code(), Some(1));
}

#[test]
fn zero_model_exports_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.fb");
    FbModel::zeros(Env::from_id(EnvId::ContinuousMaze), &FbArch::new(4, &[8]))
        .save(&path, "")
        .unwrap();
    for kind in ["F", "B"] {
        let out = fb(&["export", "--model", path.to_str().unwrap(), "--kind", kind]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 2500);
        for row in rows {
            let values: Vec<f64> = row.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
            assert_eq!(values, vec![0.0; 4]);
        }
    }
}

#[test]
fn eval_and_rollout() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = train_small(dir.path(), "m", 1, 2);
    let m = model.to_str().unwrap();
    let report = stdout_json(&fb(&["eval", "--model", m, "--goals", "4", "--seed", "5"]));
    assert_eq!(report["metric"], "policy_quality");
    assert_eq!(report["per_goal"].as_array().unwrap().len(), 4);
    let median = report["median"].as_f64().unwrap();
    assert!((0.0..=1.0 + 1e-9).contains(&median));
    let again = stdout_json(&fb(&["eval", "--model", m, "--goals", "4", "--seed", "5"]));
    assert_eq!(report, again);

    let listed = stdout_json(&fb(&["eval", "--model", m, "--goal", "12", "--goal", "50", "--greedy"]));
    assert_eq!(listed["goals"], serde_json::json!([12, 50]));

    assert_eq!(fb(&["eval", "--model", m, "--env", "continuous_maze"]).status.code(), Some(2));
    assert_eq!(fb(&["eval", "--model", m, "--goal", "5"]).status.code(), Some(2));
    assert_eq!(fb(&["eval", "--model", m, "--epsilon", "0.1", "--tau", "1"]).status.code(), Some(2));

    let spec = r#"{"goals":[{"cell":50,"w":1}]}"#;
    let args = ["rollout", "--model", m, "--spec", spec, "--start", "12", "--epsilon", "0.3", "--seed", "4"];
    let r = stdout_json(&fb(&args));
    assert_eq!(r, stdout_json(&fb(&args)));
    let traj = r["trajectory"].as_array().unwrap();
    assert_eq!(traj[0], serde_json::json!(12));
    assert!(traj.len() <= 51);
    assert_eq!(r["reached"].as_bool().unwrap(), traj.last().unwrap() == &serde_json::json!(50));
    assert_eq!(fb(&["rollout", "--model", m, "--spec", spec, "--start", "5"]).status.code(), Some(2));
}

fn http(port: u16, request: &str) -> String {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn serving_leaves_model_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = train_small(dir.path(), "m", 1, 9);
    let before = std::fs::read(&model).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_fb"))
        .args(["serve", "--model", model.to_str().unwrap(), "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let port: u16 = line.trim().rsplit(':').next().unwrap().parse().unwrap();

    let body = r#"{"goals":[{"cell":50,"w":1}]}"#;
    let post = format!(
        "POST /api/reward-spec HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let resp = http(port, &post);
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"z_r\""));
    let resp = http(port, "GET /api/env HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert!(resp.contains("discrete_maze"));
    let resp = http(port, "GET /missing HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert!(resp.starts_with("HTTP/1.1 404"));

    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(before, std::fs::read(&model).unwrap());
}
