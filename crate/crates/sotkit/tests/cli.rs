mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixtures;

fn sotkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sotkit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let f = fixtures();
    let text = format!(
        "seed = 1\nworkers = 2\n{extra}\n[paths]\nscene_graphs = {:?}\nquestions = {:?}\nout = \"out\"\n",
        f.join("mini_corpus/scenes.json"),
        f.join("mini_corpus/questions.json"),
    );
    let p = dir.join("sotkit.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn full_run_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    for cmd in [
        vec!["ingest"],
        vec!["gen-sot", "--mode", "offline"],
        vec!["filter"],
        vec!["stats"],
        vec!["eval", "--thresholds", "0.5,0.9"],
    ] {
        let mut args = vec!["--config", cfg.as_str()];
        args.extend(cmd.iter().copied());
        let o = sotkit(&args, dir.path());
        assert!(o.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let out = dir.path().join("out");
    for f in ["generated.sot", "accepted.sot", "rejections.jsonl", "metrics.json", "ingest_warnings.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let ts: Vec<f64> = metrics["precision_recall"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["threshold"].as_f64().unwrap())
        .collect();
    assert_eq!(ts, vec![0.5, 0.9]);

    let o = sotkit(&["--config", &cfg, "demo", "q_garland_furniture"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("<subtask>select(garland)"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let code = |args: &[&str]| sotkit(args, dir.path()).status.code().unwrap();

    assert_eq!(code(&["--config", "missing.toml", "ingest"]), 1);
    assert_eq!(code(&["--config", &cfg, "--workers", "0", "ingest"]), 1);
    assert_eq!(code(&["--config", &cfg, "--thresholds", "1.5", "eval"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["ingest"]), 1, "no input paths configured");

    assert_eq!(code(&["--config", &cfg, "--questions", "nope.json", "ingest"]), 2);
    assert_eq!(code(&["--config", &cfg, "filter"]), 2, "nothing generated yet");
    assert_eq!(code(&["--config", &cfg, "demo", "unknown"]), 2);

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let bad = write_config(dir.path(), "[gen]\nmax_retries = 0\ntimeout_secs = 2.0\nrequests_per_minute = 1000");
    let endpoint = format!("http://127.0.0.1:{port}/v1/chat/completions");
    assert_eq!(code(&["--config", &bad, "--endpoint", &endpoint, "gen-sot", "--mode", "llm"]), 3);
}

#[test]
fn shipped_example_config_is_valid() {
    let cfg = sotkit::PipelineConfig::load(&fixtures().join("mini_corpus/sotkit.toml")).unwrap();
    cfg.validate().unwrap();
    assert!(cfg.paths.questions.unwrap().ends_with("mini_corpus/questions.json"));
}
