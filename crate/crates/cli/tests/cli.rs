use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn latune(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latune"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn preset_json(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/presets/{name}.json"));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn generated(dir: &Path) -> PathBuf {
    let o = latune(
        &[
            "gen-bench",
            "--out",
            "models",
            "--count",
            "2",
            "--family",
            "random",
            "--mixed-types",
        ],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("models/sim-0.json")
}

/// Two integer flags; `a-x` goes away once x >= 3, `a-y` once y >= 2.
fn stub_config(dir: &Path, exit_code: u8) -> PathBuf {
    let script = dir.join("analyzer.sh");
    fs::write(
        &script,
        format!(
            "#!/bin/sh\nx=0; y=0\nwhile [ $# -gt 0 ]; do\n  case \"$1\" in -x) x=$2; shift;; -y) y=$2; shift;; esac\n  shift\ndone\n\
             [ \"$x\" -lt 3 ] && echo \"ALARM a-x\"\n[ \"$y\" -lt 2 ] && echo \"ALARM a-y\"\nexit {exit_code}\n"
        ),
    )
    .unwrap();
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    fs::write(dir.join("main.c"), "int main(void) { return 0; }\n").unwrap();
    let cfg = json!({
        "schema_version": 1,
        "program": {"id": "main", "sources": ["main.c"]},
        "analyzer": {
            "kind": "external",
            "command": [script.to_str().unwrap(), "{params}", "{program}"],
            "renderings": {
                "x": {"kind": "value", "flag": "-x"},
                "y": {"kind": "value", "flag": "-y"}
            },
            "extraction": {"mode": "regex_lines", "pattern": "^ALARM (.*)$"}
        },
        "profile": [{"name": "x", "type": "integer"}, {"name": "y", "type": "integer"}],
        "initial_distribution": {
            "x": {"base": 0, "delta": {"poisson": 3.0}},
            "y": {"base": 0, "delta": {"poisson": 3.0}}
        },
        "hyper": {"num_refine": 3, "jobs": 2},
        "budget_seconds": 30.0,
        "seed": 1
    });
    write_json(dir, "stub.json", &cfg)
}

fn records(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn tune_simulated_with_generous_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generated(dir.path());
    let o = latune(
        &[
            "tune",
            "--config",
            cfg.to_str().unwrap(),
            "--budget",
            "5000",
            "--report",
            "r.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("final alarm count: "));
    let recs = records(&dir.path().join("r.jsonl"));
    let last = recs.last().unwrap();
    assert_eq!(last["record"], "final");
    assert_eq!(recs[0]["record"], "baseline");
    assert!(last["final_alarm_count"].as_u64().unwrap() <= last["baseline_alarm_count"].as_u64().unwrap());
    assert!(last.get("timestamp_unix").is_some());
}

#[test]
fn fixed_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generated(dir.path());
    let cfg = cfg.to_str().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        let o = latune(
            &[
                "tune",
                "--config",
                cfg,
                "--seed",
                "7",
                "--no-timestamps",
                "--report",
                name,
                "--quiet",
            ],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
}

#[test]
fn missing_distribution_entry_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generated(dir.path());
    let mut v: Value = serde_json::from_str(&fs::read_to_string(cfg).unwrap()).unwrap();
    v["initial_distribution"].as_object_mut().unwrap().remove("p1");
    let p = write_json(dir.path(), "broken.json", &v);
    let o = latune(&["tune", "--config", p.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("p1"), "{}", stderr(&o));
}

#[test]
fn validate_presets_and_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["framac-eva", "mopsa"] {
        let o = latune(&["validate", "--config", name], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }

    let mut v = preset_json("mopsa");
    v["initial_distribution"]["loop-decr-it"]["delta"] = json!({"poisson": 1.0});
    let p = write_json(dir.path(), "bool.json", &v);
    let o = latune(&["validate", "--config", p.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("loop-decr-it"), "{}", stderr(&o));

    let mut v = preset_json("framac-eva");
    v["initial_distribution"]["domains"]["delta"] = json!({"joint_bernoulli": [0.5, 0.5, 0.5, 0.5]});
    let p = write_json(dir.path(), "set.json", &v);
    let o = latune(&["validate", "--config", p.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("domains"), "{}", stderr(&o));

    let o = latune(&["validate", "--config", "no-such-file.json"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn render_inline_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_config(dir.path(), 0);
    let cfg = cfg.to_str().unwrap();
    let o = latune(
        &[
            "render",
            "--config",
            cfg,
            "--setting",
            r#"{"x": 18, "y": 14}"#,
            "--json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let argv: Vec<String> = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(argv[1..5], ["-x", "18", "-y", "14"]);

    let o = latune(&["render", "--config", cfg, "--setting", r#"{"x": "inf"}"#], dir.path());
    assert_eq!(code(&o), 1);

    let o = latune(&["render", "--config", "framac-eva", "--setting", "{}"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o);
    for flag in [
        "-eva-slevel 0",
        "-eva-ilevel 8",
        "-eva-plevel 10",
        "-eva-domains cvalue",
    ] {
        assert!(line.contains(flag), "{line}");
    }
}

#[test]
fn external_tune_then_render_from_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_config(dir.path(), 0);
    let cfg = cfg.to_str().unwrap();
    let o = latune(
        &["tune", "--config", cfg, "--report", "r.jsonl", "--no-timestamps"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = records(&dir.path().join("r.jsonl"));
    let fin = recs.last().unwrap();
    assert_eq!(fin["baseline_alarm_count"], 2);
    let argv: Vec<String> = serde_json::from_value(fin["argv"].clone()).unwrap();

    let o = latune(
        &["render", "--config", cfg, "--from-report", "r.jsonl:last", "--json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again: Vec<String> = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(again, argv);

    let o = latune(
        &["render", "--config", cfg, "--from-report", "r.jsonl:0", "--json"],
        dir.path(),
    );
    let base: Vec<String> = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(base[1..5], ["-x", "0", "-y", "0"]);
}

#[test]
fn baseline_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_config(dir.path(), 3);
    let o = latune(
        &["tune", "--config", cfg.to_str().unwrap(), "--report", "r.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("baseline"));
    assert_eq!(records(&dir.path().join("r.jsonl"))[0]["status"], "failed");
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = latune(&["gen-bench", "--out", "models", "--count", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = latune(
        &[
            "bench", "--models", "models", "--budget", "1270", "--seeds", "0,1", "--out", "t.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("adaptive"));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 3);

    let o = latune(
        &[
            "bench",
            "--models",
            "models",
            "--budget",
            "1270",
            "--strategies",
            "default,adaptive",
            "--out",
            "t.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = records(&dir.path().join("t.jsonl"));
    assert_eq!(recs.len(), 4);
    assert_eq!(recs[3]["record"], "summary");

    let o = latune(
        &["bench", "--models", "models", "--budget", "10", "--strategies", "bogus"],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
}
