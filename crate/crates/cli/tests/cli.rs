use std::path::Path;
use std::process::{Command, Output};

fn tinylight(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tinylight"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup(dir: &Path) {
    assert!(tinylight(&["scenarios", "--out", "scenarios"], dir)
        .status
        .success());
    let cfg = |kind: &str, extra: &str| {
        format!(
            r#"{{"schema_version": 1, "scenario": "scenarios/desk_congested.json", "agent": {{"kind": "{kind}"}}, "seeds": [0, 1], "horizon_s": 600{extra}}}"#
        )
    };
    std::fs::write(dir.join("fixed.json"), cfg("fixed_time", "")).unwrap();
    std::fs::write(dir.join("mp.json"), cfg("max_pressure", "")).unwrap();
    let hp = r#", "hyperparams": {"search_episodes": 2, "refine_episodes": 1, "episode_s": 200, "batch_size": 8}"#;
    std::fs::write(dir.join("tl.json"), cfg("tinylight", hp)).unwrap();
}

#[test]
fn report_prints_the_tinylight_totals() {
    let dir = tempfile::tempdir().unwrap();
    let o = tinylight(
        &["report", "--model", "TinyLight", "--out", "r.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("1,001") && text.contains("2,031"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("description,params,flops"), "{csv}");
    let o = tinylight(&["report", "--model", "NoSuchNet"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_train_codegen_verify_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let o = tinylight(&["simulate", "--config", "fixed.json", "--out", "sim"], d);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(d.join("sim/seed_1/metrics.csv").is_file());
    assert!(d.join("sim/manifest.json").is_file());

    let o = tinylight(
        &["train", "--config", "tl.json", "--seed", "4", "--out", "tl"],
        d,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let ck = "tl/seed_4/checkpoint/intersection_0.json";
    assert!(d.join(ck).is_file());
    assert!(!d.join("tl/seed_0").exists());

    let o = tinylight(&["report", "--model", ck], d);
    assert_eq!(o.status.code(), Some(0));

    let o = tinylight(
        &[
            "codegen",
            "--model",
            ck,
            "--config",
            "tl.json",
            "--precision",
            "q15",
            "--count",
            "200",
            "--out",
            "c",
        ],
        d,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = tinylight(
        &[
            "verify",
            "--model",
            "c/model.c",
            "--vectors",
            "c/vectors.txt",
            "--tolerance",
            "0",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(0));
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["vectors"], 200);
    assert_eq!(line["pass"], true);

    let o = tinylight(
        &["codegen", "--model", ck, "--count", "100", "--out", "f"],
        d,
    );
    assert_eq!(o.status.code(), Some(0));
    let source = std::fs::read_to_string(d.join("f/model.c")).unwrap();
    let marker = "tl_head_0_b[";
    let at = source.find(marker).unwrap();
    let brace = at + source[at..].find('{').unwrap() + 1;
    let mut corrupted = source.clone();
    corrupted.insert_str(brace, " 5.0f +");
    std::fs::write(d.join("f/bad.c"), corrupted).unwrap();
    let o = tinylight(
        &["verify", "--model", "f/bad.c", "--vectors", "f/vectors.txt"],
        d,
    );
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    let o = tinylight(
        &[
            "verify",
            "--model",
            "f/model.c",
            "--vectors",
            "f/vectors.txt",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn compare_writes_the_comparison_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let o = tinylight(
        &[
            "compare",
            "--config",
            "fixed.json",
            "--config",
            "mp.json",
            "--out",
            "cmp",
        ],
        d,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("MaxPressure"));
    let csv = std::fs::read_to_string(d.join("cmp/compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_configs_exit_with_one_and_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("bad.json"),
        r#"{"schema_version": 9, "scenario": "missing.json", "agent": {"kind": "max_pressure"}, "seeds": [], "horizon_s": 0}"#,
    )
    .unwrap();
    let o = tinylight(&["simulate", "--config", "bad.json"], d);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["schema_version", "missing.json", "seeds", "horizon_s"] {
        assert!(err.contains(needle), "{needle} not in {err}");
    }
}
