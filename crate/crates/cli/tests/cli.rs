use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hsrecon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsrecon"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&hsrecon(d, &["--help"])), 0);
    assert_eq!(code(&hsrecon(d, &["frob"])), 2);
    assert_eq!(code(&hsrecon(d, &["render", "--hsi", "x.hsb"])), 2);
    assert_eq!(code(&hsrecon(d, &["--precision", "16", "gradcheck"])), 2);
    let missing = hsrecon(
        d,
        &[
            "render", "--hsi", "x.hsb", "--sens", "s.csv", "--out", "a.png",
        ],
    );
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error[io]"));
    fs::write(d.join("bad.json"), "[1, 2]").unwrap();
    assert_eq!(code(&hsrecon(d, &["--config", "bad.json", "gradcheck"])), 2);
}

#[test]
fn seed_and_config_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsrecon(dir.path(), &["--seed", "9", "sample", "--out", "s.csv"]);
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().any(|l| l == "seed: 9"));
    let config = err
        .lines()
        .find_map(|l| l.strip_prefix("config: "))
        .unwrap();
    let json: serde_json::Value = serde_json::from_str(config).unwrap();
    assert_eq!(json["seed"], 9);
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("c.json"),
        r#"{"seed": 4, "count": 3, "out": "s.json"}"#,
    )
    .unwrap();
    assert_eq!(code(&hsrecon(d, &["--config", "c.json", "sample"])), 0);
    let three: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(three.len(), 3);

    let out = hsrecon(
        d,
        &[
            "--config", "c.json", "--seed", "5", "sample", "--count", "2",
        ],
    );
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr)
        .lines()
        .any(|l| l == "seed: 5"));
    let two: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(two.len(), 2);
    assert_ne!(three[0], two[0]);
}

#[test]
fn render_then_tikhonov_recovers_the_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: &[&[&str]] = &[
        &[
            "gen-data", "--out", "data", "--count", "2", "--height", "16", "--width", "16",
        ],
        &["--seed", "3", "sample", "--out", "s.csv"],
        &[
            "render",
            "--hsi",
            "data/scene_0000.hsb",
            "--sens",
            "s.csv",
            "--rgb-out",
            "a.hsb",
            "--out",
            "a.png",
        ],
        &[
            "estimate",
            "--method",
            "tikhonov",
            "--image",
            "a.hsb",
            "--hsi",
            "data/scene_0000.hsb",
            "--out",
            "t.csv",
        ],
    ];
    for args in steps {
        let out = hsrecon(d, args);
        assert_eq!(
            code(&out),
            0,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(fs::read(d.join("a.png")).unwrap().starts_with(b"\x89PNG"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("data/manifest.json")).unwrap()).unwrap();
    assert!(manifest.is_object());

    let re = hsrecon(
        d,
        &[
            "render",
            "--hsi",
            "data/scene_0000.hsb",
            "--sens",
            "t.csv",
            "--rgb-out",
            "b.hsb",
        ],
    );
    assert_eq!(code(&re), 0);
    let eval = hsrecon(d, &["eval", "--gt", "a.hsb", "--est", "b.hsb"]);
    assert_eq!(code(&eval), 0);
    let report: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    let rmse = report["values"]["RMSE"].as_f64().unwrap();
    assert!(rmse < 1e-3, "re-rendered RGB RMSE {rmse}");
}
