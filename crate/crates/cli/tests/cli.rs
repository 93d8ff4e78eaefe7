use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 4
[grid]
preset = "custom"
frequencies = [3.0, 4.0]
wind_speeds = [1.0]
pitch_angles = [0.0, -10.0]
[mlp]
epochs = 5
"#;

fn morphwing(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morphwing"))
        .args(args)
        .arg("--runs")
        .arg(root.join("runs"))
        .output()
        .expect("binary runs")
}

fn run_dir(root: &Path) -> std::path::PathBuf {
    let mut dirs: Vec<_> = fs::read_dir(root.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}

#[test]
fn staged_commands_produce_a_report() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("config.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap();
    for cmd in ["gen-data", "observe", "train", "predict", "eval"] {
        let out = morphwing(root.path(), &[cmd, "--config", cfg]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let dir = run_dir(root.path());
    for f in ["dataset.csv", "observer.csv", "mlp.csv", "model.txt", "split.txt", "loss_curve.csv", "report.txt"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("RMSE [N]"));
}

#[test]
fn simulate_writes_one_full_rate_condition() {
    let root = tempfile::tempdir().unwrap();
    let out = morphwing(root.path(), &["simulate", "--condition", "3", "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(run_dir(root.path()).join("simulate_3.csv")).unwrap();
    // Ten cycles at 2.5 Hz sampled at 7 kHz, plus schema and header lines.
    assert_eq!(text.lines().count(), 28000 + 2);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let root = tempfile::tempdir().unwrap();
    let bad = root.path().join("bad.toml");
    fs::write(&bad, "[observer]\ngain = -1.0\n").unwrap();
    let out = morphwing(root.path(), &["gen-data", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let missing = root.path().join("absent.csv");
    let out = morphwing(root.path(), &["observe", "--input", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = morphwing(root.path(), &["simulate", "--condition", "999"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn non_finite_load_cell_is_a_numeric_fault() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("config.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert!(morphwing(root.path(), &["gen-data", "--config", cfg]).status.success());
    let data = run_dir(root.path()).join("dataset.csv");
    let text = fs::read_to_string(&data).unwrap();
    let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "lc_fz").unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut row: Vec<String> = lines[10].split(',').map(String::from).collect();
    row[col] = "NaN".into();
    lines[10] = row.join(",");
    fs::write(&data, lines.join("\n") + "\n").unwrap();
    let out = morphwing(root.path(), &["observe", "--config", cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
