use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn secmec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secmec"))
        .args(args)
        .current_dir(repo())
        .env("SECMEC_WORKERS", "2")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    repo().join("configs").join(name).display().to_string()
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

#[test]
fn tiny_run_matches_golden_csv() {
    // PA rates on these seeds agree with the brute-force oracle to 1e-6.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tiny.csv");
    let o = secmec(&["run", &config("tiny.json"), "--seed-range", "0..3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap(), golden("tiny_run.csv"));
    assert_eq!(fs::read_to_string(dir.path().join("tiny.summary.csv")).unwrap(), golden("tiny_run.summary.csv"));
}

#[test]
fn run_without_out_writes_rows_to_stdout() {
    let o = secmec(&["run", &config("tiny.json"), "--seed-range", "0..3"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden("tiny_run.csv"));
}

#[test]
fn sweep_output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"{"K": 2, "N": 4, "M": 2, "s_bits": 1e4, "T_max_s": 0.2, "E_J": 0.1, "seed_range": "0..4"}"#;
    fs::write(dir.path().join("base.json"), base).unwrap();
    let sweep_path = dir.path().join("sweep.json");
    fs::write(&sweep_path, r#"{"axis": "M", "values": [1, 2], "base_file": "base.json"}"#).unwrap();

    let mut outputs = Vec::new();
    for (i, workers) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let o = Command::new(env!("CARGO_BIN_EXE_secmec"))
            .args(["sweep", sweep_path.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("SECMEC_WORKERS", workers)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let rows = fs::read(out.join("results.csv")).unwrap();
        let summary = fs::read(out.join("summary.csv")).unwrap();
        // Header plus one row per value, seed and scheme.
        assert_eq!(rows.iter().filter(|b| **b == b'\n').count(), 1 + 2 * 4 * 3);
        assert!(!rows.contains(&b'\r') && !rows.contains(&b'"'));
        outputs.push((rows, summary));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn precheck_exit_codes() {
    let o = secmec(&["precheck", &config("desk_scale.json")]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));

    let dir = tempfile::tempdir().unwrap();
    let published = dir.path().join("published.json");
    fs::write(&published, "{}").unwrap();
    let o = secmec(&["precheck", published.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("FAIL"));

    // Solving a failing scenario needs the override.
    let o = secmec(&["run", published.to_str().unwrap(), "--seed-range", "0..1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--allow-infeasible"));
}

#[test]
fn verify_tiny_config_passes() {
    let o = secmec(&["verify", &config("tiny.json"), "--seed-range", "0..5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS seed")).count(), 5);
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"K": 0}"#).unwrap();
    let o = secmec(&["precheck", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`K`"));

    let o = secmec(&["precheck", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_load_and_pass_precheck() {
    for name in ["desk_scale.json", "desk_scale_s1e5.json", "tiny.json"] {
        let o = secmec(&["precheck", &config(name)]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stdout));
    }
    for name in ["sweep_T.json", "sweep_p_max.json", "sweep_M.json"] {
        let spec = secmec::harness::load_sweep(repo().join("configs").join(name)).unwrap();
        assert_eq!(spec.base.seeds.len(), 50, "{name}");
    }
}

#[test]
fn defaults_lists_published_values() {
    let o = secmec(&["defaults"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("T_max=0.2 s"), "{text}");
}
