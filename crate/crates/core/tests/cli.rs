use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cellfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cellfree(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SMALL: &str = r#"
num_aps = 24
num_users = 6
users_per_rb = 3
aps_per_user = 3
drops = 12
seed = 7
"#;

#[test]
fn run_writes_the_three_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = tmp.path().join("out");
    let stdout = ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("mu-oas"));

    let samples = String::from_utf8(read(&out, "samples.csv")).unwrap();
    let mut lines = samples.lines();
    assert_eq!(lines.next(), Some("drop,user,approach,direction,sinr,se_bps_hz"));
    // 4 approaches x 2 directions + non-coherent MU-OAS downlink, 6 users, 12 drops
    assert_eq!(lines.count(), 9 * 6 * 12);

    let cdf = String::from_utf8(read(&out, "cdf.csv")).unwrap();
    assert_eq!(cdf.lines().next(), Some("approach,direction,se,cum_prob"));

    let summary: serde_json::Value = serde_json::from_slice(&read(&out, "summary.json")).unwrap();
    assert!(summary["percentile_method"].as_str().unwrap().contains("interpolation"));
    assert_eq!(summary["config"]["num_aps"], 24);
    assert_eq!(summary["config"]["seed"], 7);
    assert_eq!(summary["series"].as_array().unwrap().len(), 9);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let dirs: Vec<_> = ["1", "4", "4"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let out = tmp.path().join(format!("out{i}"));
            ok(&[
                "--threads",
                threads,
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]);
            out
        })
        .collect();
    for name in ["samples.csv", "summary.json", "cdf.csv"] {
        let first = read(&dirs[0], name);
        for d in &dirs[1..] {
            assert!(first == read(d, name), "{name} differs");
        }
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--drops",
        "3",
        "--seed",
        "11",
        "--approach",
        "cf,mu-oas",
        "--ms",
        "2",
        "--nu",
        "2",
        "--selection",
        "threshold",
        "--epsilon",
        "0.05",
        "--out",
        out.to_str().unwrap(),
    ]);
    let summary: serde_json::Value = serde_json::from_slice(&read(&out, "summary.json")).unwrap();
    let c = &summary["config"];
    assert_eq!(c["drops"], 3);
    assert_eq!(c["seed"], 11);
    assert_eq!(c["aps_per_user"], 2);
    assert_eq!(c["users_per_rb"], 2);
    assert_eq!(c["selection"], "threshold");
    let approaches: Vec<&str> = summary["series"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["approach"].as_str().unwrap())
        .collect();
    assert!(approaches.iter().all(|a| ["cf", "mu-oas", "mu-oas-nc"].contains(a)));
    assert!(approaches.contains(&"cf") && approaches.contains(&"mu-oas"));
}

#[test]
fn sweep_prints_one_curve_per_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = tmp.path().join("sweep");
    let stdout = ok(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--axis",
        "ms",
        "--values",
        "1,2,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.lines().next().unwrap().contains("ms=4"));
    let csv = String::from_utf8(read(&out, "sweep.csv")).unwrap();
    // header + 9 series x 3 values
    assert_eq!(csv.lines().count(), 1 + 9 * 3);
}

#[test]
fn pathloss_reports_the_segment() {
    let far = ok(&["pathloss", "--distance-km", "0.5"]);
    let mid = ok(&["pathloss", "--distance-km", "0.03"]);
    let near = ok(&["pathloss", "--distance-km", "0.001"]);
    let db = |s: &str| s.split_whitespace().next().unwrap().parse::<f64>().unwrap();
    assert!(db(&near) >= db(&mid) && db(&mid) >= db(&far));
    assert_ne!(far.split_whitespace().last(), near.split_whitespace().last());
}

#[test]
fn bad_input_is_an_error() {
    let out = cellfree(&["pathloss", "--distance-km", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cellfree(&["run", "--ms", "0", "--out", "/nonexistent/x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cellfree(&["sweep", "--axis", "nu", "--values", "0"]);
    assert!(!out.status.success());
}

#[test]
fn validate_passes_with_a_small_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("val");
    let stdout = ok(&[
        "validate",
        "--realizations",
        "20000",
        "--symbols",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!stdout.contains("FAIL"), "{stdout}");
    assert!(stdout.contains("NOTE"));
    let checks = String::from_utf8(read(&out, "checks.csv")).unwrap();
    assert!(checks.starts_with("name,status,value,limit,detail"));
    assert!(!read(&out, "terms.csv").is_empty());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = cellfree::config::SystemConfig::from_file(dir.join("default.toml")).unwrap();
    assert_eq!(default, cellfree::config::SystemConfig::default());
    cellfree::config::SystemConfig::from_file(dir.join("small.toml"))
        .unwrap()
        .validate()
        .unwrap();
}
