use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pcppi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcppi"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = pcppi(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn linear_path_qv_ends_at_mesh() {
    let dir = TempDir::new().unwrap();
    let linear = data("linear.csv");
    ok(
        &["run", "qv", "--path", linear.to_str().unwrap(), "--levels", "12"],
        dir.path(),
    );
    let r = json(&dir.path().join("qv-X.json"));
    let values = r["values"].as_array().unwrap();
    assert_eq!(values.len(), 13);
    // A unit-slope line on [0, 1]: 2^N squared increments of 2^-N.
    for (n, row) in values.iter().enumerate() {
        assert_eq!(row[0].as_f64().unwrap(), 2f64.powi(-(n as i32)));
    }
}

#[test]
fn cppi_runs_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = [
        "run",
        "cppi",
        "--m",
        "3",
        "--alpha",
        "0.8",
        "--v0",
        "100",
        "--gbm",
        "sigma=0.2",
        "--seed",
        "7",
    ];
    let sa = ok(&args, a.path());
    let sb = ok(&args, b.path());
    assert_eq!(sa, sb);
    for f in ["cppi-seed7.csv", "cppi-seed7-self-financing.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let (header, rows) = read_csv(&a.path().join("cppi-seed7.csv"));
    assert_eq!(header, ["t", "C", "V", "floor", "xi", "eta", "m"]);
    assert_eq!(rows.len(), (1 << 12) + 1);
    assert_eq!(rows[0][2], 100.0);
    assert!(rows.iter().all(|r| r[2] - r[3] > 0.0));
}

#[test]
fn vanishing_multiplier_leaves_no_risky_holding_at_horizon() {
    let dir = TempDir::new().unwrap();
    ok(
        &[
            "run",
            "dppi",
            "--multiplier",
            "mul(const 5, sub(const 1, div(clock, const 1)))",
        ],
        dir.path(),
    );
    let (_, rows) = read_csv(&dir.path().join("dppi-seed0.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert_eq!(last[6], 0.0);
    assert_eq!(last[4], 0.0);
}

#[test]
fn report_json_has_the_documented_fields() {
    let dir = TempDir::new().unwrap();
    ok(
        &["feedback", "--seeds", "3..5", "--levels", "10", "--min-level", "4"],
        dir.path(),
    );
    for seed in [3u64, 4] {
        let r = json(&dir.path().join(format!("feedback-seed{seed}.json")));
        let mut keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            [
                "config_hash",
                "converged",
                "levels",
                "quantity",
                "seed",
                "times",
                "values"
            ]
        );
        assert_eq!(r["seed"].as_u64(), Some(seed));
        assert_eq!(r["config_hash"].as_str().unwrap().len(), 16);
        let levels: Vec<u64> = r["levels"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .collect();
        assert_eq!(levels, (4..=10).collect::<Vec<_>>());
    }
}

#[test]
fn csv_reports_are_long_form() {
    let dir = TempDir::new().unwrap();
    ok(&["qv", "--levels", "5", "--format", "csv"], dir.path());
    let (header, rows) = read_csv(&dir.path().join("qv-seed0-logS.csv"));
    assert_eq!(header, ["level", "time", "value"]);
    assert_eq!(rows.len(), 6);
}

#[test]
fn generated_path_matches_golden_file() {
    let dir = TempDir::new().unwrap();
    ok(
        &["generate", "--gbm", "sigma=0.2", "--seed", "7", "--levels", "3"],
        dir.path(),
    );
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/gbm-seed7-level3.csv");
    assert_eq!(
        std::fs::read(dir.path().join("generate-seed7.csv")).unwrap(),
        std::fs::read(golden).unwrap()
    );
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
  "experiment": "cppi",
  "generator": {"kind": "gbm", "sigma": 0.3, "s0": 50},
  "levels": 8,
  "seeds": [1, 2],
  "strategy": {"v0": 10, "alpha": 0.9, "m": 2, "rate": 0.01}
}"#,
    )
    .unwrap();
    let base = ok(&["--config", cfg.to_str().unwrap()], dir.path());
    assert!(dir.path().join("cppi-seed1.csv").exists() && dir.path().join("cppi-seed2.csv").exists());
    let (_, rows) = read_csv(&dir.path().join("cppi-seed1.csv"));
    assert_eq!(rows[0][2], 10.0);
    assert_eq!(rows[0][6], 2.0);

    let over = ok(&["run", "--config", cfg.to_str().unwrap(), "--m", "4"], dir.path());
    let (_, rows) = read_csv(&dir.path().join("cppi-seed1.csv"));
    assert_eq!(rows[0][6], 4.0);
    assert_ne!(
        base.lines().next(),
        over.lines().next(),
        "hash follows the effective config"
    );
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = [
        "sweep",
        "--gbm",
        "sigma=0.5",
        "--seeds",
        "0..16",
        "--levels",
        "9",
        "--multipliers",
        "3,8",
        "--strides",
        "1,32",
    ];
    let one = Command::new(env!("CARGO_BIN_EXE_pcppi"))
        .args(args)
        .arg("--out-dir")
        .arg(a.path())
        .env("PCPPI_THREADS", "1")
        .output()
        .unwrap();
    assert!(one.status.success());
    ok(&args, b.path());
    assert_eq!(
        std::fs::read(a.path().join("sweep.csv")).unwrap(),
        std::fs::read(b.path().join("sweep.csv")).unwrap()
    );
}

#[test]
fn forced_jump_breaches_every_discrete_run() {
    let dir = TempDir::new().unwrap();
    ok(
        &[
            "sweep",
            "--gbm",
            "sigma=0.2",
            "--jump",
            "time=0.5,factor=0.6",
            "--seeds",
            "0..8",
            "--levels",
            "8",
            "--multipliers",
            "4",
            "--strides",
            "1",
        ],
        dir.path(),
    );
    let (_, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(rows[0][3], 8.0);
}

#[test]
fn invariant_breach_exits_with_one() {
    let dir = TempDir::new().unwrap();
    // exp is not quadratic, so a coarse level leaves a visible residual.
    let o = pcppi(
        &[
            "ito-check",
            "--integrand",
            "exp(div(S, 10))",
            "--levels",
            "3",
            "--tolerance",
            "1e-12",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("BREACH"));
}

#[test]
fn bad_inputs_exit_with_two_and_context() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"experiment\": \"qv\",\n  \"levelz\": 3\n}").unwrap();
    let o = pcppi(&["--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("levelz") && err.contains("line 3"), "{err}");

    let o = pcppi(&["cppi", "--alpha", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cppi (seed 0)"));

    let o = pcppi(&["qv", "--path", "does-not-exist.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = pcppi(&["dppi", "--multiplier", "sub(1, div(clock, 0.5))"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("negative multiplier"));
}

#[test]
fn coarse_csv_is_rejected_for_a_finer_grid() {
    let dir = TempDir::new().unwrap();
    let linear = data("linear.csv");
    let o = pcppi(
        &["qv", "--path", linear.to_str().unwrap(), "--levels", "13"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing grid time"));
}
