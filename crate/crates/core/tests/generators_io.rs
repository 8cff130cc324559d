use std::io::Write;
use std::sync::Arc;

use pcppi_core::convergence::ConvergenceReport;
use pcppi_core::error::Error;
use pcppi_core::generate::{gen_fbm_raw, gen_gbm, generate, GeneratorConfig};
use pcppi_core::grid::{dyadic_grids, TimeGridSequence};
use pcppi_core::path::{load_path_csv, resample_to_grids, write_path_csv};
use pcppi_core::report::{parse_report_json, write_report_file};
use tempfile::{tempdir, NamedTempFile};

fn grids(level: usize) -> Arc<TimeGridSequence> {
    Arc::new(dyadic_grids(1.0, level).unwrap())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn gbm_terminal_mean_grows_at_drift() {
    let (sigma, mu) = (0.2, 0.05);
    let g = grids(4);
    let ratios: Vec<f64> = (0..10_000u64)
        .map(|seed| *gen_gbm(sigma, mu, 100.0, seed, &g).unwrap().component(0).last().unwrap() / 100.0)
        .collect();
    let (m, v) = mean_var(&ratios);
    // Lognormal moments: E = e^mu, Var = e^{2mu}(e^{sigma^2} - 1).
    let expect_var = (2.0 * mu).exp() * ((sigma * sigma).exp() - 1.0);
    let se = (expect_var / ratios.len() as f64).sqrt();
    assert!((m - mu.exp()).abs() < 4.0 * se, "mean {m} vs {}", mu.exp());
    assert!((v / expect_var - 1.0).abs() < 0.06, "var {v} vs {expect_var}");
}

#[test]
fn fbm_matches_its_covariance() {
    let h = 0.8;
    let g = grids(6);
    let n = 4000;
    let samples: Vec<(f64, f64)> = (0..n as u64)
        .map(|seed| {
            let p = gen_fbm_raw(h, seed, &g).unwrap();
            let v = p.component(0);
            (v[32], v[64])
        })
        .collect();
    let half: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let one: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (m1, v1) = mean_var(&one);
    let (_, vh) = mean_var(&half);
    let cov = samples.iter().map(|(a, b)| a * b).sum::<f64>() / n as f64;
    // Cov(B_s, B_t) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2.
    let k = |s: f64, t: f64| 0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (t - s).abs().powf(2.0 * h));
    let tol = 4.0 * (2.0 / n as f64).sqrt();
    assert!(m1.abs() < 4.0 / (n as f64).sqrt(), "mean {m1}");
    assert!((v1 / k(1.0, 1.0) - 1.0).abs() < tol, "Var B_1 = {v1}");
    assert!((vh / k(0.5, 0.5) - 1.0).abs() < tol, "Var B_0.5 = {vh}");
    assert!((cov / k(0.5, 1.0) - 1.0).abs() < tol, "Cov = {cov}");
    assert!(samples.iter().all(|s| s.0.is_finite() && s.1.is_finite()));
    assert_eq!(gen_fbm_raw(h, 0, &g).unwrap().component(0)[0], 0.0);
}

#[test]
fn generators_are_pure_functions_of_config() {
    let g = grids(9);
    for cfg in [GeneratorConfig::gbm(0.3, 0.1, 50.0, 11), GeneratorConfig::fbm(0.7, 20.0, 11)] {
        let a = generate(&cfg, &g).unwrap();
        let b = generate(&cfg, &g).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&cfg.with_seed(12), &g).unwrap());
    }
}

#[test]
fn path_csv_round_trips_bitwise() {
    let g = grids(7);
    let p = gen_gbm(0.4, 0.0, 100.0, 3, &g).unwrap();
    let mut file = NamedTempFile::new().unwrap();
    write_path_csv(&p, &mut file).unwrap();
    file.flush().unwrap();
    let raw = load_path_csv(file.path()).unwrap();
    assert_eq!(raw.labels, ["S"]);
    let back = resample_to_grids(&raw, g.clone(), 1e-12, true).unwrap();
    assert_eq!(back.component(0), p.component(0));
    // A coarser file cannot feed a finer grid.
    let err = resample_to_grids(&raw, grids(8), 1e-12, true).unwrap_err();
    assert!(matches!(err, Error::MissingGridTime { .. }));
}

#[test]
fn malformed_path_files_are_rejected() {
    let dir = tempdir().unwrap();
    for (name, text) in [
        ("decreasing.csv", "t,S\n0,1\n0.5,2\n0.25,3\n"),
        ("ragged.csv", "t,S\n0,1\n0.5\n"),
        ("word.csv", "t,S\n0,1\n1,abc\n"),
        ("header.csv", "time,S\n0,1\n1,2\n"),
    ] {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        assert!(load_path_csv(&p).is_err(), "{name} accepted");
    }
    assert!(matches!(load_path_csv(dir.path().join("absent.csv")), Err(Error::Io(_))));
}

#[test]
fn report_files_round_trip() {
    let dir = tempdir().unwrap();
    let r = ConvergenceReport::new(
        "qv[S]",
        vec![2, 3, 4, 5],
        vec![0.5, 1.0],
        vec![vec![0.1, 0.2], vec![0.11, 0.21], vec![1.0 / 3.0, 0.2 + 0.1], vec![f64::MIN_POSITIVE, 1e300]],
    )
    .unwrap()
    .with_meta(Some("0123456789abcdef".into()), Some(42));
    let json = dir.path().join("r.json");
    write_report_file(&r, &json).unwrap();
    let back = parse_report_json(std::fs::File::open(&json).unwrap()).unwrap();
    assert_eq!(back, r);

    let csv = dir.path().join("r.csv");
    write_report_file(&r, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let flat: Vec<f64> = r.values.iter().flatten().copied().collect();
    assert_eq!(values, flat);

    assert!(matches!(write_report_file(&r, &dir.path().join("r.txt")), Err(Error::Config(_))));
    assert!(matches!(
        write_report_file(&r, &dir.path().join("missing/r.json")),
        Err(Error::Io(_))
    ));
}
