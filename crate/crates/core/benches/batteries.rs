use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pcppi_core::bond::RateFunction;
use pcppi_core::discrete::gap_risk_sweep;
use pcppi_core::generate::{generate, GeneratorConfig};
use pcppi_core::grid::dyadic_grids;
use pcppi_core::par::{try_map, Execution};
use pcppi_core::quadvar::quad_variation;
use pcppi_core::strategy::{bond_values, cppi, self_financing_residual, StrategyConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn sweep(c: &mut Criterion) {
    let grids = Arc::new(dyadic_grids(1.0, 10).unwrap());
    let seeds: Vec<u64> = (0..64).collect();
    let base = StrategyConfig::constant(100.0, 0.8, 4.0, RateFunction::constant(0.02, 1.0).unwrap());
    let gen = GeneratorConfig::gbm(0.4, 0.0, 100.0, 0);
    let mut g = c.benchmark_group("gap_risk_sweep_64_seeds");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| gap_risk_sweep(&gen, black_box(&seeds), &grids, &base, &[2.0, 6.0], &[1, 16, 128], exec).unwrap())
        });
    }
    g.finish();
}

/// The self-financing battery: generate, run CPPI and measure residuals per seed.
fn self_financing_battery(c: &mut Criterion) {
    let grids = Arc::new(dyadic_grids(1.0, 14).unwrap());
    let seeds: Vec<u64> = (0..32).collect();
    let cfg = StrategyConfig::constant(100.0, 0.8, 3.0, RateFunction::constant(0.02, 1.0).unwrap());
    let b = bond_values(&cfg.rate, &grids);
    let levels: Vec<usize> = (10..=14).collect();
    let mut g = c.benchmark_group("self_financing_32_seeds_level14");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| {
                try_map(exec, black_box(&seeds), |&seed| {
                    let s = generate(&GeneratorConfig::gbm(0.2, 0.05, 100.0, seed), &grids)?;
                    let traj = cppi(&s, &cfg)?;
                    let q = quad_variation(&s.log()?, 0)?;
                    let r = self_financing_residual(&traj, s.component(0), &b, &grids, &levels)?;
                    Ok((r.last(0), q.finest().terminal()))
                })
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, sweep, self_financing_battery);
criterion_main!(benches);
