// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use config::{generator_from_pairs, jump_from_pairs, Experiment, RateSpec, RunConfig, SeedList};
use pcppi_core::generate::GeneratorKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pcppi_core::Error),
    #[error("{0}")]
    Experiment(String),
}

/// Pathwise Itô calculus and portfolio-insurance experiments.
///
/// Flags override fields of the `--config` JSON document. Outputs land in
/// `--out-dir`; exit status is 1 when a verification experiment breaches its
/// invariant and 2 on errors.
#[derive(Debug, Parser)]
#[command(name = "pcppi", version)]
struct Cli {
    /// Experiment to run; may come from the config file instead.
    #[arg(value_enum)]
    experiment: Option<Experiment>,
    #[arg(long)]
    config: Option<PathBuf>,

    /// GBM generator, e.g. `sigma=0.2,mu=0.05,s0=100`.
    #[arg(long, value_name = "KEY=VALUE,..", group = "source")]
    gbm: Option<String>,
    /// Exponentiated fBm generator, e.g. `hurst=0.8,s0=100`.
    #[arg(long, value_name = "KEY=VALUE,..", group = "source")]
    fbm: Option<String>,
    /// Deterministic shape, e.g. `shape=linear,start=1,slope=1`.
    #[arg(long, value_name = "KEY=VALUE,..", group = "source")]
    deterministic: Option<String>,
    /// Path CSV with header `t,<name>...`.
    #[arg(long, group = "source")]
    path: Option<PathBuf>,
    /// Multiplicative jump `time=..,factor=..`; repeatable.
    #[arg(long, value_name = "KEY=VALUE,..")]
    jump: Vec<String>,

    #[arg(long)]
    horizon: Option<f64>,
    /// Finest dyadic level.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    min_level: Option<usize>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// `a,b,c` or `a..b`.
    #[arg(long)]
    seeds: Option<SeedList>,

    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
    /// Constant short rate.
    #[arg(long)]
    rate: Option<f64>,
    /// Multiplier expression over the price label.
    #[arg(long)]
    multiplier: Option<String>,
    #[arg(long)]
    integrand: Option<String>,
    #[arg(long)]
    outer: Option<String>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    multipliers: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    strides: Option<Vec<usize>>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    time_tolerance: Option<f64>,
    /// `json` or `csv` for convergence reports.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to `PCPPI_THREADS` or all cores.
    #[arg(long, env = "PCPPI_THREADS")]
    threads: Option<usize>,
}

impl Cli {
    fn into_config(self) -> Result<(RunConfig, Option<usize>), CliError> {
        let mut c = match &self.config {
            Some(f) => RunConfig::load(f)?,
            None => RunConfig::default(),
        };
        if self.experiment.is_some() {
            c.experiment = self.experiment;
        }
        let generator = match (&self.gbm, &self.fbm, &self.deterministic) {
            (Some(p), _, _) => Some(generator_from_pairs("gbm", p)?),
            (_, Some(p), _) => Some(generator_from_pairs("fbm", p)?),
            (_, _, Some(p)) => Some(generator_from_pairs("deterministic", p)?),
            _ => None,
        };
        if generator.is_some() {
            c.generator = generator;
            c.path = None;
        }
        if self.path.is_some() {
            c.path = self.path;
            c.generator = None;
        }
        if !self.jump.is_empty() {
            let jumps = self
                .jump
                .iter()
                .map(|j| jump_from_pairs(j))
                .collect::<Result<Vec<_>, _>>()?;
            let mut g = c.generator();
            g.kind = match g.kind {
                GeneratorKind::Gbm { sigma, mu, s0 } => GeneratorKind::JumpDiffusionSampled { sigma, mu, s0, jumps },
                GeneratorKind::JumpDiffusionSampled {
                    sigma,
                    mu,
                    s0,
                    jumps: mut old,
                } => {
                    old.extend(jumps);
                    GeneratorKind::JumpDiffusionSampled {
                        sigma,
                        mu,
                        s0,
                        jumps: old,
                    }
                }
                GeneratorKind::Deterministic { shape, jumps: mut old } => {
                    old.extend(jumps);
                    GeneratorKind::Deterministic { shape, jumps: old }
                }
                GeneratorKind::Fbm { .. } => {
                    return Err(CliError::Usage("--jump applies to gbm or deterministic paths".into()))
                }
            };
            c.generator = Some(g);
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set!(
            horizon => horizon,
            levels => levels,
            min_level => min_level,
            m => strategy.m,
            alpha => strategy.alpha,
            v0 => strategy.v0,
            stride => stride,
            multipliers => sweep.multipliers,
            strides => sweep.strides,
            tolerance => tolerance,
            time_tolerance => time_tolerance,
            format => format,
            out_dir => out_dir,
        );
        if let Some(SeedList(s)) = self.seeds {
            c.seeds = s;
        }
        if let Some(s) = self.seed {
            c.seeds = vec![s];
        }
        if let Some(r) = self.rate {
            c.strategy.rate = RateSpec::Constant(r);
        }
        if self.multiplier.is_some() {
            c.strategy.multiplier = self.multiplier;
        }
        if self.integrand.is_some() {
            c.integrand = self.integrand;
        }
        if self.outer.is_some() {
            c.outer = self.outer;
        }
        Ok((c, self.threads))
    }
}

fn write_outputs(cfg: &RunConfig, outcome: &run::Outcome) -> Result<(), CliError> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    for (name, bytes) in &outcome.files {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    // `pcppi run <experiment> ...` is accepted as an alias.
    let mut args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("run") {
        args.remove(1);
    }
    let cli = Cli::parse_from(args);
    let result = cli.into_config().and_then(|(cfg, threads)| {
        if let Some(n) = threads {
            pcppi_core::par::configure_threads(n)?;
        }
        let outcome = run::execute(&cfg)?;
        write_outputs(&cfg, &outcome)?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for b in &outcome.breaches {
                eprintln!("BREACH {b}");
            }
            if outcome.breaches.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
