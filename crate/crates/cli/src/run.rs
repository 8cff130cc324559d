//! Experiment orchestration: builds paths, runs one experiment per seed in
//! parallel and collects the artifacts for sequential writing.

use std::sync::Arc;

use pcppi_core::convergence::{ConvergenceReport, DEFAULT_WINDOW};
use pcppi_core::discrete::{gap_risk_sweep, simulate_discrete, RebalanceSchedule};
use pcppi_core::expr::FunctionalSpec;
use pcppi_core::generate::generate;
use pcppi_core::grid::{dyadic_grids, TimeGridSequence};
use pcppi_core::ito::{associativity_check, ito_formula_residual, ito_integral, IntegrandForm};
use pcppi_core::par::{try_map, Execution};
use pcppi_core::path::{load_path_csv, resample_to_grids, write_path_csv, SampledPath};
use pcppi_core::quadvar::quad_variation_at;
use pcppi_core::report::{emit_report, Format};
use pcppi_core::strategy::{
    bond_values, cppi, dppi_closed_form, feedback_convergence, floor_check, self_financing_residual, Multiplier,
    StrategyConfig, StrategyTrajectory,
};

use crate::config::{Experiment, RunConfig};
use crate::CliError;

/// Everything one run produces. Files are `(name, bytes)`.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
    /// Invariant breaches in verification experiments.
    pub breaches: Vec<String>,
}

impl Outcome {
    fn merge(&mut self, other: Outcome) {
        self.files.extend(other.files);
        self.summary.extend(other.summary);
        self.breaches.extend(other.breaches);
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    exp: Experiment,
    hash: String,
    format: Format,
    grids: Arc<TimeGridSequence>,
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let exp = cfg.experiment()?;
    let ctx = Ctx {
        cfg,
        exp,
        hash: cfg.hash()?,
        format: cfg.report_format()?,
        grids: Arc::new(dyadic_grids(cfg.horizon, cfg.levels)?),
    };
    let mut out = Outcome {
        summary: vec![format!("config_hash={}", ctx.hash)],
        ..Outcome::default()
    };

    if exp == Experiment::Sweep {
        out.merge(ctx.sweep()?);
        return Ok(out);
    }
    let loaded = match &cfg.path {
        Some(p) => {
            let raw = load_path_csv(p)?;
            Some(resample_to_grids(
                &raw,
                ctx.grids.clone(),
                cfg.time_tolerance,
                exp.takes_price(),
            )?)
        }
        None => None,
    };
    let seeds: Vec<Option<u64>> = if cfg.is_stochastic() {
        cfg.seeds.iter().map(|&s| Some(s)).collect()
    } else {
        vec![None]
    };
    let runs = try_map(Execution::Parallel, &seeds, |&seed| {
        let path = match &loaded {
            Some(p) => p.clone(),
            None => generate(&cfg.generator().with_seed(seed.unwrap_or(0)), &ctx.grids)?,
        };
        Ok(ctx.one(&path, seed))
    })?;
    for (seed, r) in seeds.iter().zip(runs) {
        out.merge(r.map_err(|e| match seed {
            Some(s) => CliError::Experiment(format!("{} (seed {s}): {e}", exp.name())),
            None => CliError::Experiment(format!("{}: {e}", exp.name())),
        })?);
    }
    Ok(out)
}

impl Ctx<'_> {
    fn tag(&self, seed: Option<u64>) -> String {
        match seed {
            Some(s) => format!("{}-seed{s}", self.exp.name()),
            None => self.exp.name().to_string(),
        }
    }

    fn levels(&self) -> Vec<usize> {
        (self.cfg.min_level..=self.cfg.levels).collect()
    }

    fn ext(&self) -> &'static str {
        match self.format {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }

    /// Drops levels below `min_level`, recomputes the convergence flags with
    /// the configured tolerance and stamps the metadata.
    fn finish(&self, mut r: ConvergenceReport, seed: Option<u64>) -> pcppi_core::Result<ConvergenceReport> {
        let keep: Vec<usize> = (0..r.levels.len())
            .filter(|&i| r.levels[i] >= self.cfg.min_level)
            .collect();
        r.levels = keep.iter().map(|&i| r.levels[i]).collect();
        r.values = keep.iter().map(|&i| r.values[i].clone()).collect();
        r.validate()?;
        let window = DEFAULT_WINDOW.min(r.levels.len() - 1);
        r.converged = if window == 0 {
            vec![false; r.times.len()]
        } else {
            r.diagnose(self.cfg.tolerance, window)?
                .iter()
                .map(|d| d.converged)
                .collect()
        };
        Ok(r.with_meta(Some(self.hash.clone()), seed))
    }

    fn report_file(&self, name: String, r: &ConvergenceReport) -> pcppi_core::Result<(String, Vec<u8>)> {
        let mut buf = Vec::new();
        emit_report(r, self.format, &mut buf)?;
        Ok((format!("{name}.{}", self.ext()), buf))
    }

    fn spec(&self, text: &str, labels: &[String]) -> pcppi_core::Result<FunctionalSpec> {
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        FunctionalSpec::parse(text, &refs)
    }

    fn strategy(&self, label: &str) -> pcppi_core::Result<StrategyConfig> {
        let s = &self.cfg.strategy;
        let rate = s
            .rate
            .build(self.cfg.horizon)
            .map_err(|e| pcppi_core::Error::Config(e.to_string()))?;
        let multiplier = match &s.multiplier {
            Some(text) => Multiplier::Function(FunctionalSpec::parse(text, &[label])?),
            None => Multiplier::Constant(s.m),
        };
        let c = StrategyConfig {
            v0: s.v0,
            alpha: s.alpha,
            multiplier,
            rate,
        };
        c.validate()?;
        Ok(c)
    }

    fn one(&self, path: &SampledPath, seed: Option<u64>) -> pcppi_core::Result<Outcome> {
        let tag = self.tag(seed);
        let t = self.cfg.horizon;
        let label = path.labels()[0].clone();
        let mut out = Outcome::default();
        match self.exp {
            Experiment::Generate => {
                let mut buf = Vec::new();
                write_path_csv(path, &mut buf)?;
                out.files.push((format!("{tag}.csv"), buf));
                out.summary
                    .push(format!("{tag}: {label}_T = {}", path.component(0).last().unwrap()));
            }
            Experiment::Qv => {
                // Price paths also get the realized variance [log S].
                let mut targets = vec![path.clone()];
                if path.is_price() {
                    let logs = path.log()?;
                    let names: Vec<String> = path.labels().iter().map(|l| format!("log{l}")).collect();
                    targets.push(SampledPath::new(self.grids.clone(), logs.components().to_vec(), names)?);
                }
                for (p, k, name) in targets
                    .iter()
                    .flat_map(|p| p.labels().iter().enumerate().map(move |(k, n)| (p, k, n)))
                {
                    let q = quad_variation_at(p, k, &[t])?;
                    let r = self.finish(q.report(self.grids.times())?, seed)?;
                    out.summary.push(format!(
                        "{tag}: [{name}]_T = {} at level {}",
                        r.last(0),
                        self.cfg.levels
                    ));
                    out.files.push(self.report_file(format!("{tag}-{name}"), &r)?);
                }
            }
            Experiment::Integrate => {
                let text = self.cfg.integrand.clone().unwrap_or_else(|| label.clone());
                let spec = self.spec(&text, path.labels())?;
                let y = ito_integral(
                    &spec,
                    IntegrandForm::Value,
                    path,
                    Some(&self.strategy(&label)?.rate),
                    &self.levels(),
                )?;
                let r = self.finish(y.report(&format!("integral of {spec}"), &self.grids, &[t])?, seed)?;
                out.summary.push(format!("{tag}: integral at T = {}", r.last(0)));
                out.files.push(self.report_file(tag, &r)?);
            }
            Experiment::ItoCheck => {
                let text = self
                    .cfg
                    .integrand
                    .clone()
                    .unwrap_or_else(|| format!("mul({label}, {label})"));
                let f = self.spec(&text, path.labels())?;
                let res = ito_formula_residual(&f, path, Some(&self.strategy(&label)?.rate), &self.levels())?;
                let r = self.finish(res.report, seed)?;
                let scale = res.terminal_value.last().unwrap().abs().max(1.0);
                let worst = r.last(0) / scale;
                out.summary
                    .push(format!("{tag}: sup residual / max(1, |f_T|) = {worst:e}"));
                if !(worst <= self.cfg.tolerance) {
                    out.breaches.push(format!(
                        "{tag}: Ito residual {worst:e} exceeds tolerance {}",
                        self.cfg.tolerance
                    ));
                }
                out.files.push(self.report_file(tag, &r)?);
            }
            Experiment::Associativity => {
                let inner = self.spec(
                    &self.cfg.integrand.clone().unwrap_or_else(|| label.clone()),
                    path.labels(),
                )?;
                let outer = FunctionalSpec::parse(self.cfg.outer.as_deref().unwrap_or("Y1"), &["Y1"])?;
                let rate = self.strategy(&label)?.rate;
                let check = associativity_check(
                    &[(&inner, IntegrandForm::Value)],
                    &[&outer],
                    path,
                    Some(&rate),
                    &self.levels(),
                )?;
                let gap = *check.relative_gaps().last().unwrap();
                out.summary
                    .push(format!("{tag}: relative gap at level {} = {gap:e}", self.cfg.levels));
                if !(gap <= self.cfg.tolerance) {
                    out.breaches.push(format!(
                        "{tag}: associativity gap {gap:e} exceeds tolerance {}",
                        self.cfg.tolerance
                    ));
                }
                let r = self.finish(check.report, seed)?;
                out.files.push(self.report_file(tag, &r)?);
            }
            Experiment::Cppi | Experiment::Dppi => {
                let mut cfg = self.strategy(&label)?;
                let traj = if self.exp == Experiment::Cppi {
                    match cfg.multiplier {
                        Multiplier::Constant(_) => cppi(path, &cfg)?,
                        Multiplier::Function(_) => {
                            return Err(pcppi_core::Error::Config(
                                "cppi takes a constant m; use dppi for expressions".into(),
                            ))
                        }
                    }
                } else {
                    cfg.multiplier = Multiplier::Function(cfg.multiplier_spec(&label)?);
                    dppi_closed_form(path, &cfg)?
                };
                self.strategy_outputs(&mut out, &tag, path, &cfg, &traj, seed)?;
            }
            Experiment::Feedback => {
                let cfg = self.strategy(&label)?;
                let fb = feedback_convergence(path, &cfg, &self.levels())?;
                let r = self.finish(fb.report, seed)?;
                let gap = r.last(0);
                out.summary.push(format!(
                    "{tag}: feedback cushion gap at level {} = {gap:e}",
                    self.cfg.levels
                ));
                if !(gap <= self.cfg.tolerance) {
                    out.breaches.push(format!(
                        "{tag}: feedback gap {gap:e} exceeds tolerance {}",
                        self.cfg.tolerance
                    ));
                }
                out.files.push(self.report_file(tag, &r)?);
            }
            Experiment::Discrete => {
                let cfg = self.strategy(&label)?;
                let schedule = RebalanceSchedule::every(self.cfg.stride, self.grids.len())?;
                let run = simulate_discrete(path, &cfg, &schedule)?;
                let mut buf = Vec::new();
                run.trajectory.write_csv(&mut buf)?;
                out.files.push((format!("{tag}.csv"), buf));
                let mut gap = serde_json::to_vec_pretty(&run.gap)?;
                gap.push(b'\n');
                out.files.push((format!("{tag}-gap.json"), gap));
                out.summary.push(format!(
                    "{tag}: breached={} min_cushion={} terminal_value={}",
                    run.gap.breached, run.gap.min_cushion, run.gap.terminal_value
                ));
            }
            Experiment::Sweep => unreachable!("sweep runs across seeds"),
        }
        Ok(out)
    }

    fn strategy_outputs(
        &self,
        out: &mut Outcome,
        tag: &str,
        path: &SampledPath,
        cfg: &StrategyConfig,
        traj: &StrategyTrajectory,
        seed: Option<u64>,
    ) -> pcppi_core::Result<()> {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        out.files.push((format!("{tag}.csv"), buf));
        let b = bond_values(&cfg.rate, &self.grids);
        let sf = self_financing_residual(traj, path.component(0), &b, &self.grids, &self.levels())?;
        let sf = self.finish(sf, seed)?;
        out.files.push(self.report_file(format!("{tag}-self-financing"), &sf)?);

        let fm = floor_check(traj);
        out.summary.push(format!(
            "{tag}: V_T = {} min(V - floor) = {} at t = {} self-financing residual = {:e}",
            traj.value.last().unwrap(),
            fm.min_margin,
            fm.time,
            sf.last(0)
        ));
        let holds = if cfg.alpha < 1.0 {
            fm.min_margin > 0.0
        } else {
            fm.min_margin == 0.0
        };
        if !holds {
            out.breaches.push(format!(
                "{tag}: floor margin {} at t = {} (alpha {})",
                fm.min_margin, fm.time, cfg.alpha
            ));
        }
        Ok(())
    }

    fn sweep(&self) -> Result<Outcome, CliError> {
        let base = self.strategy("S")?;
        let table = gap_risk_sweep(
            &self.cfg.generator(),
            &self.cfg.seeds,
            &self.grids,
            &base,
            &self.cfg.sweep.multipliers,
            &self.cfg.sweep.strides,
            Execution::Parallel,
        )?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        let summary = table
            .rows
            .iter()
            .map(|r| {
                format!(
                    "sweep: m={} stride={} breaches={}/{}",
                    r.m, r.stride, r.breaches, r.runs
                )
            })
            .collect();
        Ok(Outcome {
            files: vec![("sweep.csv".into(), buf)],
            summary,
            breaches: Vec::new(),
        })
    }
}
