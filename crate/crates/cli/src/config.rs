//! Run configuration: one JSON document, with command-line flags layered on top.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pcppi_core::bond::RateFunction;
use pcppi_core::generate::{GeneratorConfig, GeneratorKind};
use pcppi_core::grid::MAX_DYADIC_LEVEL;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Generate,
    Qv,
    Integrate,
    ItoCheck,
    Associativity,
    Cppi,
    Dppi,
    Feedback,
    Discrete,
    Sweep,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Generate => "generate",
            Experiment::Qv => "qv",
            Experiment::Integrate => "integrate",
            Experiment::ItoCheck => "ito-check",
            Experiment::Associativity => "associativity",
            Experiment::Cppi => "cppi",
            Experiment::Dppi => "dppi",
            Experiment::Feedback => "feedback",
            Experiment::Discrete => "discrete",
            Experiment::Sweep => "sweep",
        }
    }

    pub fn takes_price(self) -> bool {
        matches!(
            self,
            Experiment::Cppi | Experiment::Dppi | Experiment::Feedback | Experiment::Discrete | Experiment::Sweep
        )
    }
}

/// A constant short rate or piecewise-constant segments starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Constant(f64),
    Piecewise { starts: Vec<f64>, rates: Vec<f64> },
}

impl RateSpec {
    pub fn build(&self, horizon: f64) -> Result<RateFunction, CliError> {
        Ok(match self {
            RateSpec::Constant(r) => RateFunction::constant(*r, horizon)?,
            RateSpec::Piecewise { starts, rates } => RateFunction::new(starts.clone(), rates.clone(), horizon)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategySection {
    pub v0: f64,
    pub alpha: f64,
    /// Constant multiplier, used unless `multiplier` is set.
    pub m: f64,
    /// Multiplier expression over the price label.
    pub multiplier: Option<String>,
    pub rate: RateSpec,
}

impl Default for StrategySection {
    fn default() -> Self {
        StrategySection {
            v0: 100.0,
            alpha: 0.8,
            m: 3.0,
            multiplier: None,
            rate: RateSpec::Constant(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub multipliers: Vec<f64>,
    pub strides: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            multipliers: vec![2.0, 4.0, 6.0],
            strides: vec![1, 16, 256],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    /// Path source. Its own `seed` is ignored: `seeds` drives every run.
    pub generator: Option<GeneratorConfig>,
    /// CSV path file, used instead of `generator`.
    pub path: Option<PathBuf>,
    pub horizon: f64,
    /// Finest dyadic level.
    pub levels: usize,
    /// Coarsest level reported.
    pub min_level: usize,
    pub seeds: Vec<u64>,
    pub strategy: StrategySection,
    /// Integrand for `integrate` and `associativity`, function for `ito-check`.
    pub integrand: Option<String>,
    /// Outer integrand over `Y1` for `associativity`.
    pub outer: Option<String>,
    /// Rebalancing stride on the finest grid for `discrete`.
    pub stride: usize,
    pub sweep: SweepSection,
    pub tolerance: f64,
    /// Matching tolerance when aligning CSV rows to grid times.
    pub time_tolerance: f64,
    pub format: String,
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: None,
            generator: None,
            path: None,
            horizon: 1.0,
            levels: 12,
            min_level: 0,
            seeds: vec![0],
            strategy: StrategySection::default(),
            integrand: None,
            outer: None,
            stride: 1,
            sweep: SweepSection::default(),
            tolerance: 1e-2,
            time_tolerance: 1e-9,
            format: "json".into(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(file: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(file).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))
    }

    pub fn experiment(&self) -> Result<Experiment, CliError> {
        self.experiment
            .ok_or_else(|| CliError::Usage("no experiment given (flag or config field)".into()))
    }

    /// The generator, defaulting to GBM with sigma 0.2 from 100.
    pub fn generator(&self) -> GeneratorConfig {
        self.generator
            .clone()
            .unwrap_or_else(|| GeneratorConfig::gbm(0.2, 0.0, 100.0, 0))
    }

    /// Paths that do not depend on the seed run once.
    pub fn is_stochastic(&self) -> bool {
        self.path.is_none() && !matches!(self.generator().kind, GeneratorKind::Deterministic { .. })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let exp = self.experiment()?;
        let bad = |m: String| Err(CliError::Usage(m));
        if self.path.is_some() && self.generator.is_some() {
            return bad("give either a path file or a generator, not both".into());
        }
        if let Some(p) = &self.path {
            if !p.is_file() {
                return bad(format!("path file {} does not exist", p.display()));
            }
            if exp == Experiment::Sweep {
                return bad("sweep needs a generator, not a path file".into());
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if self.levels > MAX_DYADIC_LEVEL {
            return bad(format!("levels must be <= {MAX_DYADIC_LEVEL}, got {}", self.levels));
        }
        if self.min_level > self.levels {
            return bad(format!("min_level {} exceeds levels {}", self.min_level, self.levels));
        }
        if !(self.tolerance > 0.0) || !(self.time_tolerance > 0.0) {
            return bad("tolerances must be > 0".into());
        }
        if self.is_stochastic() && self.seeds.is_empty() {
            return bad("seed list must be nonempty".into());
        }
        if self.stride == 0 || self.sweep.strides.contains(&0) {
            return bad("strides must be >= 1".into());
        }
        self.generator().validate()?;
        self.report_format()?;
        Ok(())
    }

    pub fn report_format(&self) -> Result<pcppi_core::report::Format, CliError> {
        Ok(self.format.parse()?)
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON (output
    /// directory excluded) followed by the bytes of any path file.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut canon = self.clone();
        if let Some(g) = canon.generator.as_mut() {
            g.seed = 0;
        }
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&canon).map_err(|e| CliError::Usage(e.to_string()))?);
        if let Some(p) = &self.path {
            h.update(std::fs::read(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?);
        }
        Ok(h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}

/// Parses `key=value[,key=value...]` into a generator of the given kind.
/// Values that parse as numbers become numbers; `s0` defaults to 100.
pub fn generator_from_pairs(kind: &str, pairs: &str) -> Result<GeneratorConfig, CliError> {
    let mut map = serde_json::Map::new();
    map.insert("kind".into(), kind.into());
    for item in pairs.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--{kind}: expected key=value, got '{item}'")))?;
        let value = match v.trim().parse::<f64>() {
            Ok(x) => serde_json::Value::from(x),
            Err(_) => serde_json::Value::from(v.trim()),
        };
        map.insert(k.trim().to_string(), value);
    }
    if kind != "deterministic" {
        map.entry("s0").or_insert(100.0.into());
    }
    serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| CliError::Usage(format!("--{kind}: {e}")))
}

/// `time=..,factor=..`.
pub fn jump_from_pairs(pairs: &str) -> Result<pcppi_core::generate::Jump, CliError> {
    let mut map = serde_json::Map::new();
    for item in pairs.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--jump: expected key=value, got '{item}'")))?;
        let x: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--jump: bad number '{v}'")))?;
        map.insert(k.trim().to_string(), x.into());
    }
    serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| CliError::Usage(format!("--jump: {e}")))
}

/// `a,b,c` or a half-open range `a..b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl std::str::FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_seed_list(s).map(SeedList)
    }
}

pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad seed '{a}': {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad seed '{b}': {e}"))?;
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|e| format!("bad seed '{x}': {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_build_generators() {
        let g = generator_from_pairs("gbm", "sigma=0.2").unwrap();
        assert_eq!(g, GeneratorConfig::gbm(0.2, 0.0, 100.0, 0));
        let d = generator_from_pairs("deterministic", "shape=linear,start=0,slope=1").unwrap();
        assert!(matches!(d.kind, GeneratorKind::Deterministic { .. }));
        assert!(generator_from_pairs("gbm", "sigma").is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("3..6").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seed_list("1, 9").unwrap(), vec![1, 9]);
        assert!(parse_seed_list("x").is_err());
    }

    #[test]
    fn hash_ignores_out_dir_and_generator_seed() {
        let mut a = RunConfig {
            experiment: Some(Experiment::Cppi),
            ..RunConfig::default()
        };
        a.generator = Some(GeneratorConfig::gbm(0.2, 0.0, 100.0, 5));
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        b.generator = Some(GeneratorConfig::gbm(0.2, 0.0, 100.0, 9));
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.strategy.m = 4.0;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 16);
    }

    #[test]
    fn unknown_fields_rejected_with_position() {
        let e = serde_json::from_str::<RunConfig>("{\n  \"levelz\": 3\n}")
            .unwrap_err()
            .to_string();
        assert!(e.contains("levelz") && e.contains("line 2"), "{e}");
    }
}
