//! Run settings: command-line flags layered over an optional `key = value`
//! file, with built-in defaults underneath.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use monotone_ei::{AssumptionSet, EiError, OutcomeBounds, Result, SignAssumption, Target};

pub const SEED_ENV: &str = "MONOTONE_EI_SEED";
const DEFAULT_SEED: u64 = 20_240_101;

/// Keys accepted in a config file. Each mirrors the long flag of the same
/// name.
pub const KEYS: [&str; 20] = [
    "input",
    "bounds",
    "within",
    "between",
    "cr",
    "group",
    "bandwidth",
    "cv-folds",
    "replicates",
    "seed",
    "level",
    "format",
    "threads",
    "statistic",
    "bin-width",
    "grid-points",
    "skip-undefined",
    "pooled",
    "same-means",
    "curve",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
    Csv,
}

impl FromStr for Format {
    type Err = EiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            other => Err(EiError::Configuration(format!(
                "unknown format {other:?}; expected json, table or csv"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub bounds: OutcomeBounds,
    pub assumptions: AssumptionSet,
    /// Requested target; `None` means every target where that makes sense.
    pub group: Option<Target>,
    pub bandwidth: Option<f64>,
    pub cv_folds: usize,
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub format: Format,
    pub threads: Option<usize>,
    pub statistic: String,
    pub bin_width: f64,
    pub grid_points: usize,
    pub skip_undefined: bool,
    pub pooled: bool,
    pub same_means: bool,
    pub curve: Option<PathBuf>,
}

/// Parses a config file: one `key = value` per line, `#` comments, blank
/// lines ignored.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            EiError::Configuration(format!("config line {}: expected `key = value`", i + 1))
        })?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(EiError::Configuration(format!(
                "config line {}: unknown key `{}`",
                i + 1,
                k.trim()
            )));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        EiError::Configuration(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config_file(&text)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| EiError::Configuration(format!("invalid value for {key}: {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(EiError::Configuration(format!(
            "invalid value for {key}: {v:?}; expected true or false"
        ))),
    }
}

impl RunConfig {
    /// Builds the settings from merged key/value pairs. `env_seed` is used
    /// when neither flags nor file set a seed.
    pub fn from_settings(
        settings: &BTreeMap<String, String>,
        env_seed: Option<&str>,
    ) -> Result<Self> {
        let get = |k: &str| settings.get(k).map(String::as_str);
        let flag = |k: &str| get(k).map_or(Ok(false), |v| parse_bool(k, v));
        let sign = |k: &str| get(k).map_or(Ok(SignAssumption::Unknown), SignAssumption::from_str);

        let assumptions =
            AssumptionSet::new(sign("within")?, sign("between")?).with_reinforcement(flag("cr")?);
        assumptions.validate()?;

        let seed = match get("seed").or(env_seed) {
            Some(v) => parse("seed", v)?,
            None => DEFAULT_SEED,
        };
        let level: f64 = get("level").map_or(Ok(0.95), |v| parse("level", v))?;
        if !(level > 0.0 && level < 1.0) {
            return Err(EiError::Configuration(format!(
                "level must lie in (0, 1), got {level}"
            )));
        }
        let threads: Option<usize> = get("threads").map(|v| parse("threads", v)).transpose()?;
        if threads == Some(0) {
            return Err(EiError::Configuration("threads must be positive".into()));
        }

        Ok(Self {
            input: get("input").map(PathBuf::from),
            bounds: get("bounds").map_or(Ok(OutcomeBounds::unit()), OutcomeBounds::parse)?,
            assumptions,
            group: get("group").map(Target::from_str).transpose()?,
            bandwidth: get("bandwidth")
                .map(|v| parse("bandwidth", v))
                .transpose()?,
            cv_folds: get("cv-folds").map_or(Ok(10), |v| parse("cv-folds", v))?,
            replicates: get("replicates").map_or(Ok(1000), |v| parse("replicates", v))?,
            seed,
            level,
            format: get("format").map_or(Ok(Format::Table), Format::from_str)?,
            threads,
            statistic: get("statistic").unwrap_or("bounds").to_string(),
            bin_width: get("bin-width").map_or(Ok(0.05), |v| parse("bin-width", v))?,
            grid_points: get("grid-points").map_or(Ok(201), |v| parse("grid-points", v))?,
            skip_undefined: flag("skip-undefined")?,
            pooled: flag("pooled")?,
            same_means: flag("same-means")?,
            curve: get("curve").map(PathBuf::from),
        })
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| EiError::Configuration("no input file; pass --input".into()))
    }
}
