//! Run configuration: a flat `key = value` text format, command-line
//! overrides and the `BBM_SEED` environment override.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use bbm_core::model::{IntervalSet, ModelParams, OffspringLaw};
use serde::Serialize;

use crate::error::CliError;

/// Which of the output files a command writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// `censuses.csv`, `summary.csv` and `checks.csv`.
    Csv,
    /// `report.jsonl`.
    Jsonl,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("`{other}`: expected `csv` or `jsonl`")),
        }
    }
}

impl OutputFormat {
    fn as_str(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Jsonl => "jsonl",
        }
    }
}

/// Everything a command needs. Unset optional fields fall back to the
/// defaults of the command's experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub c: Option<f64>,
    pub r: Option<f64>,
    pub offspring: Option<String>,
    pub x0: f64,
    pub horizon: Option<f64>,
    pub census_dt: Option<f64>,
    /// Explicit census times; takes precedence over `census_dt`.
    pub census_grid: Option<Vec<f64>>,
    pub replicates: Option<usize>,
    pub seed: u64,
    pub trunc_m: Option<f64>,
    pub sets: Vec<String>,
    pub out: PathBuf,
    /// Unset writes every file.
    pub format: Option<OutputFormat>,
    pub threads: Option<usize>,
    pub c_grid: Option<Vec<f64>>,
    pub r_grid: Option<Vec<f64>>,
    pub k_max: u64,
    pub delta: f64,
    pub spine_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            c: None,
            r: None,
            offspring: None,
            x0: 1.0,
            horizon: None,
            census_dt: None,
            census_grid: None,
            replicates: None,
            seed: 0,
            trunc_m: None,
            sets: Vec::new(),
            out: PathBuf::from("bbm-out"),
            format: None,
            threads: None,
            c_grid: None,
            r_grid: None,
            k_max: 10_000,
            delta: 1.0,
            spine_samples: 0,
        }
    }
}

/// Keys accepted in the config file, in the order [`RunConfig::to_text`]
/// writes them.
pub const KEYS: &[&str] = &[
    "c",
    "r",
    "offspring",
    "x0",
    "horizon",
    "census_dt",
    "census_grid",
    "replicates",
    "seed",
    "trunc_m",
    "set",
    "out",
    "format",
    "threads",
    "c_grid",
    "r_grid",
    "k_max",
    "delta",
    "spine_samples",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(|tok| parse_value(key, tok)).collect()
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses the flat `key = value` format. Blank lines and text after `#`
    /// are ignored; `set` may repeat, every other key replaces earlier values.
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Assigns one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "c" => self.c = Some(parse_value(key, value)?),
            "r" => self.r = Some(parse_value(key, value)?),
            "offspring" => {
                value.parse::<OffspringLaw>()?;
                self.offspring = Some(value.to_string());
            }
            "x0" => self.x0 = parse_value(key, value)?,
            "horizon" => self.horizon = Some(parse_value(key, value)?),
            "census_dt" => self.census_dt = Some(parse_value(key, value)?),
            "census_grid" => self.census_grid = Some(parse_list(key, value)?),
            "replicates" => self.replicates = Some(parse_value(key, value)?),
            "seed" => self.seed = parse_value(key, value)?,
            "trunc_m" => self.trunc_m = Some(parse_value(key, value)?),
            "set" => {
                value.parse::<IntervalSet>()?;
                self.sets.push(value.to_string());
            }
            "out" => self.out = PathBuf::from(value),
            "format" => self.format = Some(value.parse().map_err(|e| CliError::Config(format!("`format`: {e}")))?),
            "threads" => self.threads = Some(parse_value(key, value)?),
            "c_grid" => self.c_grid = Some(parse_list(key, value)?),
            "r_grid" => self.r_grid = Some(parse_list(key, value)?),
            "k_max" => self.k_max = parse_value(key, value)?,
            "delta" => self.delta = parse_value(key, value)?,
            "spine_samples" => self.spine_samples = parse_value(key, value)?,
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Writes the config in the format read by [`RunConfig::from_text`].
    /// Unset optional fields are omitted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(c) = self.c {
            put("c", format!("{c:?}"));
        }
        if let Some(r) = self.r {
            put("r", format!("{r:?}"));
        }
        if let Some(o) = &self.offspring {
            put("offspring", o.clone());
        }
        put("x0", format!("{:?}", self.x0));
        if let Some(h) = self.horizon {
            put("horizon", format!("{h:?}"));
        }
        if let Some(dt) = self.census_dt {
            put("census_dt", format!("{dt:?}"));
        }
        if let Some(g) = &self.census_grid {
            put("census_grid", join(g));
        }
        if let Some(n) = self.replicates {
            put("replicates", n.to_string());
        }
        put("seed", self.seed.to_string());
        if let Some(m) = self.trunc_m {
            put("trunc_m", format!("{m:?}"));
        }
        for b in &self.sets {
            put("set", b.clone());
        }
        put("out", self.out.display().to_string());
        if let Some(f) = self.format {
            put("format", f.as_str().to_string());
        }
        if let Some(t) = self.threads {
            put("threads", t.to_string());
        }
        if let Some(g) = &self.c_grid {
            put("c_grid", join(g));
        }
        if let Some(g) = &self.r_grid {
            put("r_grid", join(g));
        }
        put("k_max", self.k_max.to_string());
        put("delta", format!("{:?}", self.delta));
        put("spine_samples", self.spine_samples.to_string());
        s
    }

    /// Model parameters; `c`, `r` and `offspring` have no defaults.
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let missing = |k: &str| CliError::Config(format!("`{k}` is required"));
        let c = self.c.ok_or_else(|| missing("c"))?;
        let r = self.r.ok_or_else(|| missing("r"))?;
        let law: OffspringLaw = self.offspring.as_deref().ok_or_else(|| missing("offspring"))?.parse()?;
        Ok(ModelParams::new(c, r, law)?)
    }

    pub fn interval_sets(&self) -> Result<Vec<IntervalSet>, CliError> {
        self.sets.iter().map(|s| Ok(s.parse()?)).collect()
    }

    /// Census times from the explicit grid, else `0, dt, ...` to the horizon.
    pub fn census_times(&self, horizon: f64, default_dt: f64) -> Vec<f64> {
        match &self.census_grid {
            Some(g) => g.clone(),
            None => bbm_core::engine::uniform_grid(horizon, self.census_dt.unwrap_or(default_dt)),
        }
    }

    /// Applies the `BBM_SEED` override when the variable is set.
    pub fn apply_env_seed(&mut self, value: Option<&str>) -> Result<(), CliError> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("BBM_SEED: cannot parse `{v}` as a seed")))?;
        }
        Ok(())
    }
}
