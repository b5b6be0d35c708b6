//! File writers. Floats go to CSV with 17 significant digits; column order
//! is fixed by the headers below.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bbm_core::experiments::{Aggregate, Check, ExperimentReport, ParamsEcho, ReplicateRecord};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::error::CliError;

pub const SUMMARY_HEADER: &[&str] = &["experiment", "name", "at", "value", "stderr", "n"];
pub const CHECKS_HEADER: &[&str] = &["experiment", "name", "passed", "observed", "threshold", "detail"];

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Output directory plus the format selection of one run.
pub struct OutputDir {
    dir: PathBuf,
    format: Option<OutputFormat>,
}

impl OutputDir {
    pub fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
        Ok(Self {
            dir: cfg.out.clone(),
            format: cfg.format,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn wants_csv(&self) -> bool {
        self.format != Some(OutputFormat::Jsonl)
    }

    pub fn wants_jsonl(&self) -> bool {
        self.format != Some(OutputFormat::Csv)
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvFile, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(header).map_err(|e| csv_error(&path, e))?;
        Ok(CsvFile { path, w })
    }

    pub fn jsonl(&self, name: &str) -> Result<JsonlFile, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(JsonlFile {
            path,
            w: BufWriter::new(file),
        })
    }

    /// Writes `summary.csv`, `checks.csv` and `report.jsonl` for a report,
    /// as selected by the format.
    pub fn write_report(&self, cfg: &RunConfig, report: &ExperimentReport) -> Result<(), CliError> {
        if self.wants_csv() {
            let mut s = self.csv("summary.csv", SUMMARY_HEADER)?;
            for a in &report.aggregates {
                s.row(summary_row(&report.name, a))?;
            }
            s.finish()?;
            let mut c = self.csv("checks.csv", CHECKS_HEADER)?;
            for check in &report.checks {
                c.row(check_row(&report.name, check))?;
            }
            c.finish()?;
        }
        if self.wants_jsonl() {
            let mut j = self.jsonl("report.jsonl")?;
            j.record(&SummaryRecord::new(cfg, report))?;
            for r in &report.replicates {
                j.record(&ReplicateLine {
                    record: "replicate",
                    config: cfg,
                    experiment: &report.name,
                    replicate: r,
                })?;
            }
            j.finish()?;
        }
        Ok(())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

pub struct CsvFile {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl CsvFile {
    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

pub struct JsonlFile {
    path: PathBuf,
    w: BufWriter<File>,
}

impl JsonlFile {
    pub fn record<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        serde_json::to_writer(&mut self.w, value).map_err(|e| CliError::io(&self.path, e.into()))?;
        self.w.write_all(b"\n").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn summary_row(experiment: &str, a: &Aggregate) -> Vec<String> {
    vec![
        experiment.to_string(),
        a.name.clone(),
        a.at.clone(),
        fmt17(a.value),
        fmt17(a.stderr),
        a.n.to_string(),
    ]
}

pub fn check_row(experiment: &str, c: &Check) -> Vec<String> {
    vec![
        experiment.to_string(),
        c.name.clone(),
        c.passed.to_string(),
        fmt17(c.observed),
        fmt17(c.threshold),
        c.detail.clone(),
    ]
}

/// First line of `report.jsonl`: the run configuration and the report
/// without its per-replicate records.
#[derive(Serialize)]
pub struct SummaryRecord<'a> {
    pub record: &'static str,
    pub config: &'a RunConfig,
    pub experiment: &'a str,
    pub passed: bool,
    pub params: &'a ParamsEcho,
    pub settings: &'a [(String, String)],
    pub aggregates: &'a [Aggregate],
    pub checks: &'a [Check],
    pub events: u64,
    pub infeasible: Option<&'a str>,
}

impl<'a> SummaryRecord<'a> {
    pub fn new(config: &'a RunConfig, r: &'a ExperimentReport) -> Self {
        Self {
            record: "summary",
            config,
            experiment: &r.name,
            passed: r.passed(),
            params: &r.params,
            settings: &r.settings,
            aggregates: &r.aggregates,
            checks: &r.checks,
            events: r.events,
            infeasible: r.infeasible.as_deref(),
        }
    }
}

#[derive(Serialize)]
struct ReplicateLine<'a> {
    record: &'static str,
    config: &'a RunConfig,
    experiment: &'a str,
    #[serde(flatten)]
    replicate: &'a ReplicateRecord,
}
