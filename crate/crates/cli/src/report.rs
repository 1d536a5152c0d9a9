use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;
use tamer::rep::TraceRow;
use tamer::suite::Criterion;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A row with a fixed column order.
pub trait Table: Serialize {
    const HEADER: &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

impl Table for TraceRow {
    const HEADER: &'static [&'static str] = &["element_id", "element", "formula", "formula_value", "oracle_value", "match"];
    fn record(&self) -> Vec<String> {
        vec![
            self.id.clone(),
            self.element.clone(),
            self.formula.clone(),
            self.formula_value.to_string(),
            self.oracle_value.to_string(),
            self.matched.to_string(),
        ]
    }
}

impl Table for Criterion {
    const HEADER: &'static [&'static str] = &["id", "name", "passed", "detail"];
    fn record(&self) -> Vec<String> {
        vec![self.id.to_string(), self.name.to_string(), self.passed.to_string(), self.detail.clone()]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MultRow {
    pub theta_id: String,
    pub theta_on_u: u32,
    pub ue_oracle: usize,
    pub ue_predicted: usize,
    pub etimes_oracle: usize,
    pub etimes_predicted: usize,
    pub matched: bool,
}

impl Table for MultRow {
    const HEADER: &'static [&'static str] =
        &["theta_id", "theta_on_u", "ue_oracle", "ue_predicted", "etimes_oracle", "etimes_predicted", "match"];
    fn record(&self) -> Vec<String> {
        vec![
            self.theta_id.clone(),
            self.theta_on_u.to_string(),
            self.ue_oracle.to_string(),
            self.ue_predicted.to_string(),
            self.etimes_oracle.to_string(),
            self.etimes_predicted.to_string(),
            self.matched.to_string(),
        ]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QRow {
    pub alpha: usize,
    pub mode: &'static str,
    pub element: String,
    pub in_other_mode: bool,
}

impl Table for QRow {
    const HEADER: &'static [&'static str] = &["alpha", "mode", "element", "in_other_mode"];
    fn record(&self) -> Vec<String> {
        vec![self.alpha.to_string(), self.mode.to_string(), self.element.clone(), self.in_other_mode.to_string()]
    }
}

pub fn path_for(out: &Path, name: &str, fmt: Format) -> PathBuf {
    out.join(format!("{name}.{}", fmt.ext()))
}

pub fn emit<T: Table>(out: &Path, name: &str, fmt: Format, rows: &[T]) -> Result<PathBuf> {
    let path = path_for(out, name, fmt);
    let bytes = match fmt {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(T::HEADER)?;
            for r in rows {
                w.write_record(r.record())?;
            }
            w.into_inner().context("flushing csv")?
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows)?;
            s.push('\n');
            s.into_bytes()
        }
    };
    write(&path, &bytes)?;
    Ok(path)
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
