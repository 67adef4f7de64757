use std::io::Write;
use std::path::Path;

use aciq_core::tensor_io::{csv_bytes, Table};
use aciq_core::{Error, Result};
use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Writes `table` (csv) or `full` (json) to `out`, or stdout when absent.
pub fn emit<T: Serialize>(table: &Table, full: &T, format: Format, out: Option<&Path>) -> Result<()> {
    let bytes = match format {
        Format::Csv => csv_bytes(table)?,
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(full).map_err(|e| Error::Report(e.to_string()))?;
            b.push(b'\n');
            b
        }
    };
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        }),
        None => std::io::stdout().write_all(&bytes).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

/// Shortest round-trip rendering, so CSV output is byte-stable.
pub fn num(x: f64) -> String {
    x.to_string()
}
