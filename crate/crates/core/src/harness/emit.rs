use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CellRecord, ExperimentConfig, ExperimentResult};
use crate::error::{Error, Result};

/// Value of the `schema` field of `results.json`.
pub const RESULT_SCHEMA: &str = "mixspec.result.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmitFormat {
    Csv,
    Json,
}

#[derive(Serialize)]
struct ResultFile<'a> {
    schema: &'static str,
    config: &'a ExperimentConfig,
    records: &'a [CellRecord],
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `results.csv` or `results.json` into `dir`, creating it if needed.
/// Both depend only on the configuration, so they are reproducible byte for
/// byte; timing and host details go to `provenance.json` instead.
pub fn emit(result: &ExperimentResult, dir: &Path, format: EmitFormat) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    match format {
        EmitFormat::Csv => {
            let path = dir.join("results.csv");
            let mut writer = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
            for rec in &result.records {
                writer.serialize(rec).map_err(|e| csv_error(&path, e))?;
            }
            writer.flush().map_err(|e| io_error(&path, e))?;
            Ok(path)
        }
        EmitFormat::Json => {
            let path = dir.join("results.json");
            let file = ResultFile {
                schema: RESULT_SCHEMA,
                config: &result.config,
                records: &result.records,
            };
            let mut text = serde_json::to_string_pretty(&file)?;
            text.push('\n');
            fs::write(&path, text).map_err(|e| io_error(&path, e))?;
            Ok(path)
        }
    }
}

pub fn write_provenance(result: &ExperimentResult, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join("provenance.json");
    let mut text = serde_json::to_string_pretty(&result.provenance)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(path)
}
