//! CSV files with a leading `#` schema line, and JSON documents.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub fn write_csv(path: &Path, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf, CliError> {
    let mut text = format!("# {}\n", columns.join(","));
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))?;
    Ok(path.to_path_buf())
}

pub fn num(v: f64) -> String {
    format!("{v}")
}
