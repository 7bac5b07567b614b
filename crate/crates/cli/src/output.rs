use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Command;
use crate::error::CliError;

pub fn config_json(cmd: &Command) -> Value {
    serde_json::to_value(cmd).expect("arguments serialise")
}

/// `#`-prefixed header lines recording the library version and configuration.
pub fn metadata(cmd: &Command) -> String {
    format!(
        "# igbm {}\n# config {}\n",
        igbm::VERSION,
        serde_json::to_string(&config_json(cmd)).expect("arguments serialise")
    )
}

/// Wraps a JSON payload with version and configuration.
pub fn envelope(cmd: &Command, body: Value) -> Value {
    let mut out = json!({
        "igbm_version": igbm::VERSION,
        "config": config_json(cmd),
    });
    if let (Value::Object(o), Value::Object(b)) = (&mut out, body) {
        o.extend(b);
    }
    out
}

pub fn json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serialises");
    s.push('\n');
    s
}

pub fn io_error(path: &Path, err: io::Error) -> CliError {
    CliError::Runtime(format!("{}: {err}", path.display()))
}

/// Writes to `path`, or standard output when absent.
pub fn emit(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_error(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}
