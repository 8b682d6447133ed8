//! Config loading (TOML or JSON, by file extension) and output provenance.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: &str = "1";

pub fn tool_version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

pub fn default_format_version() -> String {
    FORMAT_VERSION.to_string()
}

pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    parse(path, &text)
}

pub fn parse<T: DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "toml" => toml::from_str(text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display()))),
        "json" => serde_json::from_str(text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display()))),
        _ => Err(CliError::invalid(format!(
            "{}: unsupported config format, expected .toml or .json",
            path.display()
        ))),
    }
}

pub fn check_format_version(found: &str) -> CliResult<()> {
    if found != FORMAT_VERSION {
        return Err(CliError::invalid(format!(
            "format_version {found:?} is not supported (expected {FORMAT_VERSION:?})"
        )));
    }
    Ok(())
}

/// SHA-256 of the canonical JSON form of the resolved config.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

pub fn resolve_output(flag: Option<PathBuf>, from_config: Option<&PathBuf>) -> CliResult<PathBuf> {
    flag.or_else(|| from_config.cloned())
        .ok_or_else(|| CliError::invalid("no output directory: pass --output or set output_dir in the config"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(CliError::runtime)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Prints to stdout, treating a closed pipe (e.g. `| head`) as success.
pub fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.write_all(b"\n")) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}
