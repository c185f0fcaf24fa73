//! Output path resolution and file writing.
//!
//! Outputs are plain strings assembled deterministically, so a rerun
//! with the same configuration and seed writes byte-identical files.

use std::path::{Path, PathBuf};

use crate::errors::{CliError, CliResult};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "COCOCAT_OUT_DIR";

/// Where to write an output file: the explicit path if given, otherwise
/// `default_name` inside the configured output directory, the
/// COCOCAT_OUT_DIR directory, or the working directory, in that order.
pub fn resolve_out(
    explicit: Option<PathBuf>,
    config_dir: Option<&Path>,
    default_name: &str,
) -> PathBuf {
    if let Some(path) = explicit {
        return path;
    }
    let dir = config_dir
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    dir.join(default_name)
}

/// Writes a file, creating missing parent directories.
pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::io(format!("cannot create directory {}: {e}", parent.display()))
            })?;
        }
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

/// Serializes a value as pretty JSON with a trailing newline.
pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}
