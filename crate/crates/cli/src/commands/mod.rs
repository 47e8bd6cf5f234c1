//! One module per subcommand, plus the small file helpers they share.

pub mod ablation;
pub mod eval;
pub mod gen_data;
pub mod prepare;
pub mod train;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// Creates `dir` (and parents) if needed.
pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create directory {}: {e}", dir.display())))
}

/// Writes `value` as pretty JSON with a trailing newline; byte-deterministic
/// for equal values.
pub fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Reads a file back and hashes its bytes, for artifact provenance records.
pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(moscl_core::util::sha256_hex(&bytes))
}
