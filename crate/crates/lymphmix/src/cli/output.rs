//! Output artifacts: pretty JSON with embedded provenance, the draws CSV,
//! and the recovery report CSV. All files are UTF-8 with LF line endings
//! and deterministic byte content.

use crate::error::{Error, Result};
use crate::mcmc::ChainResult;
use crate::recover::RecoverReport;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

/// Draws CSV: header = parameter names; one row per kept iteration per
/// chain, chains concatenated in order.
pub fn write_draws_csv(path: &Path, chains: &ChainResult) -> Result<PathBuf> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "{}", chains.param_names.join(",")).map_err(io_err(path))?;
    for chain in &chains.chains {
        for draw in chain {
            let row: Vec<String> = draw.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", row.join(",")).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

/// Recovery report CSV: one row per parameter.
pub fn write_recover_csv(path: &Path, report: &RecoverReport) -> Result<PathBuf> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(
        w,
        "parameter,truth,mean_estimate,bias,rmse,coverage,covered,replicates"
    )
    .map_err(io_err(path))?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.4},{},{}",
            r.name, r.truth, r.mean_estimate, r.bias, r.rmse, r.coverage, r.covered, r.replicates
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(path.to_path_buf())
}
