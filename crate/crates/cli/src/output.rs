//! Output machinery: CSV files with a provenance comment line, plus the
//! resolved configuration snapshot so every run can be reproduced.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct OutputDir {
    root: PathBuf,
    config_hash: u64,
    seed: u64,
}

impl OutputDir {
    /// Create the directory, write the resolved config snapshot, and return
    /// the writer handle.
    pub fn create(root: &Path, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Validation(vec![format!("cannot create {root:?}: {e}")]))?;
        let out = OutputDir {
            root: root.to_path_buf(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
        };
        fs::write(root.join("config_resolved.toml"), cfg.to_toml())
            .map_err(|e| CliError::Io(format!("writing config snapshot: {e}")))?;
        Ok(out)
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn subdir(&self, name: &str) -> Result<Self, CliError> {
        let sub = self.root.join(name);
        fs::create_dir_all(&sub)
            .map_err(|e| CliError::Io(format!("cannot create {sub:?}: {e}")))?;
        Ok(OutputDir {
            root: sub,
            config_hash: self.config_hash,
            seed: self.seed,
        })
    }

    /// Write a CSV with the provenance comment and a header row. Rows are
    /// pre-formatted strings, one per line.
    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<(), CliError> {
        let mut text = String::new();
        let _ = writeln!(
            text,
            "# nurn config_hash={:016x} seed={}",
            self.config_hash, self.seed
        );
        let _ = writeln!(text, "{header}");
        for row in rows {
            let _ = writeln!(text, "{row}");
        }
        fs::write(self.root.join(name), text)
            .map_err(|e| CliError::Io(format!("writing {name}: {e}")))
    }
}

/// Format a float with shortest round-trip representation.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
