use std::path::{Path, PathBuf};

use gzsl_core::trainer::Mode;

use crate::{CliError, CliResult};

/// Where a run reads from and writes to, checked before any work starts.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
}

impl RunManifest {
    /// Fails with a usage error when an input is missing, the output
    /// directory cannot be created, or a list is empty.
    pub fn resolve(self) -> CliResult<Self> {
        if let Some(c) = &self.config {
            require_exists(c, "config")?;
        }
        require_exists(&self.dataset, "dataset")?;
        if self.seeds.is_empty() || self.modes.is_empty() {
            return Err(CliError::Usage("seed and mode lists must be non-empty".into()));
        }
        std::fs::create_dir_all(&self.out).map_err(|e| {
            CliError::Usage(format!("cannot create output directory {}: {e}", self.out.display()))
        })?;
        Ok(self)
    }
}

fn require_exists(p: &Path, what: &str) -> CliResult<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", p.display())))
    }
}
