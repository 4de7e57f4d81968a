//! One experiment, one directory. Files are never replaced without `--force`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::commands::Failure;
use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct OutDir {
    root: PathBuf,
    force: bool,
}

/// Version and resolved config attached to every JSON artifact.
#[derive(Serialize)]
pub struct Provenance<'a, T: Serialize> {
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub config_toml: String,
    #[serde(flatten)]
    pub body: T,
}

impl OutDir {
    pub fn new(cfg: &ExperimentConfig, force: bool) -> Result<Self, Failure> {
        let root = cfg.output.directory.clone();
        std::fs::create_dir_all(&root).map_err(|e| Failure::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root, force })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// New file, refusing to clobber unless forced.
    pub fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.path(name);
        if p.exists() && !self.force {
            return Err(Failure::Config(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, cfg: &ExperimentConfig, body: T) -> Result<PathBuf, Failure> {
        let doc = Provenance {
            version: VERSION,
            config: cfg,
            config_toml: cfg.to_toml(),
            body,
        };
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Failure::Io(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| io(&self.path(name), e))?;
        Ok(self.path(name))
    }
}

/// `#` comment lines for CSV artifacts: version, then the config TOML.
pub fn preamble(cfg: &ExperimentConfig) -> Vec<String> {
    let mut lines = vec![format!("fibertwin {VERSION}")];
    lines.extend(cfg.to_toml().lines().map(str::to_owned));
    lines
}

pub fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}
