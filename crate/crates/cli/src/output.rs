//! CSV files and run manifests.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ConfigFile;
use crate::CliError;

/// Shortest round-trip decimal form; `NaN` for undefined statistics.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Collects the files of one command and writes them under `dir`.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<File>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write_manifest(&self, config: Option<&ConfigFile>, info: &ManifestInfo) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Wrapper<'a> {
            manifest: &'a ManifestInfo,
        }
        let mut text = String::new();
        if let Some(cfg) = config {
            text.push_str(&cfg.to_toml());
            text.push('\n');
        }
        text.push_str(&toml::to_string(&Wrapper { manifest: info }).expect("manifest serializes"));
        let path = self.dir.join("manifest.toml");
        let mut f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestInfo {
    pub version: String,
    pub command: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    pub wall_clock_s: f64,
    pub outputs: Vec<String>,
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn flush(mut w: csv::Writer<File>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
