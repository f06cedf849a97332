use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// Output directory that refuses to overwrite any of the command's inputs
/// and records what it wrote for the manifest.
pub struct OutDir {
    root: PathBuf,
    inputs: Vec<PathBuf>,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path, inputs: &[&Path]) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        let inputs = inputs
            .iter()
            .map(|p| fs::canonicalize(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
            .collect::<CliResult<_>>()?;
        Ok(Self { root: root.to_path_buf(), inputs, written: Vec::new() })
    }

    /// Claims `name` inside the directory.
    pub fn path(&mut self, name: &str) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        if let Ok(existing) = fs::canonicalize(&path) {
            if self.inputs.contains(&existing) {
                return Err(CliError::Usage(format!("refusing to overwrite input file {}", path.display())));
            }
        }
        self.written.push(name.to_owned());
        Ok(path)
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> CliResult<PathBuf> {
        let path = self.path(name)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Writes a numeric table with the given header.
    pub fn write_table(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<PathBuf> {
        let path = self.path(name)?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(path)
    }

    /// Writes `manifest.json` echoing the resolved configuration.
    pub fn finish(mut self, command: &str, config: Value, inputs: &[&Path]) -> CliResult<()> {
        let outputs = std::mem::take(&mut self.written);
        let manifest = json!({
            "tool": "tvmix",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "outputs": outputs,
        });
        self.write_json("manifest.json", &manifest)?;
        Ok(())
    }
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn header(fixed: &[&str], prefix: &str, count: usize) -> Vec<String> {
    fixed
        .iter()
        .map(|s| (*s).to_owned())
        .chain((1..=count).map(|i| format!("{prefix}{i}")))
        .collect()
}
