use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Writes artifacts into one directory, each through a temporary file that
/// is renamed into place once complete.
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", target.display()));
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(bytes).map_err(io)?;
        file.sync_all().map_err(io)?;
        drop(file);
        fs::rename(&tmp, &target).map_err(io)?;
        self.written.push(target.display().to_string());
        Ok(())
    }

    /// `{"config": ..., "result": ...}`, pretty-printed.
    pub fn json<C: Serialize, T: Serialize>(&mut self, name: &str, config: &C, result: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Artifact<'a, C, T> {
            config: &'a C,
            result: &'a T,
        }
        let mut bytes = serde_json::to_vec_pretty(&Artifact { config, result })?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// CSV with a leading `# config: <json>` line.
    pub fn csv<C: Serialize>(&mut self, name: &str, config: &C, header: &str, rows: &[String]) -> Result<(), CliError> {
        let mut text = format!("# config: {}\n{header}\n", serde_json::to_string(config)?);
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

pub fn config_comment<C: Serialize>(config: &C) -> Result<String, CliError> {
    Ok(format!("config: {}", serde_json::to_string(config)?))
}
