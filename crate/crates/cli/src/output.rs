//! Output files stamped with the tool version and config digest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use zerocurrent::provenance::TOOL_VERSION;

use crate::CliError;

pub struct OutputDir {
    dir: PathBuf,
    digest: String,
}

impl OutputDir {
    pub fn create(dir: &Path, digest: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            digest: digest.to_string(),
        })
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    /// Writes the fields of `payload` plus `tool_version` and `config_digest`, keys sorted.
    pub fn json(&self, name: &str, payload: &impl Serialize) -> Result<PathBuf, CliError> {
        let v = stamped(payload, &self.digest);
        self.write(name, &(serde_json::to_string_pretty(&v).expect("json values serialize") + "\n"))
    }

    /// Writes `csv` (header first) behind a `#` provenance line.
    pub fn csv(&self, name: &str, csv: &str) -> Result<PathBuf, CliError> {
        self.write(name, &format!("{}{csv}", provenance_line(&self.digest)))
    }
}

pub fn provenance_line(digest: &str) -> String {
    format!("# zerocurrent {TOOL_VERSION} config_digest={digest}\n")
}

pub fn stamped(payload: &impl Serialize, digest: &str) -> Value {
    let mut obj = match serde_json::to_value(payload).expect("payload serializes") {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("data".into(), other);
            m
        }
    };
    obj.insert("tool_version".into(), Value::String(TOOL_VERSION.into()));
    obj.insert("config_digest".into(), Value::String(digest.into()));
    // serde_json's default map is ordered by key, so output is stable
    Value::Object(obj)
}
