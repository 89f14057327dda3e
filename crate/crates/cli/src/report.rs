use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use frwcap_core::engine::Config;
use frwcap_core::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEcho {
    pub name: String,
    pub args: Vec<String>,
}

/// One machine-readable document per command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: CommandEcho,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<String>,
    /// Fully resolved engine configuration, seed included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
    pub passed: bool,
    pub results: Value,
}

impl Report {
    pub fn new(command: CommandEcho, results: Value) -> Self {
        Self { schema_version: SCHEMA_VERSION, command, structure: None, config: None, passed: true, results }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Write to `path`, or to stdout when `None`.
    pub fn emit(&self, path: Option<&Path>) -> Result<()> {
        let text = self.to_json();
        match path {
            Some(p) => std::fs::write(p, text)?,
            None => {
                use std::io::Write;
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
            }
        }
        Ok(())
    }
}

/// Configuration from a file holding either a bare config or a full report.
pub fn load_config(path: &Path) -> Result<(Config, Option<String>)> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let (cfg, structure) = match value.get("schema_version") {
        Some(_) => {
            let report: Report =
                serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let cfg = report
                .config
                .ok_or_else(|| Error::Config(format!("{} carries no engine configuration", path.display())))?;
            (cfg, report.structure)
        }
        None => (
            serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            None,
        ),
    };
    cfg.validate()?;
    Ok((cfg, structure))
}

/// Drop wall-clock fields so reruns compare byte for byte.
pub fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timings");
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}
