use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use screwtransfer::formats::{to_json, FormatError};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable input.
    Usage(String),
    /// A pipeline stage failed on valid input.
    Stage {
        stage: &'static str,
        message: String,
        mode: Option<String>,
    },
}

impl CliError {
    pub fn usage(e: impl fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn stage(stage: &'static str, e: impl fmt::Display) -> Self {
        CliError::Stage {
            stage,
            message: e.to_string(),
            mode: None,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Stage { .. } => 3,
        }
    }

    pub fn to_json(&self, command: &str) -> String {
        let mut v = serde_json::json!({
            "status": "error",
            "command": command,
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Usage(m) => {
                v["stage"] = "input".into();
                v["message"] = m.as_str().into();
            }
            CliError::Stage { stage, message, mode } => {
                v["stage"] = (*stage).into();
                v["message"] = message.as_str().into();
                if let Some(m) = mode {
                    v["mode"] = m.as_str().into();
                }
            }
        }
        v.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Stage { stage, message, .. } => write!(f, "{stage}: {message}"),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::usage(e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Tool {
    pub fn current() -> Self {
        Self {
            name: "screwtransfer".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub source: String,
    pub sha256: String,
}

/// Digests of every input, keyed by role.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs(pub BTreeMap<String, InputDigest>);

impl Inputs {
    pub fn add_bytes(&mut self, role: &str, source: &str, bytes: &[u8]) {
        self.0.insert(
            role.into(),
            InputDigest {
                source: source.into(),
                sha256: hex::encode(Sha256::digest(bytes)),
            },
        );
    }

    /// Reads `path`, records its digest and returns the contents.
    pub fn read(&mut self, role: &str, path: &Path) -> crate::Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        self.add_bytes(role, &path.display().to_string(), &bytes);
        Ok(bytes)
    }

    pub fn read_string(&mut self, role: &str, path: &Path) -> crate::Result<String> {
        String::from_utf8(self.read(role, path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}

/// Writes a JSON artifact to `out`, or to stdout.
pub fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> crate::Result<()> {
    let text = to_json(value);
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::stage("output", format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::stage("output", e)),
    }
}
