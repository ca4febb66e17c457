//! Run configuration files: a flow description plus output locations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    /// Trace CSV.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Directory for snapshot JSON files.
    #[serde(default)]
    pub snapshots_dir: Option<PathBuf>,
    /// Final summary JSON.
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub flow: FlowConfig,
    #[serde(default)]
    pub output: OutputPaths,
}

impl RunConfig {
    /// Parses and validates. Every failure is a [`Error::Config`].
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.flow.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Relative output paths are taken relative to `base`.
    pub fn resolve_outputs(&mut self, base: &Path) {
        for p in [&mut self.output.trace, &mut self.output.snapshots_dir, &mut self.output.summary].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
        "schema_version": 1,
        "flow": {
            "n": 1, "theta": 1.0471975511965976, "resolution": 64,
            "speed": {"kind": "power", "k": 1},
            "weights": [0, 0, 1],
            "initial": {"kind": "harmonics", "terms": [{"l": 2, "coefficient": 1}], "max_abs": 0.03},
            "t_end": 10
        },
        "output": {"trace": "trace.csv"}
    }"#;

    #[test]
    fn parses_and_resolves() {
        let mut cfg = RunConfig::from_json(GOOD).unwrap();
        assert_eq!(cfg.flow.n, 1);
        cfg.resolve_outputs(Path::new("/tmp/run"));
        assert_eq!(cfg.output.trace.as_deref(), Some(Path::new("/tmp/run/trace.csv")));
    }

    #[test]
    fn rejects_bad_documents() {
        let unknown = GOOD.replace("\"t_end\": 10", "\"t_end\": 10, \"tend\": 3");
        let version = GOOD.replace("\"schema_version\": 1", "\"schema_version\": 2");
        let invalid = GOOD.replace("\"t_end\": 10", "\"t_end\": -1");
        for text in [unknown.as_str(), version.as_str(), invalid.as_str(), "{", "[]"] {
            assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }
}
