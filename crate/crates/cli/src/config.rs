use std::path::{Path, PathBuf};

use modelzip::io_util::{read, write_atomic};
use modelzip::{EvalConfig, Result, YearMonth};
use serde::{Deserialize, Serialize};

/// Settings of one run. `eval` writes this next to its rows, and `--config`
/// reads the same shape back, so a finished run can be repeated from its
/// own metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    pub dataset: Option<String>,
    pub manifest: Option<PathBuf>,
    pub eval: EvalConfig,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub cutoff: Option<YearMonth>,
    pub tool_version: Option<String>,
}

impl RunConfig {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    /// Also reports whether the file named a sliding step, so that an
    /// unset step can follow the context size.
    pub fn load_or_default(path: Option<&Path>) -> Result<(Self, bool)> {
        let Some(path) = path else {
            return Ok((RunConfig::default(), false));
        };
        let value: serde_json::Value = serde_json::from_slice(&read(path)?)?;
        let has_step = value.get("eval").and_then(|e| e.get("step")).is_some();
        Ok((serde_json::from_value(value)?, has_step))
    }
}

/// `rows.csv` becomes `rows.<tag>.csv`.
pub fn sibling(path: &Path, tag: &str, ext: Option<&str>) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("rows");
    let ext = ext.or_else(|| path.extension().and_then(|e| e.to_str()));
    let name = match ext {
        Some(e) => format!("{stem}.{tag}.{e}"),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use modelzip::WindowMode;

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"model":"uniform","eval":{"mode":"sliding","step":512}}"#).unwrap();
        assert_eq!(c.model.as_deref(), Some("uniform"));
        assert_eq!(c.eval.mode, WindowMode::Sliding);
        assert_eq!((c.eval.context, c.eval.step, c.eval.precision), (2048, 512, 16));
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle":"uniform"}"#).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("meta.json");
        let c = RunConfig {
            model: Some("adaptive:o2:kt".into()),
            cutoff: Some("2023-01".parse().unwrap()),
            jobs: Some(3),
            ..Default::default()
        };
        c.save(&p).unwrap();
        assert_eq!(RunConfig::load_or_default(Some(&p)).unwrap(), (c, true));
        assert!(!RunConfig::load_or_default(None).unwrap().1);
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/rows.csv"), "docs", None), Path::new("out/rows.docs.csv"));
        assert_eq!(sibling(Path::new("rows.jsonl"), "meta", Some("json")), Path::new("rows.meta.json"));
    }
}
