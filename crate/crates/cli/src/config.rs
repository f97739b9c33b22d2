use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

const DEFAULT_FILE: &str = "shellforge.json";

/// Optional flat JSON configuration. Command-line flags win over it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub dir: Option<PathBuf>,
    pub token: Option<String>,
}

impl FileConfig {
    /// An explicit path must exist; the default file is read only when present.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None if Path::new(DEFAULT_FILE).is_file() => PathBuf::from(DEFAULT_FILE),
            None => return Ok(Self::default()),
        };
        let raw = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Port precedence: flag, then SHELLFORGE_PORT, then config, then `default`.
pub fn resolve_port(flag: Option<u16>, cfg: &FileConfig, default: u16) -> Result<u16, CliError> {
    if let Some(p) = flag {
        return Ok(p);
    }
    if let Ok(raw) = std::env::var("SHELLFORGE_PORT") {
        return raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("SHELLFORGE_PORT `{raw}` is not a port number")));
    }
    Ok(cfg.port.unwrap_or(default))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"port": 9000, "dir": "pkgs"}"#).unwrap();
        let cfg = FileConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.port, Some(9000));
        assert_eq!(cfg.dir, Some(PathBuf::from("pkgs")));

        std::fs::write(&path, r#"{"prot": 9000}"#).unwrap();
        assert!(matches!(FileConfig::load(Some(&path)), Err(CliError::Usage(_))));
        assert!(matches!(FileConfig::load(Some(&dir.path().join("missing.json"))), Err(CliError::Usage(_))));
    }

    #[test]
    fn flag_beats_config() {
        let cfg = FileConfig { port: Some(9000), ..Default::default() };
        assert_eq!(resolve_port(Some(1234), &cfg, 8080).unwrap(), 1234);
    }
}
