//! Flat `key = value` config files and flag/file precedence resolution for
//! the command-line front end.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// Parameters read from an optional config file; flags override these.
#[derive(Debug, Clone, Default)]
pub struct FileParams {
    map: BTreeMap<String, String>,
}

impl FileParams {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parse a flat file: one `key = value` per line, `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::InvalidConfig(format!("line {}: empty key", lineno + 1)));
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    /// Reject keys outside the subcommand's vocabulary.
    pub fn check_known(&self, allowed: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }
}

/// Resolve one parameter: flag wins over file, file over default.
pub fn resolve<T>(flag: Option<T>, file: &FileParams, key: &str, default: T) -> Result<T>
where
    T: FromStr,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("config key `{key}`: cannot parse `{raw}`"))),
        None => Ok(default),
    }
}

/// Require a strictly positive value, with the key name in the error.
pub fn require_positive(value: f64, key: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidConfig(format!("{key} must be > 0")))
    }
}

/// Require an integer at least `min`, with the key name in the error.
pub fn require_at_least(value: usize, min: usize, key: &str) -> Result<usize> {
    if value >= min {
        Ok(value)
    } else {
        Err(Error::InvalidConfig(format!("{key} must be >= {min}")))
    }
}

/// Parse a comma-separated list of floats (for start points, ratio grids).
pub fn parse_list(raw: &str, key: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse `{s}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_flat_file_with_comments() {
        let f = write_tmp("a = 2.0\n# comment\nnmax = 4  # trailing\n");
        let p = FileParams::load(f.path()).unwrap();
        assert_eq!(p.get("a"), Some("2.0"));
        assert_eq!(p.get("nmax"), Some("4"));
        assert_eq!(p.get("missing"), None);
    }

    #[test]
    fn rejects_malformed_lines_and_unknown_keys() {
        let f = write_tmp("not-a-kv-line\n");
        assert!(FileParams::load(f.path()).is_err());

        let f = write_tmp("bogus = 1\n");
        let p = FileParams::load(f.path()).unwrap();
        assert!(p.check_known(&["a", "b"]).is_err());
        assert!(p.check_known(&["bogus"]).is_ok());
    }

    #[test]
    fn flag_overrides_file_overrides_default() {
        let f = write_tmp("a = 2.0\n");
        let p = FileParams::load(f.path()).unwrap();
        assert_eq!(resolve(Some(3.0), &p, "a", 1.0).unwrap(), 3.0);
        assert_eq!(resolve(None, &p, "a", 1.0).unwrap(), 2.0);
        assert_eq!(resolve::<f64>(None, &p, "b", 1.0).unwrap(), 1.0);
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let f = write_tmp("n = not-a-number\n");
        let p = FileParams::load(f.path()).unwrap();
        let err = resolve::<u32>(None, &p, "n", 1).unwrap_err();
        assert!(err.to_string().contains('n'), "{err}");
    }

    #[test]
    fn validators() {
        assert!(require_positive(0.0, "x").is_err());
        assert!(require_positive(1.5, "x").is_ok());
        assert!(require_at_least(0, 1, "n").is_err());
        assert_eq!(parse_list("1, 2,3", "xs").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_list("1,zz", "xs").is_err());
    }
}
