//! Flat `key=value` text files.
//!
//! Used for weight-file manifests, ensemble manifests, transition-matrix
//! manifests and pipeline configuration. Keys keep their insertion order so
//! written files are byte-stable. Blank lines and lines starting with `#` are
//! ignored when parsing.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, key: &str, origin: &Path) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::malformed(origin, format!("missing key `{key}`")))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str, origin: &Path) -> Result<T> {
        let raw = self.require(key, origin)?;
        raw.parse()
            .map_err(|_| Error::malformed(origin, format!("bad value for `{key}`: {raw}")))
    }

    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut manifest = Manifest::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            manifest.set(key.trim(), value.trim());
        }
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Writes a little-endian f64 blob.
pub fn write_f64_blob(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_blob(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::malformed(
            path,
            format!("blob length {} is not a multiple of 8", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_keeps_order() {
        let m = Manifest::parse_str("# header\nb=2\n\na = 1\nb=3\n", Path::new("x")).unwrap();
        assert_eq!(m.to_string(), "b=3\na=1\n");
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = Manifest::parse_str("a=1\nnope\n", Path::new("cfg")).unwrap_err();
        assert!(err.to_string().contains("cfg:2"), "{err}");
    }
}
