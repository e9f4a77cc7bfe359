//! Parameter resolution for the command line: defaults, then values from a
//! `key = value` file, then flags, with every resolved run hashed so output
//! files carry a provenance line tying them to the exact configuration.
//!
//! Execution details that do not influence results (the output directory and
//! the worker-thread count) are deliberately kept out of the bag: re-running
//! the same configuration must produce byte-identical files no matter where
//! they land or how many threads computed them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dvq::error::{DvqError, Result};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One command's resolved parameters, keyed by stable snake_case names.
#[derive(Debug, Clone)]
pub struct ConfigBag {
    command: &'static str,
    values: BTreeMap<&'static str, String>,
}

impl ConfigBag {
    /// Start from the command's defaults. Every key the command will ever
    /// read must be declared here; anything else is rejected later.
    pub fn new(command: &'static str, defaults: &[(&'static str, &str)]) -> Self {
        let values = defaults.iter().map(|&(k, v)| (k, v.to_string())).collect();
        ConfigBag { command, values }
    }

    pub fn command(&self) -> &'static str {
        self.command
    }

    fn known_key(&self, key: &str) -> Result<&'static str> {
        self.values
            .keys()
            .find(|k| **k == key)
            .copied()
            .ok_or_else(|| DvqError::UnknownName {
                kind: "config key",
                name: key.to_string(),
                available: self.values.keys().copied().collect::<Vec<_>>().join(", "),
            })
    }

    /// Set one value, rejecting keys the command does not declare.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = self.known_key(key)?;
        self.values.insert(key, value.to_string());
        Ok(())
    }

    /// Merge a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|source| DvqError::Io {
            path: path.display().to_string(),
            source,
        })?;
        for (index, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(DvqError::Parse {
                    path: path.display().to_string(),
                    line: index + 1,
                    message: format!("expected 'key = value', got '{line}'"),
                });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply repeatable `--set key=value` overrides.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for pair in pairs {
            let Some((key, value)) = pair.split_once('=') else {
                return Err(DvqError::InvalidInput(format!(
                    "--set expects key=value, got '{pair}'"
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply a dedicated flag when it was given.
    pub fn set_flag<T: ToString>(&mut self, key: &'static str, flag: Option<&T>) {
        if let Some(value) = flag {
            self.values.insert(key, value.to_string());
        }
    }

    pub fn get(&self, key: &'static str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key '{key}' was not declared for '{}'", self.command))
    }

    /// A value that must have been supplied by flag or file.
    pub fn require(&self, key: &'static str) -> Result<&str> {
        let value = self.get(key);
        if value.is_empty() {
            return Err(DvqError::InvalidInput(format!(
                "'{key}' is required: pass --{} or set '{key}' in the config file",
                key.replace('_', "-"),
            )));
        }
        Ok(value)
    }

    fn parse<T: std::str::FromStr>(&self, key: &'static str, kind: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| DvqError::InvalidInput(format!("'{key}' must be {kind}, got '{raw}'")))
    }

    pub fn get_usize(&self, key: &'static str) -> Result<usize> {
        self.parse(key, "a non-negative integer")
    }

    pub fn get_u64(&self, key: &'static str) -> Result<u64> {
        self.parse(key, "a non-negative integer")
    }

    pub fn get_f64(&self, key: &'static str) -> Result<f64> {
        let value: f64 = self.parse(key, "a number")?;
        if !value.is_finite() {
            return Err(DvqError::InvalidInput(format!(
                "'{key}' must be finite, got '{value}'"
            )));
        }
        Ok(value)
    }

    /// `a,b,c` enumerations or `lo:hi:step` inclusive ranges of integers.
    pub fn get_usize_list(&self, key: &'static str) -> Result<Vec<usize>> {
        let raw = self.require(key)?;
        let parse_one = |s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| {
                DvqError::InvalidInput(format!(
                    "'{key}' must list integers as 'a,b,c' or 'lo:hi:step', got '{raw}'"
                ))
            })
        };
        let values = if raw.contains(':') {
            let parts: Vec<&str> = raw.split(':').collect();
            if parts.len() != 3 {
                return Err(DvqError::InvalidInput(format!(
                    "'{key}' ranges must be 'lo:hi:step', got '{raw}'"
                )));
            }
            let (lo, hi, step) = (
                parse_one(parts[0])?,
                parse_one(parts[1])?,
                parse_one(parts[2])?,
            );
            if step == 0 || hi < lo {
                return Err(DvqError::InvalidInput(format!(
                    "'{key}' range '{raw}' is empty or has step 0"
                )));
            }
            (lo..=hi).step_by(step).collect()
        } else {
            raw.split(',')
                .map(parse_one)
                .collect::<Result<Vec<usize>>>()?
        };
        if values.is_empty() {
            return Err(DvqError::InvalidInput(format!("'{key}' lists no values")));
        }
        Ok(values)
    }

    pub fn get_f64_list(&self, key: &'static str) -> Result<Vec<f64>> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    DvqError::InvalidInput(format!(
                        "'{key}' must be a comma-separated list of numbers, got '{raw}'"
                    ))
                })
            })
            .collect()
    }

    /// Comma-separated names, e.g. preprocessing variants.
    pub fn get_name_list(&self, key: &'static str) -> Result<Vec<String>> {
        let raw = self.require(key)?;
        Ok(raw
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect())
    }

    /// Optional `lo:hi` window; empty means automatic.
    pub fn get_window(&self, key: &'static str) -> Result<Option<(f64, f64)>> {
        let raw = self.get(key);
        if raw.is_empty() {
            return Ok(None);
        }
        let bad =
            || DvqError::InvalidInput(format!("'{key}' must be 'lo:hi' in ln r, got '{raw}'"));
        let (lo, hi) = raw.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(bad());
        }
        Ok(Some((lo, hi)))
    }

    /// Hex digest prefix of the resolved run: tool version, command and
    /// every parameter, in sorted key order.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(TOOL_VERSION.as_bytes());
        hasher.update(b"\n");
        hasher.update(self.command.as_bytes());
        hasher.update(b"\n");
        for (key, value) in &self.values {
            hasher.update(key.as_bytes());
            hasher.update(b"=");
            hasher.update(value.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for byte in &digest[..8] {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }

    /// The comment line prepended to every CSV output.
    pub fn provenance(&self) -> String {
        format!(
            "# dvq {TOOL_VERSION} {} config={}\n",
            self.command,
            self.hash()
        )
    }

    /// The resolved run as a reusable config file.
    pub fn run_config_text(&self) -> String {
        let mut out = self.provenance();
        for (key, value) in &self.values {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

/// Write a text output file, mapping failures onto the library's I/O error.
pub fn write_output(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| DvqError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn bag() -> ConfigBag {
        ConfigBag::new(
            "demo",
            &[
                ("input", ""),
                ("seed", ""),
                ("p", "3"),
                ("grid", "1,2"),
                ("window", ""),
            ],
        )
    }

    #[test]
    fn flags_override_files_override_defaults() {
        let mut file = tempfile::NamedTempFile::new().expect("temp file");
        writeln!(file, "# comment\np = 5\nseed = 9").expect("write");
        let mut bag = bag();
        bag.load_file(file.path()).expect("load");
        assert_eq!(bag.get_usize("p").expect("p"), 5);
        bag.set_flag("p", Some(&7usize));
        assert_eq!(bag.get_usize("p").expect("p"), 7);
        assert_eq!(bag.get_u64("seed").expect("seed"), 9);
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_available_set() {
        let mut bag = bag();
        let err = bag.set("pp", "3").expect_err("unknown key");
        let text = err.to_string();
        assert!(text.contains("unknown config key 'pp'"), "{text}");
        assert!(text.contains("grid"), "{text}");
    }

    #[test]
    fn malformed_lines_report_the_line_number() {
        let mut file = tempfile::NamedTempFile::new().expect("temp file");
        writeln!(file, "p = 5\nnonsense").expect("write");
        let err = bag().load_file(file.path()).expect_err("malformed");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn lists_parse_ranges_and_enumerations() {
        let mut bag = bag();
        bag.set("grid", "5:20:5").expect("set");
        assert_eq!(
            bag.get_usize_list("grid").expect("range"),
            vec![5, 10, 15, 20]
        );
        bag.set("grid", "1, 2, 5").expect("set");
        assert_eq!(bag.get_usize_list("grid").expect("list"), vec![1, 2, 5]);
        bag.set("grid", "5:1:1").expect("set");
        assert!(bag.get_usize_list("grid").is_err());
    }

    #[test]
    fn hash_tracks_values_but_run_config_reproduces_them() {
        let mut bag = bag();
        let before = bag.hash();
        bag.set("p", "9").expect("set");
        assert_ne!(before, bag.hash());

        let text = bag.run_config_text();
        let mut file = tempfile::NamedTempFile::new().expect("temp file");
        file.write_all(text.as_bytes()).expect("write");
        let mut reloaded = ConfigBag::new(
            "demo",
            &[
                ("input", ""),
                ("seed", ""),
                ("p", "3"),
                ("grid", "1,2"),
                ("window", ""),
            ],
        );
        reloaded.load_file(file.path()).expect("reload");
        assert_eq!(reloaded.hash(), bag.hash());
    }

    #[test]
    fn windows_are_optional_and_validated() {
        let mut bag = bag();
        assert_eq!(bag.get_window("window").expect("empty"), None);
        bag.set("window", "1.5:4.0").expect("set");
        assert_eq!(bag.get_window("window").expect("set"), Some((1.5, 4.0)));
        bag.set("window", "4:1").expect("set");
        assert!(bag.get_window("window").is_err());
    }
}
