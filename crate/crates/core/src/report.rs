//! Ordered `key=value` reports.
//!
//! One pair per line. Keys are `[A-Za-z0-9_.-]+`; values run to end of line
//! and must not contain newlines. Parsing ignores blank lines, `#` comments
//! and duplicate keys after the first.

use std::fmt;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pairs: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    /// Appends a pair. Newlines in the value are replaced by spaces.
    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) -> &mut Self {
        let key = key.into();
        debug_assert!(valid_key(&key), "bad report key {key:?}");
        let value = value.to_string().replace(['\n', '\r'], " ");
        self.pairs.push((key, value));
        self
    }

    pub fn extend(&mut self, other: &Report) -> &mut Self {
        self.pairs.extend(other.pairs.iter().cloned());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.trim().parse().ok()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn parse(text: &str) -> Self {
        let mut report = Report::new();
        for line in text.lines() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                let k = k.trim();
                if valid_key(k) && report.get(k).is_none() {
                    report.pairs.push((k.to_string(), v.to_string()));
                }
            }
        }
        report
    }
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.pairs {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
