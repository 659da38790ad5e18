//! `key=value` reports and CSV tables.

use std::fmt::{self, Display};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    entries: Vec<(String, String)>,
}

impl Section {
    /// A section whose first line is `section=<name>`.
    pub fn new(name: &str) -> Self {
        Self::default().kv("section", name)
    }

    pub fn kv(mut self, key: &str, value: impl Display) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        debug_assert!(!key.contains('='), "keys must not contain '='");
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub sections: Vec<Section>,
}

impl Report {
    pub fn push(&mut self, section: Section) {
        self.sections.push(section);
    }

    /// Parses rendered report text back into sections.
    pub fn parse(text: &str) -> Self {
        let mut report = Self::default();
        let mut cur = Section::default();
        for line in text.lines() {
            if line.trim().is_empty() {
                if !cur.entries.is_empty() {
                    report.sections.push(std::mem::take(&mut cur));
                }
            } else if let Some((k, v)) = line.split_once('=') {
                cur.push(k, v);
            }
        }
        if !cur.entries.is_empty() {
            report.sections.push(cur);
        }
        report
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.get("section") == Some(name))
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            for (k, v) in &s.entries {
                writeln!(f, "{k}={v}")?;
            }
        }
        Ok(())
    }
}

/// CSV with a header row; cells must not contain commas or newlines.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }
}

impl Display for Csv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(f, "{}", r.join(","))?;
        }
        Ok(())
    }
}
