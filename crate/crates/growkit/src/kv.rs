//! Flat `key = value` text with `[section]` headers.
//!
//! Lines starting with `#` and blank lines are ignored. Keys are unique per
//! section; values run to the end of the line (surrounding whitespace is
//! trimmed, so values cannot start or end with spaces).

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::Error;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Section { name: name.into(), entries: Vec::new() }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, Error> {
        self.get(key).ok_or_else(|| Error::Format(format!("[{}] is missing `{key}`", self.name)))
    }

    /// Parses `key`, or returns `None` if absent.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse().map_err(|e| Error::Format(format!("[{}] {key} = {v}: {e}", self.name))))
            .transpose()
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T, Error>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?.ok_or_else(|| Error::Format(format!("[{}] is missing `{key}`", self.name)))
    }

    /// Fails on keys outside `known`.
    pub fn expect_keys(&self, known: &[&str]) -> Result<(), Error> {
        match self.entries.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, _)) => Err(Error::Format(format!("[{}] has unknown key `{k}`", self.name))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Section, Error> {
        self.section(name).ok_or_else(|| Error::Format(format!("missing section [{name}]")))
    }

    pub fn expect_sections(&self, known: &[&str]) -> Result<(), Error> {
        match self.sections.iter().find(|s| !known.contains(&s.name.as_str())) {
            Some(s) => Err(Error::Format(format!("unknown section [{}]", s.name))),
            None => Ok(()),
        }
    }
}

impl FromStr for Document {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self, Error> {
        let mut doc = Document::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |m: &str| Error::Format(format!("line {}: {m}: {raw}", i + 1));
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header"))?.trim();
                if name.is_empty() {
                    return Err(err("empty section name"));
                }
                if doc.section(name).is_some() {
                    return Err(err("duplicate section"));
                }
                doc.sections.push(Section::new(name));
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key"));
            }
            let section = doc.sections.last_mut().ok_or_else(|| err("entry before the first section"))?;
            if section.get(k).is_some() {
                return Err(err("duplicate key"));
            }
            section.entries.push((k.to_owned(), v.to_owned()));
        }
        Ok(doc)
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sections {
            writeln!(f, "[{}]", s.name)?;
            for (k, v) in &s.entries {
                f.write_str(k)?;
                f.write_char('=')?;
                f.write_str(v)?;
                f.write_char('\n')?;
            }
        }
        Ok(())
    }
}
