//! Plain-text key/value documents.
//!
//! One `key = value` per line. Keys are dotted identifiers
//! (`radar.carrier_hz`, `track.0.range`). Values are either a bare scalar or a
//! bracketed, comma-separated list of scalars (`[0.5, 0, 1, 20, 0.3]`). `#`
//! starts a comment that runs to the end of the line. Duplicate keys are an
//! error.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: Value,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Document {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && !key.starts_with('.')
        && !key.ends_with('.')
        && !key.contains("..")
        && key
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-')
}

fn valid_scalar(s: &str) -> bool {
    !s.is_empty()
        && !s
            .chars()
            .any(|c| c == '[' || c == ']' || c == ',' || c == '=' || c.is_control())
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(parse_err(line, format!("invalid key `{key}`")));
            }
            let value = value.trim();
            let value = if let Some(inner) = value.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line, "unterminated list"))?;
                let inner = inner.trim();
                let items: Vec<String> = if inner.is_empty() {
                    Vec::new()
                } else {
                    inner.split(',').map(|s| s.trim().to_string()).collect()
                };
                if let Some(bad) = items.iter().find(|s| !valid_scalar(s)) {
                    return Err(parse_err(line, format!("invalid list item `{bad}`")));
                }
                Value::List(items)
            } else {
                if !valid_scalar(value) {
                    return Err(parse_err(line, format!("invalid value `{value}`")));
                }
                Value::Scalar(value.to_string())
            };
            doc.insert(key.to_string(), value, line)?;
        }
        Ok(doc)
    }

    fn insert(&mut self, key: String, value: Value, line: usize) -> Result<()> {
        if self.index.contains_key(&key) {
            return Err(parse_err(line, format!("duplicate key `{key}`")));
        }
        self.index.insert(key.clone(), self.entries.len());
        self.entries.push(Entry { key, value, line });
        Ok(())
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.index.get(key).map(|&i| &self.entries[i])
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Typed, consuming view of a [`Document`]. Keys that are never read are
/// reported by [`Reader::finish`].
pub struct Reader<'a> {
    doc: &'a Document,
    used: BTreeSet<&'a str>,
}

impl<'a> Reader<'a> {
    pub fn new(doc: &'a Document) -> Self {
        Self {
            doc,
            used: BTreeSet::new(),
        }
    }

    fn entry(&mut self, key: &str) -> Option<&'a Entry> {
        let e = self.doc.get(key)?;
        self.used.insert(e.key.as_str());
        Some(e)
    }

    pub fn has(&self, key: &str) -> bool {
        self.doc.get(key).is_some()
    }

    pub fn scalar<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        match &e.value {
            Value::Scalar(s) => s
                .parse()
                .map(Some)
                .map_err(|_| parse_err(e.line, format!("cannot parse `{s}` for `{key}`"))),
            Value::List(_) => Err(parse_err(e.line, format!("`{key}` expects a scalar"))),
        }
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.scalar(key)?
            .ok_or_else(|| parse_err(0, format!("missing required key `{key}`")))
    }

    pub fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        match &e.value {
            Value::List(items) => items
                .iter()
                .map(|s| {
                    s.parse()
                        .map_err(|_| parse_err(e.line, format!("cannot parse `{s}` in `{key}`")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
            Value::Scalar(_) => Err(parse_err(e.line, format!("`{key}` expects a list"))),
        }
    }

    /// Fails on the first key that was never read.
    pub fn finish(self) -> Result<()> {
        for e in self.doc.entries() {
            if !self.used.contains(e.key.as_str()) {
                return Err(parse_err(e.line, format!("unknown key `{}`", e.key)));
            }
        }
        Ok(())
    }
}

/// Accumulates `key = value` lines in insertion order.
#[derive(Debug, Default)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(self.out, "# {text}");
        self
    }

    pub fn blank(&mut self) -> &mut Self {
        self.out.push('\n');
        self
    }

    pub fn scalar(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.out, "{key} = {value}");
        self
    }

    pub fn list<T: std::fmt::Display>(&mut self, key: &str, values: &[T]) -> &mut Self {
        let items: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(self.out, "{key} = [{}]", items.join(", "));
        self
    }

    pub fn finish(self) -> String {
        self.out
    }
}
