//! Polyline collections in a line-delimited text format:
//!
//! ```text
//! x1,y1 x2,y2 ... | key=value;key=value
//! ```
//!
//! The attribute part is optional. Blank lines and lines starting with `#`
//! are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorLines {
    lines: Vec<Polyline>,
}

impl VectorLines {
    pub fn new(lines: Vec<Polyline>) -> Result<Self> {
        for (i, l) in lines.iter().enumerate() {
            if l.points.len() < 2 {
                return Err(Error::Format(format!(
                    "polyline {i} has fewer than 2 vertices"
                )));
            }
        }
        Ok(Self { lines })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn lines(&self) -> &[Polyline] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (coords, attrs) = match line.split_once('|') {
                Some((c, a)) => (c, Some(a)),
                None => (line, None),
            };
            let mut points = Vec::new();
            for tok in coords.split_whitespace() {
                let (x, y) = tok
                    .split_once(',')
                    .ok_or_else(|| Error::Format(format!("line {}: bad vertex {tok:?}", n + 1)))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Format(format!("line {}: bad number {s:?}", n + 1)))
                };
                points.push((parse(x)?, parse(y)?));
            }
            if points.len() < 2 {
                return Err(Error::Format(format!(
                    "line {}: polyline needs at least 2 vertices",
                    n + 1
                )));
            }
            let mut attributes = BTreeMap::new();
            if let Some(a) = attrs {
                for kv in a.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                    let (k, v) = kv.split_once('=').ok_or_else(|| {
                        Error::Format(format!("line {}: bad attribute {kv:?}", n + 1))
                    })?;
                    attributes.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
            lines.push(Polyline { points, attributes });
        }
        Ok(Self { lines })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            let coords: Vec<String> = l.points.iter().map(|(x, y)| format!("{x},{y}")).collect();
            out.push_str(&coords.join(" "));
            if !l.attributes.is_empty() {
                let attrs: Vec<String> = l
                    .attributes
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                let _ = write!(out, " | {}", attrs.join(";"));
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
