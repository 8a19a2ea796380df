//! Line-oriented report formats.
//!
//! Every line is `key: value` and keys always appear in the same order, so
//! reports diff cleanly. Lists are space separated (an empty list leaves
//! nothing after the colon), absent values are written as `-`, and reals use
//! the shortest decimal form that parses back to the same `f64`.
//!
//! Prune/importance report:
//!
//! ```text
//! format: catp-report/1
//! method: catp
//! layers: all
//! weighted: false
//! ratio: 0.5
//! keep_count: 2
//! importance: 2 4 3
//! kept: 1 2
//! pruned: 0
//! input: cross.attn
//! weights_input: -
//! seed: -
//! tool_version: 0.1.0
//! ```
//!
//! Comparison report (`compare` and `sweep`):
//!
//! ```text
//! format: catp-comparison/1
//! command: sweep
//! ratio: 0.5
//! observables: kept-set jaccard and retained importance mass (proxies; accuracy not measured)
//! entries: catp[single:0] catp[all]
//! kept.0: 0 3
//! kept.1: 0 3
//! jaccard.0: 1 1
//! jaccard.1: 1 1
//! retained_mass: 0.55 0.6
//! reference: 1
//! reference_mass: 0.6 0.6
//! cross_input: cross.attn
//! self_input: -
//! weights_input: -
//! emb_input: -
//! seed: -
//! tool_version: 0.1.0
//! ```

use std::fmt::{self, Display, Write as _};
use std::str::FromStr;

use crate::analysis::{Comparison, Method};
use crate::error::{CatpError, Result};
use crate::layers::LayerSelection;

pub const REPORT_FORMAT: &str = "catp-report/1";
pub const COMPARISON_FORMAT: &str = "catp-comparison/1";
pub const OBSERVABLES: &str =
    "kept-set jaccard and retained importance mass (proxies; accuracy not measured)";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub method: Method,
    /// `None` for methods that ignore layers (l2).
    pub layers: Option<LayerSelection>,
    pub weighted: bool,
    pub ratio: Option<f64>,
    pub keep_count: Option<usize>,
    pub importance: Vec<f64>,
    pub kept: Vec<usize>,
    pub pruned: Vec<usize>,
    pub input: String,
    pub weights_input: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub command: String,
    pub ratio: f64,
    pub observables: String,
    pub entries: Vec<String>,
    pub kept: Vec<Vec<usize>>,
    pub jaccard: Vec<Vec<f64>>,
    pub retained_mass: Vec<f64>,
    pub reference: usize,
    pub reference_mass: Vec<f64>,
    pub cross_input: Option<String>,
    pub self_input: Option<String>,
    pub weights_input: Option<String>,
    pub emb_input: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl ComparisonReport {
    pub fn from_comparison(command: &str, c: &Comparison) -> Self {
        Self {
            command: command.to_string(),
            ratio: c.ratio,
            observables: OBSERVABLES.to_string(),
            entries: c.entries.iter().map(|e| e.label.clone()).collect(),
            kept: c.entries.iter().map(|e| e.decision.kept.clone()).collect(),
            jaccard: c.jaccard.clone(),
            retained_mass: c.retained_mass.clone(),
            reference: c.reference,
            reference_mass: c.reference_mass.clone(),
            cross_input: None,
            self_input: None,
            weights_input: None,
            emb_input: None,
            seed: None,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

fn join<T: Display>(items: &[T]) -> String {
    let mut s = String::new();
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x}");
    }
    s
}

fn opt<T: Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "-".to_string(),
    }
}

struct Writer(String);

impl Writer {
    fn line(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        if value.is_empty() {
            let _ = writeln!(self.0, "{key}:");
        } else {
            let _ = writeln!(self.0, "{key}: {value}");
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut w = Writer(String::new());
        w.line("format", REPORT_FORMAT);
        w.line("method", self.method);
        w.line("layers", opt(&self.layers));
        w.line("weighted", self.weighted);
        w.line("ratio", opt(&self.ratio));
        w.line("keep_count", opt(&self.keep_count));
        w.line("importance", join(&self.importance));
        w.line("kept", join(&self.kept));
        w.line("pruned", join(&self.pruned));
        w.line("input", &self.input);
        w.line("weights_input", opt(&self.weights_input));
        w.line("seed", opt(&self.seed));
        w.line("tool_version", &self.tool_version);
        f.write_str(&w.0)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut w = Writer(String::new());
        w.line("format", COMPARISON_FORMAT);
        w.line("command", &self.command);
        w.line("ratio", self.ratio);
        w.line("observables", &self.observables);
        w.line("entries", join(&self.entries));
        for (i, k) in self.kept.iter().enumerate() {
            w.line(&format!("kept.{i}"), join(k));
        }
        for (i, row) in self.jaccard.iter().enumerate() {
            w.line(&format!("jaccard.{i}"), join(row));
        }
        w.line("retained_mass", join(&self.retained_mass));
        w.line("reference", self.reference);
        w.line("reference_mass", join(&self.reference_mass));
        w.line("cross_input", opt(&self.cross_input));
        w.line("self_input", opt(&self.self_input));
        w.line("weights_input", opt(&self.weights_input));
        w.line("emb_input", opt(&self.emb_input));
        w.line("seed", opt(&self.seed));
        w.line("tool_version", &self.tool_version);
        f.write_str(&w.0)
    }
}

struct Reader<'a> {
    lines: std::str::Lines<'a>,
}

fn malformed(msg: impl Into<String>) -> CatpError {
    CatpError::MalformedReport(msg.into())
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines(),
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| malformed(format!("missing {key:?}")))?;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(':'))
            .ok_or_else(|| malformed(format!("expected {key:?}, found {line:?}")))?;
        Ok(rest.strip_prefix(' ').unwrap_or(rest))
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| malformed(format!("bad value for {key}: {v:?}")))
    }

    fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.field(key)? {
            "-" => Ok(None),
            v => v
                .parse()
                .map(Some)
                .map_err(|_| malformed(format!("bad value for {key}: {v:?}"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        self.field(key)?
            .split_whitespace()
            .map(|x| {
                x.parse()
                    .map_err(|_| malformed(format!("bad item in {key}: {x:?}")))
            })
            .collect()
    }

    fn finish(mut self) -> Result<()> {
        match self.lines.next() {
            None => Ok(()),
            Some(extra) => Err(malformed(format!("unexpected line {extra:?}"))),
        }
    }
}

impl FromStr for Report {
    type Err = CatpError;

    fn from_str(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let format = r.field("format")?;
        if format != REPORT_FORMAT {
            return Err(malformed(format!("unknown format {format:?}")));
        }
        let method = r
            .field("method")?
            .parse()
            .map_err(|e: String| malformed(e))?;
        let report = Report {
            method,
            layers: r.optional("layers")?,
            weighted: r.parsed("weighted")?,
            ratio: r.optional("ratio")?,
            keep_count: r.optional("keep_count")?,
            importance: r.list("importance")?,
            kept: r.list("kept")?,
            pruned: r.list("pruned")?,
            input: r.field("input")?.to_string(),
            weights_input: r.optional("weights_input")?,
            seed: r.optional("seed")?,
            tool_version: r.field("tool_version")?.to_string(),
        };
        r.finish()?;
        Ok(report)
    }
}

impl FromStr for ComparisonReport {
    type Err = CatpError;

    fn from_str(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let format = r.field("format")?;
        if format != COMPARISON_FORMAT {
            return Err(malformed(format!("unknown format {format:?}")));
        }
        let command = r.field("command")?.to_string();
        let ratio = r.parsed("ratio")?;
        let observables = r.field("observables")?.to_string();
        let entries: Vec<String> = r.list("entries")?;
        let kept = (0..entries.len())
            .map(|i| r.list(&format!("kept.{i}")))
            .collect::<Result<Vec<_>>>()?;
        let jaccard = (0..entries.len())
            .map(|i| r.list(&format!("jaccard.{i}")))
            .collect::<Result<Vec<_>>>()?;
        let report = ComparisonReport {
            command,
            ratio,
            observables,
            entries,
            kept,
            jaccard,
            retained_mass: r.list("retained_mass")?,
            reference: r.parsed("reference")?,
            reference_mass: r.list("reference_mass")?,
            cross_input: r.optional("cross_input")?,
            self_input: r.optional("self_input")?,
            weights_input: r.optional("weights_input")?,
            emb_input: r.optional("emb_input")?,
            seed: r.optional("seed")?,
            tool_version: r.field("tool_version")?.to_string(),
        };
        r.finish()?;
        Ok(report)
    }
}
