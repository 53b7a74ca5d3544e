//! Linguistic likelihood expressions and their probability mappings.
//!
//! The expression set and its human-survey probabilities ship as an editable
//! configuration file (one `expression<TAB>probability` pair per line), not
//! as hard-coded truth.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered mapping from likelihood expression to probability.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpressionMap {
    entries: BTreeMap<String, f64>,
}

impl ExpressionMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, expression: String, probability: f64) {
        self.entries.insert(expression, probability);
    }

    pub fn get(&self, expression: &str) -> Option<f64> {
        self.entries.get(expression).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Parse the `expression<TAB>probability` line format. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (expr, prob) = line.split_once('\t').ok_or_else(|| Error::Malformed {
                line: lineno + 1,
                message: "expected expression<TAB>probability".into(),
            })?;
            let prob: f64 = prob.trim().parse().map_err(|_| Error::Malformed {
                line: lineno + 1,
                message: format!("unparseable probability {prob:?}"),
            })?;
            if !(0.0..=1.0).contains(&prob) || !prob.is_finite() {
                return Err(Error::Malformed {
                    line: lineno + 1,
                    message: format!("probability {prob} outside [0,1]"),
                });
            }
            if expr.trim().is_empty() {
                return Err(Error::Malformed {
                    line: lineno + 1,
                    message: "empty expression".into(),
                });
            }
            map.insert(expr.trim().to_string(), prob);
        }
        if map.is_empty() {
            return Err(Error::Config("expression map file has no entries".into()));
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_format(&self) -> String {
        let mut out = String::new();
        for (expr, prob) in self.iter() {
            out.push_str(&format!("{expr}\t{prob}\n"));
        }
        out
    }
}

/// An expression list ordered from most to least confident, paired with a
/// probability map.
#[derive(Debug, Clone)]
pub struct ExpressionSet {
    pub expressions: Vec<String>,
    pub probabilities: ExpressionMap,
}

impl ExpressionSet {
    /// Load from the TSV format; list order follows file order.
    pub fn parse(text: &str) -> Result<Self> {
        let map = ExpressionMap::parse(text)?;
        let mut expressions = Vec::new();
        for line in text.lines() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((expr, _)) = line.split_once('\t') {
                let expr = expr.trim().to_string();
                if !expressions.contains(&expr) {
                    expressions.push(expr);
                }
            }
        }
        Ok(Self {
            expressions,
            probabilities: map,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The comma-separated list substituted into ${EXPRESSION_LIST}.
    pub fn prompt_list(&self) -> String {
        self.expressions.join(", ")
    }
}

/// The default 14-expression set, spanning "Almost certain" down to
/// "Almost no chance", with survey-derived probabilities. Shipped as
/// `configs/expressions_human.tsv`; this copy backs tests and acts as the
/// fallback when no file is configured.
pub const DEFAULT_EXPRESSIONS_TSV: &str = "\
Almost certain\t0.95
Highly likely\t0.90
Very likely\t0.85
Probable\t0.75
Likely\t0.70
Somewhat likely\t0.60
About even\t0.50
Somewhat unlikely\t0.40
Unlikely\t0.30
Not likely\t0.25
Doubtful\t0.20
Very unlikely\t0.10
Highly unlikely\t0.05
Almost no chance\t0.02
";

impl Default for ExpressionSet {
    fn default() -> Self {
        Self::parse(DEFAULT_EXPRESSIONS_TSV).expect("default expression set parses")
    }
}
