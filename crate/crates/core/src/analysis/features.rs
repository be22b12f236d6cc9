//! The fixed readability feature catalog.
//!
//! Sixteen features covering line geometry, identifier statistics, token
//! densities and two information measures (Halstead volume, token entropy).
//! Everything is computed from the token stream, so non-compilable fragments
//! are handled the same way as complete methods. Values are raw; scaling is
//! the classifier's job.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::tokenizer::{tokenize, TokenKind, TokenStream};
use super::AnalysisError;
use crate::corpus::{Dataset, Snippet};

pub const FEATURE_SCHEMA_VERSION: &str = "readlab-features/1";

pub const FEATURE_NAMES: [&str; 16] = [
    "loc",
    "avg_line_length",
    "max_line_length",
    "blank_line_ratio",
    "comment_line_ratio",
    "indentation_mean",
    "indentation_stddev",
    "identifiers_per_line_avg",
    "identifier_length_avg",
    "identifier_length_max",
    "keyword_density",
    "operator_density",
    "numeric_literal_density",
    "branch_keyword_count_per_line",
    "halstead_volume",
    "token_entropy",
];

const BRANCH_KEYWORDS: &[&str] = &["if", "else", "switch", "case", "for", "while", "do", "catch"];

const TAB_WIDTH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema_version: String,
    values: Vec<f64>,
}

impl FeatureVector {
    /// Values must follow [`FEATURE_NAMES`] order.
    pub fn from_values(values: Vec<f64>) -> Self {
        assert_eq!(values.len(), FEATURE_NAMES.len(), "feature vector length");
        FeatureVector {
            schema_version: FEATURE_SCHEMA_VERSION.to_string(),
            values,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES.iter().copied().zip(self.values.iter().copied())
    }
}

fn visual_width(s: &str) -> usize {
    s.chars().map(|c| if c == '\t' { TAB_WIDTH } else { 1 }).sum()
}

fn indentation(line: &str) -> usize {
    visual_width(&line[..line.len() - line.trim_start().len()])
}

fn mean_and_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Shannon entropy (bits) of the non-comment token texts.
pub fn token_entropy(tokens: &TokenStream) -> Result<f64, AnalysisError> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    let mut total = 0usize;
    for t in tokens.code_tokens() {
        *freq.entry(t.text.as_str()).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(AnalysisError::NoCodeTokens);
    }
    // Sum in a fixed order so the result does not depend on hash iteration.
    let mut counts: Vec<usize> = freq.into_values().collect();
    counts.sort_unstable();
    let n = total as f64;
    let h: f64 = counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    Ok(h.max(0.0))
}

/// `N · log2(η)` with operands = identifiers and literals, operators =
/// keywords, operators and separators.
pub fn halstead_volume(tokens: &TokenStream) -> Result<f64, AnalysisError> {
    let mut operators = BTreeSet::new();
    let mut operands = BTreeSet::new();
    let mut length = 0usize;
    for t in tokens.code_tokens() {
        length += 1;
        if t.kind.is_operand() {
            operands.insert(t.text.as_str());
        } else {
            operators.insert(t.text.as_str());
        }
    }
    if length == 0 {
        return Err(AnalysisError::NoCodeTokens);
    }
    let vocabulary = operators.len() + operands.len();
    Ok(length as f64 * (vocabulary as f64).log2())
}

fn features_of(stream: &TokenStream) -> FeatureVector {
    let nonblank: Vec<&str> = stream
        .lines
        .iter()
        .map(String::as_str)
        .filter(|l| !l.trim().is_empty())
        .collect();
    let loc = nonblank.len();
    let blank = stream.line_count - loc.min(stream.line_count);

    let widths: Vec<f64> = nonblank.iter().map(|l| visual_width(l.trim_end()) as f64).collect();
    let (avg_line_length, _) = mean_and_stddev(&widths);
    let max_line_length = widths.iter().copied().fold(0.0, f64::max);

    let indents: Vec<f64> = nonblank.iter().map(|l| indentation(l) as f64).collect();
    let (indentation_mean, indentation_stddev) = mean_and_stddev(&indents);

    let mut comment_lines = BTreeSet::new();
    for t in stream.tokens.iter().filter(|t| t.kind == TokenKind::Comment) {
        let span = t.text.matches('\n').count();
        comment_lines.extend(t.line..=t.line + span);
    }

    let mut code_tokens = 0usize;
    let mut keywords = 0usize;
    let mut operators = 0usize;
    let mut numerics = 0usize;
    let mut branches = 0usize;
    let mut ident_lengths = Vec::new();
    for t in stream.code_tokens() {
        code_tokens += 1;
        match t.kind {
            TokenKind::Keyword => {
                keywords += 1;
                if BRANCH_KEYWORDS.contains(&t.text.as_str()) {
                    branches += 1;
                }
            }
            TokenKind::Operator => operators += 1,
            TokenKind::NumericLiteral => numerics += 1,
            TokenKind::Identifier => ident_lengths.push(t.text.chars().count() as f64),
            _ => {}
        }
    }
    let (identifier_length_avg, _) = mean_and_stddev(&ident_lengths);
    let identifier_length_max = ident_lengths.iter().copied().fold(0.0, f64::max);

    let halstead = halstead_volume(stream).unwrap_or(0.0);
    let entropy = token_entropy(stream).unwrap_or(0.0);

    FeatureVector::from_values(vec![
        loc as f64,
        avg_line_length,
        max_line_length,
        ratio(blank, stream.line_count),
        ratio(comment_lines.len(), stream.line_count),
        indentation_mean,
        indentation_stddev,
        ratio(ident_lengths.len(), loc),
        identifier_length_avg,
        identifier_length_max,
        ratio(keywords, code_tokens),
        ratio(operators, code_tokens),
        ratio(numerics, code_tokens),
        ratio(branches, loc),
        halstead,
        entropy,
    ])
}

/// Computes the catalog for one snippet. Comment-only snippets get zero
/// Halstead volume and entropy rather than an error.
pub fn extract_features(snippet: &Snippet) -> Result<FeatureVector, AnalysisError> {
    let stream = tokenize(&snippet.source).map_err(|e| AnalysisError::Snippet {
        id: snippet.id.clone(),
        source: Box::new(e),
    })?;
    Ok(features_of(&stream))
}

/// Features for every snippet, aligned with `dataset.matrix.snippet_ids()`.
pub fn feature_table(dataset: &Dataset) -> Result<Vec<FeatureVector>, AnalysisError> {
    dataset.snippets().iter().map(extract_features).collect()
}

/// `snippet_id,<feature names>` with six decimals per value.
pub fn features_csv(dataset: &Dataset, table: &[FeatureVector]) -> String {
    let mut out = String::from("snippet_id");
    for name in FEATURE_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (snippet, fv) in dataset.snippets().iter().zip(table) {
        out.push_str(&snippet.id);
        for v in fv.values() {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}
