//! Flat text model format.
//!
//! ```text
//! readlab-classifier 1
//! schema <feature schema version>
//! features <F>
//! scale <mean> <stddev>          # F lines; stddev 0 marks a constant feature
//! weights <Label> <w_1> .. <w_F> <bias>   # 3 lines
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a save/load
//! cycle reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::{ClassifierError, ClassifierModel, FeatureScale, CLASSES};
use crate::corpus::ReadabilityLabel;

const MAGIC: &str = "readlab-classifier 1";

pub fn model_to_string(model: &ClassifierModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "schema {}", model.feature_schema_version);
    let _ = writeln!(out, "features {}", model.feature_count());
    for s in &model.normalization {
        let _ = writeln!(out, "scale {} {}", s.mean, s.stddev);
    }
    let width = model.width();
    for (k, label) in ReadabilityLabel::ALL.iter().enumerate() {
        let _ = write!(out, "weights {label}");
        for w in &model.weights[k * width..(k + 1) * width] {
            let _ = write!(out, " {w}");
        }
        out.push('\n');
    }
    out
}

fn format_err(line: usize, message: impl Into<String>) -> ClassifierError {
    ClassifierError::ModelFormat {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, ClassifierError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| format_err(line, format!("`{tok}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format_err(line, "non-finite value"))
    }
}

pub fn model_from_str(text: &str) -> Result<ClassifierModel, ClassifierError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| format_err(0, format!("unexpected end of file, expected {what}")))
    };

    let (n, magic) = next("header")?;
    if magic != MAGIC {
        return Err(format_err(n, format!("expected `{MAGIC}`")));
    }
    let (n, schema_line) = next("schema")?;
    let schema = schema_line
        .strip_prefix("schema ")
        .ok_or_else(|| format_err(n, "expected `schema <version>`"))?
        .to_string();
    let (n, features_line) = next("features")?;
    let features: usize = features_line
        .strip_prefix("features ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format_err(n, "expected `features <count>`"))?;

    let mut normalization = Vec::with_capacity(features);
    for _ in 0..features {
        let (n, line) = next("scale row")?;
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 3 || parts[0] != "scale" {
            return Err(format_err(n, "expected `scale <mean> <stddev>`"));
        }
        let stddev = parse_f64(parts[2], n)?;
        if stddev < 0.0 {
            return Err(format_err(n, "negative stddev"));
        }
        normalization.push(FeatureScale {
            mean: parse_f64(parts[1], n)?,
            stddev,
        });
    }

    let mut weights = Vec::with_capacity(CLASSES * (features + 1));
    for label in ReadabilityLabel::ALL {
        let (n, line) = next("weight row")?;
        let mut parts = line.split(' ');
        if parts.next() != Some("weights") || parts.next() != Some(label.word()) {
            return Err(format_err(n, format!("expected `weights {label} ...`")));
        }
        let row = parts.map(|t| parse_f64(t, n)).collect::<Result<Vec<_>, _>>()?;
        if row.len() != features + 1 {
            return Err(format_err(
                n,
                format!("expected {} weights, got {}", features + 1, row.len()),
            ));
        }
        weights.extend(row);
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(format_err(n, format!("trailing content `{extra}`")));
    }

    Ok(ClassifierModel {
        feature_schema_version: schema,
        normalization,
        weights,
    })
}

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel, ClassifierError> {
    model_from_str(&std::fs::read_to_string(path)?)
}
