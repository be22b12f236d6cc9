//! Consistency audit of a rating dataset: sample pairs of one developer's
//! ratings, collect two annotators' judgments of whether the pair admits a
//! rational explanation, settle disagreements with a third judgment.
//!
//! Verdict files are append-only JSON lines,
//! `{"pair_id", "annotator_id", "verdict", "timestamp"}`, written and flushed
//! after every answer so an interrupted session resumes where it stopped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{map_score_to_label, CorpusError, Dataset, LikertScore, RatingMatrix, ReadabilityLabel};

#[derive(Debug, Error)]
pub enum ConsistencyError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("pair sampling needs at least 2 snippets, dataset has {0}")]
    TooFewSnippets(usize),
    #[error("pair count must be positive")]
    NoPairs,
    #[error("asked for {requested} distinct pairs but only {available} exist")]
    TooManyUniquePairs { requested: usize, available: usize },
    #[error("pair {pair_id} does not match the dataset: {reason}")]
    InvalidPair { pair_id: u64, reason: String },
    #[error("verdict file {path} is corrupted at line {line}: {reason}")]
    CorruptedState { path: PathBuf, line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("terminal i/o error: {0}")]
    Terminal(#[source] io::Error),
    #[error("annotators covered different pairs; only in first: {only_a:?}, only in second: {only_b:?}")]
    CoverageMismatch { only_a: Vec<u64>, only_b: Vec<u64> },
    #[error("pair {0} has a tiebreak but the annotators did not disagree on it")]
    TiebreakForAgreement(u64),
    #[error("pair {0} has a tiebreak but was never annotated")]
    TiebreakForUnknownPair(u64),
    #[error("pair {pair_id} appears twice in the {file} verdicts")]
    DuplicateVerdict { pair_id: u64, file: &'static str },
    #[error("{0} pairs still need a tiebreak")]
    Pending(usize),
    #[error("no annotation records")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub pair_id: u64,
    pub snippet_x: String,
    pub snippet_y: String,
    pub developer_id: String,
    pub label_x: ReadabilityLabel,
    pub label_y: ReadabilityLabel,
    pub score_x: LikertScore,
    pub score_y: LikertScore,
}

/// Draws `n` pairs: two distinct snippets uniformly, then one developer
/// uniformly. Pairs repeat across draws unless `unique` is set, in which case
/// no unordered snippet pair is drawn twice. Pair ids count from 1.
pub fn sample_pairs(
    matrix: &RatingMatrix,
    n: usize,
    seed: u64,
    unique: bool,
) -> Result<Vec<PairSample>, ConsistencyError> {
    matrix.require_dense()?;
    let s = matrix.snippet_count();
    if s < 2 {
        return Err(ConsistencyError::TooFewSnippets(s));
    }
    if n == 0 {
        return Err(ConsistencyError::NoPairs);
    }
    let available = s * (s - 1) / 2;
    if unique && n > available {
        return Err(ConsistencyError::TooManyUniquePairs {
            requested: n,
            available,
        });
    }
    let devs = matrix.developer_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = BTreeSet::new();
    let mut pairs = Vec::with_capacity(n);
    while pairs.len() < n {
        let x = rng.random_range(0..s);
        let mut y = rng.random_range(0..s - 1);
        if y >= x {
            y += 1;
        }
        let d = rng.random_range(0..devs);
        if unique && !used.insert((x.min(y), x.max(y))) {
            continue;
        }
        let score_x = matrix.score_at(x, d).expect("dense");
        let score_y = matrix.score_at(y, d).expect("dense");
        pairs.push(PairSample {
            pair_id: pairs.len() as u64 + 1,
            snippet_x: matrix.snippet_ids()[x].clone(),
            snippet_y: matrix.snippet_ids()[y].clone(),
            developer_id: matrix.developer_ids()[d].clone(),
            label_x: map_score_to_label(score_x),
            label_y: map_score_to_label(score_y),
            score_x,
            score_y,
        });
    }
    Ok(pairs)
}

/// Checks every pair against the matrix: distinct snippets, stored scores
/// and derived labels, unique ids.
pub fn validate_pairs(pairs: &[PairSample], matrix: &RatingMatrix) -> Result<(), ConsistencyError> {
    let mut ids = BTreeSet::new();
    for p in pairs {
        let bad = |reason: String| ConsistencyError::InvalidPair {
            pair_id: p.pair_id,
            reason,
        };
        if !ids.insert(p.pair_id) {
            return Err(bad("duplicate pair id".into()));
        }
        if p.snippet_x == p.snippet_y {
            return Err(bad("both sides are the same snippet".into()));
        }
        for (snippet, score, label) in [
            (&p.snippet_x, p.score_x, p.label_x),
            (&p.snippet_y, p.score_y, p.label_y),
        ] {
            let stored = matrix
                .score(snippet, &p.developer_id)
                .map_err(|e| bad(e.to_string()))?
                .ok_or_else(|| bad(format!("{} did not rate {snippet}", p.developer_id)))?;
            if stored != score || map_score_to_label(score) != label {
                return Err(bad(format!("score or label for {snippet} differs from the dataset")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

/// One line of a verdict file. `Skip` records that the pair was seen and
/// deliberately left unjudged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Consistent,
    Inconsistent,
    Skip,
}

impl Answer {
    pub fn verdict(self) -> Option<Verdict> {
        match self {
            Answer::Consistent => Some(Verdict::Consistent),
            Answer::Inconsistent => Some(Verdict::Inconsistent),
            Answer::Skip => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub pair_id: u64,
    pub annotator_id: String,
    pub verdict: Answer,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Reads a verdict file; a missing file is an empty session. Rejects
/// unparseable lines and repeated pair ids.
pub fn load_verdicts(path: impl AsRef<Path>) -> Result<Vec<VerdictEntry>, ConsistencyError> {
    let path = path.as_ref();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(ConsistencyError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let corrupt = |line: usize, reason: String| ConsistencyError::CorruptedState {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: VerdictEntry = serde_json::from_str(line).map_err(|e| corrupt(i + 1, e.to_string()))?;
        if !seen.insert(entry.pair_id) {
            return Err(corrupt(i + 1, format!("pair {} answered twice", entry.pair_id)));
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionSummary {
    pub answered_now: usize,
    pub done: usize,
    pub remaining: usize,
    pub quit: bool,
}

enum Input {
    Answer(Answer),
    Quit,
}

fn parse_input(line: &str) -> Option<Input> {
    match line.trim().to_ascii_lowercase().as_str() {
        "c" | "y" | "consistent" => Some(Input::Answer(Answer::Consistent)),
        "i" | "n" | "inconsistent" => Some(Input::Answer(Answer::Inconsistent)),
        "s" | "skip" => Some(Input::Answer(Answer::Skip)),
        "q" | "quit" => Some(Input::Quit),
        _ => None,
    }
}

/// Interactive annotation loop over the pairs not yet in `verdict_path`.
/// Each answer is appended and flushed before the next pair is shown.
/// End of input behaves like quitting.
pub fn annotate_session<R: BufRead, W: Write>(
    pairs: &[PairSample],
    dataset: &Dataset,
    annotator_id: &str,
    verdict_path: impl AsRef<Path>,
    mut input: R,
    mut output: W,
    clock: &dyn Fn() -> u64,
) -> Result<SessionSummary, ConsistencyError> {
    if pairs.is_empty() {
        return Err(ConsistencyError::NoPairs);
    }
    let path = verdict_path.as_ref();
    let known: BTreeSet<u64> = pairs.iter().map(|p| p.pair_id).collect();
    let existing = load_verdicts(path)?;
    for (i, e) in existing.iter().enumerate() {
        let reason = if e.annotator_id != annotator_id {
            format!("written by annotator {}", e.annotator_id)
        } else if !known.contains(&e.pair_id) {
            format!("pair {} is not in the sample", e.pair_id)
        } else {
            continue;
        };
        return Err(ConsistencyError::CorruptedState {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        });
    }
    let done: BTreeSet<u64> = existing.iter().map(|e| e.pair_id).collect();
    let todo: Vec<&PairSample> = pairs.iter().filter(|p| !done.contains(&p.pair_id)).collect();
    let io_err = |source| ConsistencyError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    let term = ConsistencyError::Terminal;
    let mut summary = SessionSummary {
        answered_now: 0,
        done: done.len(),
        remaining: todo.len(),
        quit: false,
    };
    'pairs: for pair in todo {
        show_pair(&mut output, pair, dataset, summary.done + 1, pairs.len()).map_err(term)?;
        loop {
            write!(output, "[c]onsistent / [i]nconsistent / [s]kip / [q]uit > ").map_err(term)?;
            output.flush().map_err(term)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(term)? == 0 {
                summary.quit = true;
                break 'pairs;
            }
            match parse_input(&line) {
                None => writeln!(output, "unrecognized answer `{}`", line.trim()).map_err(term)?,
                Some(Input::Quit) => {
                    summary.quit = true;
                    break 'pairs;
                }
                Some(Input::Answer(answer)) => {
                    let entry = VerdictEntry {
                        pair_id: pair.pair_id,
                        annotator_id: annotator_id.to_string(),
                        verdict: answer,
                        timestamp: clock(),
                    };
                    let mut json = serde_json::to_string(&entry).expect("verdict serializes");
                    json.push('\n');
                    file.write_all(json.as_bytes()).map_err(io_err)?;
                    file.flush().map_err(io_err)?;
                    summary.answered_now += 1;
                    summary.done += 1;
                    summary.remaining -= 1;
                    break;
                }
            }
        }
    }
    writeln!(output, "{} of {} pairs answered", summary.done, pairs.len()).map_err(term)?;
    Ok(summary)
}

fn show_pair<W: Write>(
    out: &mut W,
    pair: &PairSample,
    dataset: &Dataset,
    ordinal: usize,
    total: usize,
) -> io::Result<()> {
    writeln!(
        out,
        "\n=== pair {ordinal}/{total} (id {}), developer {} ===",
        pair.pair_id, pair.developer_id
    )?;
    for (id, label, score) in [
        (&pair.snippet_x, pair.label_x, pair.score_x),
        (&pair.snippet_y, pair.label_y, pair.score_y),
    ] {
        let source = dataset
            .snippet(id)
            .map_or("<source unavailable>", |s| s.source.as_str());
        writeln!(out, "--- {id}: rated {label} (score {}) ---", score.value())?;
        writeln!(out, "{}", source.trim_end())?;
    }
    Ok(())
}

/// Current time as seconds since the Unix epoch.
pub fn system_clock() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: u64,
    pub verdict_a: Option<Verdict>,
    pub verdict_b: Option<Verdict>,
    pub tiebreak: Option<Verdict>,
    /// Shared verdict when both annotators gave the same one, else the tiebreak.
    #[serde(rename = "final")]
    pub final_verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeOutcome {
    pub records: Vec<AnnotationRecord>,
    /// Pairs without a shared verdict, resolved or not.
    pub disagreements: Vec<u64>,
    /// Disagreements still lacking a tiebreak.
    pub pending: Vec<u64>,
}

fn index(entries: &[VerdictEntry], file: &'static str) -> Result<BTreeMap<u64, Option<Verdict>>, ConsistencyError> {
    let mut map = BTreeMap::new();
    for e in entries {
        if map.insert(e.pair_id, e.verdict.verdict()).is_some() {
            return Err(ConsistencyError::DuplicateVerdict {
                pair_id: e.pair_id,
                file,
            });
        }
    }
    Ok(map)
}

pub fn merge_with_tiebreak(
    verdicts_a: &[VerdictEntry],
    verdicts_b: &[VerdictEntry],
    tiebreaks: &[VerdictEntry],
) -> Result<MergeOutcome, ConsistencyError> {
    let a = index(verdicts_a, "first")?;
    let b = index(verdicts_b, "second")?;
    let t = index(tiebreaks, "tiebreak")?;
    let only_a: Vec<u64> = a.keys().filter(|k| !b.contains_key(k)).copied().collect();
    let only_b: Vec<u64> = b.keys().filter(|k| !a.contains_key(k)).copied().collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(ConsistencyError::CoverageMismatch { only_a, only_b });
    }
    if let Some(id) = t.keys().find(|k| !a.contains_key(k)) {
        return Err(ConsistencyError::TiebreakForUnknownPair(*id));
    }
    let mut out = MergeOutcome {
        records: Vec::with_capacity(a.len()),
        disagreements: Vec::new(),
        pending: Vec::new(),
    };
    for (&pair_id, &va) in &a {
        let vb = b[&pair_id];
        let tiebreak = t.get(&pair_id).copied().flatten();
        let final_verdict = if va.is_some() && va == vb {
            if t.contains_key(&pair_id) {
                return Err(ConsistencyError::TiebreakForAgreement(pair_id));
            }
            va
        } else {
            out.disagreements.push(pair_id);
            if tiebreak.is_none() {
                out.pending.push(pair_id);
            }
            tiebreak
        };
        out.records.push(AnnotationRecord {
            pair_id,
            verdict_a: va,
            verdict_b: vb,
            tiebreak,
            final_verdict,
        });
    }
    Ok(out)
}

/// Percentage of records whose final verdict is inconsistent.
pub fn inconsistency_rate(records: &[AnnotationRecord]) -> Result<f64, ConsistencyError> {
    if records.is_empty() {
        return Err(ConsistencyError::Empty);
    }
    let pending = records.iter().filter(|r| r.final_verdict.is_none()).count();
    if pending > 0 {
        return Err(ConsistencyError::Pending(pending));
    }
    let bad = records
        .iter()
        .filter(|r| r.final_verdict == Some(Verdict::Inconsistent))
        .count();
    Ok(100.0 * bad as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub pairs: usize,
    pub consistent: usize,
    pub inconsistent: usize,
    pub inconsistency_rate_percent: f64,
    pub disagreement_count: usize,
    pub disagreements: Vec<u64>,
}

pub fn consistency_report(merged: &MergeOutcome) -> Result<ConsistencyReport, ConsistencyError> {
    let rate = inconsistency_rate(&merged.records)?;
    let count = |v| merged.records.iter().filter(|r| r.final_verdict == Some(v)).count();
    Ok(ConsistencyReport {
        pairs: merged.records.len(),
        consistent: count(Verdict::Consistent),
        inconsistent: count(Verdict::Inconsistent),
        inconsistency_rate_percent: rate,
        disagreement_count: merged.disagreements.len(),
        disagreements: merged.disagreements.clone(),
    })
}
