//! Readability datasets as snippet × developer rating matrices.
//!
//! A dataset lives on disk as a directory:
//!
//! ```text
//! manifest.json        {"name": ..., "granularity": "fragment"|"method", "snippets": N, "developers": M}
//! ratings.csv          snippet_id,developer_id,score
//! snippets/<id>.src    raw UTF-8 source, possibly non-compilable
//! ```
//!
//! Scores are kept as the original 1–5 integers. Labels are always derived
//! through [`map_score_to_label`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod synth;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("malformed ratings table at line {line}: {message}")]
    MalformedTable { line: u64, message: String },
    #[error("score {score} outside the 1-5 Likert range")]
    ScoreOutOfRange { score: i64 },
    #[error("rating references unknown snippet `{0}`")]
    UnknownSnippet(String),
    #[error("unknown developer `{0}`")]
    UnknownDeveloper(String),
    #[error("duplicate rating for snippet `{snippet}` by developer `{developer}`")]
    DuplicateCell { snippet: String, developer: String },
    #[error("duplicate snippet id `{0}`")]
    DuplicateSnippet(String),
    #[error("snippet `{0}` has empty source")]
    EmptySource(String),
    #[error("snippet `{0}` has no visible ratings")]
    NoVisibleRatings(String),
    #[error("dataset is sparse; this protocol requires a dense rating matrix")]
    SparseMatrix,
    #[error("dimension mismatch: manifest declares {declared}, found {found}")]
    DimensionMismatch { declared: String, found: String },
}

/// An integer rating on the 1 (highly unreadable) to 5 (highly readable) scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LikertScore(u8);

impl LikertScore {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(value: u8) -> Result<Self, CorpusError> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(LikertScore(value))
        } else {
            Err(CorpusError::ScoreOutOfRange { score: value as i64 })
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = LikertScore> {
        (Self::MIN..=Self::MAX).map(LikertScore)
    }
}

impl TryFrom<u8> for LikertScore {
    type Error = CorpusError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        LikertScore::new(value)
    }
}

impl From<LikertScore> for u8 {
    fn from(s: LikertScore) -> u8 {
        s.0
    }
}

/// Three-way readability label. The derived ordering runs from least to most
/// readable and is the order every tie-break in this crate falls back on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReadabilityLabel {
    Unreadable,
    Neutral,
    Readable,
}

impl ReadabilityLabel {
    pub const ALL: [ReadabilityLabel; 3] = [
        ReadabilityLabel::Unreadable,
        ReadabilityLabel::Neutral,
        ReadabilityLabel::Readable,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn word(self) -> &'static str {
        match self {
            ReadabilityLabel::Unreadable => "Unreadable",
            ReadabilityLabel::Neutral => "Neutral",
            ReadabilityLabel::Readable => "Readable",
        }
    }
}

impl fmt::Display for ReadabilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// {1,2} → Unreadable, 3 → Neutral, {4,5} → Readable.
pub fn map_score_to_label(score: LikertScore) -> ReadabilityLabel {
    match score.value() {
        1 | 2 => ReadabilityLabel::Unreadable,
        3 => ReadabilityLabel::Neutral,
        _ => ReadabilityLabel::Readable,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Fragment,
    Method,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub id: String,
    pub source: String,
    pub granularity: Granularity,
}

/// Snippet × developer grid of optional scores, stored row-major by snippet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    snippet_ids: Vec<String>,
    developer_ids: Vec<String>,
    cells: Vec<Option<LikertScore>>,
    snippet_index: HashMap<String, usize>,
    developer_index: HashMap<String, usize>,
}

impl RatingMatrix {
    /// Builds an empty matrix. Ids must be duplicate-free.
    pub fn new(snippet_ids: Vec<String>, developer_ids: Vec<String>) -> Result<Self, CorpusError> {
        let mut snippet_index = HashMap::with_capacity(snippet_ids.len());
        for (i, id) in snippet_ids.iter().enumerate() {
            if snippet_index.insert(id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateSnippet(id.clone()));
            }
        }
        let mut developer_index = HashMap::with_capacity(developer_ids.len());
        for (i, id) in developer_ids.iter().enumerate() {
            if developer_index.insert(id.clone(), i).is_some() {
                return Err(CorpusError::MalformedTable {
                    line: 0,
                    message: format!("duplicate developer id `{id}`"),
                });
            }
        }
        let cells = vec![None; snippet_ids.len() * developer_ids.len()];
        Ok(RatingMatrix {
            snippet_ids,
            developer_ids,
            cells,
            snippet_index,
            developer_index,
        })
    }

    /// Builds a dense matrix from `scores[snippet][developer]`.
    pub fn from_dense(
        snippet_ids: Vec<String>,
        developer_ids: Vec<String>,
        scores: &[Vec<u8>],
    ) -> Result<Self, CorpusError> {
        let mut m = RatingMatrix::new(snippet_ids, developer_ids)?;
        if scores.len() != m.snippet_count() {
            return Err(CorpusError::DimensionMismatch {
                declared: format!("{} snippets", m.snippet_count()),
                found: format!("{} score rows", scores.len()),
            });
        }
        for (s, row) in scores.iter().enumerate() {
            if row.len() != m.developer_count() {
                return Err(CorpusError::DimensionMismatch {
                    declared: format!("{} developers", m.developer_count()),
                    found: format!("{} scores in row {s}", row.len()),
                });
            }
            for (d, &v) in row.iter().enumerate() {
                m.set_at(s, d, LikertScore::new(v)?)?;
            }
        }
        Ok(m)
    }

    fn set_at(&mut self, s: usize, d: usize, score: LikertScore) -> Result<(), CorpusError> {
        let slot = &mut self.cells[s * self.developer_ids.len() + d];
        if slot.is_some() {
            return Err(CorpusError::DuplicateCell {
                snippet: self.snippet_ids[s].clone(),
                developer: self.developer_ids[d].clone(),
            });
        }
        *slot = Some(score);
        Ok(())
    }

    /// Records one cell; rejects a second score for the same cell.
    pub fn set(&mut self, snippet: &str, developer: &str, score: LikertScore) -> Result<(), CorpusError> {
        let s = self.snippet_position(snippet)?;
        let d = self.developer_position(developer)?;
        self.set_at(s, d, score)
    }

    /// Overwrites one cell, returning the previous score.
    pub fn replace(
        &mut self,
        snippet: &str,
        developer: &str,
        score: LikertScore,
    ) -> Result<Option<LikertScore>, CorpusError> {
        let s = self.snippet_position(snippet)?;
        let d = self.developer_position(developer)?;
        Ok(self.cells[s * self.developer_ids.len() + d].replace(score))
    }

    pub fn snippet_ids(&self) -> &[String] {
        &self.snippet_ids
    }

    pub fn developer_ids(&self) -> &[String] {
        &self.developer_ids
    }

    pub fn snippet_count(&self) -> usize {
        self.snippet_ids.len()
    }

    pub fn developer_count(&self) -> usize {
        self.developer_ids.len()
    }

    pub fn rating_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_dense(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    pub fn require_dense(&self) -> Result<(), CorpusError> {
        if self.is_dense() {
            Ok(())
        } else {
            Err(CorpusError::SparseMatrix)
        }
    }

    pub fn snippet_position(&self, id: &str) -> Result<usize, CorpusError> {
        self.snippet_index
            .get(id)
            .copied()
            .ok_or_else(|| CorpusError::UnknownSnippet(id.to_string()))
    }

    pub fn developer_position(&self, id: &str) -> Result<usize, CorpusError> {
        self.developer_index
            .get(id)
            .copied()
            .ok_or_else(|| CorpusError::UnknownDeveloper(id.to_string()))
    }

    pub fn score_at(&self, snippet: usize, developer: usize) -> Option<LikertScore> {
        self.cells[snippet * self.developer_ids.len() + developer]
    }

    pub fn score(&self, snippet: &str, developer: &str) -> Result<Option<LikertScore>, CorpusError> {
        Ok(self.score_at(self.snippet_position(snippet)?, self.developer_position(developer)?))
    }

    /// `d`'s mapped label on every snippet, `None` where the cell is missing.
    pub fn developer_labels(&self, developer: &str) -> Result<Vec<Option<ReadabilityLabel>>, CorpusError> {
        let d = self.developer_position(developer)?;
        Ok((0..self.snippet_count())
            .map(|s| self.score_at(s, d).map(map_score_to_label))
            .collect())
    }

    pub fn view(&self) -> DatasetView<'_> {
        DatasetView {
            base: self,
            excluded: BTreeSet::new(),
        }
    }

    /// The learning base for `developer`: every column except theirs.
    pub fn remove_developer(&self, developer: &str) -> Result<DatasetView<'_>, CorpusError> {
        self.view().without(developer)
    }
}

/// Read-only window over a [`RatingMatrix`] that hides a set of developer columns.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    base: &'a RatingMatrix,
    excluded: BTreeSet<usize>,
}

impl<'a> DatasetView<'a> {
    pub fn base(&self) -> &'a RatingMatrix {
        self.base
    }

    pub fn without(mut self, developer: &str) -> Result<Self, CorpusError> {
        let d = self.base.developer_position(developer)?;
        self.excluded.insert(d);
        Ok(self)
    }

    pub fn is_visible(&self, developer: usize) -> bool {
        !self.excluded.contains(&developer)
    }

    pub fn visible_developers(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.base
            .developer_ids
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_visible(*i))
            .map(|(_, id)| id.as_str())
    }

    pub fn visible_developer_count(&self) -> usize {
        self.base.developer_count() - self.excluded.len()
    }

    /// Present scores for the snippet at `position`, in developer order.
    pub fn scores_at(&self, position: usize) -> impl Iterator<Item = LikertScore> + '_ {
        (0..self.base.developer_count())
            .filter(|d| self.is_visible(*d))
            .filter_map(move |d| self.base.score_at(position, d))
    }

    pub fn scores(&self, snippet: &str) -> Result<Vec<LikertScore>, CorpusError> {
        let s = self.base.snippet_position(snippet)?;
        Ok(self.scores_at(s).collect())
    }

    pub fn majority_label_at(&self, position: usize) -> Result<ReadabilityLabel, CorpusError> {
        let mut counts = [0usize; 3];
        for score in self.scores_at(position) {
            counts[map_score_to_label(score).index()] += 1;
        }
        mode_of_counts(&counts).ok_or_else(|| CorpusError::NoVisibleRatings(self.base.snippet_ids[position].clone()))
    }

    /// Most frequent mapped label over the visible ratings; ties go to the
    /// less readable label.
    pub fn majority_label(&self, snippet: &str) -> Result<ReadabilityLabel, CorpusError> {
        self.majority_label_at(self.base.snippet_position(snippet)?)
    }

    pub fn variance_at(&self, position: usize) -> Result<ScoreVariance, CorpusError> {
        ScoreVariance::from_scores(self.scores_at(position))
            .ok_or_else(|| CorpusError::NoVisibleRatings(self.base.snippet_ids[position].clone()))
    }

    /// Population variance of the raw visible scores.
    pub fn snippet_score_variance(&self, snippet: &str) -> Result<f64, CorpusError> {
        Ok(self.variance_at(self.base.snippet_position(snippet)?)?.value())
    }
}

/// Mode over per-label counts, ties toward the less readable label.
/// `None` when every count is zero.
pub fn mode_of_counts(counts: &[usize; 3]) -> Option<ReadabilityLabel> {
    let mut best: Option<(usize, ReadabilityLabel)> = None;
    for label in ReadabilityLabel::ALL {
        let c = counts[label.index()];
        if c > 0 && best.is_none_or(|(bc, _)| c > bc) {
            best = Some((c, label));
        }
    }
    best.map(|(_, l)| l)
}

/// Population variance held as the exact fraction `(nΣx² − (Σx)²) / n²`, so
/// equal variances compare equal regardless of floating-point rounding.
#[derive(Debug, Clone, Copy)]
pub struct ScoreVariance {
    numerator: i64,
    denominator: i64,
}

impl ScoreVariance {
    pub fn from_scores(scores: impl IntoIterator<Item = LikertScore>) -> Option<Self> {
        let (mut n, mut sum, mut sum_sq) = (0i64, 0i64, 0i64);
        for s in scores {
            let v = s.value() as i64;
            n += 1;
            sum += v;
            sum_sq += v * v;
        }
        if n == 0 {
            return None;
        }
        Some(ScoreVariance {
            numerator: n * sum_sq - sum * sum,
            denominator: n * n,
        })
    }

    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl PartialEq for ScoreVariance {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for ScoreVariance {}

impl PartialOrd for ScoreVariance {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoreVariance {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let lhs = self.numerator as i128 * other.denominator as i128;
        let rhs = other.numerator as i128 * self.denominator as i128;
        lhs.cmp(&rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub granularity: Granularity,
    pub snippets: usize,
    pub developers: usize,
}

/// A loaded dataset: rating matrix plus the snippet sources it refers to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub granularity: Granularity,
    pub matrix: RatingMatrix,
    snippets: Vec<Snippet>,
}

impl Dataset {
    /// `snippets` must line up with `matrix.snippet_ids()`.
    pub fn new(
        name: impl Into<String>,
        granularity: Granularity,
        matrix: RatingMatrix,
        snippets: Vec<Snippet>,
    ) -> Result<Self, CorpusError> {
        if snippets.len() != matrix.snippet_count() {
            return Err(CorpusError::DimensionMismatch {
                declared: format!("{} snippets in matrix", matrix.snippet_count()),
                found: format!("{} sources", snippets.len()),
            });
        }
        for (snippet, id) in snippets.iter().zip(matrix.snippet_ids()) {
            if &snippet.id != id {
                return Err(CorpusError::UnknownSnippet(snippet.id.clone()));
            }
            if snippet.source.is_empty() {
                return Err(CorpusError::EmptySource(snippet.id.clone()));
            }
        }
        Ok(Dataset {
            name: name.into(),
            granularity,
            matrix,
            snippets,
        })
    }

    pub fn snippets(&self) -> &[Snippet] {
        &self.snippets
    }

    pub fn snippet(&self, id: &str) -> Option<&Snippet> {
        self.matrix.snippet_position(id).ok().map(|i| &self.snippets[i])
    }

    /// SHA-256 over the ratings and sources, used to fingerprint run outputs.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for (s, snippet) in self.snippets.iter().enumerate() {
            h.update(snippet.id.as_bytes());
            h.update([0u8]);
            h.update(snippet.source.as_bytes());
            h.update([0u8]);
            for d in 0..self.matrix.developer_count() {
                h.update([self.matrix.score_at(s, d).map_or(0, LikertScore::value)]);
            }
        }
        for dev in self.matrix.developer_ids() {
            h.update(dev.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            name: self.name.clone(),
            granularity: self.granularity,
            snippets: self.matrix.snippet_count(),
            developers: self.matrix.developer_count(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    snippet_id: String,
    developer_id: String,
    score: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a dataset directory. Snippets are ordered by id; developers by
/// first appearance in `ratings.csv`.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest_text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text).map_err(|e| CorpusError::Manifest {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;

    let snippet_dir = dir.join("snippets");
    let mut snippets = Vec::new();
    for entry in fs::read_dir(&snippet_dir).map_err(io_err(&snippet_dir))? {
        let entry = entry.map_err(io_err(&snippet_dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("src") {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
            continue;
        };
        let source = fs::read_to_string(&path).map_err(io_err(&path))?;
        if source.is_empty() {
            return Err(CorpusError::EmptySource(id));
        }
        snippets.push(Snippet {
            id,
            source,
            granularity: manifest.granularity,
        });
    }
    snippets.sort_by(|a, b| a.id.cmp(&b.id));

    let ratings_path = dir.join("ratings.csv");
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&ratings_path)
        .map_err(|e| CorpusError::MalformedTable {
            line: 0,
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedTable {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["snippet_id", "developer_id", "score"] {
        return Err(CorpusError::MalformedTable {
            line: 1,
            message: format!(
                "expected header `snippet_id,developer_id,score`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut rows = Vec::new();
    let mut developer_ids: Vec<String> = Vec::new();
    let mut seen_dev: HashSet<String> = HashSet::new();
    for record in reader.deserialize::<RatingRow>() {
        let row = record.map_err(|e| CorpusError::MalformedTable {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let score: i64 = row.score.parse().map_err(|_| CorpusError::MalformedTable {
            line: 0,
            message: format!("score `{}` is not an integer", row.score),
        })?;
        if !(1..=5).contains(&score) {
            return Err(CorpusError::ScoreOutOfRange { score });
        }
        if seen_dev.insert(row.developer_id.clone()) {
            developer_ids.push(row.developer_id.clone());
        }
        rows.push((row.snippet_id, row.developer_id, LikertScore(score as u8)));
    }

    let snippet_ids = snippets.iter().map(|s| s.id.clone()).collect();
    let mut matrix = RatingMatrix::new(snippet_ids, developer_ids)?;
    for (snippet, developer, score) in rows {
        matrix.set(&snippet, &developer, score)?;
    }

    if manifest.snippets != matrix.snippet_count() || manifest.developers != matrix.developer_count() {
        return Err(CorpusError::DimensionMismatch {
            declared: format!("{}x{}", manifest.snippets, manifest.developers),
            found: format!("{}x{}", matrix.snippet_count(), matrix.developer_count()),
        });
    }

    Dataset::new(manifest.name, manifest.granularity, matrix, snippets)
}

/// Writes `dataset` in the directory format read by [`load_dataset`].
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    let snippet_dir = dir.join("snippets");
    fs::create_dir_all(&snippet_dir).map_err(io_err(&snippet_dir))?;
    let manifest_path = dir.join("manifest.json");
    let manifest = serde_json::to_string_pretty(&dataset.manifest()).expect("manifest serializes");
    fs::write(&manifest_path, manifest + "\n").map_err(io_err(&manifest_path))?;
    for snippet in dataset.snippets() {
        let path = snippet_dir.join(format!("{}.src", snippet.id));
        fs::write(&path, &snippet.source).map_err(io_err(&path))?;
    }
    let mut csv_text = String::from("snippet_id,developer_id,score\n");
    let m = &dataset.matrix;
    for s in 0..m.snippet_count() {
        for d in 0..m.developer_count() {
            if let Some(score) = m.score_at(s, d) {
                csv_text.push_str(&format!(
                    "{},{},{}\n",
                    m.snippet_ids()[s],
                    m.developer_ids()[d],
                    score.value()
                ));
            }
        }
    }
    let ratings_path = dir.join("ratings.csv");
    fs::write(&ratings_path, csv_text).map_err(io_err(&ratings_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ReadabilityLabel::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn single_column(scores: &[u8]) -> RatingMatrix {
        let rows: Vec<Vec<u8>> = vec![scores.to_vec()];
        RatingMatrix::from_dense(ids("s", 1), ids("d", scores.len()), &rows).unwrap()
    }

    fn labels_to_scores(labels: &[ReadabilityLabel]) -> Vec<u8> {
        labels
            .iter()
            .map(|l| match l {
                Unreadable => 1,
                Neutral => 3,
                Readable => 5,
            })
            .collect()
    }

    #[test]
    fn score_mapping() {
        let got: Vec<_> = LikertScore::all().map(map_score_to_label).collect();
        assert_eq!(got, vec![Unreadable, Unreadable, Neutral, Readable, Readable]);
        assert!(LikertScore::new(0).is_err());
        assert!(LikertScore::new(6).is_err());
    }

    #[test]
    fn majority_examples() {
        for (labels, want) in [
            (vec![Readable, Readable, Unreadable, Neutral, Readable], Readable),
            (vec![Readable, Unreadable], Unreadable),
            (vec![Neutral, Neutral, Readable], Neutral),
        ] {
            let m = single_column(&labels_to_scores(&labels));
            assert_eq!(m.view().majority_label("s1").unwrap(), want);
        }
    }

    #[test]
    fn variance_examples() {
        let cases: [(&[u8], f64); 3] = [(&[1, 5, 1, 5], 4.0), (&[3, 3, 3], 0.0), (&[1, 2, 3, 4, 5], 2.0)];
        for (scores, want) in cases {
            let m = single_column(scores);
            assert_eq!(m.view().snippet_score_variance("s1").unwrap(), want);
        }
    }

    #[test]
    fn remove_developer_cardinality() {
        let rows = vec![vec![3u8; 9]; 200];
        let m = RatingMatrix::from_dense(ids("s", 200), ids("dev_", 9), &rows).unwrap();
        let v = m.remove_developer("dev_4").unwrap();
        assert_eq!(v.visible_developer_count(), 8);
        assert!(!v.visible_developers().any(|d| d == "dev_4"));
        assert_eq!(v.base().snippet_count(), 200);
        assert_eq!(m.developer_count(), 9);

        let one = single_column(&[3]);
        let v = one.remove_developer("d1").unwrap();
        assert_eq!(v.visible_developer_count(), 0);
        assert!(matches!(v.majority_label("s1"), Err(CorpusError::NoVisibleRatings(_))));
        assert!(matches!(
            v.snippet_score_variance("s1"),
            Err(CorpusError::NoVisibleRatings(_))
        ));

        assert!(matches!(
            m.remove_developer("ghost_dev"),
            Err(CorpusError::UnknownDeveloper(_))
        ));
    }

    #[test]
    fn duplicate_cell_rejected() {
        let mut m = RatingMatrix::new(ids("s", 1), ids("d", 1)).unwrap();
        m.set("s1", "d1", LikertScore::new(3).unwrap()).unwrap();
        assert!(matches!(
            m.set("s1", "d1", LikertScore::new(4).unwrap()),
            Err(CorpusError::DuplicateCell { .. })
        ));
    }

    #[test]
    fn sparse_matrix_detected() {
        let mut m = RatingMatrix::new(ids("s", 2), ids("d", 1)).unwrap();
        m.set("s1", "d1", LikertScore::new(3).unwrap()).unwrap();
        assert!(!m.is_dense());
        assert!(matches!(m.require_dense(), Err(CorpusError::SparseMatrix)));
    }
}
