//! Seeded synthetic datasets for tests and offline protocol runs.
//!
//! Sources are Java-like methods whose surface style follows a target label:
//! readable snippets are short, indented and commented; unreadable ones are
//! crammed onto long unindented lines with terse names and magic numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, Dataset, Granularity, RatingMatrix, ReadabilityLabel, Snippet};

const NOUNS: &[&str] = &[
    "count", "total", "buffer", "index", "name", "value", "limit", "offset", "result", "entry", "node", "parent",
    "child", "cursor", "width", "height",
];

pub fn snippet_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(3);
    (1..=n).map(|i| format!("s{i:0width$}")).collect()
}

pub fn developer_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(3);
    (1..=n).map(|i| format!("dev{i:0width$}")).collect()
}

/// Source text whose style tracks `label`. `ordinal` keeps sources distinct.
pub fn styled_source(label: ReadabilityLabel, ordinal: usize, rng: &mut impl Rng) -> String {
    let a = NOUNS[rng.random_range(0..NOUNS.len())];
    let b = NOUNS[rng.random_range(0..NOUNS.len())];
    match label {
        ReadabilityLabel::Readable => {
            let mut s = String::new();
            s.push_str(&format!("/** Returns the adjusted {a} for entry {ordinal}. */\n"));
            s.push_str(&format!("public int adjusted{ordinal}(int {a}, int {b}Value) {{\n"));
            s.push_str(&format!("    // keep the {b} within bounds\n"));
            s.push_str(&format!("    if ({a} > {b}Value) {{\n"));
            s.push_str(&format!("        return {b}Value;\n"));
            s.push_str("    }\n");
            for i in 0..rng.random_range(1..3) {
                s.push_str(&format!("    // step {i}\n"));
                s.push_str(&format!("    {a} = {a} + 1;\n"));
            }
            s.push_str(&format!("    return {a};\n"));
            s.push_str("}\n");
            s
        }
        ReadabilityLabel::Neutral => {
            let mut s = String::new();
            s.push_str(&format!("int m{ordinal}(int {a}, int q) {{\n"));
            s.push_str(&format!("  int t = {a} * q + {};\n", rng.random_range(2..50)));
            s.push_str(&format!("  for (int i = 0; i < q; i++) {{ t += i * {a}; }}\n"));
            s.push_str(&format!("  if (t > {}) t = t - q;\n", rng.random_range(100..999)));
            s.push_str("  return t;\n");
            s.push_str("}\n");
            s
        }
        ReadabilityLabel::Unreadable => {
            let mut s = format!("int f{ordinal}(int x,int y){{int z=x*y+{};", rng.random_range(10..99));
            for _ in 0..rng.random_range(3..6) {
                s.push_str(&format!(
                    "if(z>{}&&y<{}){{z=z^{}+(x<<{})%{};}}else{{z-={};}}",
                    rng.random_range(100..999),
                    rng.random_range(10..99),
                    rng.random_range(1000..9999),
                    rng.random_range(1..9),
                    rng.random_range(3..17),
                    rng.random_range(1..9)
                ));
            }
            s.push_str("return z;}\n");
            s
        }
    }
}

fn label_score(label: ReadabilityLabel) -> u8 {
    match label {
        ReadabilityLabel::Unreadable => 1,
        ReadabilityLabel::Neutral => 3,
        ReadabilityLabel::Readable => 5,
    }
}

fn build(
    name: &str,
    labels: &[ReadabilityLabel],
    scores: Vec<Vec<u8>>,
    developers: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset, CorpusError> {
    let ids = snippet_ids(labels.len());
    let snippets = ids
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (id, &label))| Snippet {
            id: id.clone(),
            source: styled_source(label, i + 1, rng),
            granularity: Granularity::Method,
        })
        .collect();
    let matrix = RatingMatrix::from_dense(ids, developer_ids(developers), &scores)?;
    Dataset::new(name, Granularity::Method, matrix, snippets)
}

/// Every developer gives each snippet the same score; labels cycle
/// Unreadable, Neutral, Readable and the source style follows the label.
pub fn unanimous(snippets: usize, developers: usize, seed: u64) -> Result<Dataset, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<_> = (0..snippets).map(|i| ReadabilityLabel::ALL[i % 3]).collect();
    let scores = labels.iter().map(|&l| vec![label_score(l); developers]).collect();
    build("synthetic-unanimous", &labels, scores, developers, &mut rng)
}

/// Uniformly random scores; source style loosely follows the rounded mean.
pub fn random(snippets: usize, developers: usize, seed: u64) -> Result<Dataset, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<Vec<u8>> = (0..snippets)
        .map(|_| (0..developers).map(|_| rng.random_range(1..=5u8)).collect())
        .collect();
    let labels: Vec<_> = scores
        .iter()
        .map(|row| {
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / row.len().max(1) as f64;
            match mean.round() as u8 {
                0..=2 => ReadabilityLabel::Unreadable,
                3 => ReadabilityLabel::Neutral,
                _ => ReadabilityLabel::Readable,
            }
        })
        .collect();
    build("synthetic-random", &labels, scores, developers, &mut rng)
}

/// Each snippet has a latent label; each developer reports it with
/// probability `agreement` and otherwise picks a uniformly random score.
pub fn noisy(snippets: usize, developers: usize, agreement: f64, seed: u64) -> Result<Dataset, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<_> = (0..snippets)
        .map(|_| ReadabilityLabel::ALL[rng.random_range(0..3)])
        .collect();
    let scores = labels
        .iter()
        .map(|&l| {
            (0..developers)
                .map(|_| {
                    if rng.random_bool(agreement) {
                        match l {
                            ReadabilityLabel::Unreadable => rng.random_range(1..=2),
                            ReadabilityLabel::Neutral => 3,
                            ReadabilityLabel::Readable => rng.random_range(4..=5),
                        }
                    } else {
                        rng.random_range(1..=5)
                    }
                })
                .collect()
        })
        .collect();
    build("synthetic-noisy", &labels, scores, developers, &mut rng)
}
