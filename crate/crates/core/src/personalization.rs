//! Few-shot personalization: choose which of a developer's own ratings to
//! show the model, then label the remaining snippets for that developer.
//!
//! Selection reads scores through the view without the target developer;
//! only the shot labels (and, for per-label selection, the grouping) come
//! from the developer's own column.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{map_score_to_label, CorpusError, Dataset, RatingMatrix, ReadabilityLabel, ScoreVariance, Snippet};
use crate::generalist::{developer_truth, GeneralistError, Method, PredictionRun, RunFingerprint};
use crate::llm_gateway::{query_label, Gateway, GatewayError, QueryError};
use crate::parallel::map_bounded;
use crate::prompt::personalized_prompt;

pub const SHOT_COUNT: usize = 3;

#[derive(Debug, Error)]
pub enum PersonalizationError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Generalist(#[from] GeneralistError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("shot selection needs at least {needed} snippets, dataset has {found}")]
    TooFewSnippets { needed: usize, found: usize },
    #[error("developer {0} has no ratings")]
    EmptyColumn(String),
    #[error("developer {developer} has no rating for snippet {snippet}")]
    MissingRating { developer: String, snippet: String },
    #[error("a prompt needs at least one shot")]
    NoShots,
    #[error("target snippet {0} is one of the shots")]
    TargetIsShot(String),
    #[error("shot snippet {0} is not in the dataset")]
    UnknownShot(String),
    #[error("every snippet is a shot for some developer; nothing left to evaluate")]
    EmptyEvalSet,
    #[error("snippet {snippet} is evaluated for {developer} but is a shot in this run")]
    ShotLeak { developer: String, snippet: String },
    #[error("unknown shot selection algorithm `{0}` (expected hv, hvl or r)")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShotSelectionAlgorithm {
    /// Highest score variance among the other developers.
    #[serde(rename = "hv")]
    Hv,
    /// Highest variance per label the developer used. Needs the developer's
    /// full column, so it is a ceiling rather than a deployable strategy.
    #[serde(rename = "hv_l")]
    HvL,
    /// Uniform random draw.
    #[serde(rename = "r")]
    R,
}

impl ShotSelectionAlgorithm {
    pub const ALL: [ShotSelectionAlgorithm; 3] = [Self::Hv, Self::HvL, Self::R];

    pub fn realistic(self) -> bool {
        self != Self::HvL
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Hv => "hv",
            Self::HvL => "hv_l",
            Self::R => "r",
        }
    }
}

impl fmt::Display for ShotSelectionAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShotSelectionAlgorithm {
    type Err = PersonalizationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hv" => Ok(Self::Hv),
            "hvl" | "hv_l" | "hv-l" => Ok(Self::HvL),
            "r" | "random" => Ok(Self::R),
            _ => Err(PersonalizationError::UnknownAlgorithm(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub snippet_id: String,
    pub label: ReadabilityLabel,
}

/// Up to [`SHOT_COUNT`] distinct snippets with the developer's own labels,
/// in prompt order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSet {
    pub algorithm: ShotSelectionAlgorithm,
    pub developer_id: String,
    pub shots: Vec<Shot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub realistic: bool,
    /// Fewer shots than requested because the developer never used some label.
    pub degraded: bool,
}

impl ShotSet {
    pub fn snippet_ids(&self) -> impl Iterator<Item = &str> {
        self.shots.iter().map(|s| s.snippet_id.as_str())
    }

    pub fn contains(&self, snippet: &str) -> bool {
        self.snippet_ids().any(|id| id == snippet)
    }
}

/// Higher variance first, then ascending snippet id.
fn selection_order(a: &(ScoreVariance, &str), b: &(ScoreVariance, &str)) -> Ordering {
    b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn others_variances<'m>(
    matrix: &'m RatingMatrix,
    developer: &str,
) -> Result<Vec<(ScoreVariance, &'m str)>, CorpusError> {
    let view = matrix.remove_developer(developer)?;
    matrix
        .snippet_ids()
        .iter()
        .enumerate()
        .map(|(s, id)| Ok((view.variance_at(s)?, id.as_str())))
        .collect()
}

fn label_of(matrix: &RatingMatrix, snippet: &str, developer: &str) -> Result<ReadabilityLabel, PersonalizationError> {
    matrix
        .score(snippet, developer)?
        .map(map_score_to_label)
        .ok_or_else(|| PersonalizationError::MissingRating {
            developer: developer.to_string(),
            snippet: snippet.to_string(),
        })
}

fn require_snippets(matrix: &RatingMatrix) -> Result<(), PersonalizationError> {
    if matrix.snippet_count() < SHOT_COUNT {
        return Err(PersonalizationError::TooFewSnippets {
            needed: SHOT_COUNT,
            found: matrix.snippet_count(),
        });
    }
    Ok(())
}

fn shot_set(
    matrix: &RatingMatrix,
    developer: &str,
    algorithm: ShotSelectionAlgorithm,
    ids: &[&str],
    seed: Option<u64>,
    degraded: bool,
) -> Result<ShotSet, PersonalizationError> {
    let shots = ids
        .iter()
        .map(|id| {
            Ok(Shot {
                snippet_id: id.to_string(),
                label: label_of(matrix, id, developer)?,
            })
        })
        .collect::<Result<_, PersonalizationError>>()?;
    Ok(ShotSet {
        algorithm,
        developer_id: developer.to_string(),
        shots,
        seed,
        realistic: algorithm.realistic(),
        degraded,
    })
}

/// The three snippets the other developers disagree on most.
pub fn select_shots_hv(matrix: &RatingMatrix, developer: &str) -> Result<ShotSet, PersonalizationError> {
    matrix.require_dense()?;
    require_snippets(matrix)?;
    let mut ranked = others_variances(matrix, developer)?;
    ranked.sort_by(selection_order);
    let ids: Vec<&str> = ranked.iter().take(SHOT_COUNT).map(|(_, id)| *id).collect();
    shot_set(matrix, developer, ShotSelectionAlgorithm::Hv, &ids, None, false)
}

/// For each label the developer used, the snippet with that label the other
/// developers disagree on most. Labels the developer never used give no shot.
pub fn select_shots_hvl(matrix: &RatingMatrix, developer: &str) -> Result<ShotSet, PersonalizationError> {
    matrix.require_dense()?;
    let d = matrix.developer_position(developer)?;
    if matrix.snippet_count() == 0 {
        return Err(PersonalizationError::EmptyColumn(developer.to_string()));
    }
    let variances = others_variances(matrix, developer)?;
    let mut best: [Option<(ScoreVariance, &str)>; 3] = [None; 3];
    for (s, candidate) in variances.into_iter().enumerate() {
        let label = map_score_to_label(matrix.score_at(s, d).expect("dense"));
        let slot = &mut best[label.index()];
        if slot.is_none_or(|cur| selection_order(&candidate, &cur) == Ordering::Less) {
            *slot = Some(candidate);
        }
    }
    let mut chosen: Vec<(ScoreVariance, &str)> = best.into_iter().flatten().collect();
    chosen.sort_by(selection_order);
    let ids: Vec<&str> = chosen.iter().map(|(_, id)| *id).collect();
    let degraded = ids.len() < SHOT_COUNT;
    shot_set(matrix, developer, ShotSelectionAlgorithm::HvL, &ids, None, degraded)
}

/// Three distinct snippets drawn uniformly from `seed`; ignores all scores.
pub fn select_shots_random(matrix: &RatingMatrix, developer: &str, seed: u64) -> Result<ShotSet, PersonalizationError> {
    require_snippets(matrix)?;
    matrix.developer_position(developer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, matrix.snippet_count(), SHOT_COUNT);
    let ids: Vec<&str> = picks.iter().map(|i| matrix.snippet_ids()[i].as_str()).collect();
    shot_set(matrix, developer, ShotSelectionAlgorithm::R, &ids, Some(seed), false)
}

/// Per-developer seed for random selection within a run.
pub fn developer_seed(run_seed: u64, developer_index: usize) -> u64 {
    run_seed.wrapping_add(developer_index as u64)
}

/// Dispatches on `algorithm`; `run_seed` only matters for random selection.
pub fn select_shots(
    matrix: &RatingMatrix,
    developer: &str,
    algorithm: ShotSelectionAlgorithm,
    run_seed: u64,
) -> Result<ShotSet, PersonalizationError> {
    match algorithm {
        ShotSelectionAlgorithm::Hv => select_shots_hv(matrix, developer),
        ShotSelectionAlgorithm::HvL => select_shots_hvl(matrix, developer),
        ShotSelectionAlgorithm::R => {
            let d = matrix.developer_position(developer)?;
            select_shots_random(matrix, developer, developer_seed(run_seed, d))
        }
    }
}

pub fn build_personalized_prompt(
    shots: &ShotSet,
    dataset: &Dataset,
    target: &Snippet,
) -> Result<String, PersonalizationError> {
    if shots.shots.is_empty() {
        return Err(PersonalizationError::NoShots);
    }
    if shots.contains(&target.id) {
        return Err(PersonalizationError::TargetIsShot(target.id.clone()));
    }
    let rendered = shots
        .shots
        .iter()
        .map(|shot| {
            dataset
                .snippet(&shot.snippet_id)
                .map(|s| (s.source.as_str(), shot.label))
                .ok_or_else(|| PersonalizationError::UnknownShot(shot.snippet_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(personalized_prompt(rendered, &target.source))
}

/// Snippets no developer sees as a shot under `algorithm`, in matrix order.
pub fn personalized_eval_set(
    matrix: &RatingMatrix,
    algorithm: ShotSelectionAlgorithm,
    run_seed: u64,
) -> Result<Vec<String>, PersonalizationError> {
    let mut used = BTreeSet::new();
    for d in matrix.developer_ids() {
        let set = select_shots(matrix, d, algorithm, run_seed)?;
        used.extend(set.shots.into_iter().map(|s| s.snippet_id));
    }
    let rest: Vec<String> = matrix
        .snippet_ids()
        .iter()
        .filter(|id| !used.contains(*id))
        .cloned()
        .collect();
    if rest.is_empty() {
        return Err(PersonalizationError::EmptyEvalSet);
    }
    Ok(rest)
}

/// Fails if any run scores a snippet that is a shot in any run.
pub fn verify_shot_exclusion(runs: &[PredictionRun]) -> Result<(), PersonalizationError> {
    let shots: BTreeSet<&str> = runs
        .iter()
        .filter_map(|r| r.shots.as_ref())
        .flat_map(|s| s.snippet_ids())
        .collect();
    for run in runs {
        if let Some(leak) = run.truth.keys().find(|k| shots.contains(k.as_str())) {
            return Err(PersonalizationError::ShotLeak {
                developer: run.developer_id.clone(),
                snippet: leak.clone(),
            });
        }
    }
    Ok(())
}

pub fn eval_personalized_developer(
    gateway: &dyn Gateway,
    dataset: &Dataset,
    developer: &str,
    algorithm: ShotSelectionAlgorithm,
    run_seed: u64,
    eval_set: &[String],
    parse_retries: u32,
) -> Result<PredictionRun, PersonalizationError> {
    let matrix = &dataset.matrix;
    matrix.require_dense()?;
    let shots = select_shots(matrix, developer, algorithm, run_seed)?;
    let mut truth = developer_truth(matrix, developer)?;
    truth.retain(|id, _| eval_set.contains(id));
    let mut fingerprint = RunFingerprint::llm(dataset, Method::LlmPersonalized, gateway.model_name(), parse_retries);
    fingerprint.algorithm = Some(algorithm);
    if algorithm == ShotSelectionAlgorithm::R {
        fingerprint.seed = Some(run_seed);
    }
    let mut run = PredictionRun::new(fingerprint, developer, truth);
    for id in eval_set {
        let target = dataset
            .snippet(id)
            .ok_or_else(|| CorpusError::UnknownSnippet(id.clone()))?;
        let prompt = build_personalized_prompt(&shots, dataset, target)?;
        match query_label(gateway, &prompt, parse_retries) {
            Ok(label) => {
                run.predictions.insert(id.clone(), label);
            }
            Err(QueryError::Gateway(e)) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                run.abstentions.insert(id.clone(), e.to_string());
            }
        }
    }
    run.shots = Some(shots);
    Ok(run)
}

/// One personalized run per developer over the shared eval set. Gateway and
/// label failures become abstentions.
pub fn eval_personalized(
    gateway: &dyn Gateway,
    dataset: &Dataset,
    algorithm: ShotSelectionAlgorithm,
    run_seed: u64,
    parse_retries: u32,
    jobs: usize,
) -> Result<Vec<PredictionRun>, PersonalizationError> {
    dataset.matrix.require_dense()?;
    let eval_set = personalized_eval_set(&dataset.matrix, algorithm, run_seed)?;
    let runs = map_bounded(dataset.matrix.developer_ids(), jobs, |d| {
        eval_personalized_developer(gateway, dataset, d, algorithm, run_seed, &eval_set, parse_retries)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    verify_shot_exclusion(&runs)?;
    Ok(runs)
}
