//! Generalist protocols: one label per snippet, scored against each
//! developer's own labels.
//!
//! Three predictors share the [`PredictionRun`] artifact: a feature-based
//! classifier trained leave-developer-out, a zero-shot LLM, and the
//! most-common-label oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{AnalysisError, FeatureVector};
use crate::classifier::{cross_validate, ClassifierError, Hyperparams};
use crate::corpus::{map_score_to_label, CorpusError, Dataset, RatingMatrix, ReadabilityLabel};
use crate::llm_gateway::{query_label, CachedGateway, Gateway, GatewayError, QueryError};
use crate::parallel::map_bounded;
use crate::personalization::{ShotSelectionAlgorithm, ShotSet};
use crate::prompt::{generalist_prompt, template_hash};

#[derive(Debug, Error)]
pub enum GeneralistError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("developer {0} has no ratings")]
    NoRatings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FeatureModel,
    LlmZeroShot,
    OptimalOracle,
    LlmPersonalized,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FeatureModel => "feature_model",
            Method::LlmZeroShot => "llm_zero_shot",
            Method::OptimalOracle => "optimal_oracle",
            Method::LlmPersonalized => "llm_personalized",
        }
    }
}

/// Whether the oracle's per-snippet mode counts the evaluated developer's own vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    #[default]
    Inclusive,
    Exclusive,
}

/// Everything that determines a run's output besides the developer. Equal
/// fingerprints on equal data give byte-identical artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFingerprint {
    pub dataset: String,
    pub dataset_digest: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<Hyperparams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_mode: Option<OracleMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<ShotSelectionAlgorithm>,
}

impl RunFingerprint {
    pub fn new(dataset: &Dataset, method: Method) -> Self {
        RunFingerprint {
            dataset: dataset.name.clone(),
            dataset_digest: dataset.digest(),
            method,
            seed: None,
            hyperparams: None,
            feature_schema: None,
            gateway_model: None,
            template_hash: None,
            parse_retries: None,
            oracle_mode: None,
            algorithm: None,
        }
    }

    pub fn feature_model(dataset: &Dataset, schema: &str, hp: &Hyperparams, seed: u64) -> Self {
        RunFingerprint {
            seed: Some(seed),
            hyperparams: Some(*hp),
            feature_schema: Some(schema.to_string()),
            ..Self::new(dataset, Method::FeatureModel)
        }
    }

    pub fn llm(dataset: &Dataset, method: Method, gateway_model: &str, parse_retries: u32) -> Self {
        RunFingerprint {
            gateway_model: Some(gateway_model.to_string()),
            template_hash: Some(template_hash()),
            parse_retries: Some(parse_retries),
            ..Self::new(dataset, method)
        }
    }

    pub fn oracle(dataset: &Dataset, mode: OracleMode) -> Self {
        RunFingerprint {
            oracle_mode: Some(mode),
            ..Self::new(dataset, Method::OptimalOracle)
        }
    }

    /// SHA-256 (hex) of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("fingerprint serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Predictions for one developer. `predictions` and `abstentions` partition
/// the key set of `truth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRun {
    pub dataset_id: String,
    pub developer_id: String,
    pub method: Method,
    pub config_digest: String,
    pub fingerprint: RunFingerprint,
    pub truth: BTreeMap<String, ReadabilityLabel>,
    pub predictions: BTreeMap<String, ReadabilityLabel>,
    /// Snippet id → reason no label was obtained.
    pub abstentions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<ShotSet>,
}

impl PredictionRun {
    pub fn new(fingerprint: RunFingerprint, developer_id: &str, truth: BTreeMap<String, ReadabilityLabel>) -> Self {
        PredictionRun {
            dataset_id: fingerprint.dataset.clone(),
            developer_id: developer_id.to_string(),
            method: fingerprint.method,
            config_digest: fingerprint.digest(),
            fingerprint,
            truth,
            predictions: BTreeMap::new(),
            abstentions: BTreeMap::new(),
            shots: None,
        }
    }

    /// Checks that predictions and abstentions partition the truth keys.
    pub fn keys_consistent(&self) -> bool {
        self.predictions.len() + self.abstentions.len() == self.truth.len()
            && self
                .predictions
                .keys()
                .all(|k| self.truth.contains_key(k) && !self.abstentions.contains_key(k))
            && self.abstentions.keys().all(|k| self.truth.contains_key(k))
    }

    /// Aligned (truth, prediction) pairs over scored snippets, in id order.
    pub fn scored_pairs(&self) -> (Vec<ReadabilityLabel>, Vec<ReadabilityLabel>) {
        self.predictions.iter().map(|(id, p)| (self.truth[id], *p)).unzip()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run serializes");
        s.push('\n');
        s
    }
}

/// The developer's own mapped labels for every snippet they rated.
pub fn developer_truth(
    matrix: &RatingMatrix,
    developer: &str,
) -> Result<BTreeMap<String, ReadabilityLabel>, GeneralistError> {
    let d = matrix.developer_position(developer)?;
    let truth: BTreeMap<_, _> = matrix
        .snippet_ids()
        .iter()
        .enumerate()
        .filter_map(|(s, id)| matrix.score_at(s, d).map(|sc| (id.clone(), map_score_to_label(sc))))
        .collect();
    if truth.is_empty() {
        return Err(GeneralistError::NoRatings(developer.to_string()));
    }
    Ok(truth)
}

/// Feature classifier cross-validated on the majority label of every other
/// developer; `features` is aligned with the snippet order of the matrix.
pub fn eval_feature_generalist(
    dataset: &Dataset,
    features: &[FeatureVector],
    developer: &str,
    hp: &Hyperparams,
    seed: u64,
) -> Result<PredictionRun, GeneralistError> {
    let cv = cross_validate(&dataset.matrix, features, developer, hp, seed)?;
    let schema = features.first().map_or("", |f| f.schema_version.as_str());
    let mut run = PredictionRun::new(
        RunFingerprint::feature_model(dataset, schema, hp, seed),
        developer,
        developer_truth(&dataset.matrix, developer)?,
    );
    for (id, label) in dataset.matrix.snippet_ids().iter().zip(cv.predictions) {
        if run.truth.contains_key(id) {
            run.predictions.insert(id.clone(), label);
        }
    }
    Ok(run)
}

/// Most common mapped label over every developer's rating of the snippet;
/// ties go to the less readable label.
pub fn optimal_generalist_predict(matrix: &RatingMatrix, snippet: &str) -> Result<ReadabilityLabel, CorpusError> {
    matrix.view().majority_label(snippet)
}

/// Same as [`optimal_generalist_predict`] with `developer`'s vote left out.
pub fn optimal_generalist_predict_excluding(
    matrix: &RatingMatrix,
    snippet: &str,
    developer: &str,
) -> Result<ReadabilityLabel, CorpusError> {
    matrix.remove_developer(developer)?.majority_label(snippet)
}

pub fn eval_optimal_oracle(
    dataset: &Dataset,
    developer: &str,
    mode: OracleMode,
) -> Result<PredictionRun, GeneralistError> {
    let matrix = &dataset.matrix;
    let view = match mode {
        OracleMode::Inclusive => matrix.view(),
        OracleMode::Exclusive => matrix.remove_developer(developer)?,
    };
    let mut run = PredictionRun::new(
        RunFingerprint::oracle(dataset, mode),
        developer,
        developer_truth(matrix, developer)?,
    );
    for id in run.truth.keys().cloned().collect::<Vec<_>>() {
        match view.majority_label(&id) {
            Ok(label) => {
                run.predictions.insert(id, label);
            }
            Err(e) => {
                run.abstentions.insert(id, e.to_string());
            }
        }
    }
    Ok(run)
}

/// Zero-shot LLM labels for the developer's rated snippets. The prompt does
/// not depend on the developer; failures become abstentions.
pub fn eval_llm_generalist(
    gateway: &dyn Gateway,
    dataset: &Dataset,
    developer: &str,
    parse_retries: u32,
) -> Result<PredictionRun, GeneralistError> {
    let mut run = PredictionRun::new(
        RunFingerprint::llm(dataset, Method::LlmZeroShot, gateway.model_name(), parse_retries),
        developer,
        developer_truth(&dataset.matrix, developer)?,
    );
    for snippet in dataset.snippets() {
        if !run.truth.contains_key(&snippet.id) {
            continue;
        }
        match query_label(gateway, &generalist_prompt(&snippet.source), parse_retries) {
            Ok(label) => {
                run.predictions.insert(snippet.id.clone(), label);
            }
            Err(QueryError::Gateway(e)) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                run.abstentions.insert(snippet.id.clone(), e.to_string());
            }
        }
    }
    Ok(run)
}

pub fn eval_feature_generalist_all(
    dataset: &Dataset,
    features: &[FeatureVector],
    hp: &Hyperparams,
    seed: u64,
    jobs: usize,
) -> Result<Vec<PredictionRun>, GeneralistError> {
    map_bounded(dataset.matrix.developer_ids(), jobs, |d| {
        eval_feature_generalist(dataset, features, d, hp, seed)
    })
    .into_iter()
    .collect()
}

pub fn eval_optimal_oracle_all(dataset: &Dataset, mode: OracleMode) -> Result<Vec<PredictionRun>, GeneralistError> {
    dataset
        .matrix
        .developer_ids()
        .iter()
        .map(|d| eval_optimal_oracle(dataset, d, mode))
        .collect()
}

/// Runs every developer through one shared completion cache: the first
/// developer populates it, the rest run in parallel against it.
pub fn eval_llm_generalist_all(
    gateway: &dyn Gateway,
    dataset: &Dataset,
    parse_retries: u32,
    jobs: usize,
) -> Result<Vec<PredictionRun>, GeneralistError> {
    let cached = CachedGateway::in_memory(gateway);
    let devs = dataset.matrix.developer_ids();
    let Some((first, rest)) = devs.split_first() else {
        return Ok(Vec::new());
    };
    let mut runs = vec![eval_llm_generalist(&cached, dataset, first, parse_retries)?];
    for run in map_bounded(rest, jobs, |d| eval_llm_generalist(&cached, dataset, d, parse_retries)) {
        runs.push(run?);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::feature_table;
    use crate::corpus::{synth, Granularity, LikertScore, Snippet};
    use crate::llm_gateway::{StubGateway, StubPolicy};
    use ReadabilityLabel::*;

    fn one_snippet(scores: &[u8]) -> RatingMatrix {
        let devs = synth::developer_ids(scores.len());
        RatingMatrix::from_dense(synth::snippet_ids(1), devs, &[scores.to_vec()]).unwrap()
    }

    #[test]
    fn oracle_mode_and_ties() {
        assert_eq!(
            optimal_generalist_predict(&one_snippet(&[5, 5, 4, 1]), "s001").unwrap(),
            Readable
        );
        assert_eq!(
            optimal_generalist_predict(&one_snippet(&[5, 4, 1, 2]), "s001").unwrap(),
            Unreadable
        );
        let m = one_snippet(&[5, 1, 3]);
        assert_eq!(optimal_generalist_predict(&m, "s001").unwrap(), Unreadable);
        assert_eq!(
            optimal_generalist_predict_excluding(&m, "s001", "dev002").unwrap(),
            Neutral
        );
    }

    #[test]
    fn unanimous_oracle_is_perfect() {
        let ds = synth::unanimous(20, 8, 1).unwrap();
        for run in eval_optimal_oracle_all(&ds, OracleMode::Inclusive).unwrap() {
            assert!(run.keys_consistent());
            assert_eq!(run.predictions, run.truth);
        }
    }

    /// Oracle accuracy is exactly d's agreement rate with the per-snippet mode.
    #[test]
    fn oracle_accuracy_equals_mode_agreement() {
        let ds = synth::random(30, 7, 4).unwrap();
        let view = ds.matrix.view();
        for run in eval_optimal_oracle_all(&ds, OracleMode::Inclusive).unwrap() {
            let d = ds.matrix.developer_position(&run.developer_id).unwrap();
            let agree = (0..30)
                .filter(|&s| {
                    map_score_to_label(ds.matrix.score_at(s, d).unwrap()) == view.majority_label_at(s).unwrap()
                })
                .count();
            let hits = run.predictions.iter().filter(|(k, v)| run.truth[*k] == **v).count();
            assert_eq!(hits, agree);
        }
    }

    #[test]
    fn all_methods_share_truth() {
        let ds = synth::noisy(20, 5, 0.7, 9).unwrap();
        let features = feature_table(&ds).unwrap();
        let stub = StubGateway::new(StubPolicy::Constant(Readable));
        let hp = Hyperparams {
            max_epochs: 200,
            ..Hyperparams::default()
        };
        for d in ds.matrix.developer_ids() {
            let a = eval_feature_generalist(&ds, &features, d, &hp, 3).unwrap();
            let b = eval_llm_generalist(&stub, &ds, d, 1).unwrap();
            let c = eval_optimal_oracle(&ds, d, OracleMode::Inclusive).unwrap();
            assert_eq!(a.truth, b.truth);
            assert_eq!(b.truth, c.truth);
            assert!(a.keys_consistent() && b.keys_consistent() && c.keys_consistent());
            assert_eq!(a.truth.len(), 20);
        }
    }

    /// The feature generalist never looks at the evaluated developer's column.
    #[test]
    fn feature_generalist_ignores_own_column() {
        let ds = synth::noisy(20, 5, 0.6, 2).unwrap();
        let features = feature_table(&ds).unwrap();
        let hp = Hyperparams {
            max_epochs: 300,
            ..Hyperparams::default()
        };
        let base = eval_feature_generalist(&ds, &features, "dev003", &hp, 11).unwrap();
        let mut flipped = ds.clone();
        for s in ds.matrix.snippet_ids() {
            let old = ds.matrix.score(s, "dev003").unwrap().unwrap().value();
            flipped
                .matrix
                .replace(s, "dev003", LikertScore::new(6 - old).unwrap())
                .unwrap();
        }
        let other = eval_feature_generalist(&flipped, &features, "dev003", &hp, 11).unwrap();
        assert_eq!(base.predictions, other.predictions);
    }

    fn accuracy(run: &PredictionRun) -> f64 {
        let (truth, pred) = run.scored_pairs();
        truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / truth.len() as f64
    }

    #[test]
    fn unanimous_agreeing_developer_scores_one() {
        let ds = synth::unanimous(30, 4, 5).unwrap();
        let features = feature_table(&ds).unwrap();
        let run = eval_feature_generalist(&ds, &features, "dev002", &Hyperparams::default(), 0).unwrap();
        assert_eq!(accuracy(&run), 1.0);
    }

    #[test]
    fn contrarian_developer_scores_zero() {
        // dev004 always picks a label other than everyone else's, so a learner
        // that recovers the others' majority is always wrong for it.
        let ds = synth::unanimous(30, 4, 5).unwrap();
        let mut m = ds.matrix.clone();
        for s in ds.matrix.snippet_ids() {
            let v = ds.matrix.score(s, "dev004").unwrap().unwrap().value();
            m.replace(s, "dev004", LikertScore::new(if v == 5 { 1 } else { 5 }).unwrap())
                .unwrap();
        }
        let ds = Dataset::new(ds.name.clone(), ds.granularity, m, ds.snippets().to_vec()).unwrap();
        let features = feature_table(&ds).unwrap();
        let run = eval_feature_generalist(&ds, &features, "dev004", &Hyperparams::default(), 0).unwrap();
        assert_eq!(accuracy(&run), 0.0);
    }

    #[test]
    fn llm_generalist_failures_are_abstentions() {
        let ds = synth::unanimous(6, 2, 0).unwrap();
        let stub = StubGateway::new(StubPolicy::Verbatim("???".into()));
        let run = eval_llm_generalist(&stub, &ds, "dev001", 2).unwrap();
        assert!(run.predictions.is_empty());
        assert_eq!(run.abstentions.len(), 6);
        assert!(run.keys_consistent());
    }

    struct Locked;

    impl Gateway for Locked {
        fn model_name(&self) -> &str {
            "locked"
        }
        fn complete(&self, _: &str) -> Result<crate::llm_gateway::Completion, GatewayError> {
            Err(GatewayError::Authentication("HTTP 401".into()))
        }
    }

    #[test]
    fn authentication_failure_stops_the_run() {
        let ds = synth::unanimous(6, 2, 0).unwrap();
        assert!(matches!(
            eval_llm_generalist(&Locked, &ds, "dev001", 2),
            Err(GeneralistError::Gateway(GatewayError::Authentication(_)))
        ));
    }

    #[test]
    fn majority_echo_matches_oracle() {
        let ds = synth::noisy(15, 6, 0.5, 8).unwrap();
        let stub = StubGateway::majority_echo(&ds).unwrap();
        let llm = eval_llm_generalist_all(&stub, &ds, 0, 3).unwrap();
        let oracle = eval_optimal_oracle_all(&ds, OracleMode::Inclusive).unwrap();
        for (a, b) in llm.iter().zip(&oracle) {
            assert_eq!(a.predictions, b.predictions);
        }
    }

    #[test]
    fn llm_cache_serves_every_developer_after_the_first() {
        let ds = synth::unanimous(12, 4, 0).unwrap();
        let stub = StubGateway::new(StubPolicy::Constant(Neutral));
        let cached = CachedGateway::in_memory(&stub);
        eval_llm_generalist(&cached, &ds, "dev001", 0).unwrap();
        assert_eq!(cached.misses(), 12);
        for d in ["dev002", "dev003", "dev004"] {
            eval_llm_generalist(&cached, &ds, d, 0).unwrap();
        }
        assert_eq!((cached.hits(), cached.misses()), (36, 12));
    }

    #[test]
    fn sparse_truth_covers_rated_snippets_only() {
        let mut m = RatingMatrix::new(synth::snippet_ids(3), synth::developer_ids(2)).unwrap();
        m.set("s001", "dev001", LikertScore::new(4).unwrap()).unwrap();
        m.set("s002", "dev001", LikertScore::new(1).unwrap()).unwrap();
        m.set("s003", "dev002", LikertScore::new(3).unwrap()).unwrap();
        let snippets = synth::snippet_ids(3)
            .into_iter()
            .map(|id| Snippet {
                source: format!("int {id};"),
                id,
                granularity: Granularity::Fragment,
            })
            .collect();
        let ds = Dataset::new("sparse", Granularity::Fragment, m, snippets).unwrap();
        let run = eval_optimal_oracle(&ds, "dev001", OracleMode::Exclusive).unwrap();
        assert_eq!(run.truth.len(), 2);
        assert_eq!(run.abstentions.len(), 2);
        assert!(run.keys_consistent());
    }
}
