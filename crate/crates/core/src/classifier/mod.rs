//! Three-class linear classifier trained by full-batch gradient descent.
//!
//! Features are z-scored with statistics from the training rows only, a bias
//! column is appended, and the L2-regularized multinomial cross-entropy
//!
//! ```text
//! L(W) = -(1/n) Σ_i log softmax(W x_i)[y_i] + (λ/2) Σ_k Σ_{j<F} W[k][j]²
//! ```
//!
//! is minimized by plain gradient descent. The bias column is not penalized.

mod cv;
mod persist;

pub use cv::{cross_validate, CrossValidation, FoldPlan, FOLDS};
pub use persist::{load_model, save_model};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::FeatureVector;
use crate::corpus::{CorpusError, ReadabilityLabel};

pub const CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("feature schema mismatch: model has `{expected}`, input has `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("feature dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("cross-validation needs at least {needed} snippets, dataset has {found}")]
    TooFewSnippets { needed: usize, found: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("malformed model file at line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub l2_strength: f64,
    pub max_epochs: usize,
    pub convergence_tolerance: f64,
    /// Half-width of the uniform weight initialization; 0 means zero-init,
    /// which makes the seed irrelevant.
    pub init_scale: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.05,
            l2_strength: 1e-3,
            max_epochs: 5000,
            convergence_tolerance: 1e-7,
            init_scale: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyperparams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.l2_strength >= 0.0 && self.l2_strength.is_finite()) {
            return bad("l2_strength must be >= 0");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be > 0");
        }
        if !(self.convergence_tolerance > 0.0 && self.convergence_tolerance.is_finite()) {
            return bad("convergence_tolerance must be > 0");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be >= 0");
        }
        Ok(())
    }
}

/// Per-feature z-score parameters. A zero `stddev` marks a constant feature,
/// which normalizes to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScale {
    pub mean: f64,
    pub stddev: f64,
}

impl FeatureScale {
    pub fn is_constant(&self) -> bool {
        self.stddev == 0.0
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (x - self.mean) / self.stddev
        }
    }
}

/// Fits z-score parameters on `rows` (population standard deviation).
pub fn fit_normalization(rows: &[&[f64]]) -> Vec<FeatureScale> {
    let width = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    (0..width)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let stddev = var.sqrt();
            let constant = stddev <= 1e-12 * mean.abs().max(1.0);
            FeatureScale {
                mean,
                stddev: if constant { 0.0 } else { stddev },
            }
        })
        .collect()
}

/// Normalized design matrix with a trailing bias column, row-major.
#[derive(Debug, Clone)]
pub struct Design {
    pub rows: Vec<f64>,
    pub width: usize,
    pub labels: Vec<usize>,
}

impl Design {
    pub fn new(rows: &[&[f64]], labels: &[ReadabilityLabel], scales: &[FeatureScale]) -> Self {
        let width = scales.len() + 1;
        let mut flat = Vec::with_capacity(rows.len() * width);
        for row in rows {
            flat.extend(row.iter().zip(scales).map(|(x, s)| s.apply(*x)));
            flat.push(1.0);
        }
        Design {
            rows: flat,
            width,
            labels: labels.iter().map(|l| l.index()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.width..(i + 1) * self.width]
    }
}

fn class_scores(weights: &[f64], width: usize, x: &[f64]) -> [f64; CLASSES] {
    let mut s = [0.0; CLASSES];
    for (k, score) in s.iter_mut().enumerate() {
        let w = &weights[k * width..(k + 1) * width];
        *score = w.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    s
}

pub fn softmax(scores: [f64; CLASSES]) -> [f64; CLASSES] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = scores.map(|s| (s - max).exp());
    let z: f64 = p.iter().sum();
    for v in &mut p {
        *v /= z;
    }
    p
}

/// Index of the largest score; equal scores resolve to the lower index,
/// i.e. the less readable label.
pub fn argmax(values: &[f64; CLASSES]) -> ReadabilityLabel {
    let mut best = 0;
    for k in 1..CLASSES {
        if values[k] > values[best] {
            best = k;
        }
    }
    ReadabilityLabel::ALL[best]
}

/// Regularized loss and its analytic gradient at `weights` (3 × width, row-major).
pub fn objective(weights: &[f64], design: &Design, l2: f64) -> (f64, Vec<f64>) {
    let width = design.width;
    let n = design.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; CLASSES * width];
    for i in 0..design.len() {
        let x = design.row(i);
        let scores = class_scores(weights, width, x);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let y = design.labels[i];
        loss -= scores[y] - log_z;
        for k in 0..CLASSES {
            let residual = (scores[k] - log_z).exp() - if k == y { 1.0 } else { 0.0 };
            let g = &mut grad[k * width..(k + 1) * width];
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += residual * xj;
            }
        }
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    for k in 0..CLASSES {
        for j in 0..width - 1 {
            let w = weights[k * width + j];
            loss += 0.5 * l2 * w * w;
            grad[k * width + j] += l2 * w;
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub feature_schema_version: String,
    pub normalization: Vec<FeatureScale>,
    /// `CLASSES × (F + 1)`, one row per label in [`ReadabilityLabel::ALL`]
    /// order, bias last.
    pub weights: Vec<f64>,
}

impl ClassifierModel {
    pub fn feature_count(&self) -> usize {
        self.normalization.len()
    }

    pub fn width(&self) -> usize {
        self.feature_count() + 1
    }

    /// Probabilities and label for a raw (unnormalized) feature row.
    pub fn predict_row(&self, row: &[f64]) -> Result<(ReadabilityLabel, [f64; CLASSES]), ClassifierError> {
        if row.len() != self.feature_count() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.feature_count(),
                found: row.len(),
            });
        }
        let mut x: Vec<f64> = row.iter().zip(&self.normalization).map(|(v, s)| s.apply(*v)).collect();
        x.push(1.0);
        let scores = class_scores(&self.weights, self.width(), &x);
        let p = softmax(scores);
        Ok((argmax(&scores), p))
    }
}

/// Outcome of training, including the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: ClassifierModel,
    /// Loss at initialization followed by the loss after every epoch.
    pub loss_history: Vec<f64>,
}

/// Trains on raw feature rows of equal width.
pub fn fit_rows(
    rows: &[&[f64]],
    labels: &[ReadabilityLabel],
    schema_version: &str,
    hp: &Hyperparams,
    seed: u64,
) -> Result<FitReport, ClassifierError> {
    hp.validate()?;
    if rows.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            features: rows.len(),
            labels: labels.len(),
        });
    }
    if rows.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let features = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != features) {
        return Err(ClassifierError::DimensionMismatch {
            expected: features,
            found: bad.len(),
        });
    }

    let scales = fit_normalization(rows);
    let design = Design::new(rows, labels, &scales);
    let mut weights = vec![0.0; CLASSES * design.width];
    if hp.init_scale > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut weights {
            *w = rng.random_range(-hp.init_scale..=hp.init_scale);
        }
    }

    let (mut loss, mut grad) = objective(&weights, &design, hp.l2_strength);
    let mut loss_history = vec![loss];
    for _ in 0..hp.max_epochs {
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= hp.learning_rate * g;
        }
        let (next_loss, next_grad) = objective(&weights, &design, hp.l2_strength);
        loss_history.push(next_loss);
        let improvement = loss - next_loss;
        loss = next_loss;
        grad = next_grad;
        if improvement < hp.convergence_tolerance {
            break;
        }
    }

    Ok(FitReport {
        model: ClassifierModel {
            feature_schema_version: schema_version.to_string(),
            normalization: scales,
            weights,
        },
        loss_history,
    })
}

pub fn fit(
    features: &[FeatureVector],
    labels: &[ReadabilityLabel],
    hp: &Hyperparams,
    seed: u64,
) -> Result<ClassifierModel, ClassifierError> {
    let schema = features
        .first()
        .map_or(crate::analysis::FEATURE_SCHEMA_VERSION, |f| f.schema_version.as_str());
    if let Some(bad) = features.iter().find(|f| f.schema_version != schema) {
        return Err(ClassifierError::SchemaMismatch {
            expected: schema.to_string(),
            found: bad.schema_version.clone(),
        });
    }
    let rows: Vec<&[f64]> = features.iter().map(FeatureVector::values).collect();
    Ok(fit_rows(&rows, labels, schema, hp, seed)?.model)
}

pub fn predict(
    model: &ClassifierModel,
    features: &FeatureVector,
) -> Result<(ReadabilityLabel, [f64; CLASSES]), ClassifierError> {
    if features.schema_version != model.feature_schema_version {
        return Err(ClassifierError::SchemaMismatch {
            expected: model.feature_schema_version.clone(),
            found: features.schema_version.clone(),
        });
    }
    model.predict_row(features.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use ReadabilityLabel::*;

    fn two_clusters(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<ReadabilityLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let (cx, label) = if i % 2 == 0 {
                (5.0, Readable)
            } else {
                (-5.0, Unreadable)
            };
            rows.push(vec![cx + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            labels.push(label);
        }
        (rows, labels)
    }

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn separable_clusters_fit() {
        let (rows, labels) = two_clusters(100, 1);
        let report = fit_rows(&refs(&rows), &labels, "t", &Hyperparams::default(), 0).unwrap();
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, l)| report.model.predict_row(r).unwrap().0 == **l)
            .count();
        assert!(correct as f64 / rows.len() as f64 >= 0.99);
    }

    #[test]
    fn single_class_predicts_that_class() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.0]];
        let labels = vec![Neutral; 3];
        let model = fit_rows(&refs(&rows), &labels, "t", &Hyperparams::default(), 0)
            .unwrap()
            .model;
        for probe in [[0.0, 0.0], [100.0, -100.0], [-3.0, 7.0]] {
            assert_eq!(model.predict_row(&probe).unwrap().0, Neutral);
        }
    }

    #[test]
    fn precondition_errors() {
        let rows = vec![vec![1.0]];
        assert!(matches!(
            fit_rows(&refs(&rows), &[Neutral, Readable], "t", &Hyperparams::default(), 0),
            Err(ClassifierError::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_rows(&[], &[], "t", &Hyperparams::default(), 0),
            Err(ClassifierError::EmptyTrainingSet)
        ));
        let hp = Hyperparams {
            learning_rate: 0.0,
            ..Hyperparams::default()
        };
        assert!(matches!(
            fit_rows(&refs(&rows), &[Neutral], "t", &hp, 0),
            Err(ClassifierError::InvalidHyperparams(_))
        ));
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let model = ClassifierModel {
            feature_schema_version: "t".into(),
            normalization: vec![FeatureScale { mean: 0.0, stddev: 1.0 }; 2],
            weights: vec![0.0; 9],
        };
        let (label, p) = model.predict_row(&[3.0, -2.0]).unwrap();
        assert_eq!(label, Unreadable);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_margin_saturates() {
        let model = ClassifierModel {
            feature_schema_version: "t".into(),
            normalization: vec![FeatureScale { mean: 0.0, stddev: 1.0 }],
            weights: vec![0.0, 0.0, 0.0, 0.0, 0.0, 10.0],
        };
        let (label, p) = model.predict_row(&[0.0]).unwrap();
        assert_eq!(label, Readable);
        assert!(p[2] > 0.99);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let model = fit(
            &[FeatureVector::from_values(vec![1.0; 16])],
            &[Readable],
            &Hyperparams::default(),
            0,
        )
        .unwrap();
        let mut fv = FeatureVector::from_values(vec![0.0; 16]);
        fv.schema_version = "other/9".into();
        assert!(matches!(
            predict(&model, &fv),
            Err(ClassifierError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn seed_only_matters_with_random_init() {
        let (rows, labels) = two_clusters(20, 4);
        let hp = Hyperparams {
            max_epochs: 50,
            ..Hyperparams::default()
        };
        let a = fit_rows(&refs(&rows), &labels, "t", &hp, 1).unwrap().model;
        let b = fit_rows(&refs(&rows), &labels, "t", &hp, 2).unwrap().model;
        assert_eq!(a, b);
        let hp = Hyperparams { init_scale: 0.1, ..hp };
        let c = fit_rows(&refs(&rows), &labels, "t", &hp, 1).unwrap().model;
        let d = fit_rows(&refs(&rows), &labels, "t", &hp, 1).unwrap().model;
        let e = fit_rows(&refs(&rows), &labels, "t", &hp, 2).unwrap().model;
        assert_eq!(c, d);
        assert_ne!(c, e);
    }

    #[test]
    fn loss_is_monotone_at_default_rate() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..16).map(|_| rng.random_range(-50.0..50.0)).collect())
                .collect();
            let labels: Vec<_> = (0..60).map(|_| ReadabilityLabel::ALL[rng.random_range(0..3)]).collect();
            let hp = Hyperparams {
                max_epochs: 400,
                ..Hyperparams::default()
            };
            let report = fit_rows(&refs(&rows), &labels, "t", &hp, 0).unwrap();
            for w in report.loss_history.windows(2) {
                assert!(w[1] <= w[0], "loss increased: {} -> {}", w[0], w[1]);
            }
        }
    }

    proptest! {
        #[test]
        fn normalization_standardizes_training_columns(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..30)
        ) {
            let r = refs(&rows);
            let scales = fit_normalization(&r);
            for (j, s) in scales.iter().enumerate() {
                let col: Vec<f64> = rows.iter().map(|row| s.apply(row[j])).collect();
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                if !s.is_constant() {
                    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                    prop_assert!((sd - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn probabilities_form_a_distribution(
            w in prop::collection::vec(-5.0f64..5.0, 9),
            x in prop::collection::vec(-3.0f64..3.0, 2),
            shift in -100.0f64..100.0,
        ) {
            let model = ClassifierModel {
                feature_schema_version: "t".into(),
                normalization: vec![FeatureScale { mean: 0.0, stddev: 1.0 }; 2],
                weights: w.clone(),
            };
            let (label, p) = model.predict_row(&x).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // Score gaps here reach ~70, so the top class may round to exactly 1.0;
            // exp(-70) is still representable, so no class underflows to zero.
            prop_assert!(p.iter().all(|v| *v > 0.0 && *v <= 1.0));
            let scores = class_scores(&model.weights, model.width(), &[x[0], x[1], 1.0]);
            for i in 0..3 {
                for j in 0..3 {
                    if scores[i] > scores[j] {
                        prop_assert!(p[i] >= p[j]);
                    }
                }
            }
            // Shifting every class's bias by the same constant moves every score equally.
            let mut shifted = w;
            for k in 0..3 {
                shifted[k * 3 + 2] += shift;
            }
            let model2 = ClassifierModel { weights: shifted, ..model };
            prop_assert_eq!(model2.predict_row(&x).unwrap().0, label);
        }
    }
}
