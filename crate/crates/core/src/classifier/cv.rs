//! Leave-developer-out 10-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fit_rows, ClassifierError, ClassifierModel, Hyperparams};
use crate::analysis::FeatureVector;
use crate::corpus::{RatingMatrix, ReadabilityLabel};

pub const FOLDS: usize = 10;

/// Partition of snippet positions (indices into the matrix's snippet order)
/// into disjoint folds whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut folds = vec![Vec::with_capacity(n / k + 1); k];
        for (i, idx) in order.into_iter().enumerate() {
            folds[i % k].push(idx);
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        FoldPlan { seed, folds }
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        train
    }
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    /// One prediction per snippet, in matrix snippet order.
    pub predictions: Vec<ReadabilityLabel>,
    /// Majority-of-others labels the folds were trained on.
    pub training_truth: Vec<ReadabilityLabel>,
    pub plan: FoldPlan,
}

/// Trains on the majority label of every developer except `developer`, one
/// model per fold, and predicts each held-out fold.
///
/// `features` must be aligned with `matrix.snippet_ids()`.
pub fn cross_validate(
    matrix: &RatingMatrix,
    features: &[FeatureVector],
    developer: &str,
    hp: &Hyperparams,
    seed: u64,
) -> Result<CrossValidation, ClassifierError> {
    matrix.require_dense()?;
    let view = matrix.remove_developer(developer)?;
    let n = matrix.snippet_count();
    if n < FOLDS {
        return Err(ClassifierError::TooFewSnippets {
            needed: FOLDS,
            found: n,
        });
    }
    if features.len() != n {
        return Err(ClassifierError::LengthMismatch {
            features: features.len(),
            labels: n,
        });
    }
    let truth = (0..n)
        .map(|s| view.majority_label_at(s))
        .collect::<Result<Vec<_>, _>>()?;

    let schema = features[0].schema_version.as_str();
    let plan = FoldPlan::new(n, FOLDS, seed);
    let mut predictions = vec![ReadabilityLabel::Unreadable; n];
    for fold in 0..FOLDS {
        let train = plan.train_indices(fold);
        let rows: Vec<&[f64]> = train.iter().map(|&i| features[i].values()).collect();
        let labels: Vec<ReadabilityLabel> = train.iter().map(|&i| truth[i]).collect();
        let model: ClassifierModel = fit_rows(&rows, &labels, schema, hp, seed)?.model;
        for &i in plan.test_indices(fold) {
            predictions[i] = super::predict(&model, &features[i])?.0;
        }
    }
    Ok(CrossValidation {
        predictions,
        training_truth: truth,
        plan,
    })
}
