//! Token-level static analysis of raw snippets.

mod features;
mod tokenizer;

pub use features::{
    extract_features, feature_table, features_csv, halstead_volume, token_entropy, FeatureVector, FEATURE_NAMES,
    FEATURE_SCHEMA_VERSION,
};
pub use tokenizer::{is_keyword, tokenize, Token, TokenKind, TokenStream, KEYWORDS};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("empty source")]
    EmptySource,
    #[error("no non-comment tokens")]
    NoCodeTokens,
    #[error("snippet `{id}`: {source}")]
    Snippet {
        id: String,
        #[source]
        source: Box<AnalysisError>,
    },
}
