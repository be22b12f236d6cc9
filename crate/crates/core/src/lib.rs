//! Workbench for personalized code readability assessment: rating datasets,
//! snippet features, a feature classifier, LLM labeling protocols, metrics
//! and the dataset consistency audit.

pub mod analysis;
pub mod classifier;
pub mod consistency;
pub mod corpus;
pub mod evalkit;
pub mod generalist;
pub mod llm_gateway;
pub mod parallel;
pub mod personalization;
pub mod prompt;
