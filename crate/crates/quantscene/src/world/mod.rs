//! Synthetic scenario worlds: a concept catalog with co-occurrence
//! statistics, an embedding generator standing in for frozen visual and word
//! vectors, a scenario assembler driven by quantifier labels, balanced
//! corpus generation, and a language-bias auditor.

mod audit;
mod catalog;
mod embed;
mod format;
mod generate;

pub use audit::{audit_bias, BiasReport, LabelRatioSummary, QueryBias};
pub use catalog::Catalog;
pub use embed::{synth_embeddings, EmbeddingSpace};
pub use format::{load_corpus, save_corpus, FormatError, LoadedCorpus, LoadedDatapoint, LoadedSlot};
pub use generate::{
    assemble_scenario, feasible_counts, generate_corpus, Corpus, Datapoint, GenConfig, Query,
    Scenario, Slot,
};

use crate::quantifier::QuantifierLabel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("catalog invalid: {0}")]
    CatalogInvalid(String),
    #[error("embedding dimension {dim} below the minimum of 4")]
    EmbeddingDimTooSmall { dim: usize },
    #[error("query pairs object {object} with implausible property {property}")]
    ImplausibleQuery { object: usize, property: usize },
    #[error("label {label} is unreachable with restrictor cardinality in [{min_m}, {max_m}]")]
    UnreachableLabel {
        label: QuantifierLabel,
        min_m: usize,
        max_m: usize,
    },
    #[error("object {object} has no plausible property besides the scope")]
    NoAlternativeProperty { object: usize },
    #[error("gave up after {attempts} attempts to generate a fresh datapoint")]
    TooManyAttempts { attempts: usize },
    #[error("bias audit over an empty corpus")]
    EmptyCorpus,
}
