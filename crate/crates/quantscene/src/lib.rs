//! Visually grounded quantification over synthetic multi-object scenarios.
//!
//! This crate builds everything needed to study how classifiers learn the
//! quantifiers *no / few / some / most / all* as proportions between two
//! sets: a synthetic scenario generator with co-occurrence-driven
//! distractors, bias auditing, four generalization splits, seven classifier
//! architectures on a shared reverse-mode autodiff core, a training and
//! analysis harness, and an abstract dot-image control experiment.
//!
//! Start with the runnable programs under `examples/`, or the `quantscene`
//! binary for file-based pipelines.

pub mod cli;
pub mod dotworld;
pub mod models;
pub mod quantifier;
pub mod splits;
pub mod train;
pub mod world;
pub mod tensor;
