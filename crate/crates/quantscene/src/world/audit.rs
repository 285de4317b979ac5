//! Language-bias audit: how skewed is each query toward each label?
//!
//! For every query the report carries the fraction of its occurrences
//! falling on each label; a corpus is unbiased when those fractions hover
//! around 0.2. Per-label five-number summaries provide box-plot data.

use super::generate::Query;
use super::WorldError;
use crate::quantifier::QuantifierLabel;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize)]
pub struct QueryBias {
    pub object: usize,
    pub property: usize,
    pub occurrences: usize,
    /// Fraction of this query's datapoints per label, ordinal order.
    pub ratios: [f64; 5],
}

/// Distribution of per-query ratios for one label.
#[derive(Clone, Debug, Serialize)]
pub struct LabelRatioSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Lower quartile, median, upper quartile.
    pub quartiles: [f64; 3],
}

#[derive(Clone, Debug, Serialize)]
pub struct BiasReport {
    pub per_query: Vec<QueryBias>,
    /// Summaries in label ordinal order.
    pub per_label: [LabelRatioSummary; 5],
}

impl BiasReport {
    pub fn max_ratio(&self) -> f64 {
        self.per_label.iter().fold(0.0, |m, s| m.max(s.max))
    }
}

pub fn audit_bias(
    items: impl Iterator<Item = (Query, QuantifierLabel)>,
) -> Result<BiasReport, WorldError> {
    let mut counts: BTreeMap<(usize, usize), [usize; 5]> = BTreeMap::new();
    let mut total = 0usize;
    for (query, label) in items {
        counts.entry((query.object, query.property)).or_default()[label.ordinal()] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(WorldError::EmptyCorpus);
    }

    let per_query: Vec<QueryBias> = counts
        .into_iter()
        .map(|((object, property), by_label)| {
            let occurrences: usize = by_label.iter().sum();
            let mut ratios = [0.0; 5];
            for (r, &c) in ratios.iter_mut().zip(&by_label) {
                *r = c as f64 / occurrences as f64;
            }
            QueryBias { object, property, occurrences, ratios }
        })
        .collect();

    let per_label = std::array::from_fn(|label| {
        let mut values: Vec<f64> = per_query.iter().map(|q| q.ratios[label]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("ratios are finite"));
        LabelRatioSummary {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values[0],
            max: values[values.len() - 1],
            quartiles: [
                quantile(&values, 0.25),
                quantile(&values, 0.5),
                quantile(&values, 0.75),
            ],
        }
    });

    Ok(BiasReport { per_query, per_label })
}

/// Linear-interpolation quantile over sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}
