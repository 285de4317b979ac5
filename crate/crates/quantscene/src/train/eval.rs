//! The evaluation battery: accuracy, confusion, error adjacency, accuracy
//! against within-label ratio position, and accuracy against the number of
//! distractors carrying the queried property.

use super::{TrainError, TrainItem};
use crate::models::Model;
use crate::quantifier::{scale_distance, QuantifierLabel, ALL_LABELS};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    pub id: u64,
    pub label: QuantifierLabel,
    pub predicted: QuantifierLabel,
    pub ratio: f64,
    pub distractors_with_scope: usize,
}

/// Run the model over every item. Ties in the argmax go to the lower
/// ordinal so evaluation is deterministic.
pub fn predict(model: &dyn Model, items: &[TrainItem]) -> Result<Vec<Prediction>, TrainError> {
    items
        .par_iter()
        .map(|item| {
            let mut tape = crate::tensor::Tape::new();
            let bound = model.params().bind(&mut tape);
            let logits = model.forward(&mut tape, &bound, &item.input)?;
            let data = tape.value(logits).data();
            let mut best = 0usize;
            for (i, &v) in data.iter().enumerate() {
                if v > data[best] {
                    best = i;
                }
            }
            Ok(Prediction {
                id: item.id,
                label: item.label,
                predicted: QuantifierLabel::from_ordinal(best).expect("five logits"),
                ratio: item.counts.ratio(),
                distractors_with_scope: item.distractors_with_scope,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelStats {
    pub label: QuantifierLabel,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioBin {
    pub lo: f64,
    pub hi: f64,
    pub cases: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelBins {
    pub label: QuantifierLabel,
    pub bins: Vec<RatioBin>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistractorRow {
    pub cardinality: usize,
    pub cases: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub overall_accuracy: f64,
    pub per_label: Vec<LabelStats>,
    /// `confusion[target][predicted]`, label ordinal order.
    pub confusion: [[usize; 5]; 5],
    /// Histogram of scale distances between target and prediction;
    /// index 0 counts correct answers.
    pub adjacency: [usize; 5],
    pub ratio_bins: Vec<LabelBins>,
    pub distractors: Vec<DistractorRow>,
}

pub fn evaluate(
    model: &dyn Model,
    items: &[TrainItem],
    ratio_bins: usize,
) -> Result<EvalReport, TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let predictions = predict(model, items)?;
    Ok(report_from_predictions(&predictions, ratio_bins))
}

/// Assemble every report field from raw predictions.
pub fn report_from_predictions(predictions: &[Prediction], ratio_bins: usize) -> EvalReport {
    let total = predictions.len();
    let mut confusion = [[0usize; 5]; 5];
    let mut adjacency = [0usize; 5];
    for p in predictions {
        confusion[p.label.ordinal()][p.predicted.ordinal()] += 1;
        adjacency[scale_distance(p.label, p.predicted)] += 1;
    }
    let per_label: Vec<LabelStats> = ALL_LABELS
        .into_iter()
        .map(|label| {
            let row = &confusion[label.ordinal()];
            let count: usize = row.iter().sum();
            let correct = row[label.ordinal()];
            LabelStats {
                label,
                count,
                correct,
                accuracy: if count == 0 { 0.0 } else { correct as f64 / count as f64 },
            }
        })
        .collect();
    let correct: usize = (0..5).map(|i| confusion[i][i]).sum();
    EvalReport {
        total,
        overall_accuracy: correct as f64 / total as f64,
        per_label,
        confusion,
        adjacency,
        ratio_bins: ratio_bin_analysis(predictions, ratio_bins),
        distractors: distractor_analysis(predictions),
    }
}

/// Ratio range of each label that spans more than a point.
fn label_range(label: QuantifierLabel) -> Option<(f64, f64)> {
    match label {
        QuantifierLabel::Few => Some((0.0, 0.17)),
        QuantifierLabel::Some => Some((0.17, 0.70)),
        QuantifierLabel::Most => Some((0.70, 1.0)),
        QuantifierLabel::No | QuantifierLabel::All => None,
    }
}

/// Per-label accuracy across equal-width bins of the exact ratio k/m within
/// the label's range. Only the range labels (few, some, most) appear, and
/// empty bins are absent rather than zero.
pub fn ratio_bin_analysis(predictions: &[Prediction], bins: usize) -> Vec<LabelBins> {
    assert!(bins >= 1);
    let mut out = Vec::new();
    for label in ALL_LABELS {
        let Some((lo, hi)) = label_range(label) else { continue };
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![(0usize, 0usize); bins];
        for p in predictions.iter().filter(|p| p.label == label) {
            let t = (p.ratio - lo) / (hi - lo);
            let idx = ((t * bins as f64).floor() as usize).min(bins - 1);
            counts[idx].0 += 1;
            if p.predicted == p.label {
                counts[idx].1 += 1;
            }
        }
        let bins: Vec<RatioBin> = counts
            .into_iter()
            .enumerate()
            .filter(|(_, (cases, _))| *cases > 0)
            .map(|(i, (cases, correct))| RatioBin {
                lo: lo + i as f64 * width,
                hi: lo + (i + 1) as f64 * width,
                cases,
                correct,
                accuracy: correct as f64 / cases as f64,
            })
            .collect();
        out.push(LabelBins { label, bins });
    }
    out
}

/// Accuracy at the boundary-nearest bin versus the most interior bin.
/// `None` when fewer than two bins carry data.
pub fn dip_check(label: QuantifierLabel, bins: &[RatioBin]) -> Option<(f64, f64)> {
    let (lo, hi) = label_range(label)?;
    if bins.len() < 2 {
        return None;
    }
    let distance = |b: &RatioBin| {
        let mid = (b.lo + b.hi) / 2.0;
        (mid - lo).abs().min((hi - mid).abs())
    };
    let boundary = bins
        .iter()
        .min_by(|a, b| distance(a).partial_cmp(&distance(b)).expect("finite"))?;
    let interior = bins
        .iter()
        .max_by(|a, b| distance(a).partial_cmp(&distance(b)).expect("finite"))?;
    Some((boundary.accuracy, interior.accuracy))
}

/// Accuracy grouped by how many distractors carry the queried property.
/// Rows appear for observed cardinalities only, in increasing order.
pub fn distractor_analysis(predictions: &[Prediction]) -> Vec<DistractorRow> {
    let mut by_cardinality: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for p in predictions {
        let entry = by_cardinality.entry(p.distractors_with_scope).or_default();
        entry.0 += 1;
        if p.predicted == p.label {
            entry.1 += 1;
        }
    }
    by_cardinality
        .into_iter()
        .map(|(cardinality, (cases, correct))| DistractorRow {
            cardinality,
            cases,
            correct,
            accuracy: correct as f64 / cases as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_scene_model, Architecture, ModelSpec, SceneDims};
    use crate::quantifier::{quantize_ratio, SetCounts};
    use crate::train::scene_items;
    use crate::world::{feasible_counts, generate_corpus, Catalog, GenConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn balanced_items(per_label: usize, seed: u64) -> (Vec<TrainItem>, SceneDims) {
        let catalog = Catalog::synthetic(12, 6, 4).unwrap();
        let config = GenConfig { dim: 8, ..GenConfig::default() };
        let corpus = generate_corpus(per_label, &catalog, &config, seed).unwrap().to_loaded();
        let ids: Vec<u64> = corpus.records.iter().map(|r| r.id).collect();
        let dims = SceneDims {
            vocab: corpus.vocab_size(),
            slots: corpus.config.slots,
            dim: corpus.config.dim,
        };
        (scene_items(&corpus, &ids).unwrap(), dims)
    }

    #[test]
    fn constant_predictor_scores_one_fifth_on_balanced_data() {
        let (items, dims) = balanced_items(40, 3);
        let spec = ModelSpec { d_embed: 8, ..ModelSpec::new(Architecture::Bow) };
        let mut model = build_scene_model(&spec, &dims).unwrap();
        // Zero weights plus a bias spike force the constant answer "some".
        let mut values = vec![0.0; model.params().value_count()];
        model.params_mut().assign_flat(&values);
        let idx = model.params().index_of("classifier.bias").unwrap();
        model.params_mut().tensor_mut(idx).data_mut()[2] = 1.0;
        values = model.params().flatten();
        model.params_mut().assign_flat(&values);
        let report = evaluate(model.as_ref(), &items, 3).unwrap();
        assert!((report.overall_accuracy - 0.2).abs() < 1e-12);
        assert!(report.per_label[2].accuracy == 1.0);
        // A constant predictor is flat across distractor cardinalities:
        // within each row, accuracy equals the share of "some" targets.
        for row in &report.distractors {
            assert!(row.cases >= row.correct);
        }
    }

    #[test]
    fn uniform_logits_break_ties_toward_the_lower_ordinal() {
        let (items, dims) = balanced_items(2, 5);
        let spec = ModelSpec { d_embed: 8, ..ModelSpec::new(Architecture::Bow) };
        let mut model = build_scene_model(&spec, &dims).unwrap();
        let values = vec![0.0; model.params().value_count()];
        model.params_mut().assign_flat(&values);
        let predictions = predict(model.as_ref(), &items).unwrap();
        assert!(predictions.iter().all(|p| p.predicted == QuantifierLabel::No));
    }

    #[test]
    fn confusion_diagonal_equals_overall_accuracy() {
        let (items, dims) = balanced_items(20, 7);
        let spec = ModelSpec { d_embed: 8, seed: 11, ..ModelSpec::new(Architecture::Bow) };
        let model = build_scene_model(&spec, &dims).unwrap();
        let report = evaluate(model.as_ref(), &items, 3).unwrap();
        let diagonal: usize = (0..5).map(|i| report.confusion[i][i]).sum();
        assert!((diagonal as f64 / report.total as f64 - report.overall_accuracy).abs() < 1e-12);
        // Row sums equal per-label counts.
        for (i, stats) in report.per_label.iter().enumerate() {
            assert_eq!(report.confusion[i].iter().sum::<usize>(), stats.count);
        }
        // Adjacency histogram sums to the test size; bucket 0 is correct.
        assert_eq!(report.adjacency.iter().sum::<usize>(), report.total);
        assert_eq!(report.adjacency[0], diagonal);
    }

    #[test]
    fn chance_baseline_sits_near_one_fifth() {
        // Binomial check: an untrained model over 2000 balanced datapoints
        // lands within 0.02 of chance.
        let (items, dims) = balanced_items(400, 13);
        assert_eq!(items.len(), 2000);
        let spec = ModelSpec { d_embed: 8, seed: 2, ..ModelSpec::new(Architecture::Bow) };
        let model = build_scene_model(&spec, &dims).unwrap();
        let report = evaluate(model.as_ref(), &items, 3).unwrap();
        assert!(
            (report.overall_accuracy - 0.2).abs() <= 0.02,
            "chance accuracy {}",
            report.overall_accuracy
        );
    }

    #[test]
    fn evaluation_is_pure() {
        let (items, dims) = balanced_items(10, 17);
        let spec = ModelSpec { d_embed: 8, seed: 5, ..ModelSpec::new(Architecture::Bow) };
        let model = build_scene_model(&spec, &dims).unwrap();
        let a = evaluate(model.as_ref(), &items, 3).unwrap();
        let b = evaluate(model.as_ref(), &items, 3).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    /// Synthetic predictions straight from the feasible count table.
    fn synthetic_predictions(
        per_label: usize,
        seed: u64,
        mut predict: impl FnMut(SetCounts) -> QuantifierLabel,
    ) -> Vec<Prediction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut id = 0;
        for label in ALL_LABELS {
            let feasible = feasible_counts(label, 6, 16);
            for _ in 0..per_label {
                let counts = feasible[rng.random_range(0..feasible.len())];
                out.push(Prediction {
                    id,
                    label,
                    predicted: predict(counts),
                    ratio: counts.ratio(),
                    distractors_with_scope: rng.random_range(0..8),
                });
                id += 1;
            }
        }
        out
    }

    #[test]
    fn all_label_ratios_fall_in_one_point() {
        let predictions = synthetic_predictions(50, 1, |c| quantize_ratio(c).unwrap());
        let report = report_from_predictions(&predictions, 3);
        // `all` has no range, so only few/some/most appear in the analysis.
        let labels: Vec<QuantifierLabel> = report.ratio_bins.iter().map(|b| b.label).collect();
        assert_eq!(
            labels,
            vec![QuantifierLabel::Few, QuantifierLabel::Some, QuantifierLabel::Most]
        );
        assert!(predictions
            .iter()
            .filter(|p| p.label == QuantifierLabel::All)
            .all(|p| p.ratio == 1.0));
    }

    #[test]
    fn constructed_boundary_predictor_shows_the_dip() {
        // A predictor that errs exactly when the ratio is within 0.06 of a
        // label boundary produces boundary bins weaker than interior bins
        // for all three range labels.
        let wobble = |c: SetCounts| -> QuantifierLabel {
            let label = quantize_ratio(c).unwrap();
            let r = c.ratio();
            let near = [0.17f64, 0.70]
                .iter()
                .any(|b| (r - b).abs() < 0.06)
                || (label == QuantifierLabel::Most && r > 0.94);
            if near {
                let shifted = if label.ordinal() == 4 { 3 } else { label.ordinal() + 1 };
                QuantifierLabel::from_ordinal(shifted).unwrap()
            } else {
                label
            }
        };
        let predictions = synthetic_predictions(400, 2, wobble);
        let report = report_from_predictions(&predictions, 3);
        let mut dips = 0;
        for label_bins in &report.ratio_bins {
            let (boundary, interior) = dip_check(label_bins.label, &label_bins.bins).unwrap();
            if boundary <= interior {
                dips += 1;
            }
        }
        assert_eq!(dips, 3, "every range label should dip at its boundary");
    }

    #[test]
    fn distractor_rows_cover_generated_cardinalities_without_gaps() {
        let (items, dims) = balanced_items(400, 23);
        let spec = ModelSpec { d_embed: 8, seed: 5, ..ModelSpec::new(Architecture::Bow) };
        let model = build_scene_model(&spec, &dims).unwrap();
        let report = evaluate(model.as_ref(), &items, 3).unwrap();
        assert_eq!(report.distractors.iter().map(|r| r.cases).sum::<usize>(), items.len());
        let max = report.distractors.last().unwrap().cardinality;
        let observed: Vec<usize> = report.distractors.iter().map(|r| r.cardinality).collect();
        assert_eq!(observed, (observed[0]..=max).collect::<Vec<_>>(), "gap in cardinalities");
    }
}
