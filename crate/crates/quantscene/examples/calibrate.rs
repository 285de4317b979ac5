//! Scratch calibration of training dynamics at acceptance scale.

use quantscene::models::{build_scene_model, Architecture, ModelInput, ModelSpec, SceneDims};
use quantscene::quantifier::{quantize_ratio, SetCounts};
use quantscene::splits::{split, Setting, SplitSpec};
use quantscene::train::{evaluate, scene_items, train, TrainConfig, TrainItem};
use quantscene::world::{generate_corpus, Catalog, GenConfig};
use std::time::Instant;

fn main() {
    let catalog = Catalog::synthetic(160, 24, 42).unwrap();
    let config = GenConfig::default();
    let corpus = generate_corpus(2000, &catalog, &config, 42).unwrap().to_loaded();

    let spec = SplitSpec {
        setting: Setting::Unc,
        fractions: (0.6, 0.2, 0.2),
        seed: 1,
        exclude_heldout_distractors: false,
    };
    let result = split(&corpus.split_records(), &spec).unwrap();
    let train_set = scene_items(&corpus, &result.train).unwrap();
    let val_set = scene_items(&corpus, &result.val).unwrap();
    let test_set = scene_items(&corpus, &result.test).unwrap();
    let dims = SceneDims {
        vocab: corpus.vocab_size(),
        slots: corpus.config.slots,
        dim: corpus.config.dim,
    };

    // Hand-built counting rule: estimate m and k by thresholding slot-query
    // cosines, then quantize. Upper-bounds what attention could extract.
    for (tr, tp) in [(0.0, 0.0); 0] {
        let mut correct = 0;
        for item in &test_set {
            let scene = match &item.input {
                ModelInput::Scene(s) => s,
                _ => unreachable!(),
            };
            let d = scene.dim;
            let mut m_est = 0usize;
            let mut k_est = 0usize;
            for i in 0..scene.slot_count {
                let v = &scene.slots_flat[i * d..(i + 1) * d];
                let vr: f64 = v.iter().zip(&scene.restrictor_vec).map(|(a, b)| a * b).sum();
                let vp: f64 = v.iter().zip(&scene.scope_vec).map(|(a, b)| a * b).sum();
                if vr > tr {
                    m_est += 1;
                    if vp > tp {
                        k_est += 1;
                    }
                }
            }
            let predicted = if m_est == 0 {
                quantscene::quantifier::QuantifierLabel::No
            } else {
                quantize_ratio(SetCounts::new(m_est, k_est.min(m_est))).unwrap()
            };
            if predicted == item.label {
                correct += 1;
            }
        }
        println!(
            "hand rule tr={tr} tp={tp}: {:.3}",
            correct as f64 / test_set.len() as f64
        );
    }

    // How separable are the cosines themselves?
    let mut r_match: Vec<f64> = Vec::new();
    let mut r_other = Vec::new();
    for item in test_set.iter().take(200) {
        let scene = match &item.input {
            ModelInput::Scene(s) => s,
            _ => unreachable!(),
        };
        let d = scene.dim;
        for i in 0..scene.slot_count {
            let v = &scene.slots_flat[i * d..(i + 1) * d];
            let vr: f64 = v.iter().zip(&scene.restrictor_vec).map(|(a, b)| a * b).sum();
            r_other.push(vr);
        }
        let _ = &mut r_match;
    }
    r_other.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "slot·restrictor percentiles: p10 {:.3} p50 {:.3} p90 {:.3}",
        r_other[r_other.len() / 10],
        r_other[r_other.len() / 2],
        r_other[9 * r_other.len() / 10]
    );

    // QMN has the matching built in; does it train?
    for (arch, lr) in [
        (Architecture::Qsan, 1.0),
        (Architecture::Bow, 0.05),
        (Architecture::CnnBow, 0.05),
        (Architecture::San, 1.0),
    ] {
        let t = Instant::now();
        let mspec = ModelSpec::with_seed(arch, 1);
        let mut model = build_scene_model(&mspec, &dims).unwrap();
        let tconfig = TrainConfig {
            learning_rate: lr,
            max_epochs: 250,
            patience: 50,
            seed: 1,
            ..TrainConfig::default()
        };
        let outcome = train(model.as_mut(), &train_set, &val_set, &tconfig).unwrap();
        let report = evaluate(model.as_ref(), &test_set, 3).unwrap();
        let trajectory: Vec<String> = outcome
            .history
            .iter()
            .step_by(15)
            .map(|e| format!("{:.2}", e.val_accuracy))
            .collect();
        println!(
            "{arch:8} lr {lr:+.2}: test {:.3} best-val {:.3} (epoch {}/{}) val[{}] in {:?}",
            report.overall_accuracy,
            outcome.best_val_accuracy,
            outcome.best_epoch,
            outcome.history.len(),
            trajectory.join(","),
            t.elapsed()
        );
    }
}
