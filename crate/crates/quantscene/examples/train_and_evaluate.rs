//! End-to-end at toy scale: generate, split, train a stacked-attention
//! classifier, and print the full evaluation battery.
//!
//! ```bash
//! cargo run --release --example train_and_evaluate
//! ```

use quantscene::models::{build_scene_model, Architecture, ModelSpec, SceneDims};
use quantscene::splits::{split, verify, Setting, SplitSpec};
use quantscene::train::{evaluate, scene_items, train, TrainConfig};
use quantscene::world::{generate_corpus, Catalog, GenConfig};

fn main() {
    let catalog = Catalog::synthetic(24, 10, 9).expect("catalog");
    let config = GenConfig::default();
    let corpus = generate_corpus(300, &catalog, &config, 9).expect("generation").to_loaded();
    let records = corpus.split_records();

    let spec = SplitSpec::new(Setting::Unc, 1);
    let result = split(&records, &spec).expect("split");
    verify(&records, &result, &spec).expect("leakage check");
    let train_set = scene_items(&corpus, &result.train).expect("train items");
    let val_set = scene_items(&corpus, &result.val).expect("val items");
    let test_set = scene_items(&corpus, &result.test).expect("test items");
    println!(
        "{} train / {} val / {} test",
        train_set.len(),
        val_set.len(),
        test_set.len()
    );

    let dims = SceneDims {
        vocab: corpus.vocab_size(),
        slots: corpus.config.slots,
        dim: corpus.config.dim,
    };
    let mut model = build_scene_model(&ModelSpec::with_seed(Architecture::Qsan, 1), &dims)
        .expect("model");
    let config = TrainConfig {
        learning_rate: 0.3,
        max_epochs: 60,
        patience: 60,
        seed: 1,
        ..TrainConfig::default()
    };
    println!("training qsan for up to {} epochs...", config.max_epochs);
    let outcome = train(model.as_mut(), &train_set, &val_set, &config).expect("training");
    for e in outcome.history.iter().step_by(10) {
        println!("  epoch {:3}  loss {:.4}  val {:.3}", e.epoch, e.train_loss, e.val_accuracy);
    }

    let report = evaluate(model.as_ref(), &test_set, 3).expect("evaluation");
    println!("\ntest accuracy {:.3} over {} datapoints", report.overall_accuracy, report.total);
    println!("\nconfusion (rows = target, columns = predicted):");
    println!("{:>6} {:>5} {:>5} {:>5} {:>5} {:>5}", "", "no", "few", "some", "most", "all");
    for stats in &report.per_label {
        let row = report.confusion[stats.label.ordinal()];
        println!(
            "{:>6} {:>5} {:>5} {:>5} {:>5} {:>5}",
            stats.label.word(),
            row[0],
            row[1],
            row[2],
            row[3],
            row[4]
        );
    }
    println!("\nerror distances on the scale: {:?}", report.adjacency);
    println!("\naccuracy by within-label ratio position:");
    for label_bins in &report.ratio_bins {
        for bin in &label_bins.bins {
            println!(
                "  {:>5} [{:.3}, {:.3}]  {:.3} ({}/{})",
                label_bins.label.word(),
                bin.lo,
                bin.hi,
                bin.accuracy,
                bin.correct,
                bin.cases
            );
        }
    }
    println!("\naccuracy by distractors sharing the queried property:");
    for row in &report.distractors {
        println!("  {}: {:.3} ({}/{})", row.cardinality, row.accuracy, row.correct, row.cases);
    }
}
