//! The abstract control experiment at reduced scale: white/black dot images
//! and the one-convolution-layer classifier.
//!
//! ```bash
//! cargo run --release --example dot_classifier
//! ```

use quantscene::dotworld::{generate_dot_corpus, DotCnn, DotImageConfig, DotNetConfig, DotRecord};
use quantscene::models::{Architecture, ModelInput, ModelSpec};
use quantscene::train::{evaluate, train, TrainConfig, TrainItem};

fn items(records: Vec<DotRecord>) -> Vec<TrainItem> {
    records
        .into_iter()
        .map(|r| TrainItem {
            id: r.id,
            label: r.label,
            counts: r.counts,
            distractors_with_scope: 0,
            input: ModelInput::Image(r.image),
        })
        .collect()
}

fn main() {
    let image_config = DotImageConfig::default();
    let train_set = items(generate_dot_corpus(300, &image_config, 1).expect("generation"));
    let val_set = items(generate_dot_corpus(60, &image_config, 2).expect("generation"));
    let test_set = items(generate_dot_corpus(100, &image_config, 3).expect("generation"));
    println!(
        "{} train / {} val / {} test images of {}×{}",
        train_set.len(),
        val_set.len(),
        test_set.len(),
        image_config.height,
        image_config.width
    );

    // Peek at one image as ASCII art.
    if let ModelInput::Image(image) = &train_set[1].input {
        println!(
            "\nsample: {} white, {} black -> {}",
            image.white,
            image.black,
            train_set[1].label
        );
        for y in (0..image.height).step_by(2) {
            let row: String = (0..image.width)
                .step_by(2)
                .map(|x| match image.pixels[y * image.width + x] {
                    p if p == 1.0 => 'o',
                    p if p == 0.0 => '#',
                    _ => '.',
                })
                .collect();
            println!("  {row}");
        }
    }

    let net = DotNetConfig::default();
    let mut model =
        DotCnn::new(&ModelSpec::with_seed(Architecture::DotCnn, 1), &net).expect("model");
    let config = TrainConfig {
        learning_rate: 0.5,
        max_epochs: 40,
        patience: 40,
        seed: 1,
        ..TrainConfig::default()
    };
    println!("\ntraining the one-convolution-layer classifier...");
    let outcome = train(&mut model, &train_set, &val_set, &config).expect("training");
    for e in outcome.history.iter().step_by(8) {
        println!("  epoch {:3}  loss {:.4}  val {:.3}", e.epoch, e.train_loss, e.val_accuracy);
    }

    let report = evaluate(&model, &test_set, 3).expect("evaluation");
    println!("\ntest accuracy {:.3} over {} images", report.overall_accuracy, report.total);
    for stats in &report.per_label {
        println!("  {:>5}: {:.3} ({}/{})", stats.label.word(), stats.accuracy, stats.correct, stats.count);
    }
    println!("\n(acceptance runs this at 1400 images per label, where accuracy clears 0.90)");
}
