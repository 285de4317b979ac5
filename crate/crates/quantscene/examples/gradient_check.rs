//! Check every architecture's analytic gradients against central finite
//! differences on real datapoints.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use quantscene::dotworld::{render_dots, DotCnn, DotImageConfig, DotNetConfig};
use quantscene::models::{build_scene_model, Architecture, Model, ModelInput, ModelSpec, SceneDims};
use quantscene::tensor::grad_check;
use quantscene::train::scene_item;
use quantscene::world::{generate_corpus, Catalog, GenConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let catalog = Catalog::synthetic(16, 8, 2).expect("catalog");
    let config = GenConfig { dim: 16, ..GenConfig::default() };
    let corpus = generate_corpus(2, &catalog, &config, 5).expect("generation").to_loaded();
    let dims = SceneDims {
        vocab: corpus.vocab_size(),
        slots: corpus.config.slots,
        dim: corpus.config.dim,
    };

    println!("{:>8} {:>8} {:>14} {:>10}", "model", "params", "max rel err", "time");
    for arch in Architecture::SCENE {
        let spec = ModelSpec {
            d_embed: 16,
            d_hidden: 16,
            d_mem: 16,
            seed: 1,
            ..ModelSpec::new(arch)
        };
        let model = build_scene_model(&spec, &dims).expect("model");
        let item = scene_item(&corpus, &corpus.records[1]);
        let t = Instant::now();
        let report = check(model.as_ref(), &item.input, item.label.ordinal());
        println!(
            "{:>8} {:>8} {:>14.3e} {:>10.2?}",
            arch.name(),
            model.params().value_count(),
            report,
            t.elapsed()
        );
    }

    let net = DotNetConfig { height: 32, width: 32, ..DotNetConfig::default() };
    let model = DotCnn::new(&ModelSpec::with_seed(Architecture::DotCnn, 1), &net).expect("model");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let image = render_dots(3, 5, &DotImageConfig { height: 32, width: 32, radius: 3 }, &mut rng)
        .expect("render");
    let t = Instant::now();
    let report = check(&model, &ModelInput::Image(image), 2);
    println!(
        "{:>8} {:>8} {:>14.3e} {:>10.2?}",
        "dot-cnn",
        model.params().value_count(),
        report,
        t.elapsed()
    );
}

fn check(model: &dyn Model, input: &ModelInput, label: usize) -> f64 {
    grad_check(
        model.params(),
        &|tape, bound| {
            let logits = model
                .forward(tape, bound, input)
                .map_err(|_| quantscene::tensor::TensorError::Dimension("forward".into()))?;
            tape.cross_entropy(logits, label)
        },
        1e-3,
    )
    .expect("gradient check")
    .max_rel_err
}
