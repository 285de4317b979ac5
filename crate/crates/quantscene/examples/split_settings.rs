//! Build all four generalization settings from one corpus and verify their
//! leakage guarantees.
//!
//! ```bash
//! cargo run --release --example split_settings
//! ```

use quantscene::splits::{split, verify, Setting, SplitSpec};
use quantscene::world::{generate_corpus, Catalog, GenConfig};
use std::collections::HashSet;

fn main() {
    let catalog = Catalog::synthetic(40, 12, 3).expect("catalog");
    let config = GenConfig::default();
    let corpus = generate_corpus(300, &catalog, &config, 11).expect("generation").to_loaded();
    let records = corpus.split_records();
    println!("corpus: {} datapoints, {} distinct queries", records.len(), {
        let queries: HashSet<_> = records.iter().map(|r| (r.query.object, r.query.property)).collect();
        queries.len()
    });

    for setting in Setting::ALL {
        let spec = SplitSpec::new(setting, 5);
        let result = split(&records, &spec).expect("split");
        verify(&records, &result, &spec).expect("leakage check");
        println!(
            "\n{:>7}: {} train / {} val / {} test (leakage checks pass)",
            setting.name(),
            result.train.len(),
            result.val.len(),
            result.test.len()
        );
        let by_id: std::collections::HashMap<u64, _> =
            records.iter().map(|r| (r.id, r)).collect();
        match setting {
            Setting::Unc => {
                let train_queries: HashSet<_> = result
                    .train
                    .iter()
                    .map(|i| (by_id[i].query.object, by_id[i].query.property))
                    .collect();
                let shared = result
                    .test
                    .iter()
                    .filter(|i| {
                        train_queries.contains(&(by_id[*i].query.object, by_id[*i].query.property))
                    })
                    .count();
                println!(
                    "         queries repeat across partitions ({shared} test datapoints reuse a train query)"
                );
                println!("         but no scenario-query combination does");
            }
            Setting::UnsObj => {
                let train: HashSet<_> = result.train.iter().map(|i| by_id[i].query.object).collect();
                let test: HashSet<_> = result.test.iter().map(|i| by_id[i].query.object).collect();
                println!(
                    "         {} training restrictor objects, {} held-out, overlap {}",
                    train.len(),
                    test.len(),
                    train.intersection(&test).count()
                );
            }
            Setting::UnsProp => {
                let train: HashSet<_> =
                    result.train.iter().map(|i| by_id[i].query.property).collect();
                let test: HashSet<_> = result.test.iter().map(|i| by_id[i].query.property).collect();
                println!(
                    "         {} training scope properties, {} held-out, overlap {}",
                    train.len(),
                    test.len(),
                    train.intersection(&test).count()
                );
            }
            Setting::UnsQue => {
                let train: HashSet<_> = result
                    .train
                    .iter()
                    .map(|i| (by_id[i].query.object, by_id[i].query.property))
                    .collect();
                let test: HashSet<_> = result
                    .test
                    .iter()
                    .map(|i| (by_id[i].query.object, by_id[i].query.property))
                    .collect();
                println!(
                    "         {} training queries, {} held-out pairs, overlap {} (words all seen in training)",
                    train.len(),
                    test.len(),
                    train.intersection(&test).count()
                );
            }
        }
    }
}
