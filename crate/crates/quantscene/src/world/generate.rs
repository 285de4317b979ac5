//! Scenario assembly and balanced corpus generation.
//!
//! A scenario is a fixed number of object slots. Given a query and a target
//! label, the assembler samples a feasible (restrictor size, target size)
//! pair, realizes the restrictor instances, fills the remaining slots with
//! PMI-weighted distractors (which may carry the queried property), and
//! shuffles slot order so position carries no signal.

use super::{Catalog, EmbeddingSpace, WorldError};
use crate::quantifier::{quantize_ratio, QuantifierLabel, SetCounts, ALL_LABELS};
use crate::world::synth_embeddings;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Object slots per scenario.
    pub slots: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Instance noise level.
    pub sigma: f64,
    /// Smallest restrictor cardinality; 6 is the least value under which
    /// every label on the scale stays reachable.
    pub min_restrictor: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { slots: 16, dim: 32, sigma: 0.1, min_restrictor: 6 }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub object: usize,
    pub property: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub object: usize,
    /// Sorted property ids carried by this instance.
    pub properties: Vec<usize>,
    pub embedding: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub slots: Vec<Slot>,
}

impl Scenario {
    /// Stable structural key over slot objects and properties, independent
    /// of embedding noise. Used for scenario-query leakage checks.
    pub fn key(&self) -> u64 {
        let mut h = Fnv::new();
        for slot in &self.slots {
            h.write(slot.object as u64 + 1);
            for &p in &slot.properties {
                h.write(p as u64 + 1);
            }
            h.write(0);
        }
        h.finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Datapoint {
    pub id: u64,
    pub query: Query,
    pub label: QuantifierLabel,
    pub counts: SetCounts,
    /// Distractor slots that carry the queried property.
    pub distractors_with_scope: usize,
    pub scenario: Scenario,
}

impl Datapoint {
    pub fn dedup_key(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(self.scenario.key());
        h.write(self.query.object as u64);
        h.write(self.query.property as u64);
        h.finish()
    }
}

/// Every (m, k) with `quantize_ratio(m, k) = label` and `min_m ≤ m ≤ max_m`.
pub fn feasible_counts(label: QuantifierLabel, min_m: usize, max_m: usize) -> Vec<SetCounts> {
    let mut out = Vec::new();
    for m in min_m..=max_m {
        for k in 0..=m {
            if quantize_ratio(SetCounts::new(m, k)) == Ok(label) {
                out.push(SetCounts::new(m, k));
            }
        }
    }
    out
}

/// Build one datapoint for a query and target label.
pub fn assemble_scenario(
    id: u64,
    query: Query,
    label: QuantifierLabel,
    catalog: &Catalog,
    space: &EmbeddingSpace,
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Datapoint, WorldError> {
    if !catalog.is_plausible(query.object, query.property) {
        return Err(WorldError::ImplausibleQuery {
            object: query.object,
            property: query.property,
        });
    }
    let feasible = feasible_counts(label, config.min_restrictor, config.slots);
    if feasible.is_empty() {
        return Err(WorldError::UnreachableLabel {
            label,
            min_m: config.min_restrictor,
            max_m: config.slots,
        });
    }
    let counts = feasible[rng.random_range(0..feasible.len())];
    let SetCounts { m, k } = counts;

    let mut slots = Vec::with_capacity(config.slots);
    // Restrictor instances carrying the scope property.
    for _ in 0..k {
        let mut props = vec![query.property];
        props.extend(sample_extra_properties(
            catalog.plausible_of(query.object),
            query.property,
            0,
            rng,
        ));
        props.sort_unstable();
        slots.push(new_slot(query.object, props, space, rng));
    }
    // Restrictor instances without it: they must bear something else.
    for _ in 0..(m - k) {
        let props =
            sample_extra_properties(catalog.plausible_of(query.object), query.property, 1, rng);
        if props.is_empty() {
            return Err(WorldError::NoAlternativeProperty { object: query.object });
        }
        slots.push(new_slot(query.object, props, space, rng));
    }
    // Distractors drawn by co-occurrence likelihood; the queried property is
    // allowed on them.
    let weights = catalog.distractor_weights(query.object);
    let sampler = WeightedIndex::new(&weights)
        .map_err(|e| WorldError::CatalogInvalid(format!("distractor weights: {e}")))?;
    let mut distractors_with_scope = 0;
    for _ in 0..(config.slots - m) {
        let object = sampler.sample(rng);
        let plausible = catalog.plausible_of(object);
        let count = rng.random_range(1..=plausible.len().min(3));
        let mut props: Vec<usize> = plausible.to_vec();
        props.shuffle(rng);
        props.truncate(count);
        props.sort_unstable();
        if props.contains(&query.property) {
            distractors_with_scope += 1;
        }
        slots.push(new_slot(object, props, space, rng));
    }
    slots.shuffle(rng);

    debug_assert_eq!(quantize_ratio(counts), Ok(label));
    Ok(Datapoint {
        id,
        query,
        label,
        counts,
        distractors_with_scope,
        scenario: Scenario { slots },
    })
}

fn new_slot(
    object: usize,
    properties: Vec<usize>,
    space: &EmbeddingSpace,
    rng: &mut ChaCha8Rng,
) -> Slot {
    let embedding = space.instance(object, &properties, rng);
    Slot { object, properties, embedding }
}

/// Up to three plausible properties other than `exclude`; at least `min`.
fn sample_extra_properties(
    plausible: &[usize],
    exclude: usize,
    min: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut available: Vec<usize> = plausible.iter().copied().filter(|&p| p != exclude).collect();
    if available.is_empty() {
        return Vec::new();
    }
    let hi = available.len().min(3);
    let count = rng.random_range(min.min(hi)..=hi);
    available.shuffle(rng);
    available.truncate(count);
    available.sort_unstable();
    available
}

/// A generated corpus: the catalog and embedding space it was built from
/// plus exactly `per_quantifier` datapoints for each label.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub seed: u64,
    pub per_quantifier: usize,
    pub config: GenConfig,
    pub catalog: Catalog,
    pub space: EmbeddingSpace,
    pub datapoints: Vec<Datapoint>,
}

const MAX_ATTEMPTS: usize = 64;

/// Generate a balanced corpus: `per_quantifier` datapoints per label, with
/// queries drawn uniformly over plausible pairs and no repeated
/// (scenario, query) combination. Deterministic given the seed.
pub fn generate_corpus(
    per_quantifier: usize,
    catalog: &Catalog,
    config: &GenConfig,
    seed: u64,
) -> Result<Corpus, WorldError> {
    assert!(per_quantifier >= 1);
    let space = synth_embeddings(catalog, config.dim, config.sigma, mix(seed, 0x9e37, 0, 0))?;
    let pairs = catalog.plausible_pairs();
    let mut seen = HashSet::new();
    let mut datapoints = Vec::with_capacity(per_quantifier * ALL_LABELS.len());
    let mut id = 0u64;
    for label in ALL_LABELS {
        for i in 0..per_quantifier {
            let mut attempt = 0usize;
            let datapoint = loop {
                if attempt >= MAX_ATTEMPTS {
                    return Err(WorldError::TooManyAttempts { attempts: attempt });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(mix(
                    seed,
                    label.ordinal() as u64 + 1,
                    i as u64,
                    attempt as u64,
                ));
                let (object, property) = pairs[rng.random_range(0..pairs.len())];
                let query = Query { object, property };
                match assemble_scenario(id, query, label, catalog, &space, config, &mut rng) {
                    Ok(dp) if seen.insert(dp.dedup_key()) => break dp,
                    Ok(_) | Err(WorldError::NoAlternativeProperty { .. }) => attempt += 1,
                    Err(e) => return Err(e),
                }
            };
            datapoints.push(datapoint);
            id += 1;
        }
    }
    Ok(Corpus {
        seed,
        per_quantifier,
        config: *config,
        catalog: catalog.clone(),
        space,
        datapoints,
    })
}

/// SplitMix64-style mixing of a master seed with stream coordinates.
fn mix(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(b.wrapping_mul(0xBF58476D1CE4E5B9))
        .wrapping_add(c.wrapping_mul(0x94D049BB133111EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// FNV-1a, fixed so keys stay stable across toolchains.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    fn write(&mut self, value: u64) {
        for byte in value.to_le_bytes() {
            self.0 ^= byte as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}
