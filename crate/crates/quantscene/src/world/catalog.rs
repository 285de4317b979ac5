//! Object/property catalog with plausibility pairs and caption-style
//! co-occurrence statistics for PMI-weighted distractor sampling.

use super::WorldError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};

/// PMI assigned to object pairs never seen together.
const UNSEEN_PMI: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct Catalog {
    objects: Vec<String>,
    properties: Vec<String>,
    /// Sorted plausible property ids per object.
    plausible: Vec<Vec<usize>>,
    /// Co-occurrence counts keyed by (lower id, higher id).
    cooccur: HashMap<(usize, usize), u64>,
    /// Caption-corpus frequency per object word.
    unigram: Vec<u64>,
    /// Total words in the caption corpus.
    corpus_size: u64,
}

impl Catalog {
    pub fn new(
        objects: Vec<String>,
        properties: Vec<String>,
        plausible: Vec<Vec<usize>>,
        cooccur: HashMap<(usize, usize), u64>,
        unigram: Vec<u64>,
        corpus_size: u64,
    ) -> Result<Self, WorldError> {
        let catalog = Self { objects, properties, plausible, cooccur, unigram, corpus_size };
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<(), WorldError> {
        if self.objects.is_empty() || self.properties.is_empty() {
            return Err(WorldError::CatalogInvalid("no objects or no properties".into()));
        }
        if self.plausible.len() != self.objects.len() || self.unigram.len() != self.objects.len() {
            return Err(WorldError::CatalogInvalid(
                "plausibility or unigram table length differs from object count".into(),
            ));
        }
        for (o, props) in self.plausible.iter().enumerate() {
            if props.is_empty() {
                return Err(WorldError::CatalogInvalid(format!(
                    "object {o} has no plausible property"
                )));
            }
            if props.iter().any(|&p| p >= self.properties.len()) {
                return Err(WorldError::CatalogInvalid(format!(
                    "object {o} references an unknown property"
                )));
            }
            if props.windows(2).any(|w| w[0] >= w[1]) {
                return Err(WorldError::CatalogInvalid(format!(
                    "plausible properties of object {o} are not sorted and distinct"
                )));
            }
        }
        let total: u64 = self.unigram.iter().sum();
        if self.corpus_size < total {
            return Err(WorldError::CatalogInvalid(format!(
                "corpus size {} below the summed unigram counts {total}",
                self.corpus_size
            )));
        }
        Ok(())
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn property_count(&self) -> usize {
        self.properties.len()
    }

    pub fn object_name(&self, o: usize) -> &str {
        &self.objects[o]
    }

    pub fn property_name(&self, p: usize) -> &str {
        &self.properties[p]
    }

    pub fn object_names(&self) -> &[String] {
        &self.objects
    }

    pub fn property_names(&self) -> &[String] {
        &self.properties
    }

    pub fn plausible_of(&self, o: usize) -> &[usize] {
        &self.plausible[o]
    }

    pub fn plausible_table(&self) -> &[Vec<usize>] {
        &self.plausible
    }

    pub fn is_plausible(&self, o: usize, p: usize) -> bool {
        self.plausible[o].binary_search(&p).is_ok()
    }

    /// All ⟨object, property⟩ pairs allowed to co-occur, in id order.
    pub fn plausible_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (o, props) in self.plausible.iter().enumerate() {
            for &p in props {
                pairs.push((o, p));
            }
        }
        pairs
    }

    /// Pointwise mutual information of two object words in the caption
    /// corpus, natural log. Pairs never seen together (or with an unseen
    /// word) get the constant 0.01.
    pub fn pmi(&self, o1: usize, o2: usize) -> f64 {
        let key = (o1.min(o2), o1.max(o2));
        let f12 = self.cooccur.get(&key).copied().unwrap_or(0);
        let f1 = self.unigram[o1];
        let f2 = self.unigram[o2];
        if f12 == 0 || f1 == 0 || f2 == 0 {
            return UNSEEN_PMI;
        }
        ((f12 as f64 * self.corpus_size as f64) / (f1 as f64 * f2 as f64)).ln()
    }

    /// Normalized distractor weights for a restrictor object: PMI against
    /// every other object, clipped below at 0.01, scaled to sum to one.
    /// The restrictor's own weight is zero.
    pub fn distractor_weights(&self, restrictor: usize) -> Vec<f64> {
        let mut weights: Vec<f64> = (0..self.objects.len())
            .map(|o| {
                if o == restrictor {
                    0.0
                } else {
                    self.pmi(restrictor, o).max(UNSEEN_PMI)
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        weights
    }

    /// A deterministic synthetic catalog sized like a medium annotated
    /// image corpus: pseudo-word names, around eight plausible properties
    /// per object (at least two), and caption co-occurrence counts whose
    /// seen-pair PMIs mostly land between 0.5 and 5.
    pub fn synthetic(objects: usize, properties: usize, seed: u64) -> Result<Self, WorldError> {
        assert!(objects >= 2 && properties >= 2, "catalog needs at least two of each");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let object_names = pseudo_words(&mut rng, objects, 3);
        let property_names = pseudo_words(&mut rng, properties, 2);

        let mut plausible: Vec<Vec<usize>> = Vec::with_capacity(objects);
        let mut covered: HashSet<usize> = HashSet::new();
        let mut ids: Vec<usize> = (0..properties).collect();
        for _ in 0..objects {
            let target: f64 = 8.0 + rng.random_range(-2.5..2.5);
            let count = (target.round() as usize).clamp(2, properties);
            ids.shuffle(&mut rng);
            let mut props: Vec<usize> = ids[..count].to_vec();
            props.sort_unstable();
            covered.extend(props.iter().copied());
            plausible.push(props);
        }
        // Any property nobody carries gets attached somewhere.
        for p in 0..properties {
            if !covered.contains(&p) {
                let o = rng.random_range(0..objects);
                if let Err(pos) = plausible[o].binary_search(&p) {
                    plausible[o].insert(pos, p);
                }
            }
        }

        let unigram: Vec<u64> = (0..objects).map(|_| rng.random_range(200..3000)).collect();
        let total: u64 = unigram.iter().sum();
        let corpus_size = (4 * total).max(1_000_000);
        let mut cooccur = HashMap::new();
        for o1 in 0..objects {
            for o2 in (o1 + 1)..objects {
                if rng.random_bool(0.5) {
                    let target_pmi: f64 = rng.random_range(0.5..5.0);
                    let raw = target_pmi.exp() * unigram[o1] as f64 * unigram[o2] as f64
                        / corpus_size as f64;
                    let f12 = (raw.round() as u64).clamp(1, unigram[o1].min(unigram[o2]));
                    cooccur.insert((o1, o2), f12);
                }
            }
        }

        Self::new(object_names, property_names, plausible, cooccur, unigram, corpus_size)
    }
}

fn pseudo_words(rng: &mut ChaCha8Rng, count: usize, syllables: usize) -> Vec<String> {
    const ONSETS: &[&str] = &[
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr",
    ];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut word = String::new();
        for _ in 0..syllables {
            word.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            word.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
        }
        if seen.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmi_closed_form() {
        // f12 = 10, f1 = 100, f2 = 200, N = 1e6 → ln(10·1e6 / 20000) = ln 500.
        let catalog = Catalog::new(
            vec!["a".into(), "b".into()],
            vec!["p".into()],
            vec![vec![0], vec![0]],
            HashMap::from([((0, 1), 10)]),
            vec![100, 200],
            1_000_000,
        )
        .unwrap();
        assert!((catalog.pmi(0, 1) - 500f64.ln()).abs() < 1e-12);
        assert!((catalog.pmi(0, 1) - 6.2146).abs() < 1e-4);
    }

    #[test]
    fn unseen_pairs_get_the_constant() {
        let catalog = Catalog::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["p".into()],
            vec![vec![0], vec![0], vec![0]],
            HashMap::from([((0, 1), 10)]),
            vec![100, 200, 0],
            1_000_000,
        )
        .unwrap();
        assert_eq!(catalog.pmi(0, 2), 0.01);
        assert_eq!(catalog.pmi(1, 2), 0.01);
    }

    #[test]
    fn independent_pair_has_zero_pmi() {
        // f12·N = f1·f2: 20·1e6 = 4000·5000.
        let catalog = Catalog::new(
            vec!["a".into(), "b".into()],
            vec!["p".into()],
            vec![vec![0], vec![0]],
            HashMap::from([((0, 1), 20)]),
            vec![4000, 5000],
            1_000_000,
        )
        .unwrap();
        assert!(catalog.pmi(0, 1).abs() < 1e-12);
    }

    #[test]
    fn synthetic_catalog_shape() {
        let c = Catalog::synthetic(160, 24, 7).unwrap();
        assert_eq!(c.object_count(), 160);
        assert_eq!(c.property_count(), 24);
        let mean_props: f64 = c
            .plausible_table()
            .iter()
            .map(|p| p.len() as f64)
            .sum::<f64>()
            / 160.0;
        assert!((6.0..10.0).contains(&mean_props), "mean plausible {mean_props}");
        for o in 0..160 {
            assert!(c.plausible_of(o).len() >= 2);
        }
        // Same seed, same catalog.
        let c2 = Catalog::synthetic(160, 24, 7).unwrap();
        assert_eq!(c.object_names(), c2.object_names());
        assert_eq!(c.plausible_table(), c2.plausible_table());
    }

    #[test]
    fn distractor_weights_normalize_and_exclude_restrictor() {
        let c = Catalog::synthetic(40, 10, 3).unwrap();
        let w = c.distractor_weights(5);
        assert_eq!(w[5], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().enumerate().all(|(o, &x)| o == 5 || x > 0.0));
    }

    #[test]
    fn catalog_invariants_enforced() {
        assert!(Catalog::new(
            vec!["a".into()],
            vec!["p".into()],
            vec![vec![]],
            HashMap::new(),
            vec![10],
            100,
        )
        .is_err());
        assert!(Catalog::new(
            vec!["a".into()],
            vec!["p".into()],
            vec![vec![0]],
            HashMap::new(),
            vec![200],
            100,
        )
        .is_err());
    }
}
