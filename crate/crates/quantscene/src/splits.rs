//! Train/validation/test partitions for the four experimental settings.
//!
//! * `UNC` — datapoint-level split; queries and scenarios may repeat across
//!   partitions but scenario-query combinations never do.
//! * `UnsObj` — 70/30 over restrictor objects: held-out objects never act
//!   as the restrictor in training (optionally not even as distractors).
//! * `UnsProp` — the same over scope properties.
//! * `UnsQue` — 70/30 over ⟨object, property⟩ tuples: both words of a
//!   held-out query appear in training, the pair itself does not.
//!
//! Validation and test always share the held-out vocabulary side and are
//! datapoint-disjoint. Every partition is rebalanced per label by
//! downsampling, so each holds an equal number of datapoints per label.

use crate::quantifier::{QuantifierLabel, ALL_LABELS};
use crate::world::{LoadedCorpus, Query};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Unc,
    UnsObj,
    UnsProp,
    UnsQue,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Unc, Setting::UnsObj, Setting::UnsProp, Setting::UnsQue];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Unc => "unc",
            Setting::UnsObj => "unsobj",
            Setting::UnsProp => "unsprop",
            Setting::UnsQue => "unsque",
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unc" => Ok(Setting::Unc),
            "unsobj" | "uns-obj" => Ok(Setting::UnsObj),
            "unsprop" | "uns-prop" => Ok(Setting::UnsProp),
            "unsque" | "uns-que" => Ok(Setting::UnsQue),
            other => Err(format!("unknown setting {other}; use unc|unsobj|unsprop|unsque")),
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitSpec {
    pub setting: Setting,
    /// (train, val, test); positive, summing to one.
    pub fractions: (f64, f64, f64),
    pub seed: u64,
    /// When set, UnsObj also drops training scenarios that contain a
    /// held-out object anywhere among their slots.
    pub exclude_heldout_distractors: bool,
}

impl SplitSpec {
    pub fn new(setting: Setting, seed: u64) -> Self {
        Self {
            setting,
            fractions: (0.7, 0.15, 0.15),
            seed,
            exclude_heldout_distractors: false,
        }
    }

    fn validate(&self) -> Result<(), SplitError> {
        let (a, b, c) = self.fractions;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(SplitError::BadFractions(self.fractions));
        }
        Ok(())
    }
}

/// The facts about one datapoint that splitting looks at.
#[derive(Clone, Debug)]
pub struct SplitRecord {
    pub id: u64,
    pub label: QuantifierLabel,
    pub query: Query,
    pub scenario_key: u64,
    pub slot_objects: Vec<usize>,
}

impl LoadedCorpus {
    pub fn split_records(&self) -> Vec<SplitRecord> {
        self.records
            .iter()
            .map(|r| SplitRecord {
                id: r.id,
                label: r.label,
                query: r.query,
                scenario_key: r.scenario_key,
                slot_objects: r.slots.iter().map(|s| s.object).collect(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitResult {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl SplitResult {
    pub fn partitions(&self) -> [(&'static str, &[u64]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("fractions {0:?} must be positive and sum to 1")]
    BadFractions((f64, f64, f64)),
    #[error("corpus is not balanced per label (counts {0:?})")]
    Unbalanced([usize; 5]),
    #[error("too few {kind} to hold any out ({available} available)")]
    TooFewUnits { kind: &'static str, available: usize },
    #[error("partition {partition} lost label {label} entirely")]
    EmptyLabel { partition: &'static str, label: QuantifierLabel },
    #[error("leakage: {0}")]
    Leakage(String),
    #[error("split i/o: {0}")]
    Io(#[from] io::Error),
    #[error("split manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed split manifest: {0}")]
    Malformed(String),
}

/// Partition a corpus according to the spec. Deterministic given the seed.
pub fn split(records: &[SplitRecord], spec: &SplitSpec) -> Result<SplitResult, SplitError> {
    spec.validate()?;
    let mut counts = [0usize; 5];
    for r in records {
        counts[r.label.ordinal()] += 1;
    }
    if counts.iter().max() != counts.iter().min() {
        return Err(SplitError::Unbalanced(counts));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.setting {
        Setting::Unc => split_unc(records, spec, &mut rng),
        Setting::UnsObj => {
            split_heldout(records, spec, &mut rng, "objects", |r| r.query.object)
        }
        Setting::UnsProp => {
            split_heldout(records, spec, &mut rng, "properties", |r| r.query.property)
        }
        Setting::UnsQue => split_unseen_queries(records, spec, &mut rng),
    }
}

fn split_unc(
    records: &[SplitRecord],
    spec: &SplitSpec,
    rng: &mut ChaCha8Rng,
) -> Result<SplitResult, SplitError> {
    let mut by_label: [Vec<u64>; 5] = Default::default();
    for r in records {
        by_label[r.label.ordinal()].push(r.id);
    }
    let mut result = SplitResult { train: vec![], val: vec![], test: vec![] };
    for ids in by_label.iter_mut() {
        ids.shuffle(rng);
        let n = ids.len();
        let val_n = (n as f64 * spec.fractions.1).floor() as usize;
        let test_n = (n as f64 * spec.fractions.2).floor() as usize;
        let train_n = n - val_n - test_n;
        result.train.extend(&ids[..train_n]);
        result.val.extend(&ids[train_n..train_n + val_n]);
        result.test.extend(&ids[train_n + val_n..]);
    }
    sort_result(&mut result);
    Ok(result)
}

/// Shared shape of UnsObj and UnsProp: hold out 30% of the vocabulary units,
/// keep training datapoints whose unit is in the training side, then
/// rebalance each partition per label.
fn split_heldout(
    records: &[SplitRecord],
    spec: &SplitSpec,
    rng: &mut ChaCha8Rng,
    kind: &'static str,
    unit: impl Fn(&SplitRecord) -> usize,
) -> Result<SplitResult, SplitError> {
    let units: BTreeSet<usize> = records.iter().map(&unit).collect();
    let mut units: Vec<usize> = units.into_iter().collect();
    let (train_units, held_units) = hold_out_units(&mut units, spec, rng, kind)?;

    let exclude_slots = spec.exclude_heldout_distractors && spec.setting == Setting::UnsObj;
    let train_pool: Vec<&SplitRecord> = records
        .iter()
        .filter(|r| train_units.contains(&unit(r)))
        .filter(|r| !exclude_slots || r.slot_objects.iter().all(|o| !held_units.contains(o)))
        .collect();
    let held_pool: Vec<&SplitRecord> =
        records.iter().filter(|r| held_units.contains(&unit(r))).collect();
    assemble(train_pool, held_pool, rng)
}

fn split_unseen_queries(
    records: &[SplitRecord],
    spec: &SplitSpec,
    rng: &mut ChaCha8Rng,
) -> Result<SplitResult, SplitError> {
    let tuples: BTreeSet<(usize, usize)> =
        records.iter().map(|r| (r.query.object, r.query.property)).collect();
    let mut tuples: Vec<(usize, usize)> = tuples.into_iter().collect();
    if tuples.len() < 4 {
        return Err(SplitError::TooFewUnits { kind: "queries", available: tuples.len() });
    }
    tuples.shuffle(rng);
    let target_held = ((tuples.len() as f64) * (spec.fractions.1 + spec.fractions.2)).floor() as usize;

    // Greedy hold-out that keeps both words of every held tuple alive in
    // training: a tuple may leave only while its object and property each
    // appear in at least one other training tuple.
    let mut obj_count: HashMap<usize, usize> = HashMap::new();
    let mut prop_count: HashMap<usize, usize> = HashMap::new();
    for &(o, p) in &tuples {
        *obj_count.entry(o).or_default() += 1;
        *prop_count.entry(p).or_default() += 1;
    }
    let mut held: HashSet<(usize, usize)> = HashSet::new();
    for &(o, p) in tuples.iter() {
        if held.len() >= target_held {
            break;
        }
        if obj_count[&o] >= 2 && prop_count[&p] >= 2 {
            held.insert((o, p));
            *obj_count.get_mut(&o).unwrap() -= 1;
            *prop_count.get_mut(&p).unwrap() -= 1;
        }
    }
    if held.is_empty() {
        return Err(SplitError::TooFewUnits { kind: "queries", available: tuples.len() });
    }

    let train_pool: Vec<&SplitRecord> = records
        .iter()
        .filter(|r| !held.contains(&(r.query.object, r.query.property)))
        .collect();
    let held_pool: Vec<&SplitRecord> = records
        .iter()
        .filter(|r| held.contains(&(r.query.object, r.query.property)))
        .collect();
    assemble(train_pool, held_pool, rng)
}

/// 70/30 unit split with rounding in favor of training.
fn hold_out_units(
    units: &mut [usize],
    spec: &SplitSpec,
    rng: &mut ChaCha8Rng,
    kind: &'static str,
) -> Result<(HashSet<usize>, HashSet<usize>), SplitError> {
    if units.len() < 4 {
        return Err(SplitError::TooFewUnits { kind, available: units.len() });
    }
    units.shuffle(rng);
    let held_n = ((units.len() as f64) * (spec.fractions.1 + spec.fractions.2)).floor() as usize;
    let held_n = held_n.max(1).min(units.len() - 1);
    let train_n = units.len() - held_n;
    let train: HashSet<usize> = units[..train_n].iter().copied().collect();
    let held: HashSet<usize> = units[train_n..].iter().copied().collect();
    Ok((train, held))
}

/// Balance the training pool per label, then divide the held pool equally
/// between validation and test, also balanced per label.
fn assemble(
    train_pool: Vec<&SplitRecord>,
    held_pool: Vec<&SplitRecord>,
    rng: &mut ChaCha8Rng,
) -> Result<SplitResult, SplitError> {
    let mut result = SplitResult { train: vec![], val: vec![], test: vec![] };

    let mut train_by_label: [Vec<u64>; 5] = Default::default();
    for r in &train_pool {
        train_by_label[r.label.ordinal()].push(r.id);
    }
    let train_quota = train_by_label.iter().map(Vec::len).min().unwrap_or(0);
    if train_quota == 0 {
        let label = missing_label(&train_by_label);
        return Err(SplitError::EmptyLabel { partition: "train", label });
    }
    for ids in train_by_label.iter_mut() {
        ids.shuffle(rng);
        result.train.extend(&ids[..train_quota]);
    }

    let mut held_by_label: [Vec<u64>; 5] = Default::default();
    for r in &held_pool {
        held_by_label[r.label.ordinal()].push(r.id);
    }
    let held_quota = {
        let q = held_by_label.iter().map(Vec::len).min().unwrap_or(0);
        q - q % 2
    };
    if held_quota == 0 {
        let label = missing_label(&held_by_label);
        return Err(SplitError::EmptyLabel { partition: "val/test", label });
    }
    for ids in held_by_label.iter_mut() {
        ids.shuffle(rng);
        result.val.extend(&ids[..held_quota / 2]);
        result.test.extend(&ids[held_quota / 2..held_quota]);
    }
    sort_result(&mut result);
    Ok(result)
}

fn missing_label(by_label: &[Vec<u64>; 5]) -> QuantifierLabel {
    ALL_LABELS[by_label.iter().position(|v| v.is_empty()).unwrap_or(0)]
}

fn sort_result(result: &mut SplitResult) {
    result.train.sort_unstable();
    result.val.sort_unstable();
    result.test.sort_unstable();
}

/// Check every disjointness, balance, and leakage property of a split.
/// Runs on every split this crate produces.
pub fn verify(
    records: &[SplitRecord],
    result: &SplitResult,
    spec: &SplitSpec,
) -> Result<(), SplitError> {
    let by_id: HashMap<u64, &SplitRecord> = records.iter().map(|r| (r.id, r)).collect();
    let mut seen: HashSet<u64> = HashSet::new();
    for (name, ids) in result.partitions() {
        for id in ids {
            if !by_id.contains_key(id) {
                return Err(SplitError::Leakage(format!("{name} holds unknown id {id}")));
            }
            if !seen.insert(*id) {
                return Err(SplitError::Leakage(format!("id {id} in more than one partition")));
            }
        }
    }

    for (name, ids) in result.partitions() {
        let mut counts = [0usize; 5];
        for id in ids {
            counts[by_id[id].label.ordinal()] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        if hi - lo > 1 {
            return Err(SplitError::Leakage(format!(
                "{name} label counts {counts:?} differ by more than one"
            )));
        }
    }

    let recs = |ids: &[u64]| -> Vec<&SplitRecord> { ids.iter().map(|i| by_id[i]).collect() };
    let train = recs(&result.train);
    let val = recs(&result.val);
    let test = recs(&result.test);

    match spec.setting {
        Setting::Unc => {
            let key = |r: &SplitRecord| (r.scenario_key, r.query.object, r.query.property);
            let train_keys: HashSet<_> = train.iter().map(|r| key(r)).collect();
            for r in val.iter().chain(&test) {
                if train_keys.contains(&key(r)) {
                    return Err(SplitError::Leakage(format!(
                        "scenario-query pair of datapoint {} appears in train and held-out",
                        r.id
                    )));
                }
            }
        }
        Setting::UnsObj | Setting::UnsProp => {
            let unit = |r: &SplitRecord| {
                if spec.setting == Setting::UnsObj {
                    r.query.object
                } else {
                    r.query.property
                }
            };
            let train_units: HashSet<_> = train.iter().map(|r| unit(r)).collect();
            let held_units: HashSet<_> = val.iter().chain(&test).map(|r| unit(r)).collect();
            if let Some(shared) = train_units.intersection(&held_units).next() {
                return Err(SplitError::Leakage(format!(
                    "unit {shared} is a restrictor/scope in both train and held-out"
                )));
            }
            if spec.exclude_heldout_distractors && spec.setting == Setting::UnsObj {
                for r in &train {
                    if r.slot_objects.iter().any(|o| held_units.contains(o)) {
                        return Err(SplitError::Leakage(format!(
                            "held-out object appears among slots of training datapoint {}",
                            r.id
                        )));
                    }
                }
            }
        }
        Setting::UnsQue => {
            let tup = |r: &SplitRecord| (r.query.object, r.query.property);
            let train_tuples: HashSet<_> = train.iter().map(|r| tup(r)).collect();
            let train_objects: HashSet<_> = train.iter().map(|r| r.query.object).collect();
            let train_props: HashSet<_> = train.iter().map(|r| r.query.property).collect();
            for r in val.iter().chain(&test) {
                if train_tuples.contains(&tup(r)) {
                    return Err(SplitError::Leakage(format!(
                        "query of held-out datapoint {} was trained on",
                        r.id
                    )));
                }
                if !train_objects.contains(&r.query.object)
                    || !train_props.contains(&r.query.property)
                {
                    return Err(SplitError::Leakage(format!(
                        "a word of held-out query ({}, {}) never occurs in training",
                        r.query.object, r.query.property
                    )));
                }
            }
        }
    }
    Ok(())
}

// ── manifests ───────────────────────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub corpus: Option<String>,
    pub counts: BTreeMap<String, usize>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Write `train.ids`, `val.ids`, `test.ids` (one datapoint id per line) and
/// a manifest carrying the spec, seed, and source corpus.
pub fn save_split(
    dir: &Path,
    result: &SplitResult,
    spec: &SplitSpec,
    corpus: Option<&Path>,
) -> Result<(), SplitError> {
    std::fs::create_dir_all(dir)?;
    for (name, ids) in result.partitions() {
        let mut w = BufWriter::new(File::create(dir.join(format!("{name}.ids")))?);
        for id in ids {
            writeln!(w, "{id}")?;
        }
        w.flush()?;
    }
    let manifest = SplitManifest {
        spec: spec.clone(),
        corpus: corpus.map(|p| p.display().to_string()),
        counts: result
            .partitions()
            .iter()
            .map(|(n, ids)| (n.to_string(), ids.len()))
            .collect(),
    };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_split(dir: &Path) -> Result<(SplitResult, SplitManifest), SplitError> {
    let manifest: SplitManifest =
        serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
    let read_ids = |name: &str| -> Result<Vec<u64>, SplitError> {
        let reader = BufReader::new(File::open(dir.join(format!("{name}.ids")))?);
        let mut ids = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            ids.push(
                line.parse::<u64>()
                    .map_err(|_| SplitError::Malformed(format!("bad id line: {line}")))?,
            );
        }
        Ok(ids)
    };
    Ok((
        SplitResult { train: read_ids("train")?, val: read_ids("val")?, test: read_ids("test")? },
        manifest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_corpus, Catalog, GenConfig};

    fn corpus_records() -> Vec<SplitRecord> {
        let catalog = Catalog::synthetic(24, 10, 5).unwrap();
        let config = GenConfig { dim: 8, ..GenConfig::default() };
        let corpus = generate_corpus(120, &catalog, &config, 17).unwrap();
        corpus.to_loaded().split_records()
    }

    #[test]
    fn every_setting_splits_and_verifies() {
        let records = corpus_records();
        for setting in Setting::ALL {
            let spec = SplitSpec::new(setting, 3);
            let result = split(&records, &spec).unwrap();
            verify(&records, &result, &spec).unwrap_or_else(|e| panic!("{setting}: {e}"));
            assert!(!result.train.is_empty() && !result.val.is_empty() && !result.test.is_empty());
        }
    }

    #[test]
    fn unc_split_uses_everything_and_favors_train() {
        let records = corpus_records();
        let spec = SplitSpec::new(Setting::Unc, 11);
        let result = split(&records, &spec).unwrap();
        assert_eq!(
            result.train.len() + result.val.len() + result.test.len(),
            records.len()
        );
        // 120 per label: floor(120·0.15) = 18 to val and test each, 84 train.
        assert_eq!(result.val.len(), 18 * 5);
        assert_eq!(result.test.len(), 18 * 5);
        assert_eq!(result.train.len(), 84 * 5);
    }

    #[test]
    fn unc_train_and_test_share_no_scenario_query_pair() {
        let records = corpus_records();
        let spec = SplitSpec::new(Setting::Unc, 11);
        let result = split(&records, &spec).unwrap();
        let by_id: HashMap<u64, &SplitRecord> = records.iter().map(|r| (r.id, r)).collect();
        let key = |id: &u64| {
            let r = by_id[id];
            (r.scenario_key, r.query.object, r.query.property)
        };
        let train: HashSet<_> = result.train.iter().map(key).collect();
        let test: HashSet<_> = result.test.iter().map(key).collect();
        assert!(train.is_disjoint(&test));
    }

    #[test]
    fn heldout_unit_counts_favor_train() {
        // 160 units at 70/30 → 112 train, 48 held out.
        let mut units: Vec<usize> = (0..160).collect();
        let spec = SplitSpec::new(Setting::UnsObj, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, held) = hold_out_units(&mut units, &spec, &mut rng, "objects").unwrap();
        assert_eq!(train.len(), 112);
        assert_eq!(held.len(), 48);
    }

    #[test]
    fn unsobj_restrictors_are_disjoint() {
        let records = corpus_records();
        let spec = SplitSpec::new(Setting::UnsObj, 23);
        let result = split(&records, &spec).unwrap();
        let by_id: HashMap<u64, &SplitRecord> = records.iter().map(|r| (r.id, r)).collect();
        let train_objs: HashSet<usize> =
            result.train.iter().map(|i| by_id[i].query.object).collect();
        let held_objs: HashSet<usize> = result
            .val
            .iter()
            .chain(&result.test)
            .map(|i| by_id[i].query.object)
            .collect();
        assert!(train_objs.is_disjoint(&held_objs));
        // Val and test see the same held-out vocabulary.
        let val_objs: HashSet<usize> = result.val.iter().map(|i| by_id[i].query.object).collect();
        let test_objs: HashSet<usize> = result.test.iter().map(|i| by_id[i].query.object).collect();
        assert!(!val_objs.is_disjoint(&test_objs));
    }

    #[test]
    fn unsque_set_algebra_oracle() {
        let records = corpus_records();
        let spec = SplitSpec::new(Setting::UnsQue, 29);
        let result = split(&records, &spec).unwrap();
        let by_id: HashMap<u64, &SplitRecord> = records.iter().map(|r| (r.id, r)).collect();
        let train_queries: HashSet<(usize, usize)> = result
            .train
            .iter()
            .map(|i| (by_id[i].query.object, by_id[i].query.property))
            .collect();
        let train_words: (HashSet<usize>, HashSet<usize>) = (
            train_queries.iter().map(|q| q.0).collect(),
            train_queries.iter().map(|q| q.1).collect(),
        );
        for id in result.test.iter().chain(&result.val) {
            let q = (by_id[id].query.object, by_id[id].query.property);
            assert!(!train_queries.contains(&q), "query {q:?} leaked");
            assert!(train_words.0.contains(&q.0), "object {} unseen in train", q.0);
            assert!(train_words.1.contains(&q.1), "property {} unseen in train", q.1);
        }
    }

    #[test]
    fn splits_are_deterministic() {
        let records = corpus_records();
        for setting in Setting::ALL {
            let spec = SplitSpec::new(setting, 7);
            assert_eq!(split(&records, &spec).unwrap(), split(&records, &spec).unwrap());
            let other = SplitSpec::new(setting, 8);
            assert_ne!(split(&records, &spec).unwrap(), split(&records, &other).unwrap());
        }
    }

    #[test]
    fn unbalanced_corpus_is_rejected() {
        let mut records = corpus_records();
        records.pop();
        let spec = SplitSpec::new(Setting::Unc, 0);
        assert!(matches!(split(&records, &spec), Err(SplitError::Unbalanced(_))));
    }

    #[test]
    fn too_few_units_is_an_error() {
        let records = corpus_records();
        // Restrict to datapoints of at most 3 distinct restrictor objects,
        // then rebalance by truncating each label to the same count.
        let keep: HashSet<usize> = records.iter().map(|r| r.query.object).take(3).collect();
        let mut filtered: Vec<SplitRecord> =
            records.into_iter().filter(|r| keep.contains(&r.query.object)).collect();
        let min = ALL_LABELS
            .iter()
            .map(|l| filtered.iter().filter(|r| r.label == *l).count())
            .min()
            .unwrap();
        let mut by_label = [0usize; 5];
        filtered.retain(|r| {
            by_label[r.label.ordinal()] += 1;
            by_label[r.label.ordinal()] <= min
        });
        let spec = SplitSpec::new(Setting::UnsObj, 0);
        assert!(matches!(
            split(&filtered, &spec),
            Err(SplitError::TooFewUnits { kind: "objects", .. })
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let records = corpus_records();
        let spec = SplitSpec::new(Setting::UnsProp, 4);
        let result = split(&records, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_split(dir.path(), &result, &spec, Some(Path::new("somewhere/corpus"))).unwrap();
        let (loaded, manifest) = load_split(dir.path()).unwrap();
        assert_eq!(loaded, result);
        assert_eq!(manifest.spec.setting, Setting::UnsProp);
        assert_eq!(manifest.corpus.as_deref(), Some("somewhere/corpus"));
        assert_eq!(manifest.counts["train"], result.train.len());
    }

    #[test]
    fn verify_catches_planted_leakage() {
        let records = corpus_records();
        let spec = SplitSpec::new(Setting::UnsObj, 23);
        let mut result = split(&records, &spec).unwrap();
        // Move a training datapoint into test: its restrictor object leaks.
        let moved = result.train.pop().unwrap();
        result.test.push(moved);
        assert!(verify(&records, &result, &spec).is_err());
    }
}
