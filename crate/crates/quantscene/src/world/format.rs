//! Corpus persistence.
//!
//! A corpus on disk is two files in one directory:
//!
//! * `corpus.idx` — line-delimited JSON. The first line is a meta record
//!   (seed, generation config, catalog names and plausibility, table
//!   offsets); each following line is one datapoint (ids, query, label
//!   word, counts, slot object/property ids, vector offsets).
//! * `corpus.vec` — flat little-endian 32-bit reals. The object and
//!   property embedding tables come first, then each datapoint's slot
//!   vectors. Offsets in the index are element offsets into this file.

use super::generate::{Corpus, GenConfig, Query};
use super::WorldError;
use crate::quantifier::{quantize_ratio, QuantifierLabel, SetCounts};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const INDEX_FILE: &str = "corpus.idx";
pub const VECTOR_FILE: &str = "corpus.vec";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("corpus i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corpus index line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("malformed corpus: {0}")]
    Malformed(String),
    #[error("unsupported corpus version {0}")]
    UnsupportedVersion(u32),
    #[error("corpus violates an invariant: {0}")]
    Invariant(String),
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    kind: String,
    version: u32,
    seed: u64,
    per_quantifier: usize,
    config: GenConfig,
    objects: Vec<String>,
    properties: Vec<String>,
    plausible: Vec<Vec<usize>>,
    object_table_offset: u64,
    property_table_offset: u64,
    crowded: bool,
}

#[derive(Serialize, Deserialize)]
struct SlotLine {
    object: usize,
    properties: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: u64,
    scenario_key: u64,
    object: usize,
    property: usize,
    label: QuantifierLabel,
    m: usize,
    k: usize,
    distractors_with_scope: usize,
    slots: Vec<SlotLine>,
}

/// A corpus read back from disk, with embeddings resolved to f64.
#[derive(Clone, Debug)]
pub struct LoadedCorpus {
    pub seed: u64,
    pub per_quantifier: usize,
    pub config: GenConfig,
    pub objects: Vec<String>,
    pub properties: Vec<String>,
    pub plausible: Vec<Vec<usize>>,
    pub object_vecs: Vec<Vec<f64>>,
    pub property_vecs: Vec<Vec<f64>>,
    pub records: Vec<LoadedDatapoint>,
    pub crowded: bool,
}

#[derive(Clone, Debug)]
pub struct LoadedDatapoint {
    pub id: u64,
    pub scenario_key: u64,
    pub query: Query,
    pub label: QuantifierLabel,
    pub counts: SetCounts,
    pub distractors_with_scope: usize,
    pub slots: Vec<LoadedSlot>,
}

#[derive(Clone, Debug)]
pub struct LoadedSlot {
    pub object: usize,
    pub properties: Vec<usize>,
    pub embedding: Vec<f64>,
}

impl LoadedCorpus {
    pub fn vocab_size(&self) -> usize {
        self.objects.len() + self.properties.len()
    }

    pub fn record(&self, id: u64) -> Option<&LoadedDatapoint> {
        // Records keep generation order, so ids are positional when intact.
        self.records
            .get(id as usize)
            .filter(|r| r.id == id)
            .or_else(|| self.records.iter().find(|r| r.id == id))
    }
}

/// Write the corpus into `dir` as `corpus.idx` + `corpus.vec`.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<(), FormatError> {
    std::fs::create_dir_all(dir)?;
    let mut vectors = VectorWriter {
        w: BufWriter::new(File::create(dir.join(VECTOR_FILE))?),
        offset: 0,
    };

    let object_table_offset = vectors.offset;
    for o in 0..corpus.catalog.object_count() {
        vectors.write(corpus.space.object_vec(o))?;
    }
    let property_table_offset = vectors.offset;
    for p in 0..corpus.catalog.property_count() {
        vectors.write(corpus.space.property_vec(p))?;
    }

    let mut idx_writer = BufWriter::new(File::create(dir.join(INDEX_FILE))?);
    let meta = MetaLine {
        kind: "meta".into(),
        version: FORMAT_VERSION,
        seed: corpus.seed,
        per_quantifier: corpus.per_quantifier,
        config: corpus.config,
        objects: corpus.catalog.object_names().to_vec(),
        properties: corpus.catalog.property_names().to_vec(),
        plausible: corpus.catalog.plausible_table().to_vec(),
        object_table_offset,
        property_table_offset,
        crowded: corpus.space.crowded,
    };
    serde_json::to_writer(&mut idx_writer, &meta)
        .map_err(|source| FormatError::Json { line: 1, source })?;
    idx_writer.write_all(b"\n")?;

    for (line, dp) in corpus.datapoints.iter().enumerate() {
        let mut slots = Vec::with_capacity(dp.scenario.slots.len());
        for slot in &dp.scenario.slots {
            let at = vectors.write(&slot.embedding)?;
            slots.push(SlotLine {
                object: slot.object,
                properties: slot.properties.clone(),
                offset: at,
            });
        }
        let record = RecordLine {
            id: dp.id,
            scenario_key: dp.scenario.key(),
            object: dp.query.object,
            property: dp.query.property,
            label: dp.label,
            m: dp.counts.m,
            k: dp.counts.k,
            distractors_with_scope: dp.distractors_with_scope,
            slots,
        };
        serde_json::to_writer(&mut idx_writer, &record)
            .map_err(|source| FormatError::Json { line: line + 2, source })?;
        idx_writer.write_all(b"\n")?;
    }
    idx_writer.flush()?;
    vectors.w.flush()?;
    Ok(())
}

struct VectorWriter {
    w: BufWriter<File>,
    offset: u64,
}

impl VectorWriter {
    fn write(&mut self, v: &[f64]) -> Result<u64, FormatError> {
        let at = self.offset;
        for &x in v {
            self.w.write_all(&(x as f32).to_le_bytes())?;
        }
        self.offset += v.len() as u64;
        Ok(at)
    }
}

pub fn load_corpus(dir: &Path) -> Result<LoadedCorpus, FormatError> {
    let values = read_vector_file(&dir.join(VECTOR_FILE))?;
    let reader = BufReader::new(File::open(dir.join(INDEX_FILE))?);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| FormatError::Malformed("empty index file".into()))?;
    let meta: MetaLine = serde_json::from_str(&first?)
        .map_err(|source| FormatError::Json { line: 1, source })?;
    if meta.kind != "meta" {
        return Err(FormatError::Malformed("first index line is not a meta record".into()));
    }
    if meta.version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(meta.version));
    }
    let dim = meta.config.dim;
    let slice = |offset: u64| -> Result<Vec<f64>, FormatError> {
        let start = offset as usize;
        values.get(start..start + dim).map(<[f64]>::to_vec).ok_or_else(|| {
            FormatError::Malformed(format!("vector offset {offset} beyond file end"))
        })
    };

    let object_vecs: Vec<Vec<f64>> = (0..meta.objects.len())
        .map(|i| slice(meta.object_table_offset + (i * dim) as u64))
        .collect::<Result<_, _>>()?;
    let property_vecs: Vec<Vec<f64>> = (0..meta.properties.len())
        .map(|i| slice(meta.property_table_offset + (i * dim) as u64))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let record: RecordLine = serde_json::from_str(&line)
            .map_err(|source| FormatError::Json { line: i + 1, source })?;
        let counts = SetCounts { m: record.m, k: record.k };
        if quantize_ratio(counts) != Ok(record.label) {
            return Err(FormatError::Invariant(format!(
                "datapoint {}: label {} disagrees with counts {}/{}",
                record.id, record.label, record.k, record.m
            )));
        }
        let plausible = meta
            .plausible
            .get(record.object)
            .ok_or_else(|| FormatError::Malformed(format!("unknown object {}", record.object)))?;
        if !plausible.contains(&record.property) {
            return Err(FormatError::Invariant(format!(
                "datapoint {}: implausible query ({}, {})",
                record.id, record.object, record.property
            )));
        }
        if record.slots.len() != meta.config.slots {
            return Err(FormatError::Invariant(format!(
                "datapoint {}: {} slots, expected {}",
                record.id,
                record.slots.len(),
                meta.config.slots
            )));
        }
        let slots = record
            .slots
            .into_iter()
            .map(|s| {
                Ok(LoadedSlot {
                    embedding: slice(s.offset)?,
                    object: s.object,
                    properties: s.properties,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        records.push(LoadedDatapoint {
            id: record.id,
            scenario_key: record.scenario_key,
            query: Query { object: record.object, property: record.property },
            label: record.label,
            counts,
            distractors_with_scope: record.distractors_with_scope,
            slots,
        });
    }

    Ok(LoadedCorpus {
        seed: meta.seed,
        per_quantifier: meta.per_quantifier,
        config: meta.config,
        objects: meta.objects,
        properties: meta.properties,
        plausible: meta.plausible,
        object_vecs,
        property_vecs,
        records,
        crowded: meta.crowded,
    })
}

impl Corpus {
    /// The in-memory corpus as it would read back from disk, including the
    /// 32-bit rounding of stored vectors. File and memory pipelines agree
    /// exactly because of this.
    pub fn to_loaded(&self) -> LoadedCorpus {
        let round = |v: &[f64]| -> Vec<f64> { v.iter().map(|&x| x as f32 as f64).collect() };
        LoadedCorpus {
            seed: self.seed,
            per_quantifier: self.per_quantifier,
            config: self.config,
            objects: self.catalog.object_names().to_vec(),
            properties: self.catalog.property_names().to_vec(),
            plausible: self.catalog.plausible_table().to_vec(),
            object_vecs: (0..self.catalog.object_count())
                .map(|o| round(self.space.object_vec(o)))
                .collect(),
            property_vecs: (0..self.catalog.property_count())
                .map(|p| round(self.space.property_vec(p)))
                .collect(),
            records: self
                .datapoints
                .iter()
                .map(|dp| LoadedDatapoint {
                    id: dp.id,
                    scenario_key: dp.scenario.key(),
                    query: dp.query,
                    label: dp.label,
                    counts: dp.counts,
                    distractors_with_scope: dp.distractors_with_scope,
                    slots: dp
                        .scenario
                        .slots
                        .iter()
                        .map(|s| LoadedSlot {
                            object: s.object,
                            properties: s.properties.clone(),
                            embedding: round(&s.embedding),
                        })
                        .collect(),
                })
                .collect(),
            crowded: self.space.crowded,
        }
    }
}

fn read_vector_file(path: &Path) -> Result<Vec<f64>, FormatError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(FormatError::Malformed(format!(
            "vector file length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

#[allow(dead_code)]
fn unused(_: &WorldError) {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_corpus, Catalog};

    fn sample_corpus() -> Corpus {
        let catalog = Catalog::synthetic(12, 6, 3).unwrap();
        let config = GenConfig { dim: 8, ..GenConfig::default() };
        generate_corpus(10, &catalog, &config, 77).unwrap()
    }

    #[test]
    fn round_trip_matches_to_loaded() {
        let corpus = sample_corpus();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        let expected = corpus.to_loaded();

        assert_eq!(loaded.seed, expected.seed);
        assert_eq!(loaded.objects, expected.objects);
        assert_eq!(loaded.plausible, expected.plausible);
        assert_eq!(loaded.records.len(), expected.records.len());
        for (a, b) in loaded.records.iter().zip(&expected.records) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.scenario_key, b.scenario_key);
            assert_eq!(a.query, b.query);
            assert_eq!(a.label, b.label);
            assert_eq!(a.counts, b.counts);
            for (sa, sb) in a.slots.iter().zip(&b.slots) {
                assert_eq!(sa.object, sb.object);
                assert_eq!(sa.properties, sb.properties);
                assert_eq!(sa.embedding, sb.embedding);
            }
        }
        assert_eq!(loaded.object_vecs, expected.object_vecs);
        assert_eq!(loaded.property_vecs, expected.property_vecs);
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let corpus = sample_corpus();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        save_corpus(&corpus, d1.path()).unwrap();
        save_corpus(&corpus, d2.path()).unwrap();
        for name in [INDEX_FILE, VECTOR_FILE] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between saves");
        }
    }

    #[test]
    fn tampered_label_fails_validation() {
        let corpus = sample_corpus();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        let idx = dir.path().join(INDEX_FILE);
        let text = std::fs::read_to_string(&idx).unwrap();
        // Force a label/count disagreement on the first record that says "few".
        let tampered = text.replacen("\"label\":\"few\"", "\"label\":\"all\"", 1);
        assert_ne!(text, tampered);
        std::fs::write(&idx, tampered).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(FormatError::Invariant(_))));
    }

    #[test]
    fn record_lookup_by_id() {
        let loaded = sample_corpus().to_loaded();
        assert_eq!(loaded.record(7).unwrap().id, 7);
        assert!(loaded.record(10_000).is_none());
    }
}
