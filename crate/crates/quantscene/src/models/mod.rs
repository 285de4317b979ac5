//! The classifier zoo. Every model maps a datapoint to five logits over the
//! quantifier scale through the same trait, so training, evaluation, and
//! gradient checking treat them uniformly.
//!
//! Scene models consume frozen query vectors and slot vectors from a
//! generated corpus; the blind ones ignore the scenario entirely. The dot
//! classifier (in the dot-world module) implements the same trait over
//! raster images.

mod attention;
mod baselines;
mod lstm;
mod qmn;
mod qsan;

pub use attention::{attention_layer, AttentionParams, San};
pub use baselines::{Bow, CnnBow};
pub use lstm::{BlindLstm, CnnLstm, LstmParams};
pub use qmn::Qmn;
pub use qsan::Qsan;

use crate::tensor::{
    BoundParams, CheckpointError, ParamSet, Tape, Tensor, TensorError, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const LOGIT_COUNT: usize = 5;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    Bow,
    CnnBow,
    Lstm,
    CnnLstm,
    San,
    Qmn,
    Qsan,
    DotCnn,
}

impl Architecture {
    pub const SCENE: [Architecture; 7] = [
        Architecture::Bow,
        Architecture::CnnBow,
        Architecture::Lstm,
        Architecture::CnnLstm,
        Architecture::San,
        Architecture::Qmn,
        Architecture::Qsan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Bow => "bow",
            Architecture::CnnBow => "cnn-bow",
            Architecture::Lstm => "lstm",
            Architecture::CnnLstm => "cnn-lstm",
            Architecture::San => "san",
            Architecture::Qmn => "qmn",
            Architecture::Qsan => "qsan",
            Architecture::DotCnn => "dot-cnn",
        }
    }

    fn id(self) -> u32 {
        match self {
            Architecture::Bow => 0,
            Architecture::CnnBow => 1,
            Architecture::Lstm => 2,
            Architecture::CnnLstm => 3,
            Architecture::San => 4,
            Architecture::Qmn => 5,
            Architecture::Qsan => 6,
            Architecture::DotCnn => 7,
        }
    }

    fn from_id(id: u32) -> Option<Self> {
        [
            Architecture::Bow,
            Architecture::CnnBow,
            Architecture::Lstm,
            Architecture::CnnLstm,
            Architecture::San,
            Architecture::Qmn,
            Architecture::Qsan,
            Architecture::DotCnn,
        ]
        .into_iter()
        .find(|a| a.id() == id)
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "bow" => Ok(Architecture::Bow),
            "cnn-bow" | "cnnbow" => Ok(Architecture::CnnBow),
            "lstm" => Ok(Architecture::Lstm),
            "cnn-lstm" | "cnnlstm" => Ok(Architecture::CnnLstm),
            "san" => Ok(Architecture::San),
            "qmn" => Ok(Architecture::Qmn),
            "qsan" => Ok(Architecture::Qsan),
            "dot-cnn" | "dotcnn" => Ok(Architecture::DotCnn),
            other => Err(format!(
                "unknown architecture {other}; use bow|cnn-bow|lstm|cnn-lstm|san|qmn|qsan|dot-cnn"
            )),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    /// Word feature width of the bag-of-words models.
    pub d_embed: usize,
    /// LSTM and attention hidden width.
    pub d_hidden: usize,
    /// Memory-space width of the similarity model.
    pub d_mem: usize,
    /// Attention passes per stacked module.
    pub stacks: usize,
    /// Parameter initialization seed.
    pub seed: u64,
    /// Variant switch: run the second similarity vector through a softmax
    /// before weighting. Off by default.
    pub qmn_softmax_s2: bool,
}

impl ModelSpec {
    pub fn new(arch: Architecture) -> Self {
        Self {
            arch,
            d_embed: 32,
            d_hidden: 32,
            d_mem: 32,
            stacks: 2,
            seed: 0,
            qmn_softmax_s2: false,
        }
    }

    pub fn with_seed(arch: Architecture, seed: u64) -> Self {
        Self { seed, ..Self::new(arch) }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.d_embed == 0 || self.d_hidden == 0 || self.d_mem == 0 || self.stacks == 0 {
            return Err(ModelError::BadSpec("dimensions and stacks must be positive".into()));
        }
        Ok(())
    }
}

/// Input-side dimensions a scene model is built against.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDims {
    /// Vocabulary units: objects then properties.
    pub vocab: usize,
    /// Slots per scenario.
    pub slots: usize,
    /// Slot and word vector width.
    pub dim: usize,
}

/// One datapoint as a model sees it.
#[derive(Clone, Debug)]
pub struct SceneInput {
    pub restrictor_vocab: usize,
    pub scope_vocab: usize,
    pub restrictor_vec: Vec<f64>,
    pub scope_vec: Vec<f64>,
    /// Slot vectors, row-major `slot_count × dim`, in corpus record order.
    pub slots_flat: Vec<f64>,
    pub slot_count: usize,
    pub dim: usize,
}

impl SceneInput {
    /// Slot matrix as a constant on the tape.
    fn slots_matrix(&self, tape: &mut Tape) -> Result<Var, TensorError> {
        let t = Tensor::new(vec![self.slot_count, self.dim], self.slots_flat.clone())?;
        Ok(tape.constant(t))
    }
}

#[derive(Clone, Debug)]
pub enum ModelInput {
    Scene(SceneInput),
    Image(crate::dotworld::DotImage),
}

impl ModelInput {
    pub fn scene(&self) -> Result<&SceneInput, ModelError> {
        match self {
            ModelInput::Scene(s) => Ok(s),
            ModelInput::Image(_) => Err(ModelError::WrongInputKind {
                expected: "scene",
                got: "image",
            }),
        }
    }

    pub fn image(&self) -> Result<&crate::dotworld::DotImage, ModelError> {
        match self {
            ModelInput::Image(i) => Ok(i),
            ModelInput::Scene(_) => Err(ModelError::WrongInputKind {
                expected: "image",
                got: "scene",
            }),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model expected {expected} input, got {got}")]
    WrongInputKind { expected: &'static str, got: &'static str },
    #[error("vocabulary id {id} out of range {vocab}")]
    UnknownVocab { id: usize, vocab: usize },
    #[error("{0}")]
    BadSpec(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

/// A quantifier classifier: datapoint in, five logits out.
pub trait Model: Send + Sync {
    fn spec(&self) -> &ModelSpec;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: &ModelInput,
    ) -> Result<Var, ModelError>;
    /// Closed-form parameter count for this architecture and its dims.
    fn expected_param_count(&self) -> usize;
    /// Extra dimensions needed to rebuild the model from a checkpoint.
    fn checkpoint_dims(&self) -> CheckpointDims;
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum CheckpointDims {
    Scene(SceneDims),
    Dot(crate::dotworld::DotNetConfig),
}

pub fn build_scene_model(
    spec: &ModelSpec,
    dims: &SceneDims,
) -> Result<Box<dyn Model>, ModelError> {
    spec.validate()?;
    if dims.vocab == 0 || dims.slots == 0 || dims.dim == 0 {
        return Err(ModelError::BadSpec("scene dims must be positive".into()));
    }
    Ok(match spec.arch {
        Architecture::Bow => Box::new(Bow::new(spec, dims)),
        Architecture::CnnBow => Box::new(CnnBow::new(spec, dims)),
        Architecture::Lstm => Box::new(BlindLstm::new(spec, dims)),
        Architecture::CnnLstm => Box::new(CnnLstm::new(spec, dims)),
        Architecture::San => Box::new(San::new(spec, dims)?),
        Architecture::Qmn => Box::new(Qmn::new(spec, dims)),
        Architecture::Qsan => Box::new(Qsan::new(spec, dims)),
        Architecture::DotCnn => {
            return Err(ModelError::BadSpec(
                "dot-cnn takes a dot-world net config, not scene dims".into(),
            ))
        }
    })
}

// ── initialization ──────────────────────────────────────────────────────

pub(crate) struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub(crate) fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform(−a, a) with a = √(6 / (fan_in + fan_out)).
    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> Tensor {
        self.scaled_matrix(rows, cols, 1.0)
    }

    pub(crate) fn scaled_matrix(&mut self, rows: usize, cols: usize, gain: f64) -> Tensor {
        let a = gain * (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.random_range(-a..a)).collect();
        Tensor::matrix(rows, cols, data).expect("length matches by construction")
    }

    pub(crate) fn vector(&mut self, n: usize, fan_in: usize, fan_out: usize) -> Tensor {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor::vector((0..n).map(|_| self.rng.random_range(-a..a)).collect())
    }

    pub(crate) fn tensor3(&mut self, d0: usize, d1: usize, d2: usize, fan: usize) -> Tensor {
        let a = (6.0 / fan as f64).sqrt();
        let data = (0..d0 * d1 * d2).map(|_| self.rng.random_range(-a..a)).collect();
        Tensor::new(vec![d0, d1, d2], data).expect("length matches by construction")
    }

    pub(crate) fn zeros(n: usize) -> Tensor {
        Tensor::zeros(vec![n])
    }

    /// Random direction on the unit sphere.
    pub(crate) fn unit_direction(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

/// `w·x + b` for a `[out×in]` weight, vector input.
pub(crate) fn affine(
    tape: &mut Tape,
    w: Var,
    b: Var,
    x: Var,
) -> Result<Var, TensorError> {
    let wx = tape.matmul(w, x)?;
    tape.add(wx, b)
}

// ── checkpoints ─────────────────────────────────────────────────────────

const META_ARCH: &str = "__arch";
const META_SPEC: &str = "__spec";
const META_SCENE: &str = "__scene_dims";
const META_DOT: &str = "__dot_net";

/// Write a model checkpoint: the architecture and spec go into reserved
/// header tensors, followed by every parameter tensor.
pub fn save_model(model: &dyn Model, path: &Path) -> Result<(), ModelError> {
    let spec = model.spec();
    let mut entries: Vec<(String, Tensor)> = vec![
        (META_ARCH.into(), Tensor::vector(vec![spec.arch.id() as f64])),
        (
            META_SPEC.into(),
            Tensor::vector(vec![
                spec.d_embed as f64,
                spec.d_hidden as f64,
                spec.d_mem as f64,
                spec.stacks as f64,
                spec.seed as f64,
                if spec.qmn_softmax_s2 { 1.0 } else { 0.0 },
            ]),
        ),
    ];
    match model.checkpoint_dims() {
        CheckpointDims::Scene(d) => entries.push((
            META_SCENE.into(),
            Tensor::vector(vec![d.vocab as f64, d.slots as f64, d.dim as f64]),
        )),
        CheckpointDims::Dot(c) => entries.push((
            META_DOT.into(),
            Tensor::vector(vec![
                c.height as f64,
                c.width as f64,
                c.filters as f64,
                c.receptive as f64,
                c.stride as f64,
            ]),
        )),
    }
    for (name, tensor) in model.params().iter() {
        entries.push((name.to_string(), tensor.clone()));
    }
    crate::tensor::write_checkpoint(path, entries.iter().map(|(n, t)| (n.as_str(), t)))?;
    Ok(())
}

/// Rebuild a model from a checkpoint written by [`save_model`].
pub fn load_model(path: &Path) -> Result<Box<dyn Model>, ModelError> {
    let entries = crate::tensor::read_checkpoint(path)?;
    let find = |name: &str| -> Result<&Tensor, ModelError> {
        entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| ModelError::BadSpec(format!("checkpoint is missing {name}")))
    };
    let arch_id = find(META_ARCH)?.item() as u32;
    let arch = Architecture::from_id(arch_id)
        .ok_or_else(|| ModelError::BadSpec(format!("unknown architecture id {arch_id}")))?;
    let s = find(META_SPEC)?.data().to_vec();
    if s.len() != 6 {
        return Err(ModelError::BadSpec("malformed spec header".into()));
    }
    let spec = ModelSpec {
        arch,
        d_embed: s[0] as usize,
        d_hidden: s[1] as usize,
        d_mem: s[2] as usize,
        stacks: s[3] as usize,
        seed: s[4] as u64,
        qmn_softmax_s2: s[5] != 0.0,
    };
    let mut model: Box<dyn Model> = if arch == Architecture::DotCnn {
        let d = find(META_DOT)?.data().to_vec();
        if d.len() != 5 {
            return Err(ModelError::BadSpec("malformed dot net header".into()));
        }
        let config = crate::dotworld::DotNetConfig {
            height: d[0] as usize,
            width: d[1] as usize,
            filters: d[2] as usize,
            receptive: d[3] as usize,
            stride: d[4] as usize,
        };
        Box::new(crate::dotworld::DotCnn::new(&spec, &config)?)
    } else {
        let d = find(META_SCENE)?.data().to_vec();
        if d.len() != 3 {
            return Err(ModelError::BadSpec("malformed scene dims header".into()));
        }
        let dims =
            SceneDims { vocab: d[0] as usize, slots: d[1] as usize, dim: d[2] as usize };
        build_scene_model(&spec, &dims)?
    };

    let params = model.params_mut();
    for (name, tensor) in entries {
        if name.starts_with("__") {
            continue;
        }
        let index = params
            .index_of(&name)
            .ok_or_else(|| ModelError::BadSpec(format!("unexpected parameter {name}")))?;
        if params.tensor(index).shape() != tensor.shape() {
            return Err(ModelError::BadSpec(format!(
                "parameter {name} has shape {:?}, expected {:?}",
                tensor.shape(),
                params.tensor(index).shape()
            )));
        }
        *params.tensor_mut(index) = tensor;
    }
    Ok(model)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::quantifier::{QuantifierLabel, SetCounts};
    use crate::world::{generate_corpus, Catalog, GenConfig, LoadedCorpus};

    /// A tiny deterministic corpus for model tests.
    pub(crate) fn tiny_corpus() -> LoadedCorpus {
        let catalog = Catalog::synthetic(12, 6, 5).unwrap();
        let config = GenConfig { dim: 8, ..GenConfig::default() };
        generate_corpus(6, &catalog, &config, 99).unwrap().to_loaded()
    }

    pub(crate) fn dims_of(corpus: &LoadedCorpus) -> SceneDims {
        SceneDims {
            vocab: corpus.vocab_size(),
            slots: corpus.config.slots,
            dim: corpus.config.dim,
        }
    }

    pub(crate) fn scene_input(corpus: &LoadedCorpus, index: usize) -> (ModelInput, QuantifierLabel, SetCounts) {
        let r = &corpus.records[index];
        let mut slots_flat = Vec::with_capacity(r.slots.len() * corpus.config.dim);
        for slot in &r.slots {
            slots_flat.extend_from_slice(&slot.embedding);
        }
        let input = SceneInput {
            restrictor_vocab: r.query.object,
            scope_vocab: corpus.objects.len() + r.query.property,
            restrictor_vec: corpus.object_vecs[r.query.object].clone(),
            scope_vec: corpus.property_vecs[r.query.property].clone(),
            slots_flat,
            slot_count: r.slots.len(),
            dim: corpus.config.dim,
        };
        (ModelInput::Scene(input), r.label, r.counts)
    }

    /// Permute the slots of a scene input.
    pub(crate) fn permuted(input: &ModelInput, order: &[usize]) -> ModelInput {
        let scene = input.scene().unwrap();
        let d = scene.dim;
        let mut slots_flat = Vec::with_capacity(scene.slots_flat.len());
        for &i in order {
            slots_flat.extend_from_slice(&scene.slots_flat[i * d..(i + 1) * d]);
        }
        ModelInput::Scene(SceneInput { slots_flat, ..scene.clone() })
    }

    /// Loss of one forward pass.
    pub(crate) fn loss_of(model: &dyn Model, input: &ModelInput, label: QuantifierLabel) -> f64 {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let logits = model.forward(&mut tape, &bound, input).unwrap();
        let loss = tape.cross_entropy(logits, label.ordinal()).unwrap();
        tape.value(loss).item()
    }

    pub(crate) fn logits_of(model: &dyn Model, input: &ModelInput) -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let logits = model.forward(&mut tape, &bound, input).unwrap();
        tape.value(logits).data().to_vec()
    }
}
