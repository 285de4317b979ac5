//! Bag-of-words baselines: blind, and with the scenario concatenated in.

use super::{
    affine, CheckpointDims, Init, Model, ModelError, ModelInput, ModelSpec, SceneDims,
    LOGIT_COUNT,
};
use crate::tensor::{BoundParams, ParamSet, Tape, Tensor, Var};

fn query_onehot(vocab: usize, input: &ModelInput) -> Result<Vec<f64>, ModelError> {
    let scene = input.scene()?;
    let mut onehot = vec![0.0; vocab];
    for id in [scene.restrictor_vocab, scene.scope_vocab] {
        if id >= vocab {
            return Err(ModelError::UnknownVocab { id, vocab });
        }
        onehot[id] = 1.0;
    }
    Ok(onehot)
}

/// Language-only baseline: the query's two vocabulary units light up a
/// one-hot vector, a learned map turns it into a word feature, and a linear
/// classifier scores the five labels. Word order plays no role.
pub struct Bow {
    spec: ModelSpec,
    dims: SceneDims,
    params: ParamSet,
    w_embed: usize,
    w_out: usize,
    b_out: usize,
}

impl Bow {
    pub fn new(spec: &ModelSpec, dims: &SceneDims) -> Self {
        let mut init = Init::new(spec.seed);
        let mut params = ParamSet::new();
        let w_embed = params.push("embed.weight", init.matrix(spec.d_embed, dims.vocab));
        let w_out = params.push("classifier.weight", init.matrix(LOGIT_COUNT, spec.d_embed));
        let b_out = params.push("classifier.bias", Init::zeros(LOGIT_COUNT));
        Self { spec: *spec, dims: *dims, params, w_embed, w_out, b_out }
    }
}

impl Model for Bow {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: &ModelInput,
    ) -> Result<Var, ModelError> {
        let onehot = tape.constant(Tensor::vector(query_onehot(self.dims.vocab, input)?));
        let feature = tape.matmul(bound.var(self.w_embed), onehot)?;
        Ok(affine(tape, bound.var(self.w_out), bound.var(self.b_out), feature)?)
    }

    fn expected_param_count(&self) -> usize {
        let (v, e) = (self.dims.vocab, self.spec.d_embed);
        e * v + LOGIT_COUNT * e + LOGIT_COUNT
    }

    fn checkpoint_dims(&self) -> CheckpointDims {
        CheckpointDims::Scene(self.dims)
    }
}

/// The blind baseline plus an image feature: every slot vector concatenated
/// in record order (zero-padded up to the slot budget), then one linear
/// classifier over the joint feature. Slot order is visible to this model.
pub struct CnnBow {
    spec: ModelSpec,
    dims: SceneDims,
    params: ParamSet,
    w_embed: usize,
    w_out: usize,
    b_out: usize,
}

impl CnnBow {
    pub fn new(spec: &ModelSpec, dims: &SceneDims) -> Self {
        let mut init = Init::new(spec.seed);
        let mut params = ParamSet::new();
        let joint = spec.d_embed + dims.slots * dims.dim;
        let w_embed = params.push("embed.weight", init.matrix(spec.d_embed, dims.vocab));
        let w_out = params.push("classifier.weight", init.matrix(LOGIT_COUNT, joint));
        let b_out = params.push("classifier.bias", Init::zeros(LOGIT_COUNT));
        Self { spec: *spec, dims: *dims, params, w_embed, w_out, b_out }
    }
}

impl Model for CnnBow {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: &ModelInput,
    ) -> Result<Var, ModelError> {
        let scene = input.scene()?;
        if scene.slot_count > self.dims.slots || scene.dim != self.dims.dim {
            return Err(ModelError::BadSpec(format!(
                "scenario of {}×{} does not fit model budget {}×{}",
                scene.slot_count, scene.dim, self.dims.slots, self.dims.dim
            )));
        }
        let onehot = tape.constant(Tensor::vector(query_onehot(self.dims.vocab, input)?));
        let word = tape.matmul(bound.var(self.w_embed), onehot)?;
        let mut flat = scene.slots_flat.clone();
        flat.resize(self.dims.slots * self.dims.dim, 0.0);
        let visual = tape.constant(Tensor::vector(flat));
        let joint = tape.concat(&[word, visual], 0)?;
        Ok(affine(tape, bound.var(self.w_out), bound.var(self.b_out), joint)?)
    }

    fn expected_param_count(&self) -> usize {
        let (v, e) = (self.dims.vocab, self.spec.d_embed);
        let joint = e + self.dims.slots * self.dims.dim;
        e * v + LOGIT_COUNT * joint + LOGIT_COUNT
    }

    fn checkpoint_dims(&self) -> CheckpointDims {
        CheckpointDims::Scene(self.dims)
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::models::{build_scene_model, Architecture, SceneInput};
    use crate::quantifier::QuantifierLabel;
    use crate::tensor::grad_check;

    fn spec(arch: Architecture) -> ModelSpec {
        ModelSpec { d_embed: 8, ..ModelSpec::new(arch) }
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let corpus = tiny_corpus();
        let mut model = Bow::new(&spec(Architecture::Bow), &dims_of(&corpus));
        let zeroed = vec![0.0; model.params.value_count()];
        model.params_mut().assign_flat(&zeroed);
        let (input, _, _) = scene_input(&corpus, 0);
        let logits = logits_of(&model, &input);
        assert!(logits.iter().all(|&l| l == 0.0));
        // Uniform logits mean a loss of ln 5 for any label.
        assert!((loss_of(&model, &input, QuantifierLabel::Most) - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn swapping_restrictor_and_scope_leaves_bow_unchanged() {
        let corpus = tiny_corpus();
        let model = Bow::new(&spec(Architecture::Bow), &dims_of(&corpus));
        let (input, _, _) = scene_input(&corpus, 1);
        let scene = input.scene().unwrap();
        let swapped = ModelInput::Scene(SceneInput {
            restrictor_vocab: scene.scope_vocab,
            scope_vocab: scene.restrictor_vocab,
            restrictor_vec: scene.scope_vec.clone(),
            scope_vec: scene.restrictor_vec.clone(),
            ..scene.clone()
        });
        assert_eq!(logits_of(&model, &input), logits_of(&model, &swapped));
    }

    #[test]
    fn unknown_vocabulary_is_rejected() {
        let corpus = tiny_corpus();
        let model = Bow::new(&spec(Architecture::Bow), &dims_of(&corpus));
        let (input, _, _) = scene_input(&corpus, 0);
        let mut scene = input.scene().unwrap().clone();
        scene.scope_vocab = 10_000;
        let bad = ModelInput::Scene(scene);
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        assert!(matches!(
            model.forward(&mut tape, &bound, &bad),
            Err(ModelError::UnknownVocab { .. })
        ));
    }

    #[test]
    fn one_gradient_step_decreases_loss() {
        let corpus = tiny_corpus();
        let mut model = Bow::new(&spec(Architecture::Bow), &dims_of(&corpus));
        let (input, label, _) = scene_input(&corpus, 2);
        let before = loss_of(&model, &input, label);

        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let logits = model.forward(&mut tape, &bound, &input).unwrap();
        let loss = tape.cross_entropy(logits, label.ordinal()).unwrap();
        tape.backward(loss).unwrap();
        let grads = model.params().flat_gradients(&tape, &bound);
        let mut values = model.params().flatten();
        for (v, g) in values.iter_mut().zip(&grads) {
            *v -= 0.1 * g;
        }
        model.params_mut().assign_flat(&values);

        let after = loss_of(&model, &input, label);
        assert!(after < before, "loss {before} -> {after}");
    }

    #[test]
    fn cnn_bow_all_zero_visual_reduces_to_bias_shifted_bow() {
        let corpus = tiny_corpus();
        let dims = dims_of(&corpus);
        let model = CnnBow::new(&spec(Architecture::CnnBow), &dims);
        let (input, _, _) = scene_input(&corpus, 0);
        let scene = input.scene().unwrap();
        let zeroed = ModelInput::Scene(SceneInput {
            slots_flat: vec![0.0; scene.slots_flat.len()],
            ..scene.clone()
        });
        // With a zero visual block, logits are the word-feature block of the
        // classifier alone; verify against a direct computation.
        let logits = logits_of(&model, &zeroed);
        let w_embed = model.params().get("embed.weight").unwrap();
        let w_out = model.params().get("classifier.weight").unwrap();
        let joint_width = w_out.shape()[1];
        let onehot = query_onehot(dims.vocab, &input).unwrap();
        let e = 8;
        let mut word = vec![0.0; e];
        for (r, w) in word.iter_mut().enumerate() {
            for (c, x) in onehot.iter().enumerate() {
                *w += w_embed.data()[r * dims.vocab + c] * x;
            }
        }
        for (class, &logit) in logits.iter().enumerate() {
            let mut expect = model.params().get("classifier.bias").unwrap().data()[class];
            for (j, wj) in word.iter().enumerate() {
                expect += w_out.data()[class * joint_width + j] * wj;
            }
            assert!((logit - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn cnn_bow_is_order_sensitive() {
        let corpus = tiny_corpus();
        let model = CnnBow::new(&spec(Architecture::CnnBow), &dims_of(&corpus));
        let (input, _, _) = scene_input(&corpus, 4);
        let n = input.scene().unwrap().slot_count;
        let mut order: Vec<usize> = (0..n).collect();
        order.swap(0, n - 1);
        let shuffled = permuted(&input, &order);
        assert_ne!(logits_of(&model, &input), logits_of(&model, &shuffled));
    }

    #[test]
    fn training_sanity_loss_decreases_over_fifty_steps() {
        let corpus = tiny_corpus();
        let dims = dims_of(&corpus);
        let mut model = build_scene_model(&spec(Architecture::CnnBow), &dims).unwrap();
        let batch: Vec<_> = (0..10).map(|i| scene_input(&corpus, i)).collect();
        let mean_loss = |m: &dyn Model| -> f64 {
            batch.iter().map(|(input, label, _)| loss_of(m, input, *label)).sum::<f64>() / 10.0
        };
        let before = mean_loss(model.as_ref());
        for _ in 0..50 {
            let mut grads = vec![0.0; model.params().value_count()];
            for (input, label, _) in &batch {
                let mut tape = Tape::new();
                let bound = model.params().bind(&mut tape);
                let logits = model.forward(&mut tape, &bound, input).unwrap();
                let loss = tape.cross_entropy(logits, label.ordinal()).unwrap();
                tape.backward(loss).unwrap();
                for (g, d) in grads.iter_mut().zip(model.params().flat_gradients(&tape, &bound)) {
                    *g += d / 10.0;
                }
            }
            let mut values = model.params().flatten();
            for (v, g) in values.iter_mut().zip(&grads) {
                *v -= 0.5 * g;
            }
            model.params_mut().assign_flat(&values);
        }
        let after = mean_loss(model.as_ref());
        assert!(after < before, "loss {before} -> {after}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let corpus = tiny_corpus();
        let dims = dims_of(&corpus);
        for arch in [Architecture::Bow, Architecture::CnnBow] {
            let model = build_scene_model(&spec(arch), &dims).unwrap();
            let (input, label, _) = scene_input(&corpus, 5);
            let report = grad_check(
                model.params(),
                &|tape, bound| {
                    let logits = model
                        .forward(tape, bound, &input)
                        .map_err(|_| crate::tensor::TensorError::Dimension("forward".into()))?;
                    tape.cross_entropy(logits, label.ordinal())
                },
                1e-3,
            )
            .unwrap();
            assert!(report.max_rel_err <= 1e-4, "{arch}: {}", report.max_rel_err);
        }
    }
}
