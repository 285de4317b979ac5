//! Stacked attention driven by the query structure: one attention module
//! finds the restrictor set, its attention distribution re-weights the slot
//! vectors, and a second module reads the scope against the weighted slots.

use super::{
    affine, AttentionParams, CheckpointDims, Init, Model, ModelError, ModelInput, ModelSpec,
    SceneDims, LOGIT_COUNT,
};
use crate::tensor::{BoundParams, ParamSet, Tape, Tensor, Var};

pub struct Qsan {
    spec: ModelSpec,
    dims: SceneDims,
    params: ParamSet,
    restrictor_layers: Vec<AttentionParams>,
    scope_layers: Vec<AttentionParams>,
    w_out: usize,
    b_out: usize,
}

impl Qsan {
    pub fn new(spec: &ModelSpec, dims: &SceneDims) -> Self {
        let mut init = Init::new(spec.seed);
        let mut params = ParamSet::new();
        let restrictor_layers = (0..spec.stacks)
            .map(|t| {
                AttentionParams::init(
                    &mut params,
                    &format!("restrictor{t}"),
                    dims.dim,
                    dims.dim,
                    spec.d_hidden,
                    1.0,
                    &mut init,
                )
            })
            .collect();
        // The scope module reads slots already shrunk by the restrictor's
        // attention probabilities, roughly 1/S in norm.
        let scope_layers = (0..spec.stacks)
            .map(|t| {
                AttentionParams::init(
                    &mut params,
                    &format!("scope{t}"),
                    dims.dim,
                    dims.dim,
                    spec.d_hidden,
                    1.0 / dims.slots as f64,
                    &mut init,
                )
            })
            .collect();
        let w_out = params.push("classifier.weight", init.matrix(LOGIT_COUNT, 2 * dims.dim));
        let b_out = params.push("classifier.bias", Init::zeros(LOGIT_COUNT));
        Self { spec: *spec, dims: *dims, params, restrictor_layers, scope_layers, w_out, b_out }
    }
}

impl Model for Qsan {
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
        let slots = scene.slots_matrix(tape)?;

        // Restrictor module: single-word cue, no recurrence. Keep the final
        // pass's attention distribution.
        let mut cue = tape.constant(Tensor::vector(scene.restrictor_vec.clone()));
        let mut attention = None;
        for layer in &self.restrictor_layers {
            let (gist, weights) = layer.apply(tape, bound, slots, cue)?;
            cue = tape.add(cue, gist)?;
            attention = Some(weights);
        }
        let restrictor_gist = cue;
        let weights = attention.expect("at least one stack");

        // The restrictor's attention re-weights the raw slot vectors before
        // the scope module reads them.
        let weighted_slots = tape.scale_rows(slots, weights)?;
        let mut cue = tape.constant(Tensor::vector(scene.scope_vec.clone()));
        for layer in &self.scope_layers {
            let (gist, _) = layer.apply(tape, bound, weighted_slots, cue)?;
            cue = tape.add(cue, gist)?;
        }
        let scope_gist = cue;

        let joint = tape.concat(&[restrictor_gist, scope_gist], 0)?;
        Ok(affine(tape, bound.var(self.w_out), bound.var(self.b_out), joint)?)
    }

    fn expected_param_count(&self) -> usize {
        let (d, a) = (self.dims.dim, self.spec.d_hidden);
        2 * self.spec.stacks * AttentionParams::value_count(d, d, a)
            + LOGIT_COUNT * 2 * d
            + LOGIT_COUNT
    }

    fn checkpoint_dims(&self) -> CheckpointDims {
        CheckpointDims::Scene(self.dims)
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::models::{Architecture, SceneInput};
    use crate::tensor::{grad_check, TensorError};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> ModelSpec {
        ModelSpec { d_hidden: 8, ..ModelSpec::new(Architecture::Qsan) }
    }

    #[test]
    fn symmetric_scenario_weights_slots_equally() {
        // All slots identical: restrictor attention is uniform, so the
        // weighted slot matrix is the original scaled by 1/S.
        let corpus = tiny_corpus();
        let dims = dims_of(&corpus);
        let model = Qsan::new(&spec(), &dims);
        let (input, _, _) = scene_input(&corpus, 0);
        let scene = input.scene().unwrap();
        let d = scene.dim;
        let first = scene.slots_flat[..d].to_vec();
        let symmetric: Vec<f64> =
            first.iter().cycle().take(scene.slot_count * d).copied().collect();
        let sym_input = SceneInput { slots_flat: symmetric, ..scene.clone() };

        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let slots = sym_input.slots_matrix(&mut tape).unwrap();
        let cue = tape.constant(Tensor::vector(sym_input.restrictor_vec.clone()));
        let (_, weights) =
            model.restrictor_layers[0].apply(&mut tape, &bound, slots, cue).unwrap();
        let scaled = tape.scale_rows(slots, weights).unwrap();
        let s = sym_input.slot_count as f64;
        for (i, v) in tape.value(scaled).data().iter().enumerate() {
            let expect = first[i % d] / s;
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
    }

    #[test]
    fn slot_permutation_leaves_logits_unchanged() {
        let corpus = tiny_corpus();
        let model = Qsan::new(&spec(), &dims_of(&corpus));
        let (input, _, _) = scene_input(&corpus, 5);
        let n = input.scene().unwrap().slot_count;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        order.shuffle(&mut rng);
        let shuffled = permuted(&input, &order);
        let a = logits_of(&model, &input);
        let b = logits_of(&model, &shuffled);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn gradients_through_both_stacked_modules() {
        let corpus = tiny_corpus();
        let model = Qsan::new(&spec(), &dims_of(&corpus));
        let (input, label, _) = scene_input(&corpus, 8);
        let report = grad_check(
            model.params(),
            &|tape, bound| {
                let logits = model
                    .forward(tape, bound, &input)
                    .map_err(|_| TensorError::Dimension("forward".into()))?;
                tape.cross_entropy(logits, label.ordinal())
            },
            1e-3,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-4, "rel err {}", report.max_rel_err);
    }
}
