//! Similarity-driven memory model building explicit restrictor and
//! restrictor∩scope set representations.

use super::{
    affine, CheckpointDims, Init, Model, ModelError, ModelInput, ModelSpec, SceneDims,
    LOGIT_COUNT,
};
use crate::tensor::{BoundParams, ParamSet, Tape, Tensor, Var};

/// Memory cells hold linearly mapped slot vectors. Cosine similarity with
/// the restrictor word weights each cell; the weighted cells sum into the
/// restrictor gist. A second similarity pass against the scope word weights
/// the already-weighted cells into the restrictor∩scope gist. Both gists
/// concatenated feed the classifier.
pub struct Qmn {
    spec: ModelSpec,
    dims: SceneDims,
    params: ParamSet,
    /// `[dim × d_mem]`: maps slot vectors (rows of the slot matrix).
    w_visual: usize,
    /// `[d_mem × dim]`: maps query word vectors.
    w_lingual: usize,
    w_out: usize,
    b_out: usize,
}

impl Qmn {
    pub fn new(spec: &ModelSpec, dims: &SceneDims) -> Self {
        let mut init = Init::new(spec.seed);
        let mut params = ParamSet::new();
        let w_visual = params.push("memory.visual.w", init.matrix(dims.dim, spec.d_mem));
        let w_lingual = params.push("memory.lingual.w", init.matrix(spec.d_mem, dims.dim));
        let w_out = params.push("classifier.weight", init.matrix(LOGIT_COUNT, 2 * spec.d_mem));
        let b_out = params.push("classifier.bias", Init::zeros(LOGIT_COUNT));
        Self { spec: *spec, dims: *dims, params, w_visual, w_lingual, w_out, b_out }
    }
}

impl Model for Qmn {
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
        let cells = tape.matmul(slots, bound.var(self.w_visual))?;
        let r_word = tape.constant(Tensor::vector(scene.restrictor_vec.clone()));
        let s_word = tape.constant(Tensor::vector(scene.scope_vec.clone()));
        let restrictor = tape.matmul(bound.var(self.w_lingual), r_word)?;
        let scope = tape.matmul(bound.var(self.w_lingual), s_word)?;

        // First pass: how much restrictor is in each cell.
        let mut weighted1 = Vec::with_capacity(scene.slot_count);
        for i in 0..scene.slot_count {
            let cell = tape.row(cells, i)?;
            let sim = tape.cosine(cell, restrictor)?;
            weighted1.push(tape.mul(sim, cell)?);
        }
        let restrictor_gist = tape.add_n(&weighted1)?;

        // Second pass: how much scope is in the restrictor-weighted cells.
        let mut similarities2 = Vec::with_capacity(scene.slot_count);
        for w1 in &weighted1 {
            similarities2.push(tape.cosine(*w1, scope)?);
        }
        let mut weighted2 = Vec::with_capacity(scene.slot_count);
        if self.spec.qmn_softmax_s2 {
            let s2 = tape.concat(&similarities2, 0)?;
            let s2 = tape.softmax(s2)?;
            for (i, w1) in weighted1.iter().enumerate() {
                let p = tape.pick(s2, i)?;
                weighted2.push(tape.mul(p, *w1)?);
            }
        } else {
            for (sim, w1) in similarities2.iter().zip(&weighted1) {
                weighted2.push(tape.mul(*sim, *w1)?);
            }
        }
        let scope_gist = tape.add_n(&weighted2)?;

        let joint = tape.concat(&[restrictor_gist, scope_gist], 0)?;
        Ok(affine(tape, bound.var(self.w_out), bound.var(self.b_out), joint)?)
    }

    fn expected_param_count(&self) -> usize {
        let (d, m) = (self.dims.dim, self.spec.d_mem);
        d * m + m * d + LOGIT_COUNT * 2 * m + LOGIT_COUNT
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
    use crate::tensor::{grad_check, Tape, TensorError};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> ModelSpec {
        ModelSpec { d_mem: 8, ..ModelSpec::new(Architecture::Qmn) }
    }

    /// Identity-mapped two-slot fixture, worked by hand.
    ///
    /// Slots `v1 = −e1`, `v2 = −e2`; restrictor `e1`, scope `e2`.
    /// S1 = (−1, 0); W1 = (e1, 0); RestrictorGist = e1 (the negatively
    /// weighted sum points back along the restrictor direction).
    /// S2 = (0, 0) — the ε floor zeroes the second slot — so both weighted
    /// vectors and the scope gist vanish.
    #[test]
    fn two_slot_hand_fixture() {
        let d = 2;
        let mut params = ParamSet::new();
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let w_visual = params.push("memory.visual.w", eye.clone());
        let w_lingual = params.push("memory.lingual.w", eye);
        let w_out = params.push(
            "classifier.weight",
            Tensor::matrix(LOGIT_COUNT, 4, vec![0.0; LOGIT_COUNT * 4]).unwrap(),
        );
        let b_out = params.push("classifier.bias", Tensor::zeros(vec![LOGIT_COUNT]));
        let model = Qmn {
            spec: ModelSpec { d_mem: 2, ..ModelSpec::new(Architecture::Qmn) },
            dims: SceneDims { vocab: 4, slots: 2, dim: d },
            params,
            w_visual,
            w_lingual,
            w_out,
            b_out,
        };
        let input = ModelInput::Scene(SceneInput {
            restrictor_vocab: 0,
            scope_vocab: 1,
            restrictor_vec: vec![1.0, 0.0],
            scope_vec: vec![0.0, 1.0],
            slots_flat: vec![-1.0, 0.0, 0.0, -1.0],
            slot_count: 2,
            dim: d,
        });

        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let slots = input.scene().unwrap().slots_matrix(&mut tape).unwrap();
        let cells = tape.matmul(slots, bound.var(model.w_visual)).unwrap();
        let r = tape
            .constant(Tensor::vector(input.scene().unwrap().restrictor_vec.clone()));

        // S1 against the restrictor: (−1, 0).
        let c0 = tape.row(cells, 0).unwrap();
        let c1 = tape.row(cells, 1).unwrap();
        let s1_0 = tape.cosine(c0, r).unwrap();
        let s1_1 = tape.cosine(c1, r).unwrap();
        assert!((tape.value(s1_0).item() + 1.0).abs() < 1e-9);
        assert!(tape.value(s1_1).item().abs() < 1e-9);

        // Restrictor gist = Σ S1_i·cell_i = (1, 0).
        let w0 = tape.mul(s1_0, c0).unwrap();
        let w1 = tape.mul(s1_1, c1).unwrap();
        let gist = tape.add_n(&[w0, w1]).unwrap();
        assert!((tape.value(gist).data()[0] - 1.0).abs() < 1e-9);
        assert!(tape.value(gist).data()[1].abs() < 1e-9);

        // Scope similarities vanish: W1_0 ⊥ scope, W1_1 = 0.
        let logits = logits_of(&model, &input);
        assert!(logits.iter().all(|&l| l == 0.0), "zero classifier gives zero logits");
    }

    #[test]
    fn slot_permutation_leaves_gists_unchanged() {
        let corpus = tiny_corpus();
        let model = Qmn::new(&spec(), &dims_of(&corpus));
        let (input, _, _) = scene_input(&corpus, 1);
        let n = input.scene().unwrap().slot_count;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        order.shuffle(&mut rng);
        let shuffled = permuted(&input, &order);
        let a = logits_of(&model, &input);
        let b = logits_of(&model, &shuffled);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn orthogonal_restrictor_gives_near_zero_gist() {
        // If the restrictor is orthogonal to every cell, all similarities
        // vanish and the restrictor gist is the zero vector.
        let d = 4;
        let mut params = ParamSet::new();
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        let w_visual = params.push("memory.visual.w", Tensor::matrix(d, d, eye.clone()).unwrap());
        let _ = params.push("memory.lingual.w", Tensor::matrix(d, d, eye).unwrap());
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        // Slots live in the e1/e2 plane, restrictor along e4.
        let slots = tape.constant(
            Tensor::matrix(2, d, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(),
        );
        let cells = tape.matmul(slots, bound.var(w_visual)).unwrap();
        let r = tape.constant(Tensor::vector(vec![0.0, 0.0, 0.0, 1.0]));
        let mut weighted = Vec::new();
        for i in 0..2 {
            let cell = tape.row(cells, i).unwrap();
            let sim = tape.cosine(cell, r).unwrap();
            weighted.push(tape.mul(sim, cell).unwrap());
        }
        let gist = tape.add_n(&weighted).unwrap();
        assert!(tape.value(gist).data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn softmax_variant_changes_the_forward_pass() {
        let corpus = tiny_corpus();
        let dims = dims_of(&corpus);
        let plain = Qmn::new(&spec(), &dims);
        let soft = Qmn::new(&ModelSpec { qmn_softmax_s2: true, ..spec() }, &dims);
        let (input, _, _) = scene_input(&corpus, 3);
        assert_ne!(logits_of(&plain, &input), logits_of(&soft, &input));
    }

    #[test]
    fn gradients_match_finite_differences_both_variants() {
        let corpus = tiny_corpus();
        let dims = dims_of(&corpus);
        for softmax_s2 in [false, true] {
            let model = Qmn::new(&ModelSpec { qmn_softmax_s2: softmax_s2, ..spec() }, &dims);
            let (input, label, _) = scene_input(&corpus, 7);
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
            assert!(
                report.max_rel_err <= 1e-4,
                "softmax_s2={softmax_s2}: {}",
                report.max_rel_err
            );
        }
    }
}
