//! Sequential models: an LSTM over the two query words, optionally paired
//! with a second LSTM reading the slot sequence.

use super::{
    affine, CheckpointDims, Init, Model, ModelError, ModelInput, ModelSpec, SceneDims,
    LOGIT_COUNT,
};
use crate::tensor::{BoundParams, ParamSet, Tape, Tensor, TensorError, Var};

const GATES: [&str; 4] = ["input", "forget", "cell", "output"];

/// Parameter indices of one LSTM: per gate an input map `[d_h×d_in]`, a
/// recurrent map `[d_h×d_h]`, and a bias.
pub struct LstmParams {
    w: [usize; 4],
    u: [usize; 4],
    b: [usize; 4],
    d_hidden: usize,
}

impl LstmParams {
    /// Input maps are scaled for unit-norm input vectors (1/d per-coordinate
    /// variance), recurrent maps stay at the base scale.
    pub(crate) fn init(
        params: &mut ParamSet,
        prefix: &str,
        d_in: usize,
        d_hidden: usize,
        init: &mut Init,
    ) -> Self {
        let input_gain = (d_in as f64).sqrt();
        let mut w = [0; 4];
        let mut u = [0; 4];
        let mut b = [0; 4];
        for (g, gate) in GATES.iter().enumerate() {
            w[g] = params
                .push(format!("{prefix}.{gate}.w"), init.scaled_matrix(d_hidden, d_in, input_gain));
            u[g] = params.push(format!("{prefix}.{gate}.u"), init.matrix(d_hidden, d_hidden));
            b[g] = params.push(format!("{prefix}.{gate}.b"), Init::zeros(d_hidden));
        }
        Self { w, u, b, d_hidden }
    }

    pub fn value_count(d_in: usize, d_hidden: usize) -> usize {
        4 * (d_hidden * d_in + d_hidden * d_hidden + d_hidden)
    }

    fn gate(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        g: usize,
        x: Var,
        h: Var,
    ) -> Result<Var, TensorError> {
        let wx = tape.matmul(bound.var(self.w[g]), x)?;
        let uh = tape.matmul(bound.var(self.u[g]), h)?;
        let sum = tape.add(wx, uh)?;
        tape.add(sum, bound.var(self.b[g]))
    }

    /// Standard recurrence over a sequence of vectors; returns the final
    /// hidden state.
    pub fn run(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        inputs: &[Var],
    ) -> Result<Var, TensorError> {
        let mut h = tape.constant(Tensor::zeros(vec![self.d_hidden]));
        let mut c = tape.constant(Tensor::zeros(vec![self.d_hidden]));
        for &x in inputs {
            let i = self.gate(tape, bound, 0, x, h)?;
            let i = tape.sigmoid(i);
            let f = self.gate(tape, bound, 1, x, h)?;
            let f = tape.sigmoid(f);
            let g = self.gate(tape, bound, 2, x, h)?;
            let g = tape.tanh(g);
            let o = self.gate(tape, bound, 3, x, h)?;
            let o = tape.sigmoid(o);
            let fc = tape.mul(f, c)?;
            let ig = tape.mul(i, g)?;
            c = tape.add(fc, ig)?;
            let ct = tape.tanh(c);
            h = tape.mul(o, ct)?;
        }
        Ok(h)
    }
}

/// Language-only sequential model: two recurrence steps over the query
/// (restrictor first, scope second), final hidden state into a linear
/// classifier.
pub struct BlindLstm {
    spec: ModelSpec,
    dims: SceneDims,
    params: ParamSet,
    lstm: LstmParams,
    w_out: usize,
    b_out: usize,
}

impl BlindLstm {
    pub fn new(spec: &ModelSpec, dims: &SceneDims) -> Self {
        let mut init = Init::new(spec.seed);
        let mut params = ParamSet::new();
        let lstm = LstmParams::init(&mut params, "query", dims.dim, spec.d_hidden, &mut init);
        let w_out = params.push("classifier.weight", init.matrix(LOGIT_COUNT, spec.d_hidden));
        let b_out = params.push("classifier.bias", Init::zeros(LOGIT_COUNT));
        Self { spec: *spec, dims: *dims, params, lstm, w_out, b_out }
    }
}

impl Model for BlindLstm {
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
        let r = tape.constant(Tensor::vector(scene.restrictor_vec.clone()));
        let s = tape.constant(Tensor::vector(scene.scope_vec.clone()));
        let h = self.lstm.run(tape, bound, &[r, s])?;
        Ok(affine(tape, bound.var(self.w_out), bound.var(self.b_out), h)?)
    }

    fn expected_param_count(&self) -> usize {
        LstmParams::value_count(self.dims.dim, self.spec.d_hidden)
            + LOGIT_COUNT * self.spec.d_hidden
            + LOGIT_COUNT
    }

    fn checkpoint_dims(&self) -> CheckpointDims {
        CheckpointDims::Scene(self.dims)
    }
}

/// Two LSTMs: one walks the slot sequence in record order and summarizes it
/// in its last hidden state, the other reads the query; the two summaries
/// are concatenated and classified.
pub struct CnnLstm {
    spec: ModelSpec,
    dims: SceneDims,
    params: ParamSet,
    visual: LstmParams,
    query: LstmParams,
    w_out: usize,
    b_out: usize,
}

impl CnnLstm {
    pub fn new(spec: &ModelSpec, dims: &SceneDims) -> Self {
        let mut init = Init::new(spec.seed);
        let mut params = ParamSet::new();
        let visual = LstmParams::init(&mut params, "visual", dims.dim, spec.d_hidden, &mut init);
        let query = LstmParams::init(&mut params, "query", dims.dim, spec.d_hidden, &mut init);
        let w_out = params.push("classifier.weight", init.matrix(LOGIT_COUNT, 2 * spec.d_hidden));
        let b_out = params.push("classifier.bias", Init::zeros(LOGIT_COUNT));
        Self { spec: *spec, dims: *dims, params, visual, query, w_out, b_out }
    }
}

impl Model for CnnLstm {
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
        let slot_vars: Vec<Var> = (0..scene.slot_count)
            .map(|i| {
                let row = scene.slots_flat[i * scene.dim..(i + 1) * scene.dim].to_vec();
                tape.constant(Tensor::vector(row))
            })
            .collect();
        let visual_gist = self.visual.run(tape, bound, &slot_vars)?;
        let r = tape.constant(Tensor::vector(scene.restrictor_vec.clone()));
        let s = tape.constant(Tensor::vector(scene.scope_vec.clone()));
        let query_gist = self.query.run(tape, bound, &[r, s])?;
        let joint = tape.concat(&[visual_gist, query_gist], 0)?;
        Ok(affine(tape, bound.var(self.w_out), bound.var(self.b_out), joint)?)
    }

    fn expected_param_count(&self) -> usize {
        2 * LstmParams::value_count(self.dims.dim, self.spec.d_hidden)
            + LOGIT_COUNT * 2 * self.spec.d_hidden
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
    use crate::tensor::grad_check;

    fn spec(arch: Architecture) -> ModelSpec {
        ModelSpec { d_hidden: 8, ..ModelSpec::new(arch) }
    }

    #[test]
    fn zero_parameters_give_uniform_softmax() {
        let corpus = tiny_corpus();
        let mut model = BlindLstm::new(&spec(Architecture::Lstm), &dims_of(&corpus));
        let zeroed = vec![0.0; model.params.value_count()];
        model.params_mut().assign_flat(&zeroed);
        let (input, _, _) = scene_input(&corpus, 0);
        let logits = logits_of(&model, &input);
        assert!(logits.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn word_order_matters() {
        let corpus = tiny_corpus();
        let model = BlindLstm::new(&spec(Architecture::Lstm), &dims_of(&corpus));
        let (input, _, _) = scene_input(&corpus, 1);
        let scene = input.scene().unwrap();
        let reversed = ModelInput::Scene(SceneInput {
            restrictor_vec: scene.scope_vec.clone(),
            scope_vec: scene.restrictor_vec.clone(),
            ..scene.clone()
        });
        assert_ne!(logits_of(&model, &input), logits_of(&model, &reversed));
    }

    #[test]
    fn blind_lstm_gradients_through_both_steps() {
        let corpus = tiny_corpus();
        let model = BlindLstm::new(&spec(Architecture::Lstm), &dims_of(&corpus));
        let (input, label, _) = scene_input(&corpus, 2);
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

    #[test]
    fn cnn_lstm_gradients_over_all_parameters() {
        let corpus = tiny_corpus();
        let model = CnnLstm::new(&spec(Architecture::CnnLstm), &dims_of(&corpus));
        let (input, label, _) = scene_input(&corpus, 3);
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

    #[test]
    fn single_slot_sequence_runs() {
        let corpus = tiny_corpus();
        let model = CnnLstm::new(&spec(Architecture::CnnLstm), &dims_of(&corpus));
        let (input, _, _) = scene_input(&corpus, 0);
        let scene = input.scene().unwrap();
        let single = ModelInput::Scene(SceneInput {
            slots_flat: scene.slots_flat[..scene.dim].to_vec(),
            slot_count: 1,
            ..scene.clone()
        });
        let logits = logits_of(&model, &single);
        assert!(logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_visual_branch_reproduces_blind_lstm_with_shared_parameters() {
        // Zero slot vectors with zero biases keep the visual LSTM at the
        // origin, so the combined model collapses onto its query branch.
        let corpus = tiny_corpus();
        let dims = dims_of(&corpus);
        let combined = CnnLstm::new(&spec(Architecture::CnnLstm), &dims);
        let mut blind = BlindLstm::new(&spec(Architecture::Lstm), &dims);

        // Copy the query LSTM of the combined model into the blind one, and
        // the query-gist half of its classifier columns.
        for (name, tensor) in combined.params().iter() {
            if let Some(idx) = blind.params().index_of(name) {
                *blind.params_mut().tensor_mut(idx) = tensor.clone();
            }
        }
        let w = combined.params().get("classifier.weight").unwrap();
        let d_h = 8;
        let mut right_block = Vec::with_capacity(LOGIT_COUNT * d_h);
        for row in 0..LOGIT_COUNT {
            right_block.extend_from_slice(&w.data()[row * 2 * d_h + d_h..(row + 1) * 2 * d_h]);
        }
        let idx = blind.params().index_of("classifier.weight").unwrap();
        *blind.params_mut().tensor_mut(idx) =
            Tensor::matrix(LOGIT_COUNT, d_h, right_block).unwrap();
        let idx = blind.params().index_of("classifier.bias").unwrap();
        *blind.params_mut().tensor_mut(idx) =
            combined.params().get("classifier.bias").unwrap().clone();

        let (input, _, _) = scene_input(&corpus, 4);
        let scene = input.scene().unwrap();
        let zero_visual = ModelInput::Scene(SceneInput {
            slots_flat: vec![0.0; scene.slots_flat.len()],
            ..scene.clone()
        });
        let combined_logits = logits_of(&combined, &zero_visual);
        let blind_logits = logits_of(&blind, &input);
        for (a, b) in combined_logits.iter().zip(&blind_logits) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
