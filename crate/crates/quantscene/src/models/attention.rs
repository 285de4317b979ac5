//! Attention over slot vectors, and the stacked attention classifier.

use super::{
    affine, CheckpointDims, Init, LstmParams, Model, ModelError, ModelInput, ModelSpec,
    SceneDims, LOGIT_COUNT,
};
use crate::tensor::{BoundParams, ParamSet, Tape, Tensor, TensorError, Var};

/// One attention layer: each slot vector and the linguistic cue are mapped
/// into a shared hidden space, summed, squashed, and scored; the softmax of
/// the scores weights the original slot vectors into a gist.
pub struct AttentionParams {
    /// `[d_v × d_att]`, applied to the slot matrix from the right.
    w_visual: usize,
    /// `[d_att × d_query]`, applied to the cue.
    w_query: usize,
    bias: usize,
    score: usize,
}

/// Matched-pair initialization constants. Units come in pairs sharing one
/// random direction with opposite query signs; the pair difference
/// `tanh(γ r·v + γ r·q + β) − tanh(γ r·v − γ r·q + β)` is linear in `r·q`
/// with a slope in `r·v`, so the layer ranks slots by their query match
/// from the first step instead of having to discover matching through the
/// tanh curvature.
fn pair_gain() -> f64 {
    std::env::var("QS_PG").ok().and_then(|v| v.parse().ok()).unwrap_or(1.5)
}
fn pair_score() -> f64 {
    std::env::var("QS_PS").ok().and_then(|v| v.parse().ok()).unwrap_or(1.5)
}
const PAIR_BIAS: f64 = -0.66;

impl AttentionParams {
    /// `input_norm` is the typical norm of incoming slot vectors (1 for raw
    /// slots, 1/S once attention probabilities have scaled them); the
    /// visual map compensates so pre-activations match.
    pub(crate) fn init(
        params: &mut ParamSet,
        prefix: &str,
        d_visual: usize,
        d_query: usize,
        d_att: usize,
        input_norm: f64,
        init: &mut Init,
    ) -> Self {
        let pairs = d_att / 2;
        let gain_v = pair_gain() / input_norm;
        let pair_score = pair_score();
        let pair_gain = pair_gain();
        // Column j of the visual map is attention unit j's direction.
        let mut wv = vec![0.0; d_visual * d_att];
        let mut wq = vec![0.0; d_att * d_query];
        let mut bias = vec![PAIR_BIAS; d_att];
        let mut score = vec![0.0; d_att];
        for t in 0..pairs {
            let dir_v = init.unit_direction(d_visual);
            let dir_q =
                if d_visual == d_query { dir_v.clone() } else { init.unit_direction(d_query) };
            for (coord, x) in dir_v.iter().enumerate() {
                wv[coord * d_att + 2 * t] = gain_v * x;
                wv[coord * d_att + 2 * t + 1] = gain_v * x;
            }
            for (coord, x) in dir_q.iter().enumerate() {
                wq[2 * t * d_query + coord] = pair_gain * x;
                wq[(2 * t + 1) * d_query + coord] = -pair_gain * x;
            }
            score[2 * t] = pair_score;
            score[2 * t + 1] = -pair_score;
        }
        if d_att % 2 == 1 {
            // Odd width: the last unit starts as a plain small random one.
            let dir_v = init.unit_direction(d_visual);
            let dir_q = init.unit_direction(d_query);
            for (coord, x) in dir_v.iter().enumerate() {
                wv[coord * d_att + d_att - 1] = gain_v * x;
            }
            for (coord, x) in dir_q.iter().enumerate() {
                wq[(d_att - 1) * d_query + coord] = pair_gain * x;
            }
            bias[d_att - 1] = 0.0;
        }
        Self {
            w_visual: params.push(
                format!("{prefix}.visual.w"),
                Tensor::matrix(d_visual, d_att, wv).expect("sized above"),
            ),
            w_query: params.push(
                format!("{prefix}.query.w"),
                Tensor::matrix(d_att, d_query, wq).expect("sized above"),
            ),
            bias: params.push(format!("{prefix}.bias"), Tensor::vector(bias)),
            score: params.push(format!("{prefix}.score"), Tensor::vector(score)),
        }
    }

    pub fn value_count(d_visual: usize, d_query: usize, d_att: usize) -> usize {
        d_visual * d_att + d_att * d_query + d_att + d_att
    }

    /// `(gist, weights)` for a slot matrix `[S × d_v]` and a cue `[d_q]`.
    pub fn apply(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        slots: Var,
        cue: Var,
    ) -> Result<(Var, Var), TensorError> {
        attention_layer(
            tape,
            slots,
            cue,
            bound.var(self.w_visual),
            bound.var(self.w_query),
            bound.var(self.bias),
            bound.var(self.score),
        )
    }
}

/// The attention computation itself, over explicit parameter handles:
/// `h_i = tanh(W_v v_i + W_q q + b)`, `weights = softmax(w·h_i)`,
/// `gist = Σ weights_i v_i`.
pub fn attention_layer(
    tape: &mut Tape,
    slots: Var,
    cue: Var,
    w_visual: Var,
    w_query: Var,
    bias: Var,
    score: Var,
) -> Result<(Var, Var), TensorError> {
    let projected = tape.matmul(slots, w_visual)?;
    let cue_part = tape.matmul(w_query, cue)?;
    let cue_part = tape.add(cue_part, bias)?;
    let summed = tape.add_row(projected, cue_part)?;
    let hidden = tape.tanh(summed);
    let scores = tape.matmul(hidden, score)?;
    let weights = tape.softmax(scores)?;
    let gist = tape.matmul(weights, slots)?;
    Ok((gist, weights))
}

/// Stacked attention: an LSTM reads the query, then each attention pass
/// refines the cue by adding in the gist it extracted, and the final cue is
/// classified. Slot order is invisible to this model.
pub struct San {
    spec: ModelSpec,
    dims: SceneDims,
    params: ParamSet,
    query_lstm: LstmParams,
    layers: Vec<AttentionParams>,
    w_out: usize,
    b_out: usize,
}

impl San {
    pub fn new(spec: &ModelSpec, dims: &SceneDims) -> Result<Self, ModelError> {
        if spec.d_hidden != dims.dim {
            return Err(ModelError::BadSpec(format!(
                "stacked attention adds gists of width {} onto a query state of width {}; \
                 set d_hidden equal to the corpus vector dimension",
                dims.dim, spec.d_hidden
            )));
        }
        let mut init = Init::new(spec.seed);
        let mut params = ParamSet::new();
        let query_lstm =
            LstmParams::init(&mut params, "query", dims.dim, spec.d_hidden, &mut init);
        let layers = (0..spec.stacks)
            .map(|t| {
                AttentionParams::init(
                    &mut params,
                    &format!("attention{t}"),
                    dims.dim,
                    spec.d_hidden,
                    spec.d_hidden,
                    1.0,
                    &mut init,
                )
            })
            .collect();
        let w_out = params.push("classifier.weight", init.matrix(LOGIT_COUNT, spec.d_hidden));
        let b_out = params.push("classifier.bias", Init::zeros(LOGIT_COUNT));
        Ok(Self { spec: *spec, dims: *dims, params, query_lstm, layers, w_out, b_out })
    }
}

impl Model for San {
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
        let r = tape.constant(Tensor::vector(scene.restrictor_vec.clone()));
        let s = tape.constant(Tensor::vector(scene.scope_vec.clone()));
        let mut cue = self.query_lstm.run(tape, bound, &[r, s])?;
        for layer in &self.layers {
            let (gist, _) = layer.apply(tape, bound, slots, cue)?;
            cue = tape.add(cue, gist)?;
        }
        Ok(affine(tape, bound.var(self.w_out), bound.var(self.b_out), cue)?)
    }

    fn expected_param_count(&self) -> usize {
        LstmParams::value_count(self.dims.dim, self.spec.d_hidden)
            + self.spec.stacks
                * AttentionParams::value_count(self.dims.dim, self.spec.d_hidden, self.spec.d_hidden)
            + LOGIT_COUNT * self.spec.d_hidden
            + LOGIT_COUNT
    }

    fn checkpoint_dims(&self) -> CheckpointDims {
        CheckpointDims::Scene(self.dims)
    }
}
