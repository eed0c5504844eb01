//! The two attention building blocks of the character network: multi-head
//! node-level attention over a typed graph neighborhood, and the attention
//! module that fuses a set of per-character representations with weights
//! shared across the whole name.

use crate::params::ParamId;
use crate::tape::{NodeId, Tape};

/// Negative slope of the LeakyReLU applied to raw attention scores.
pub const ATTENTION_LEAKY_SLOPE: f64 = 0.2;

/// One attention head: a projection matrix (d×dh) and a score vector
/// (1×2dh) whose halves weight the target and neighbor projections.
#[derive(Debug, Clone, Copy)]
pub struct AttentionHead {
    pub proj: ParamId,
    pub score: ParamId,
}

/// Result of node-level attention: the concatenated per-head output (1×d)
/// plus each head's normalized weights (1×N) for inspection.
#[derive(Debug, Clone)]
pub struct NodeAttention {
    pub output: NodeId,
    pub weights: Vec<NodeId>,
}

/// Multi-head node-level attention over a neighborhood matrix whose first
/// row is the target node. Per head: project all rows, score each neighbor
/// against the target with a LeakyReLU of the split score vector, softmax
/// over the neighborhood, and ELU-activate the weighted sum of projected
/// neighbors. Head outputs are concatenated.
pub fn node_level_attention(tape: &mut Tape, heads: &[AttentionHead], x: NodeId) -> NodeAttention {
    assert!(!heads.is_empty());
    assert!(tape.value(x).rows() >= 1, "neighborhood must be non-empty");
    let mut outputs = Vec::with_capacity(heads.len());
    let mut weights = Vec::with_capacity(heads.len());
    for head in heads {
        let proj = tape.param(head.proj);
        let dh = tape.value(proj).cols();
        let gamma = tape.matmul(x, proj); // N×dh

        let score_vec = tape.param(head.score);
        assert_eq!(tape.value(score_vec).cols(), 2 * dh, "score vector must be 1×2dh");
        let w_target = tape.slice_cols(score_vec, 0, dh);
        let w_neighbor = tape.slice_cols(score_vec, dh, dh);

        let target = tape.row_slice(gamma, 0);
        let w_target_t = tape.transpose(w_target);
        let target_score = tape.matmul(target, w_target_t); // 1×1
        let w_neighbor_t = tape.transpose(w_neighbor);
        let neighbor_scores = tape.matmul(gamma, w_neighbor_t); // N×1
        let raw = tape.add_row(neighbor_scores, target_score);
        let activated = tape.leaky_relu(raw, ATTENTION_LEAKY_SLOPE);

        let row = tape.transpose(activated); // 1×N
        let theta = tape.softmax_rows(row);
        let aggregated = tape.matmul(theta, gamma); // 1×dh
        outputs.push(tape.elu(aggregated, 1.0));
        weights.push(theta);
    }
    let output = tape.concat_cols(&outputs);
    NodeAttention { output, weights }
}

/// Parameters of one attention-module instance.
#[derive(Debug, Clone, Copy)]
pub struct AttentionModuleParams {
    /// d×d transform.
    pub w: ParamId,
    /// 1×d bias.
    pub b: ParamId,
    /// 1×d context vector.
    pub q: ParamId,
}

/// Result of the attention module: the fused representation per character
/// and the shared input weights (1×v).
#[derive(Debug, Clone)]
pub struct ModuleAttention {
    pub outputs: Vec<NodeId>,
    pub weights: NodeId,
}

/// Fuse `v` representations per character into one. The importance of input
/// slot `r` is the mean over the name's characters of qᵀ tanh(W h + b);
/// a softmax over slots yields weights shared by every character, and each
/// character's output is the weighted sum of its slot representations.
///
/// `inputs[r]` holds slot r's representation for each character (all 1×d).
pub fn attention_module(
    tape: &mut Tape,
    params: &AttentionModuleParams,
    inputs: &[Vec<NodeId>],
) -> ModuleAttention {
    let v = inputs.len();
    assert!(v >= 1, "attention module needs at least one input slot");
    let chars = inputs[0].len();
    assert!(chars >= 1);
    assert!(inputs.iter().all(|slot| slot.len() == chars));

    let w = tape.param(params.w);
    let b = tape.param(params.b);
    let q = tape.param(params.q);
    let q_t = tape.transpose(q); // d×1

    let mut slot_scores = Vec::with_capacity(v);
    for slot in inputs {
        let stacked = tape.concat_rows(slot); // L×d
        let projected = tape.matmul(stacked, w);
        let shifted = tape.add_row(projected, b);
        let activated = tape.tanh(shifted);
        let scores = tape.matmul(activated, q_t); // L×1
        slot_scores.push(tape.mean_rows(scores)); // 1×1
    }
    let concat = tape.concat_cols(&slot_scores); // 1×v
    let weights = tape.softmax_rows(concat);

    let mut outputs = Vec::with_capacity(chars);
    for i in 0..chars {
        let per_slot: Vec<NodeId> = inputs.iter().map(|slot| slot[i]).collect();
        let stacked = tape.concat_rows(&per_slot); // v×d
        outputs.push(tape.matmul(weights, stacked)); // 1×d
    }
    ModuleAttention { outputs, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::tensor::Tensor;

    fn elu(x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            x.exp() - 1.0
        }
    }

    #[test]
    fn single_neighbor_weight_is_exactly_one() {
        let mut store = ParamStore::new();
        let proj = store.register("proj", Tensor::from_vec(2, 2, vec![0.5, -0.3, 0.2, 0.4]));
        let score = store.register("score", Tensor::row_vector(vec![0.3, -0.2, 0.1, 0.5]));
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        let out = node_level_attention(&mut tape, &[AttentionHead { proj, score }], x);
        assert_eq!(tape.value(out.weights[0]).data(), &[1.0]);
        // output = elu(gamma) for the sole neighbor
        let gamma = [1.0 * 0.5 + 2.0 * 0.2, 1.0 * -0.3 + 2.0 * 0.4];
        let got = tape.value(out.output).data().to_vec();
        assert!((got[0] - elu(gamma[0])).abs() < 1e-12);
        assert!((got[1] - elu(gamma[1])).abs() < 1e-12);
    }

    #[test]
    fn identical_projected_neighbors_split_evenly() {
        let mut store = ParamStore::new();
        let proj = store.register("proj", Tensor::from_vec(2, 2, vec![0.5, -0.3, 0.2, 0.4]));
        let score = store.register("score", Tensor::row_vector(vec![0.3, -0.2, 0.1, 0.5]));
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::from_vec(2, 2, vec![1.0, 2.0, 1.0, 2.0]));
        let out = node_level_attention(&mut tape, &[AttentionHead { proj, score }], x);
        let theta = tape.value(out.weights[0]).data().to_vec();
        assert!((theta[0] - 0.5).abs() < 1e-12);
        assert!((theta[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn three_neighbor_case_matches_hand_computation() {
        // d = 2, one head, parameters and neighborhood fixed by hand;
        // expected weights and output worked through Eqs. of the score,
        // softmax, and weighted-sum chain with a separate calculator.
        let mut store = ParamStore::new();
        let proj = store.register("proj", Tensor::from_vec(2, 2, vec![0.5, -0.3, 0.2, 0.4]));
        let score = store.register("score", Tensor::row_vector(vec![0.3, -0.2, 0.1, 0.5]));
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::from_vec(3, 2, vec![1.0, 2.0, 0.5, -1.0, -0.25, 0.75]));
        let out = node_level_attention(&mut tape, &[AttentionHead { proj, score }], x);
        let theta = tape.value(out.weights[0]).data().to_vec();
        let expect_theta = [0.408_277_758_704_084_67, 0.240_314_317_782_364_6, 0.351_407_923_513_550_77];
        for (got, want) in theta.iter().zip(expect_theta) {
            assert!((got - want).abs() < 1e-12, "theta {got} vs {want}");
        }
        let output = tape.value(out.output).data().to_vec();
        let expect_out = [0.388_250_896_810_633_2, 0.203_743_975_889_323_36];
        for (got, want) in output.iter().zip(expect_out) {
            assert!((got - want).abs() < 1e-12, "out {got} vs {want}");
        }
    }

    #[test]
    fn module_single_input_is_identity() {
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::from_vec(2, 2, vec![0.6, -0.1, 0.3, 0.8]));
        let b = store.register("b", Tensor::row_vector(vec![0.05, -0.2]));
        let q = store.register("q", Tensor::row_vector(vec![0.7, -0.4]));
        let mut tape = Tape::new(&store);
        let h = tape.constant(Tensor::row_vector(vec![0.9, -0.3]));
        let out = attention_module(&mut tape, &AttentionModuleParams { w, b, q }, &[vec![h]]);
        assert_eq!(tape.value(out.weights).data(), &[1.0]);
        assert_eq!(tape.value(out.outputs[0]).data(), &[0.9, -0.3]);
    }

    #[test]
    fn module_identical_inputs_return_that_input() {
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::from_vec(2, 2, vec![0.6, -0.1, 0.3, 0.8]));
        let b = store.register("b", Tensor::row_vector(vec![0.05, -0.2]));
        let q = store.register("q", Tensor::row_vector(vec![0.7, -0.4]));
        let mut tape = Tape::new(&store);
        let h1 = tape.constant(Tensor::row_vector(vec![0.9, -0.3]));
        let h2 = tape.constant(Tensor::row_vector(vec![0.9, -0.3]));
        let out =
            attention_module(&mut tape, &AttentionModuleParams { w, b, q }, &[vec![h1], vec![h2]]);
        let delta = tape.value(out.weights).data().to_vec();
        assert!((delta[0] - 0.5).abs() < 1e-12);
        let got = tape.value(out.outputs[0]).data().to_vec();
        assert!((got[0] - 0.9).abs() < 1e-12 && (got[1] + 0.3).abs() < 1e-12);
    }

    #[test]
    fn module_two_inputs_match_hand_computation() {
        // v = 2, d = 2, one name item; scores, softmax, and blend worked
        // out separately and frozen here.
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::from_vec(2, 2, vec![0.6, -0.1, 0.3, 0.8]));
        let b = store.register("b", Tensor::row_vector(vec![0.05, -0.2]));
        let q = store.register("q", Tensor::row_vector(vec![0.7, -0.4]));
        let mut tape = Tape::new(&store);
        let h1 = tape.constant(Tensor::row_vector(vec![0.9, -0.3]));
        let h2 = tape.constant(Tensor::row_vector(vec![-0.2, 0.6]));
        let out =
            attention_module(&mut tape, &AttentionModuleParams { w, b, q }, &[vec![h1], vec![h2]]);
        let delta = tape.value(out.weights).data().to_vec();
        let expect_delta = [0.635_866_612_331_154_5, 0.364_133_387_668_845_45];
        for (got, want) in delta.iter().zip(expect_delta) {
            assert!((got - want).abs() < 1e-12, "delta {got} vs {want}");
        }
        let got = tape.value(out.outputs[0]).data().to_vec();
        let expect_out = [0.499_453_273_564_27, 0.027_720_048_901_960_92];
        for (g, want) in got.iter().zip(expect_out) {
            assert!((g - want).abs() < 1e-12, "out {g} vs {want}");
        }
    }

    #[test]
    fn neighbor_order_permutation_leaves_output_unchanged() {
        let mut store = ParamStore::new();
        let proj = store.register("proj", Tensor::from_vec(2, 2, vec![0.5, -0.3, 0.2, 0.4]));
        let score = store.register("score", Tensor::row_vector(vec![0.3, -0.2, 0.1, 0.5]));
        let rows = [[1.0, 2.0], [0.5, -1.0], [-0.25, 0.75], [2.0, 0.1]];
        let run = |order: &[usize]| {
            let mut tape = Tape::new(&store);
            let mut data = rows[0].to_vec(); // target stays first
            for &i in order {
                data.extend_from_slice(&rows[i]);
            }
            let x = tape.constant(Tensor::from_vec(1 + order.len(), 2, data));
            let out = node_level_attention(&mut tape, &[AttentionHead { proj, score }], x);
            tape.value(out.output).data().to_vec()
        };
        let a = run(&[1, 2, 3]);
        let b = run(&[3, 1, 2]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
}
