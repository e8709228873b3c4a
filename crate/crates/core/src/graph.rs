//! Graph auto-encoder over the follower graph.
//!
//! Encoder: two graph-convolution layers with symmetric degree
//! normalization over the symmetrized adjacency plus self-loops,
//! `Z = Ã · relu(Ã X W₁) · W₂`. Decoder: `Â = σ(Z Zᵀ)`. The loss
//! `g = ½ ‖A − Â‖²` targets the stored (directed) adjacency as-is.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape, Var};
use crate::data::SocialGraph;
use crate::params::{fan_in_uniform, Bound, ParamGroup, ParamId, ParamStore};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaeParams {
    pub layers: [ParamId; 2],
    pub feature_dim: usize,
    pub hidden: usize,
    pub embedding_width: usize,
}

impl GaeParams {
    pub fn init<R: Rng>(store: &mut ParamStore, rng: &mut R, feature_dim: usize, hidden: usize, embedding_width: usize) -> Self {
        let w1 = store.add("gae.layer1", ParamGroup::Graph, fan_in_uniform(rng, feature_dim, hidden));
        let w2 = store.add("gae.layer2", ParamGroup::Graph, fan_in_uniform(rng, hidden, embedding_width));
        Self {
            layers: [w1, w2],
            feature_dim,
            hidden,
            embedding_width,
        }
    }
}

/// Constant per-graph matrices the encoder needs.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub normalized: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub features: Array2<f64>,
}

/// `D^{-1/2} (A_sym + I) D^{-1/2}`. Self-loops keep every degree ≥ 1.
pub fn normalized_adjacency(graph: &SocialGraph) -> Array2<f64> {
    let n = graph.n_users();
    let mut a = Array2::<f64>::eye(n);
    for &(s, d) in graph.edges() {
        a[[s, d]] = 1.0;
        a[[d, s]] = 1.0;
    }
    let inv_sqrt: Array1<f64> = a.rows().into_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] * inv_sqrt[i] * inv_sqrt[j])
}

impl GraphInputs {
    pub fn new(graph: &SocialGraph) -> Self {
        Self {
            normalized: normalized_adjacency(graph),
            adjacency: graph.adjacency(),
            features: graph.features().clone(),
        }
    }
}

/// Tape handles for the encoded graph.
#[derive(Debug, Clone, Copy)]
pub struct GraphVars {
    pub z: Var,
    pub reconstruction: Var,
    pub loss: Var,
}

pub fn encode_graph_on_tape(tape: &mut Tape, bound: &Bound, params: &GaeParams, inputs: &GraphInputs) -> GraphVars {
    let norm = tape.leaf(inputs.normalized.clone());
    let x = tape.leaf(inputs.features.clone());
    let w1 = bound.var(params.layers[0]);
    let w2 = bound.var(params.layers[1]);
    let ax = tape.matmul(norm, x);
    let h = tape.matmul(ax, w1);
    let h = tape.relu(h);
    let ah = tape.matmul(norm, h);
    let z = tape.matmul(ah, w2);
    let zt = tape.transpose(z);
    let logits = tape.matmul(z, zt);
    let recon = tape.sigmoid(logits);
    let target = tape.leaf(inputs.adjacency.clone());
    let diff = tape.sub(target, recon);
    let sq = tape.mul(diff, diff);
    let total = tape.sum_all(sq);
    let loss = tape.scale(total, 0.5);
    GraphVars {
        z,
        reconstruction: recon,
        loss,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoding {
    pub z: Array2<f64>,
    pub reconstruction: Array2<f64>,
    pub loss: f64,
}

impl GraphEncoding {
    /// Owner embedding; the zero vector for users not in the graph.
    pub fn user_vector(&self, graph: &SocialGraph, user_id: &str) -> Array1<f64> {
        match graph.user_row(user_id) {
            Some(r) => self.z.row(r).to_owned(),
            None => Array1::zeros(self.z.ncols()),
        }
    }
}

pub fn encode_graph(graph: &SocialGraph, store: &ParamStore, params: &GaeParams) -> GraphEncoding {
    let inputs = GraphInputs::new(graph);
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let vars = encode_graph_on_tape(&mut tape, &bound, params, &inputs);
    GraphEncoding {
        z: tape.value(vars.z).clone(),
        reconstruction: tape.value(vars.reconstruction).clone(),
        loss: tape.scalar(vars.loss),
    }
}

/// `½ ‖A − σ(Z Zᵀ)‖²` for a given `Z`, without the tape.
pub fn reconstruction_loss(adjacency: &Array2<f64>, z: &Array2<f64>) -> f64 {
    let logits = z.dot(&z.t());
    0.5 * adjacency
        .iter()
        .zip(logits.iter())
        .map(|(&a, &l)| (a - sigmoid(l)).powi(2))
        .sum::<f64>()
}

/// Writes `Z` as whitespace-separated rows keyed by user id.
pub fn write_embeddings(path: &std::path::Path, graph: &SocialGraph, z: &Array2<f64>) -> crate::Result<()> {
    use std::io::Write;
    let io = |e| crate::UcdError::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for (u, row) in graph.users().iter().zip(z.outer_iter()) {
        write!(w, "{u}").map_err(io)?;
        for v in row {
            write!(w, " {v:e}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
