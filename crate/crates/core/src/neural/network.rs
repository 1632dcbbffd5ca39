//! Graph-attention Q-network: node encoder, two multi-head attention layers,
//! and a dense head reading the concatenated features of the agent's own node.

use rand::Rng;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{config_err, Error, Result};

/// How the query-key dot product is scaled before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionScale {
    /// `1 / sqrt(d_k)`.
    InvSqrt,
    /// `sqrt(d_k)`.
    Sqrt,
}

impl AttentionScale {
    pub fn factor(self, dk: usize) -> f64 {
        match self {
            AttentionScale::InvSqrt => 1.0 / (dk as f64).sqrt(),
            AttentionScale::Sqrt => (dk as f64).sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttentionScale::InvSqrt => "inv_sqrt",
            AttentionScale::Sqrt => "sqrt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inv_sqrt" => Some(AttentionScale::InvSqrt),
            "sqrt" => Some(AttentionScale::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetHyper {
    pub in_features: usize,
    pub feature_width: usize,
    pub heads: usize,
    pub head_hidden: usize,
    pub action_count: usize,
    pub attention_scale: AttentionScale,
}

impl NetHyper {
    pub fn validate(&self) -> Result<()> {
        if self.in_features == 0 || self.feature_width == 0 || self.head_hidden == 0 || self.action_count == 0 {
            return Err(config_err("network widths must be positive"));
        }
        if self.heads == 0 || self.feature_width % self.heads != 0 {
            return Err(config_err(format!(
                "feature width {} must be a positive multiple of the head count {}",
                self.feature_width, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        self.feature_width / self.heads
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let f = self.feature_width;
        let mut shapes = vec![(self.in_features, f), (1, f), (f, f), (1, f)];
        for _ in 0..GAT_LAYERS {
            shapes.extend_from_slice(&[(f, f), (f, f), (f, f), (f, f), (1, f)]);
        }
        shapes.extend_from_slice(&[(3 * f, self.head_hidden), (1, self.head_hidden), (self.head_hidden, self.action_count), (1, self.action_count)]);
        shapes
    }
}

pub const GAT_LAYERS: usize = 2;
const ENC1_W: usize = 0;
const ENC1_B: usize = 1;
const ENC2_W: usize = 2;
const ENC2_B: usize = 3;
const GAT_BASE: usize = 4;
const GAT_STRIDE: usize = 5;
const HEAD1_W: usize = GAT_BASE + GAT_LAYERS * GAT_STRIDE;
const HEAD1_B: usize = HEAD1_W + 1;
const HEAD2_W: usize = HEAD1_W + 2;
const HEAD2_B: usize = HEAD1_W + 3;

pub fn param_names() -> Vec<String> {
    let mut names: Vec<String> =
        ["encoder.0.weight", "encoder.0.bias", "encoder.1.weight", "encoder.1.bias"].map(String::from).to_vec();
    for l in 0..GAT_LAYERS {
        for p in ["w_query", "w_key", "w_value", "mix.weight", "mix.bias"] {
            names.push(format!("gat.{l}.{p}"));
        }
    }
    names.extend(["head.0.weight", "head.0.bias", "head.1.weight", "head.1.bias"].map(String::from));
    names
}

/// All weights of one Q-network, in the fixed slot order of [`param_names`].
#[derive(Debug, Clone, PartialEq)]
pub struct QNetworkParams {
    pub hyper: NetHyper,
    pub tensors: Vec<Matrix>,
}

/// Forward-pass handles needed by tests and the loss.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub encoded: Var,
    pub attention: [Var; GAT_LAYERS],
    pub layers: [Var; GAT_LAYERS],
    pub q_values: Var,
}

impl QNetworkParams {
    /// Fan-in uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn init<R: Rng + ?Sized>(hyper: NetHyper, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let shapes = hyper.param_shapes();
        let mut tensors = Vec::with_capacity(shapes.len());
        for (slot, &(r, c)) in shapes.iter().enumerate() {
            let fan_in = if r == 1 { shapes[slot - 1].0 } else { r };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..r * c).map(|_| rng.random_range(-bound..bound)).collect();
            tensors.push(Matrix::from_vec(r, c, data)?);
        }
        Ok(Self { hyper, tensors })
    }

    pub fn zeros(hyper: NetHyper) -> Result<Self> {
        hyper.validate()?;
        let tensors = hyper.param_shapes().into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect();
        Ok(Self { hyper, tensors })
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(Matrix::shape).collect()
    }

    pub fn check_compatible(&self, other: &QNetworkParams) -> Result<()> {
        if self.hyper != other.hyper || self.shapes() != other.shapes() {
            return Err(Error::Shape("parameter sets have different layouts".into()));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|m| m.as_slice().len()).sum()
    }

    fn dense(&self, tape: &mut Tape, x: Var, w: usize, b: usize) -> Result<Var> {
        let wv = tape.param(w, &self.tensors[w]);
        let bv = tape.param(b, &self.tensors[b]);
        let xw = tape.matmul(x, wv)?;
        tape.add_bias(xw, bv)
    }

    /// Per-node two-layer ReLU MLP.
    pub fn encode_nodes(&self, tape: &mut Tape, raw: Var) -> Result<Var> {
        if tape.value(raw).cols() != self.hyper.in_features {
            return Err(Error::Shape(format!(
                "node features have {} columns, network expects {}",
                tape.value(raw).cols(),
                self.hyper.in_features
            )));
        }
        let h = self.dense(tape, raw, ENC1_W, ENC1_B)?;
        let h = tape.relu(h);
        let h = self.dense(tape, h, ENC2_W, ENC2_B)?;
        Ok(tape.relu(h))
    }

    /// One multi-head attention layer; returns (attention output, layer output).
    pub fn gat_layer(&self, tape: &mut Tape, h: Var, layer: usize, nodes: usize) -> Result<(Var, Var)> {
        let base = GAT_BASE + layer * GAT_STRIDE;
        let wq = tape.param(base, &self.tensors[base]);
        let wk = tape.param(base + 1, &self.tensors[base + 1]);
        let wv = tape.param(base + 2, &self.tensors[base + 2]);
        let q = tape.matmul(h, wq)?;
        let k = tape.matmul(h, wk)?;
        let v = tape.matmul(h, wv)?;
        let scale = self.hyper.attention_scale.factor(self.hyper.head_width());
        let att = tape.attention(q, k, v, nodes, self.hyper.heads, scale)?;
        let mixed = self.dense(tape, att, base + 3, base + 4)?;
        Ok((att, tape.relu(mixed)))
    }

    /// Q-values for a batch of graphs stacked row-wise (`nodes` rows each).
    /// `self_nodes[g]` is the acting agent's node index inside graph `g`.
    pub fn forward(&self, tape: &mut Tape, raw: Var, nodes: usize, self_nodes: &[usize]) -> Result<ForwardVars> {
        let rows = tape.value(raw).rows();
        if nodes == 0 || rows != nodes * self_nodes.len() {
            return Err(Error::Shape(format!("{rows} rows for {} graphs of {nodes} nodes", self_nodes.len())));
        }
        if self_nodes.iter().any(|&s| s >= nodes) {
            return Err(Error::Shape("self node index out of range".into()));
        }
        let encoded = self.encode_nodes(tape, raw)?;
        let (att1, h1) = self.gat_layer(tape, encoded, 0, nodes)?;
        let (att2, h2) = self.gat_layer(tape, h1, 1, nodes)?;
        let own: Vec<usize> = self_nodes.iter().enumerate().map(|(g, &s)| g * nodes + s).collect();
        let a = tape.gather_rows(encoded, own.clone())?;
        let b = tape.gather_rows(h1, own.clone())?;
        let c = tape.gather_rows(h2, own)?;
        let cat = tape.concat_cols(vec![a, b, c])?;
        let z = self.dense(tape, cat, HEAD1_W, HEAD1_B)?;
        let z = tape.relu(z);
        let q_values = self.dense(tape, z, HEAD2_W, HEAD2_B)?;
        Ok(ForwardVars { encoded, attention: [att1, att2], layers: [h1, h2], q_values })
    }

    /// Q-values of one observation graph from the point of view of `self_node`.
    pub fn q_values(&self, nodes: &Matrix, self_node: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let raw = tape.input(nodes.clone())?;
        let out = self.forward(&mut tape, raw, nodes.rows(), &[self_node])?;
        Ok(tape.value(out.q_values).as_slice().to_vec())
    }

    /// Q-values for a batch of graphs, one row per graph.
    pub fn q_values_batch(&self, stacked: Matrix, nodes: usize, self_nodes: &[usize]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let raw = tape.input(stacked)?;
        let out = self.forward(&mut tape, raw, nodes, self_nodes)?;
        Ok(tape.value(out.q_values).clone())
    }

    /// `self <- beta * online + (1 - beta) * self`, elementwise.
    pub fn soft_update_from(&mut self, online: &QNetworkParams, beta: f64) -> Result<()> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(config_err(format!("soft-update beta must be in (0, 1], got {beta}")));
        }
        self.check_compatible(online)?;
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            for (x, &y) in t.as_mut_slice().iter_mut().zip(o.as_slice()) {
                *x = beta * y + (1.0 - beta) * *x;
            }
        }
        Ok(())
    }
}
