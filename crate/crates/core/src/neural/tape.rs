//! Reverse-mode differentiation over a recorded sequence of matrix ops.
//!
//! Only the operations the Q-network needs are supported. Every forward op
//! rejects non-finite output, so NaN/Inf never propagates silently.

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Attention(AttentionRecord),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    PickCols(Var, Vec<usize>),
    MeanSquaredError(Var, Vec<f64>),
    Sum(Var),
}

#[derive(Debug)]
struct AttentionRecord {
    q: Var,
    k: Var,
    v: Var,
    nodes: usize,
    heads: usize,
    scale: f64,
    /// Softmax weights laid out as [graph][head][i][j].
    alpha: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn finite(m: Matrix, what: &str) -> Result<Matrix> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Numeric(format!("non-finite value produced by {what}")))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Matrix) -> Result<Var> {
        let value = finite(value, "input")?;
        Ok(self.push(value, Op::Input))
    }

    /// Leaf bound to parameter slot `index`; its gradient is reported under that slot.
    pub fn param(&mut self, index: usize, value: &Matrix) -> Var {
        self.push(value.clone(), Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = finite(self.value(a).matmul(self.value(b))?, "matmul")?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Shape(format!("bias {:?} for input {:?}", bv.shape(), av.shape())));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        let out = finite(out, "add_bias")?;
        Ok(self.push(out, Op::AddBias(a, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Multi-head dot-product attention over fully connected graphs.
    ///
    /// `q`, `k`, `v` hold `graphs * nodes` rows; head `m` owns the column block
    /// `[m * dk, (m + 1) * dk)`. Attention is restricted to rows of the same graph.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, nodes: usize, heads: usize, scale: f64) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, width) = qv.shape();
        if kv.shape() != (rows, width) || vv.shape() != (rows, width) {
            return Err(Error::Shape("attention q/k/v shapes differ".into()));
        }
        if nodes == 0 || heads == 0 || rows % nodes != 0 || width % heads != 0 {
            return Err(Error::Shape(format!("attention over {rows}x{width} with {nodes} nodes, {heads} heads")));
        }
        let graphs = rows / nodes;
        let dk = width / heads;
        let mut alpha = vec![0.0; graphs * heads * nodes * nodes];
        let mut out = Matrix::zeros(rows, width);
        let mut logits = vec![0.0; nodes];
        for g in 0..graphs {
            let base = g * nodes;
            for h in 0..heads {
                let cols = h * dk..(h + 1) * dk;
                for i in 0..nodes {
                    let qi = &qv.row(base + i)[cols.clone()];
                    let mut max = f64::NEG_INFINITY;
                    for (j, l) in logits.iter_mut().enumerate() {
                        let kj = &kv.row(base + j)[cols.clone()];
                        *l = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(*l);
                    }
                    let mut denom = 0.0;
                    for l in logits.iter_mut() {
                        *l = (*l - max).exp();
                        denom += *l;
                    }
                    let a_off = ((g * heads + h) * nodes + i) * nodes;
                    for j in 0..nodes {
                        let a = logits[j] / denom;
                        alpha[a_off + j] = a;
                        let vj = &vv.row(base + j)[cols.clone()];
                        let oi = &mut out.row_mut(base + i)[cols.clone()];
                        for (o, x) in oi.iter_mut().zip(vj) {
                            *o += a * x;
                        }
                    }
                }
            }
        }
        let out = finite(out, "attention")?;
        Ok(self.push(out, Op::Attention(AttentionRecord { q, k, v, nodes, heads, scale, alpha })))
    }

    /// Attention weights recorded by an attention node, laid out [graph][head][i][j].
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention(rec) => Some(&rec.alpha),
            _ => None,
        }
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= av.rows()) {
            return Err(Error::Shape(format!("row {bad} out of range for {:?}", av.shape())));
        }
        let mut out = Matrix::zeros(rows.len(), av.cols());
        for (o, &r) in rows.iter().enumerate() {
            out.row_mut(o).copy_from_slice(av.row(r));
        }
        Ok(self.push(out, Op::GatherRows(a, rows)))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Result<Var> {
        let rows = parts.first().map_or(0, |p| self.value(*p).rows());
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(Error::Shape("concat of tensors with different row counts".into()));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in &parts {
                let src = self.value(*p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts)))
    }

    /// Picks column `cols[r]` from each row `r`, giving an `rows x 1` tensor.
    pub fn pick_cols(&mut self, a: Var, cols: Vec<usize>) -> Result<Var> {
        let av = self.value(a);
        if cols.len() != av.rows() || cols.iter().any(|&c| c >= av.cols()) {
            return Err(Error::Shape("pick_cols index mismatch".into()));
        }
        let data = cols.iter().enumerate().map(|(r, &c)| av.get(r, c)).collect();
        let out = Matrix::from_vec(cols.len(), 1, data)?;
        Ok(self.push(out, Op::PickCols(a, cols)))
    }

    /// Mean of `(a_r - target_r)^2` over the rows of a column vector.
    pub fn mse(&mut self, a: Var, targets: Vec<f64>) -> Result<Var> {
        let av = self.value(a);
        if av.cols() != 1 || av.rows() != targets.len() || targets.is_empty() {
            return Err(Error::Shape("mse expects a column vector matching the targets".into()));
        }
        let n = targets.len() as f64;
        let loss = av.as_slice().iter().zip(&targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
        let out = finite(Matrix::from_vec(1, 1, vec![loss])?, "mse")?;
        Ok(self.push(out, Op::MeanSquaredError(a, targets)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).as_slice().iter().sum();
        let out = finite(Matrix::from_vec(1, 1, vec![s])?, "sum")?;
        Ok(self.push(out, Op::Sum(a)))
    }

    /// Back-propagates from the scalar `loss` and returns the gradient of every
    /// parameter slot in `0..n_params` (zeros for slots the tape never touched).
    pub fn backward(&self, loss: Var, param_shapes: &[(usize, usize)]) -> Result<Vec<Matrix>> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::Numeric("backward called without a recorded forward pass".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        let mut seed = Matrix::zeros(1, 1);
        seed.set(0, 0, 1.0);
        grads[loss.0] = Some(seed);

        let mut param_grads: Vec<Matrix> = param_shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();

        fn acc<'g>(grads: &'g mut [Option<Matrix>], v: Var, like: &Matrix) -> &'g mut Matrix {
            grads[v.0].get_or_insert_with(|| Matrix::zeros(like.rows(), like.cols()))
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(p) => {
                    let slot = param_grads
                        .get_mut(*p)
                        .ok_or_else(|| Error::Shape(format!("parameter slot {p} not declared")))?;
                    if slot.shape() != g.shape() {
                        return Err(Error::Shape(format!("parameter slot {p} shape mismatch")));
                    }
                    slot.add_assign(&g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    g.matmul_bt_into(bv, acc(&mut grads, *a, av));
                    av.matmul_at_into(&g, acc(&mut grads, *b, bv));
                }
                Op::AddBias(a, bias) => {
                    acc(&mut grads, *a, self.value(*a)).add_assign(&g);
                    let gb = acc(&mut grads, *bias, self.value(*bias));
                    for r in 0..g.rows() {
                        for (o, x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                }
                Op::Relu(a) => {
                    let out = &self.nodes[idx].value;
                    let ga = acc(&mut grads, *a, self.value(*a));
                    for ((o, &y), &d) in ga.as_mut_slice().iter_mut().zip(out.as_slice()).zip(g.as_slice()) {
                        if y > 0.0 {
                            *o += d;
                        }
                    }
                }
                Op::Attention(rec) => self.attention_backward(rec, &g, &mut grads),
                Op::GatherRows(a, rows) => {
                    let ga = acc(&mut grads, *a, self.value(*a));
                    for (o, &r) in rows.iter().enumerate() {
                        for (x, d) in ga.row_mut(r).iter_mut().zip(g.row(o)) {
                            *x += d;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let gp = acc(&mut grads, *p, self.value(*p));
                        for r in 0..g.rows() {
                            for (x, d) in gp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                                *x += d;
                            }
                        }
                        off += w;
                    }
                }
                Op::PickCols(a, cols) => {
                    let ga = acc(&mut grads, *a, self.value(*a));
                    for (r, &c) in cols.iter().enumerate() {
                        let cur = ga.get(r, c);
                        ga.set(r, c, cur + g.get(r, 0));
                    }
                }
                Op::MeanSquaredError(a, targets) => {
                    let av = self.value(*a);
                    let scale = 2.0 * g.get(0, 0) / targets.len() as f64;
                    let ga = acc(&mut grads, *a, av);
                    for (r, t) in targets.iter().enumerate() {
                        let cur = ga.get(r, 0);
                        ga.set(r, 0, cur + scale * (av.get(r, 0) - t));
                    }
                }
                Op::Sum(a) => {
                    let d = g.get(0, 0);
                    acc(&mut grads, *a, self.value(*a)).as_mut_slice().iter_mut().for_each(|x| *x += d);
                }
            }
        }
        if param_grads.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok(param_grads)
    }

    fn attention_backward(&self, rec: &AttentionRecord, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let (qv, kv, vv) = (self.value(rec.q), self.value(rec.k), self.value(rec.v));
        let (rows, width) = qv.shape();
        let (nodes, heads) = (rec.nodes, rec.heads);
        let graphs = rows / nodes;
        let dk = width / heads;
        let mut gq = Matrix::zeros(rows, width);
        let mut gk = Matrix::zeros(rows, width);
        let mut gv = Matrix::zeros(rows, width);
        let mut d_alpha = vec![0.0; nodes];
        for gi in 0..graphs {
            let base = gi * nodes;
            for h in 0..heads {
                let cols = h * dk..(h + 1) * dk;
                for i in 0..nodes {
                    let a_off = ((gi * heads + h) * nodes + i) * nodes;
                    let alpha = &rec.alpha[a_off..a_off + nodes];
                    let go = &g.row(base + i)[cols.clone()];
                    let mut weighted = 0.0;
                    for j in 0..nodes {
                        let vj = &vv.row(base + j)[cols.clone()];
                        d_alpha[j] = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                        weighted += alpha[j] * d_alpha[j];
                        let gvj = &mut gv.row_mut(base + j)[cols.clone()];
                        for (x, d) in gvj.iter_mut().zip(go) {
                            *x += alpha[j] * d;
                        }
                    }
                    let qi: Vec<f64> = qv.row(base + i)[cols.clone()].to_vec();
                    for j in 0..nodes {
                        let dl = rec.scale * alpha[j] * (d_alpha[j] - weighted);
                        if dl == 0.0 {
                            continue;
                        }
                        let kj = &kv.row(base + j)[cols.clone()];
                        let gqi = &mut gq.row_mut(base + i)[cols.clone()];
                        for (x, kk) in gqi.iter_mut().zip(kj) {
                            *x += dl * kk;
                        }
                        let gkj = &mut gk.row_mut(base + j)[cols.clone()];
                        for (x, qq) in gkj.iter_mut().zip(&qi) {
                            *x += dl * qq;
                        }
                    }
                }
            }
        }
        for (var, m) in [(rec.q, gq), (rec.k, gk), (rec.v, gv)] {
            match &mut grads[var.0] {
                Some(existing) => existing.add_assign(&m),
                slot @ None => *slot = Some(m),
            }
        }
    }
}
