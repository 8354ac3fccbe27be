use rand::Rng;

use super::matrix::{gemm, Matrix};
use super::params::{ParamId, ParamStore};
use crate::dualquat::DualQuaternion;
use crate::error::{shape, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddCol(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    SliceRows(Var, usize),
    Tanh(Var),
    TanhShrink(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Dropout(Var, Vec<f64>),
    CrossEntropy(Var, Vec<usize>),
    SoftmaxCrossEntropy(Var, Vec<usize>, Matrix),
    Bce(Var, Matrix, f64),
    SigmoidBce(Var, Matrix, f64),
    Mse(Var, Matrix),
    Sum(Var),
    Mean(Var),
    DqLeftMul(Var, [[f64; 8]; 8]),
    DqNormalize(Var),
    DqErrorScore(Var, f64),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the
/// reverse of insertion order is a reverse topological order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const PROB_FLOOR: f64 = 1e-12;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_blocks(m: &Matrix) -> Result<()> {
    if m.rows() % 8 != 0 {
        return shape(format!("{} rows is not a whole number of dual quaternions", m.rows()));
    }
    Ok(())
}

fn check_targets(m: &Matrix, targets: &[usize]) -> Result<()> {
    if targets.len() != m.cols() {
        return shape(format!("{} targets for {} columns", targets.len(), m.cols()));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= m.rows()) {
        return shape(format!("class {t} out of range for {} rows", m.rows()));
    }
    Ok(())
}

fn block(m: &Matrix, b: usize, j: usize) -> [f64; 8] {
    std::array::from_fn(|k| m.get(8 * b + k, j))
}

/// `(Qr, Qd) -> (Qr/|Qr|, Qd - Qr (Qr.Qd)/|Qr|^2)` on one 8-block.
fn normalize_block(x: &[f64; 8]) -> [f64; 8] {
    let n2: f64 = x[..4].iter().map(|v| v * v).sum();
    let k: f64 = (0..4).map(|i| x[i] * x[i + 4]).sum();
    let n = n2.sqrt();
    std::array::from_fn(|i| if i < 4 { x[i] / n } else { x[i] - x[i - 4] * k / n2 })
}

fn normalize_block_grad(x: &[f64; 8], g: &[f64; 8]) -> [f64; 8] {
    let r = &x[..4];
    let d = &x[4..];
    let gr = &g[..4];
    let gd = &g[4..];
    let n2: f64 = r.iter().map(|v| v * v).sum();
    let n = n2.sqrt();
    let k: f64 = (0..4).map(|i| r[i] * d[i]).sum();
    let r_gr: f64 = (0..4).map(|i| r[i] * gr[i]).sum();
    let r_gd: f64 = (0..4).map(|i| r[i] * gd[i]).sum();
    let mut out = [0.0; 8];
    for i in 0..4 {
        out[i] = gr[i] / n - r[i] * r_gr / (n2 * n) - gd[i] * k / n2 - d[i] * r_gd / n2
            + 2.0 * r[i] * r_gd * k / (n2 * n2);
        out[i + 4] = gd[i] - r[i] * r_gd / n2;
    }
    out
}

fn qmul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn qconj(a: [f64; 4]) -> [f64; 4] {
    [a[0], -a[1], -a[2], -a[3]]
}

/// `alpha e0 - |vec(2 E* E_eps)|`, returning the score and the vector part.
fn error_score_block(x: &[f64; 8], alpha: f64) -> (f64, [f64; 3]) {
    let er = [x[0], x[1], x[2], x[3]];
    let ed = [x[4], x[5], x[6], x[7]];
    let u = qmul(qconj(er), ed);
    let v = [2.0 * u[1], 2.0 * u[2], 2.0 * u[3]];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (alpha * er[0] - n, v)
}

fn error_score_block_grad(x: &[f64; 8], alpha: f64, g: f64) -> [f64; 8] {
    let er = [x[0], x[1], x[2], x[3]];
    let ed = [x[4], x[5], x[6], x[7]];
    let (_, v) = error_score_block(x, alpha);
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let mut out = [0.0; 8];
    out[0] = alpha * g;
    if n == 0.0 {
        return out;
    }
    // d(-n)/du where u = 2 Er* Ed, restricted to the vector part
    let gu = [0.0, -g * 2.0 * v[0] / n, -g * 2.0 * v[1] / n, -g * 2.0 * v[2] / n];
    // u = conj(er) * ed: grad wrt ed = conj(conj(er)) * gu = er * gu
    let ged = qmul(er, gu);
    // grad wrt conj(er) = gu * conj(ed); then conjugate back
    let gcr = qmul(gu, qconj(ed));
    let ger = qconj(gcr);
    out[0] += ger[0];
    for i in 1..4 {
        out[i] = ger[i];
    }
    out[4..].copy_from_slice(&ged);
    out
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

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    /// A trainable parameter; gradients flow back into `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return shape(format!("{what} {:?} vs {:?}", self.value(a).shape(), self.value(b).shape()));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "hadamard")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Hadamard(a, b)))
    }

    /// Adds the column vector `bias` to every column of `a`.
    pub fn add_col(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(bias));
        if bm.cols() != 1 || bm.rows() != am.rows() {
            return shape(format!("bias {:?} for input {:?}", bm.shape(), am.shape()));
        }
        let v = Matrix::from_fn(am.rows(), am.cols(), |i, j| am.get(i, j) + bm.get(i, 0));
        Ok(self.push(v, Op::AddCol(a, bias)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    /// Stacks inputs vertically.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(p) => self.value(*p).cols(),
            None => return shape("concat of nothing"),
        };
        if parts.iter().any(|p| self.value(*p).cols() != cols) {
            return shape("concat inputs differ in column count");
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            rows += m.rows();
            data.extend_from_slice(m.as_slice());
        }
        let v = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let m = self.value(a);
        if start + len > m.rows() {
            return shape(format!("rows {start}..{} of {}", start + len, m.rows()));
        }
        let c = m.cols();
        let v = Matrix::from_vec(len, c, m.as_slice()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(v, Op::SliceRows(a, start)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// `x - tanh(x)`.
    pub fn tanhshrink(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x - x.tanh());
        self.push(v, Op::TanhShrink(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    /// Column-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_cols(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    /// Inverted dropout: zeroes each entry with probability `p` and scales
    /// survivors by `1/(1-p)`. Not recorded when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return crate::error::degenerate(format!("dropout rate {p} outside [0, 1)"));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> =
            (0..self.value(a).len()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let m = self.value(a);
        let v = Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().zip(&mask).map(|(x, k)| x * k).collect())?;
        Ok(self.push(v, Op::Dropout(a, mask)))
    }

    /// Mean over columns of `-ln p[target]` for probabilities `probs`.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let m = self.value(probs);
        check_targets(m, targets)?;
        let n = m.cols() as f64;
        let loss = targets.iter().enumerate().map(|(j, &t)| -m.get(t, j).max(PROB_FLOOR).ln()).sum::<f64>() / n;
        Ok(self.push(Matrix::filled(1, 1, loss), Op::CrossEntropy(probs, targets.to_vec())))
    }

    /// Softmax followed by cross-entropy, computed stably from logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let m = self.value(logits);
        check_targets(m, targets)?;
        let p = softmax_cols(m);
        let n = m.cols() as f64;
        let mut loss = 0.0;
        for (j, &t) in targets.iter().enumerate() {
            let mx = (0..m.rows()).map(|i| m.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + (0..m.rows()).map(|i| (m.get(i, j) - mx).exp()).sum::<f64>().ln();
            loss += lse - m.get(t, j);
        }
        Ok(self.push(Matrix::filled(1, 1, loss / n), Op::SoftmaxCrossEntropy(logits, targets.to_vec(), p)))
    }

    /// Mean binary cross-entropy on probabilities; positives weighted by
    /// `pos_weight`.
    pub fn binary_cross_entropy(&mut self, probs: Var, targets: &Matrix, pos_weight: f64) -> Result<Var> {
        let m = self.value(probs);
        if m.shape() != targets.shape() {
            return shape("targets shape");
        }
        let n = m.len() as f64;
        let loss = m
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                -(pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        Ok(self.push(Matrix::filled(1, 1, loss), Op::Bce(probs, targets.clone(), pos_weight)))
    }

    /// Sigmoid followed by binary cross-entropy, computed from logits.
    pub fn sigmoid_binary_cross_entropy(&mut self, logits: Var, targets: &Matrix, pos_weight: f64) -> Result<Var> {
        let m = self.value(logits);
        if m.shape() != targets.shape() {
            return shape("targets shape");
        }
        let n = m.len() as f64;
        let loss = m
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(&z, &y)| pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z))
            .sum::<f64>()
            / n;
        Ok(self.push(Matrix::filled(1, 1, loss), Op::SigmoidBce(logits, targets.clone(), pos_weight)))
    }

    /// Mean squared error over all entries.
    pub fn mse(&mut self, a: Var, target: &Matrix) -> Result<Var> {
        let m = self.value(a);
        if m.shape() != target.shape() {
            return shape(format!("mse {:?} vs {:?}", m.shape(), target.shape()));
        }
        let loss = m.as_slice().iter().zip(target.as_slice()).map(|(x, t)| (x - t) * (x - t)).sum::<f64>()
            / m.len() as f64;
        Ok(self.push(Matrix::filled(1, 1, loss), Op::Mse(a, target.clone())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let s = m.sum() / m.len() as f64;
        self.push(Matrix::filled(1, 1, s), Op::Mean(a))
    }

    /// Left-multiplies every 8-row block by the constant `q`.
    pub fn dq_left_mul(&mut self, a: Var, q: &DualQuaternion) -> Result<Var> {
        let m = self.value(a);
        check_blocks(m)?;
        let l = q.left_matrix();
        let v = Matrix::from_fn(m.rows(), m.cols(), |i, j| {
            let b = i / 8;
            (0..8).map(|k| l[i % 8][k] * m.get(8 * b + k, j)).sum()
        });
        Ok(self.push(v, Op::DqLeftMul(a, l)))
    }

    /// Normalizes every 8-row block as a dual quaternion.
    pub fn dq_normalize(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        check_blocks(m)?;
        let mut v = Matrix::zeros(m.rows(), m.cols());
        for b in 0..m.rows() / 8 {
            for j in 0..m.cols() {
                let x = block(m, b, j);
                if x[..4].iter().all(|c| *c == 0.0) {
                    return crate::error::degenerate("dual quaternion with zero real part in normalization");
                }
                let y = normalize_block(&x);
                for k in 0..8 {
                    v.set(8 * b + k, j, y[k]);
                }
            }
        }
        Ok(self.push(v, Op::DqNormalize(a)))
    }

    /// Error-dual-quaternion score `alpha e0 - |vec(2 E* E_eps)|` of every
    /// 8-row block, giving one row per block.
    pub fn dq_error_score(&mut self, a: Var, alpha: f64) -> Result<Var> {
        let m = self.value(a);
        check_blocks(m)?;
        let v = Matrix::from_fn(m.rows() / 8, m.cols(), |b, j| error_score_block(&block(m, b, j), alpha).0);
        Ok(self.push(v, Op::DqErrorScore(a, alpha)))
    }

    /// Accumulates `d loss / d param` into `store` for every parameter
    /// reachable from `loss`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return shape(format!("loss must be scalar, got {:?}", self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => store.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let ga = accum_slot(&mut grads, *a, am.shape());
                    gemm(&g, false, bm, true, ga, 1.0);
                    let gb = accum_slot(&mut grads, *b, bm.shape());
                    gemm(am, true, &g, false, gb, 1.0);
                }
                Op::Add(a, b) => {
                    add_grad(&mut grads, *a, &g);
                    add_grad(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    add_grad(&mut grads, *a, &g);
                    add_grad(&mut grads, *b, &g.map(|x| -x));
                }
                Op::Hadamard(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    add_grad(&mut grads, *a, &ga);
                    add_grad(&mut grads, *b, &gb);
                }
                Op::AddCol(a, bias) => {
                    add_grad(&mut grads, *a, &g);
                    let gb = Matrix::from_fn(g.rows(), 1, |i, _| (0..g.cols()).map(|j| g.get(i, j)).sum());
                    add_grad(&mut grads, *bias, &gb);
                }
                Op::Scale(a, s) => add_grad(&mut grads, *a, &g.map(|x| x * s)),
                Op::Concat(parts) => {
                    let c = g.cols();
                    let mut start = 0;
                    for p in parts {
                        let r = self.value(*p).rows();
                        let part = Matrix::from_vec(r, c, g.as_slice()[start * c..(start + r) * c].to_vec())?;
                        add_grad(&mut grads, *p, &part);
                        start += r;
                    }
                }
                Op::SliceRows(a, start) => {
                    let am = self.value(*a);
                    let c = am.cols();
                    let slot = accum_slot(&mut grads, *a, am.shape());
                    for (dst, src) in slot.as_mut_slice()[start * c..(start + g.rows()) * c].iter_mut().zip(g.as_slice()) {
                        *dst += src;
                    }
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |g, y| g * (1.0 - y * y));
                    add_grad(&mut grads, *a, &ga);
                }
                Op::TanhShrink(a) => {
                    let ga = g.zip_map(self.value(*a), |g, x| {
                        let t = x.tanh();
                        g * t * t
                    });
                    add_grad(&mut grads, *a, &ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    add_grad(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |g, y| g * y * (1.0 - y));
                    add_grad(&mut grads, *a, &ga);
                }
                Op::Softmax(a) => {
                    let p = &node.value;
                    let mut ga = Matrix::zeros(p.rows(), p.cols());
                    for j in 0..p.cols() {
                        let dot: f64 = (0..p.rows()).map(|i| g.get(i, j) * p.get(i, j)).sum();
                        for i in 0..p.rows() {
                            ga.set(i, j, p.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    add_grad(&mut grads, *a, &ga);
                }
                Op::Dropout(a, mask) => {
                    let ga = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.as_slice().iter().zip(mask).map(|(x, k)| x * k).collect(),
                    )?;
                    add_grad(&mut grads, *a, &ga);
                }
                Op::CrossEntropy(probs, targets) => {
                    let pm = self.value(*probs);
                    let s = g.as_slice()[0] / pm.cols() as f64;
                    let slot = accum_slot(&mut grads, *probs, pm.shape());
                    for (j, &t) in targets.iter().enumerate() {
                        let p = pm.get(t, j);
                        if p > PROB_FLOOR {
                            slot.set(t, j, slot.get(t, j) - s / p);
                        }
                    }
                }
                Op::SoftmaxCrossEntropy(logits, targets, p) => {
                    let s = g.as_slice()[0] / p.cols() as f64;
                    let mut ga = p.map(|x| x * s);
                    for (j, &t) in targets.iter().enumerate() {
                        ga.set(t, j, ga.get(t, j) - s);
                    }
                    add_grad(&mut grads, *logits, &ga);
                }
                Op::Bce(probs, targets, w) => {
                    let pm = self.value(*probs);
                    let s = g.as_slice()[0] / pm.len() as f64;
                    let ga = pm.zip_map(targets, |p, y| {
                        if p <= PROB_FLOOR || p >= 1.0 - PROB_FLOOR {
                            0.0
                        } else {
                            s * (-w * y / p + (1.0 - y) / (1.0 - p))
                        }
                    });
                    add_grad(&mut grads, *probs, &ga);
                }
                Op::SigmoidBce(logits, targets, w) => {
                    let zm = self.value(*logits);
                    let s = g.as_slice()[0] / zm.len() as f64;
                    let ga = zm.zip_map(targets, |z, y| {
                        let p = sigmoid(z);
                        s * (w * y * (p - 1.0) + (1.0 - y) * p)
                    });
                    add_grad(&mut grads, *logits, &ga);
                }
                Op::Mse(a, target) => {
                    let am = self.value(*a);
                    let s = 2.0 * g.as_slice()[0] / am.len() as f64;
                    let ga = am.zip_map(target, |x, t| s * (x - t));
                    add_grad(&mut grads, *a, &ga);
                }
                Op::Sum(a) => {
                    let am = self.value(*a);
                    add_grad(&mut grads, *a, &Matrix::filled(am.rows(), am.cols(), g.as_slice()[0]));
                }
                Op::Mean(a) => {
                    let am = self.value(*a);
                    let s = g.as_slice()[0] / am.len() as f64;
                    add_grad(&mut grads, *a, &Matrix::filled(am.rows(), am.cols(), s));
                }
                Op::DqLeftMul(a, l) => {
                    let ga = Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                        let b = i / 8;
                        (0..8).map(|k| l[k][i % 8] * g.get(8 * b + k, j)).sum()
                    });
                    add_grad(&mut grads, *a, &ga);
                }
                Op::DqNormalize(a) => {
                    let am = self.value(*a);
                    let mut ga = Matrix::zeros(am.rows(), am.cols());
                    for b in 0..am.rows() / 8 {
                        for j in 0..am.cols() {
                            let d = normalize_block_grad(&block(am, b, j), &block(&g, b, j));
                            for k in 0..8 {
                                ga.set(8 * b + k, j, d[k]);
                            }
                        }
                    }
                    add_grad(&mut grads, *a, &ga);
                }
                Op::DqErrorScore(a, alpha) => {
                    let am = self.value(*a);
                    let mut ga = Matrix::zeros(am.rows(), am.cols());
                    for b in 0..am.rows() / 8 {
                        for j in 0..am.cols() {
                            let d = error_score_block_grad(&block(am, b, j), *alpha, g.get(b, j));
                            for k in 0..8 {
                                ga.set(8 * b + k, j, d[k]);
                            }
                        }
                    }
                    add_grad(&mut grads, *a, &ga);
                }
            }
        }
        Ok(())
    }
}

fn accum_slot<'a>(grads: &'a mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &'a mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn add_grad(grads: &mut [Option<Matrix>], v: Var, g: &Matrix) {
    match &mut grads[v.0] {
        Some(m) => m.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

pub(crate) fn softmax_cols(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for j in 0..m.cols() {
        let mx = (0..m.rows()).map(|i| m.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..m.rows() {
            let e = (m.get(i, j) - mx).exp();
            out.set(i, j, e);
            total += e;
        }
        for i in 0..m.rows() {
            out.set(i, j, out.get(i, j) / total);
        }
    }
    out
}

/// Score of a single dual quaternion, as computed by
/// [`Tape::dq_error_score`].
pub fn error_score(q: &DualQuaternion, alpha: f64) -> f64 {
    error_score_block(&q.to_array(), alpha).0
}
