//! Dual-quaternion feed-forward layers on top of [`crate::autodiff`].
//!
//! A layer with `R` inputs and `S` outputs stores an `8S x 8R` weight
//! matrix made of `8x8` blocks, each initialised as the left-multiplication
//! matrix of a unit dual quaternion ("weights-left" layout).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::dualquat::{DualQuaternion, Mat8};
use crate::error::{degenerate, shape, Error, Result};
use crate::quat::Quaternion;
use crate::vec3::Vec3;

pub const LAYOUT: &str = "weights-left-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Tanh,
    TanhShrink,
    Relu,
}

impl Activation {
    pub fn is_unit_preserving(self) -> bool {
        matches!(self, Activation::Identity)
    }

    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
            Activation::TanhShrink => tape.tanhshrink(x),
            Activation::Relu => tape.relu(x),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::TanhShrink => x - x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "tanhshrink" => Ok(Activation::TanhShrink),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// `(Phi, Psi)` of a unit dual-quaternion weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDQWeight {
    pub phi: Vec3,
    pub psi: Vec3,
}

impl UnitDQWeight {
    pub fn new(phi: Vec3, psi: Vec3) -> Result<Self> {
        if !(phi.norm() < 1.0) {
            return degenerate(format!("|phi| = {} must be below 1", phi.norm()));
        }
        Ok(Self { phi, psi })
    }

    /// `W = (sqrt(1 - |Phi|^2), Phi)`, `W_eps = (-Psi.Phi / sqrt(1 - |Phi|^2), Psi)`.
    pub fn assemble(&self) -> DualQuaternion {
        let w0 = (1.0 - self.phi.norm_squared()).sqrt();
        DualQuaternion::new(
            Quaternion::from_parts(w0, self.phi),
            Quaternion::from_parts(-self.psi.dot(self.phi) / w0, self.psi),
        )
    }
}

/// Draws `Phi` uniformly from the ball of radius 0.9 and `Psi` uniformly
/// from `[-0.5, 0.5]^3`.
pub fn unit_weight_init<R: Rng + ?Sized>(rng: &mut R) -> UnitDQWeight {
    let phi = loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            break v * 0.9;
        }
    };
    let psi = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    UnitDQWeight { phi, psi }
}

/// `sigma(prod_i W_i X_i)` over unit operands.
pub fn mul_neuron_forward(
    weights: &[DualQuaternion],
    inputs: &[DualQuaternion],
    activation: Activation,
) -> Result<DualQuaternion> {
    if !activation.is_unit_preserving() {
        return Err(Error::Config(format!("{activation:?} does not preserve unit dual quaternions")));
    }
    if weights.len() != inputs.len() {
        return shape(format!("{} weights for {} inputs", weights.len(), inputs.len()));
    }
    let mut z = DualQuaternion::IDENTITY;
    for (w, x) in weights.iter().zip(inputs) {
        if !w.is_unit(1e-9) || !x.is_unit(1e-9) {
            return degenerate("multiplicative neuron needs unit weights and inputs");
        }
        z = z * (*w * *x);
    }
    Ok(z)
}

/// Basis of the left-matrix map `q -> [[q]]_L`; the 8 basis matrices are
/// mutually orthogonal in the Frobenius inner product.
fn left_basis() -> [Mat8; 8] {
    std::array::from_fn(|k| {
        let mut e = [0.0; 8];
        e[k] = 1.0;
        DualQuaternion::from_array(e).left_matrix()
    })
}

/// Least-squares dual quaternion whose left matrix is closest to `block`.
pub fn nearest_left_dq(block: &Mat8) -> DualQuaternion {
    let basis = left_basis();
    DualQuaternion::from_array(std::array::from_fn(|k| {
        let b = &basis[k];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                num += block[i][j] * b[i][j];
                den += b[i][j] * b[i][j];
            }
        }
        num / den
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DQLinearLayer {
    pub in_count: usize,
    pub out_count: usize,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl DQLinearLayer {
    /// Block-structured initialisation from unit dual quaternions scaled
    /// by `1/sqrt(R)`; zero bias.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_count: usize,
        out_count: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let scale = 1.0 / (in_count as f64).sqrt();
        let weights: Vec<Vec<DualQuaternion>> = (0..out_count)
            .map(|_| (0..in_count).map(|_| unit_weight_init(rng).assemble() * scale).collect())
            .collect();
        let bias = with_bias.then(|| vec![DualQuaternion::ZERO; out_count]);
        Self::from_dq_weights(store, name, &weights, bias.as_deref()).expect("consistent shapes")
    }

    /// Builds a layer from `S x R` dual-quaternion weights.
    pub fn from_dq_weights(
        store: &mut ParamStore,
        name: &str,
        weights: &[Vec<DualQuaternion>],
        bias: Option<&[DualQuaternion]>,
    ) -> Result<Self> {
        let out_count = weights.len();
        let in_count = weights.first().map_or(0, |r| r.len());
        if out_count == 0 || in_count == 0 || weights.iter().any(|r| r.len() != in_count) {
            return shape("weights must form a non-empty S x R grid");
        }
        let mut w = Matrix::zeros(8 * out_count, 8 * in_count);
        for (s, row) in weights.iter().enumerate() {
            for (i, q) in row.iter().enumerate() {
                let l = q.left_matrix();
                for a in 0..8 {
                    for b in 0..8 {
                        w.set(8 * s + a, 8 * i + b, l[a][b]);
                    }
                }
            }
        }
        let weight = store.add(format!("{name}.weight"), w);
        let bias = match bias {
            Some(b) => {
                if b.len() != out_count {
                    return shape(format!("{} biases for {out_count} outputs", b.len()));
                }
                let data: Vec<f64> = b.iter().flat_map(|q| q.to_array()).collect();
                Some(store.add(format!("{name}.bias"), Matrix::from_vec(8 * out_count, 1, data)?))
            }
            None => None,
        };
        Ok(Self { in_count, out_count, weight, bias })
    }

    /// `W x + b` for `x` of shape `8R x batch`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if tape.value(x).rows() != 8 * self.in_count {
            return shape(format!("layer expects {} rows, got {}", 8 * self.in_count, tape.value(x).rows()));
        }
        let w = tape.param(store, self.weight);
        let z = tape.matmul(w, x)?;
        match self.bias {
            Some(b) => {
                let bv = tape.param(store, b);
                tape.add_col(z, bv)
            }
            None => Ok(z),
        }
    }

    pub fn block(&self, store: &ParamStore, s: usize, i: usize) -> Mat8 {
        let w = store.value(self.weight);
        std::array::from_fn(|a| std::array::from_fn(|b| w.get(8 * s + a, 8 * i + b)))
    }

    /// Dual quaternion of block `(s, i)`, projected if the block has
    /// drifted off the left-matrix subspace.
    pub fn weight_dq(&self, store: &ParamStore, s: usize, i: usize) -> DualQuaternion {
        nearest_left_dq(&self.block(store, s, i))
    }

    pub fn bias_dq(&self, store: &ParamStore, s: usize) -> DualQuaternion {
        match self.bias {
            Some(b) => DualQuaternion::from_slice(&store.value(b).as_slice()[8 * s..8 * s + 8]),
            None => DualQuaternion::ZERO,
        }
    }

    /// Largest entry-wise distance of any block from its projection.
    pub fn block_structure_error(&self, store: &ParamStore) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..self.out_count {
            for i in 0..self.in_count {
                let b = self.block(store, s, i);
                let p = nearest_left_dq(&b).left_matrix();
                for a in 0..8 {
                    for c in 0..8 {
                        worst = worst.max((b[a][c] - p[a][c]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Replaces every block by its nearest left matrix.
    pub fn project(&self, store: &mut ParamStore) {
        let blocks: Vec<(usize, usize, Mat8)> = (0..self.out_count)
            .flat_map(|s| (0..self.in_count).map(move |i| (s, i)))
            .map(|(s, i)| (s, i, nearest_left_dq(&self.block(store, s, i)).left_matrix()))
            .collect();
        let w = store.value_mut(self.weight);
        for (s, i, l) in blocks {
            for a in 0..8 {
                for b in 0..8 {
                    w.set(8 * s + a, 8 * i + b, l[a][b]);
                }
            }
        }
    }

    /// Evaluates `sum_i W_{s,i} X_i + B_s` with dual-quaternion products.
    pub fn forward_dq(&self, store: &ParamStore, xs: &[DualQuaternion]) -> Result<Vec<DualQuaternion>> {
        if xs.len() != self.in_count {
            return shape(format!("{} inputs for a layer of {}", xs.len(), self.in_count));
        }
        Ok((0..self.out_count)
            .map(|s| {
                xs.iter()
                    .enumerate()
                    .fold(self.bias_dq(store, s), |acc, (i, x)| acc + self.weight_dq(store, s, i) * *x)
            })
            .collect())
    }

    /// The alternative layout: `[[[X_1]]_R ... [[X_R]]_R]` (8 x 8R) times the
    /// `8R x S` matrix of weight vectors, plus the `8 x S` bias row.
    pub fn forward_input_matrix(&self, store: &ParamStore, xs: &[DualQuaternion]) -> Result<Vec<DualQuaternion>> {
        if xs.len() != self.in_count {
            return shape(format!("{} inputs for a layer of {}", xs.len(), self.in_count));
        }
        let x = Matrix::from_fn(8, 8 * self.in_count, |a, c| xs[c / 8].right_matrix()[a][c % 8]);
        let w = Matrix::from_fn(8 * self.in_count, self.out_count, |r, s| {
            self.weight_dq(store, s, r / 8).to_array()[r % 8]
        });
        let b = Matrix::from_fn(8, self.out_count, |a, s| self.bias_dq(store, s).to_array()[a]);
        let mut z = x.matmul(&w)?;
        z.add_assign(&b);
        Ok((0..self.out_count).map(|s| DualQuaternion::from_array(std::array::from_fn(|a| z.get(a, s)))).collect())
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({ "layout": LAYOUT, "in": self.in_count, "out": self.out_count })
    }
}

/// Two-hidden-layer dual-quaternion network: dropout before each hidden
/// layer, element-wise activation after it, linear output.
#[derive(Debug, Clone)]
pub struct DqMlp {
    pub layers: Vec<DQLinearLayer>,
    pub activation: Activation,
    pub dropout: f64,
}

impl DqMlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| DQLinearLayer::new(store, &format!("{name}.{k}"), w[0], w[1], true, rng))
            .collect();
        Ok(Self { layers, activation, dropout })
    }

    pub fn in_count(&self) -> usize {
        self.layers[0].in_count
    }

    pub fn out_count(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_count)
    }

    /// Forward pass; dropout is active only when `rng` is given.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mut rng: Option<&mut R>,
    ) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            if k < last {
                if let Some(r) = rng.as_deref_mut() {
                    h = tape.dropout(h, self.dropout, r)?;
                }
                h = layer.forward(tape, store, h)?;
                h = self.activation.apply(tape, h);
            } else {
                h = layer.forward(tape, store, h)?;
            }
        }
        Ok(h)
    }

    pub fn project(&self, store: &mut ParamStore) {
        for l in &self.layers {
            l.project(store);
        }
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "layers": self.layers.iter().map(|l| l.meta()).collect::<Vec<_>>(),
            "activation": self.activation,
            "dropout": self.dropout,
        })
    }
}
