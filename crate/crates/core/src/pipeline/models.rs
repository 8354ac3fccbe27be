use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, Matrix, ParamStore, Tape, Var};
use crate::dqnn::DqMlp;
use crate::dualquat::DualQuaternion;
use crate::error::{Error, Result};
use crate::kinematics::Twist;
use crate::simulator::CollisionLabel;

use super::{
    select_binary, select_multi, AttentionStage, CollisionStage, CollisionTargets, InputSet, NetConfig, N_CLASSES,
    N_INPUTS, N_REDUCED,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    AttentionMulti,
    AttentionBinary,
    Collision,
}

type Rng = ChaCha8Rng;

fn mlp(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, cfg: &NetConfig, rng: &mut Rng) -> Result<DqMlp> {
    cfg.validate()?;
    DqMlp::new(store, name, &[inputs, cfg.hidden[0], cfg.hidden[1], outputs], cfg.activation, cfg.dropout, rng)
}

fn meta(kind: ModelKind, net: &NetConfig, extra: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    let mut m = BTreeMap::new();
    m.insert("kind".into(), serde_json::to_value(kind).unwrap());
    m.insert("net".into(), serde_json::to_value(net).unwrap());
    m.insert("layout".into(), crate::dqnn::LAYOUT.into());
    for (k, v) in extra {
        m.insert((*k).into(), v.clone());
    }
    m
}

fn read_meta<T: serde::de::DeserializeOwned>(ck: &Checkpoint, key: &str) -> Result<T> {
    let v = ck.meta.get(key).ok_or_else(|| Error::Malformed(format!("checkpoint meta lacks {key:?}")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Malformed(format!("checkpoint meta {key:?}: {e}")))
}

/// The kind of model stored in a checkpoint file.
pub fn checkpoint_kind(path: &Path) -> Result<ModelKind> {
    read_meta(&Checkpoint::load(path)?, "kind")
}

fn load_checked(path: &Path, kind: ModelKind) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    let found: ModelKind = read_meta(&ck, "kind")?;
    if found != kind {
        return Err(Error::Malformed(format!("checkpoint holds a {found:?} model, expected {kind:?}")));
    }
    let layout: String = read_meta(&ck, "layout")?;
    if layout != crate::dqnn::LAYOUT {
        return Err(Error::Malformed(format!("unknown weight layout {layout:?}")));
    }
    Ok(ck)
}

fn column_matrix(cols: &[Vec<f64>]) -> Result<Matrix> {
    Matrix::from_columns(cols)
}

/// Multi-class attention: 13 inputs, 7 output dual quaternions, each
/// normalized and scored against the identity.
#[derive(Debug, Clone)]
pub struct AttentionMulti {
    pub net: DqMlp,
    pub net_config: NetConfig,
    pub alpha: f64,
    pub store: ParamStore,
}

impl AttentionMulti {
    pub fn new(cfg: &NetConfig, alpha: f64, rng: &mut Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = mlp(&mut store, "multi", N_INPUTS, N_CLASSES, cfg, rng)?;
        Ok(Self { net, net_config: cfg.clone(), alpha, store })
    }

    /// Error scores `7 x B` for features `104 x B`.
    pub fn scores(&self, tape: &mut Tape, store: &ParamStore, x: Var, rng: Option<&mut Rng>) -> Result<Var> {
        let out = self.net.forward(tape, store, x, rng)?;
        let n = tape.dq_normalize(out)?;
        tape.dq_error_score(n, self.alpha)
    }

    /// Class probabilities per input.
    pub fn probabilities(&self, inputs: &[InputSet]) -> Result<Vec<[f64; N_CLASSES]>> {
        let cols: Vec<Vec<f64>> = inputs.iter().map(|i| i.features()).collect();
        self.probabilities_of(&column_matrix(&cols)?)
    }

    pub(crate) fn probabilities_of(&self, x: &Matrix) -> Result<Vec<[f64; N_CLASSES]>> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let s = self.scores(&mut tape, &self.store, xv, None)?;
        let p = tape.softmax(s);
        let m = tape.value(p);
        Ok((0..m.cols()).map(|j| std::array::from_fn(|i| m.get(i, j))).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let m = meta(ModelKind::AttentionMulti, &self.net_config, &[("alpha", self.alpha.into())]);
        self.store.to_checkpoint(m).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checked(path, ModelKind::AttentionMulti)?;
        let mut m = Self::new(&read_meta(&ck, "net")?, read_meta(&ck, "alpha")?, &mut Rng::seed_from_u64(0))?;
        m.store.load_checkpoint(&ck)?;
        Ok(m)
    }
}

impl AttentionStage for AttentionMulti {
    fn decide(&mut self, _: usize, input: &InputSet) -> Result<CollisionLabel> {
        select_multi(&self.probabilities(std::slice::from_ref(input))?[0])
    }
}

/// Binary attention: one shared network scores each wall separately from
/// the seven non-wall inputs plus that wall.
#[derive(Debug, Clone)]
pub struct AttentionBinary {
    pub net: DqMlp,
    pub net_config: NetConfig,
    pub alpha: f64,
    pub threshold: f64,
    pub store: ParamStore,
}

impl AttentionBinary {
    pub fn new(cfg: &NetConfig, alpha: f64, threshold: f64, rng: &mut Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = mlp(&mut store, "binary", N_REDUCED, 1, cfg, rng)?;
        Ok(Self { net, net_config: cfg.clone(), alpha, threshold, store })
    }

    /// Logits `1 x C` for reduced inputs `64 x C`; the probability is their
    /// sigmoid.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, x: Var, rng: Option<&mut Rng>) -> Result<Var> {
        let out = self.net.forward(tape, store, x, rng)?;
        let n = tape.dq_normalize(out)?;
        tape.dq_error_score(n, self.alpha)
    }

    /// Columns `6 i + w`: input `i` reduced to wall `w`.
    pub fn wall_columns(inputs: &[InputSet]) -> Result<Matrix> {
        let mut cols = Vec::with_capacity(6 * inputs.len());
        for x in inputs {
            for w in 0..6 {
                cols.push(x.reduced(w)?.iter().flat_map(|q| q.to_array()).collect());
            }
        }
        column_matrix(&cols)
    }

    /// Per-wall collision probabilities per input.
    pub fn probabilities(&self, inputs: &[InputSet]) -> Result<Vec<[f64; 6]>> {
        self.probabilities_of(&Self::wall_columns(inputs)?)
    }

    pub(crate) fn probabilities_of(&self, x: &Matrix) -> Result<Vec<[f64; 6]>> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let z = self.logits(&mut tape, &self.store, xv, None)?;
        let p = tape.sigmoid(z);
        let v = tape.value(p).as_slice();
        Ok(v.chunks(6).map(|c| std::array::from_fn(|w| c[w])).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let m = meta(
            ModelKind::AttentionBinary,
            &self.net_config,
            &[("alpha", self.alpha.into()), ("threshold", self.threshold.into())],
        );
        self.store.to_checkpoint(m).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checked(path, ModelKind::AttentionBinary)?;
        let mut m = Self::new(
            &read_meta(&ck, "net")?,
            read_meta(&ck, "alpha")?,
            read_meta(&ck, "threshold")?,
            &mut Rng::seed_from_u64(0),
        )?;
        m.store.load_checkpoint(&ck)?;
        Ok(m)
    }
}

impl AttentionStage for AttentionBinary {
    fn decide(&mut self, _: usize, input: &InputSet) -> Result<CollisionLabel> {
        select_binary(&self.probabilities(std::slice::from_ref(input))?[0], self.threshold)
    }
}

/// Three independent networks on the reduced input predicting twist,
/// impulse and angular momentum.
#[derive(Debug, Clone)]
pub struct CollisionModel {
    pub paths: [DqMlp; 3],
    pub net_config: NetConfig,
    pub store: ParamStore,
}

impl CollisionModel {
    pub const PATHS: [&'static str; 3] = ["twist", "impulse", "angular_momentum"];

    pub fn new(cfg: &NetConfig, rng: &mut Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut make = |name: &str| mlp(&mut store, &format!("collision.{name}"), N_REDUCED, 1, cfg, rng);
        let paths = [make("twist")?, make("impulse")?, make("angular_momentum")?];
        Ok(Self { paths, net_config: cfg.clone(), store })
    }

    /// Outputs `8 x B` of each path for reduced inputs `64 x B`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mut rng: Option<&mut Rng>) -> Result<[Var; 3]> {
        let a = self.paths[0].forward(tape, store, x, rng.as_deref_mut())?;
        let b = self.paths[1].forward(tape, store, x, rng.as_deref_mut())?;
        let c = self.paths[2].forward(tape, store, x, rng)?;
        Ok([a, b, c])
    }

    pub fn predict_reduced(&self, reduced: &[[DualQuaternion; N_REDUCED]]) -> Result<Vec<CollisionTargets>> {
        let cols: Vec<Vec<f64>> = reduced.iter().map(|r| r.iter().flat_map(|q| q.to_array()).collect()).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(column_matrix(&cols)?);
        let out = self.forward(&mut tape, &self.store, x, None)?;
        let col = |v: Var, j: usize| DualQuaternion::from_slice(&tape.value(v).col(j));
        Ok((0..reduced.len())
            .map(|j| CollisionTargets {
                twist: Twist(col(out[0], j)),
                impulse: col(out[1], j),
                angular_momentum: col(out[2], j),
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.store.to_checkpoint(meta(ModelKind::Collision, &self.net_config, &[])).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checked(path, ModelKind::Collision)?;
        let mut m = Self::new(&read_meta(&ck, "net")?, &mut Rng::seed_from_u64(0))?;
        m.store.load_checkpoint(&ck)?;
        Ok(m)
    }
}

impl CollisionStage for CollisionModel {
    fn predict(&mut self, _: usize, input: &InputSet, wall: usize) -> Result<CollisionTargets> {
        Ok(self.predict_reduced(&[input.reduced(wall)?])?[0])
    }
}
