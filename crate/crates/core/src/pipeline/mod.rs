//! Input encoding, the two-stage network with its interface layer, the
//! parameter-free output layer and the recurrence chaining them.

mod config;
mod models;
mod train;

pub use config::{NetConfig, PipelineConfig, TrainConfig};
pub use models::{checkpoint_kind, AttentionBinary, AttentionMulti, CollisionModel, ModelKind};
pub use train::{
    attention_dataset, collision_dataset, compare_trace, evaluate_binary, evaluate_collision, evaluate_multi,
    first_attention_error, prepare_split, split_by_trajectory, train_attention_binary, train_attention_multi, train_collision,
    AttentionSample, ClassifierReport, CollisionReport, CollisionSample, Confusion, EvalReport, LogRow, SequenceReport, Split,
    TraceComparison, TrainLog,
};

use serde::{Deserialize, Serialize};

use crate::dualquat::DualQuaternion;
use crate::error::{degenerate, Error, Result};
use crate::kinematics::{angular_velocity_from_momentum, integrate_pose, twist_world, RigidBodyState, Twist};
use crate::quat::Quaternion;
use crate::simulator::{min_gap, CollisionLabel, RigidBodyRecord};
use crate::vec3::Vec3;

pub const N_INPUTS: usize = 13;
pub const N_NON_WALL: usize = 7;
/// Dual quaternions reaching the collision stage: the non-wall inputs plus
/// the selected wall.
pub const N_REDUCED: usize = N_NON_WALL + 1;
pub const N_CLASSES: usize = 7;
pub const BINARY_THRESHOLD: f64 = 0.4;
pub const DEFAULT_ALPHA: f64 = 100.0;
/// Corner penetration beyond which a predicted state is out of domain.
pub const OUT_OF_DOMAIN_TOL: f64 = 1e-3;

/// `n + eps (z . n)` for a wall through `z` with unit normal `n`.
pub fn wall_plane(n: Vec3, z: Vec3) -> Result<DualQuaternion> {
    if (n.norm() - 1.0).abs() > 1e-12 {
        return degenerate(format!("wall normal {n:?} is not unit"));
    }
    Ok(DualQuaternion::new(Quaternion::pure(n), Quaternion::new(z.dot(n), 0.0, 0.0, 0.0)))
}

/// The six walls of the origin-centred box in label order, outward normals.
pub fn box_walls(half_extent: f64) -> [DualQuaternion; 6] {
    std::array::from_fn(|w| {
        let n = CollisionLabel::ALL[w].normal().unwrap();
        wall_plane(n, n * half_extent).unwrap()
    })
}

/// The thirteen network inputs `P, O, V, W, G, I, L, S1..S6` and the
/// constants used by the output layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSet {
    pub dqs: [DualQuaternion; N_INPUTS],
    pub mass: f64,
    pub inertia_body: Vec3,
}

impl InputSet {
    pub const POSITION: usize = 0;
    pub const ORIENTATION: usize = 1;
    pub const VELOCITY: usize = 2;
    pub const ANGULAR_VELOCITY: usize = 3;
    pub const DIMENSIONS: usize = 4;
    pub const IMPULSE: usize = 5;
    pub const ANGULAR_MOMENTUM: usize = 6;
    pub const WALLS: usize = 7;

    pub fn position(&self) -> Vec3 {
        self.dqs[Self::POSITION].dual.vector()
    }

    pub fn orientation(&self) -> Quaternion {
        self.dqs[Self::ORIENTATION].real
    }

    pub fn velocity(&self) -> Vec3 {
        self.dqs[Self::VELOCITY].dual.vector()
    }

    pub fn angular_velocity(&self) -> Vec3 {
        self.dqs[Self::ANGULAR_VELOCITY].real.vector()
    }

    /// The seven non-wall inputs followed by wall `wall`.
    pub fn reduced(&self, wall: usize) -> Result<[DualQuaternion; N_REDUCED]> {
        if wall >= 6 {
            return Err(Error::Shape(format!("wall index {wall} outside 0..6")));
        }
        Ok(std::array::from_fn(|k| if k < N_NON_WALL { self.dqs[k] } else { self.dqs[Self::WALLS + wall] }))
    }

    /// All 104 components, dual quaternion by dual quaternion.
    pub fn features(&self) -> Vec<f64> {
        self.dqs.iter().flat_map(|q| q.to_array()).collect()
    }
}

pub fn encode_state(s: &RigidBodyState, walls: &[DualQuaternion; 6]) -> Result<InputSet> {
    let q = s.orientation();
    if !q.is_unit(1e-9) {
        return degenerate("orientation is not a unit quaternion");
    }
    let pure = |v: Vec3| Quaternion::pure(v);
    let real = |v: Vec3| DualQuaternion::new(pure(v), Quaternion::ZERO);
    let dual = |w: f64, v: Vec3| DualQuaternion::new(Quaternion::new(w, 0.0, 0.0, 0.0), pure(v));
    let mut dqs = [DualQuaternion::ZERO; N_INPUTS];
    dqs[InputSet::POSITION] = dual(1.0, s.position());
    dqs[InputSet::ORIENTATION] = DualQuaternion::new(q, Quaternion::ZERO);
    dqs[InputSet::VELOCITY] = dual(0.0, s.velocity);
    dqs[InputSet::ANGULAR_VELOCITY] = real(s.angular_velocity);
    dqs[InputSet::DIMENSIONS] = real(s.half_dims);
    dqs[InputSet::IMPULSE] = dual(0.0, s.momentum);
    dqs[InputSet::ANGULAR_MOMENTUM] = real(s.angular_momentum);
    dqs[InputSet::WALLS..].copy_from_slice(walls);
    Ok(InputSet { dqs, mass: s.mass, inertia_body: s.inertia_body })
}

pub fn encode_inputs(r: &RigidBodyRecord, walls: &[DualQuaternion; 6]) -> Result<InputSet> {
    if !r.orientation.is_unit(1e-9) {
        return degenerate("record orientation is not a unit quaternion");
    }
    encode_state(&r.state()?, walls)
}

/// Index of the largest value, lowest index on ties; `None` for an empty
/// or all-non-finite slice.
fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        if x.is_finite() && best.is_none_or(|b| *x > v[b]) {
            best = Some(i);
        }
    }
    best
}

/// Seven class probabilities to a decision; all-zero scores give `None`.
pub fn select_multi(probs: &[f64]) -> Result<CollisionLabel> {
    if probs.len() != N_CLASSES {
        return Err(Error::Shape(format!("{} class scores, expected {N_CLASSES}", probs.len())));
    }
    if probs.iter().all(|p| *p == 0.0) {
        return Ok(CollisionLabel::None);
    }
    CollisionLabel::from_index(argmax(probs).unwrap_or(CollisionLabel::NONE_INDEX))
}

/// Six per-wall probabilities to a decision: the largest at or above
/// `threshold`, else `None`.
pub fn select_binary(probs: &[f64], threshold: f64) -> Result<CollisionLabel> {
    if probs.len() != 6 {
        return Err(Error::Shape(format!("{} wall scores, expected 6", probs.len())));
    }
    match argmax(probs) {
        Some(i) if probs[i] >= threshold => CollisionLabel::from_index(i),
        _ => Ok(CollisionLabel::None),
    }
}

/// Post-collision twist, impulse `eps p` and angular momentum `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionTargets {
    pub twist: Twist,
    pub impulse: DualQuaternion,
    pub angular_momentum: DualQuaternion,
}

impl CollisionTargets {
    pub fn to_array(&self) -> [f64; 24] {
        let mut a = [0.0; 24];
        a[..8].copy_from_slice(&self.twist.0.to_array());
        a[8..16].copy_from_slice(&self.impulse.to_array());
        a[16..].copy_from_slice(&self.angular_momentum.to_array());
        a
    }
}

/// Targets reproducing a record's successor: `xi = (2/dt) ln(P1 P0*)`.
pub fn collision_targets(r: &RigidBodyRecord, dt: f64) -> Result<CollisionTargets> {
    let Some(n) = r.next else { return degenerate("record has no successor") };
    if !(dt > 0.0) {
        return degenerate("time step must be positive");
    }
    let p0 = r.pose()?;
    let p1 = DualQuaternion::from_rot_trans(n.orientation, n.position)?;
    let mut m = p1 * p0.conj();
    if m.real.w < 0.0 {
        m = -m;
    }
    Ok(CollisionTargets {
        twist: Twist(m.ln()? * (2.0 / dt)),
        impulse: DualQuaternion::new(Quaternion::ZERO, Quaternion::pure(n.momentum)),
        angular_momentum: DualQuaternion::new(Quaternion::pure(n.angular_momentum), Quaternion::ZERO),
    })
}

/// Maps predictions to the next state: `P(t+dt) = exp(xi dt/2) P(t)`,
/// `v = I/m`, `omega = I_world^-1 L`.
pub fn output_layer(s: &RigidBodyState, t: &CollisionTargets, dt: f64) -> Result<RigidBodyState> {
    let pose = DualQuaternion::from_rot_trans(s.orientation(), s.position())?;
    let next = integrate_pose(&pose, &t.twist, dt)?;
    let q = next.real;
    let p = next.translation()?;
    let momentum = t.impulse.dual.vector();
    let l = t.angular_momentum.real.vector();
    Ok(RigidBodyState {
        pose: DualQuaternion::from_rot_trans(q, p)?,
        velocity: momentum / s.mass,
        angular_velocity: angular_velocity_from_momentum(l, &q, s.inertia_body)?,
        momentum,
        angular_momentum: l,
        ..*s
    })
}

/// Free flight over `dt` under the world twist of the current state.
pub fn hard_path_step(s: &RigidBodyState, dt: f64) -> Result<RigidBodyState> {
    let xi = twist_world(s.angular_velocity, s.velocity, s.position());
    Ok(RigidBodyState { pose: integrate_pose(&s.pose, &xi, dt)?, ..*s })
}

/// Decides, per step, which wall (if any) the body meets next.
pub trait AttentionStage {
    fn decide(&mut self, step: usize, input: &InputSet) -> Result<CollisionLabel>;
}

/// Predicts post-collision quantities for the selected wall.
pub trait CollisionStage {
    fn predict(&mut self, step: usize, input: &InputSet, wall: usize) -> Result<CollisionTargets>;
}

/// Replays known labels in place of the attention network.
#[derive(Debug, Clone)]
pub struct LabelOracle(pub Vec<CollisionLabel>);

impl AttentionStage for LabelOracle {
    fn decide(&mut self, step: usize, _: &InputSet) -> Result<CollisionLabel> {
        Ok(self.0.get(step).copied().unwrap_or(CollisionLabel::None))
    }
}

/// Replays ground-truth targets in place of the collision network.
#[derive(Debug, Clone)]
pub struct TargetOracle(pub Vec<Option<CollisionTargets>>);

impl TargetOracle {
    /// Targets of every record of one trajectory, in step order.
    pub fn from_records(records: &[RigidBodyRecord], dt: f64) -> Result<Self> {
        Ok(TargetOracle(
            records
                .iter()
                .map(|r| if r.collision_label.is_wall() { collision_targets(r, dt).map(Some) } else { Ok(None) })
                .collect::<Result<_>>()?,
        ))
    }
}

impl CollisionStage for TargetOracle {
    fn predict(&mut self, step: usize, _: &InputSet, _: usize) -> Result<CollisionTargets> {
        match self.0.get(step).copied().flatten() {
            Some(t) => Ok(t),
            None => degenerate(format!("no collision target for step {step}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathTaken {
    Initial,
    Hard,
    Collision,
}

/// One predicted state. `record.collision_label` holds the decision taken
/// from this state; `attention_decision` and `path_taken` describe the step
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(flatten)]
    pub record: RigidBodyRecord,
    pub attention_decision: CollisionLabel,
    pub path_taken: PathTaken,
    pub out_of_domain: bool,
}

/// Runs the recurrence for `n_steps` steps of `dt` from `initial`. Returns
/// `n_steps + 1` states, the first being `initial`.
pub fn predict_sequence(
    attention: &mut dyn AttentionStage,
    collision: &mut dyn CollisionStage,
    initial: &RigidBodyRecord,
    half_extent: f64,
    n_steps: usize,
    dt: f64,
) -> Result<Vec<TraceRecord>> {
    let walls = box_walls(half_extent);
    let mut state = initial.state()?;
    let entry = |s: &RigidBodyState, k: usize, decision: CollisionLabel, path: PathTaken| TraceRecord {
        record: RigidBodyRecord::from_state(
            s,
            initial.trajectory,
            initial.step + k as u64,
            initial.t + k as f64 * dt,
            CollisionLabel::None,
        ),
        attention_decision: decision,
        path_taken: path,
        out_of_domain: min_gap(s, half_extent) < -OUT_OF_DOMAIN_TOL,
    };
    let mut trace = vec![entry(&state, 0, CollisionLabel::None, PathTaken::Initial)];
    for k in 0..n_steps {
        let input = encode_state(&state, &walls)?;
        let decision = attention.decide(k, &input)?;
        trace[k].record.collision_label = decision;
        let path;
        (state, path) = match decision {
            CollisionLabel::None => (hard_path_step(&state, dt)?, PathTaken::Hard),
            w => (output_layer(&state, &collision.predict(k, &input, w.index())?, dt)?, PathTaken::Collision),
        };
        trace.push(entry(&state, k + 1, decision, path));
    }
    Ok(trace)
}

/// Records of trajectory `id` in step order, original copies only.
pub fn trajectory(records: &[RigidBodyRecord], id: u64) -> Vec<RigidBodyRecord> {
    let mut t: Vec<_> = records.iter().filter(|r| r.trajectory == id && r.augmentation == 0).cloned().collect();
    t.sort_by_key(|r| r.step);
    t
}

/// Trace entries as line-delimited JSON after a header line.
pub fn write_trace<W: std::io::Write>(mut w: W, trace: &[TraceRecord]) -> Result<()> {
    let header = serde_json::json!({ "format": TRACE_FORMAT, "version": TRACE_VERSION, "count": trace.len() });
    writeln!(w, "{header}")?;
    for t in trace {
        serde_json::to_writer(&mut w, t).map_err(|e| Error::Malformed(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: std::io::BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| Error::Malformed("empty trace file".into()))??;
    let h: serde_json::Value = serde_json::from_str(&first).map_err(|e| Error::Malformed(format!("trace header: {e}")))?;
    if h["format"] != TRACE_FORMAT {
        return Err(Error::Malformed(format!("expected format {TRACE_FORMAT:?}")));
    }
    let found = h["version"].as_u64().unwrap_or(0) as u32;
    if found != TRACE_VERSION {
        return Err(Error::SchemaVersion { format: TRACE_FORMAT.into(), expected: TRACE_VERSION, found });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed(format!("trace line {}: {e}", i + 2)))?);
        }
    }
    Ok(out)
}

pub const TRACE_FORMAT: &str = "dqrnn-trace";
pub const TRACE_VERSION: u32 = 1;
