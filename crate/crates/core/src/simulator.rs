//! A single cuboid bouncing inside a fixed, origin-centred cubic box.
//!
//! Between events the body follows the constant world twist built from its
//! velocities and current position, integrated with [`integrate_pose`]. The
//! twist is rebuilt at every output boundary and after every contact. Under
//! gravity it is rebuilt at every internal step instead. Contacts are found on
//! the internal time grid by conservative advancement and resolved with an
//! impulse at the deepest corner (tied corners are averaged), Coulomb
//! friction and positional correction.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dualquat::DualQuaternion;
use crate::error::{degenerate, Error, Result};
use crate::kinematics::{cuboid_inertia, integrate_pose, RigidBodyState};
use crate::quat::Quaternion;
use crate::vec3::Vec3;

pub const RECORDS_FORMAT: &str = "dqrnn-records";
pub const RECORDS_VERSION: u32 = 1;
pub const CSV_FORMAT: &str = "dqrnn-records-csv";

/// Column order of the CSV export.
pub const CSV_COLUMNS: [&str; 24] = [
    "trajectory", "step", "t", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz", "wx", "wy", "wz", "mass",
    "lx", "ly", "lz", "mx", "my", "mz", "collision_label",
];

const TIE: f64 = 1e-9;

/// Wall contacted during the interval following a record. Walls are
/// ordered `+x, -x, +y, -y, +z, -z`; `None` is the seventh class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CollisionLabel {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
    #[serde(rename = "none")]
    None,
}

impl CollisionLabel {
    pub const ALL: [CollisionLabel; 7] = [
        CollisionLabel::PosX,
        CollisionLabel::NegX,
        CollisionLabel::PosY,
        CollisionLabel::NegY,
        CollisionLabel::PosZ,
        CollisionLabel::NegZ,
        CollisionLabel::None,
    ];
    pub const NONE_INDEX: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or_else(|| Error::Malformed(format!("label index {i} out of range")))
    }

    pub fn is_wall(self) -> bool {
        self != CollisionLabel::None
    }

    /// Outward normal of the wall.
    pub fn normal(self) -> Option<Vec3> {
        let i = self.index();
        if i >= 6 {
            return None;
        }
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut a = [0.0; 3];
        a[i / 2] = s;
        Some(Vec3::from(a))
    }

    /// Wall whose outward normal is closest to `n`.
    pub fn nearest_wall(n: Vec3) -> Self {
        let mut best = (f64::NEG_INFINITY, CollisionLabel::PosX);
        for w in &Self::ALL[..6] {
            let d = w.normal().unwrap().dot(n);
            if d > best.0 {
                best = (d, *w);
            }
        }
        best.1
    }

    pub fn as_str(self) -> &'static str {
        ["+x", "-x", "+y", "-y", "+z", "-z", "none"][self.index()]
    }
}

impl fmt::Display for CollisionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CollisionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Malformed(format!("unknown collision label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub box_half_extent: f64,
    pub body_half_dims: Vec3,
    pub mass: f64,
    pub restitution: f64,
    pub friction: f64,
    pub gravity: Vec3,
    pub dt_internal: f64,
    pub output_every: u64,
    pub n_records: usize,
    pub records_per_trajectory: usize,
    /// Initial speeds are drawn uniformly from `[0, max_speed]`.
    pub max_speed: f64,
    /// Initial angular speeds are drawn uniformly from `[0, max_spin]`.
    pub max_spin: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            box_half_extent: 0.2,
            body_half_dims: Vec3::new(0.1, 0.1, 0.1),
            mass: 1.0,
            restitution: 0.95,
            friction: 0.1,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            dt_internal: 1e-5,
            output_every: 10_000,
            n_records: 20_000,
            records_per_trajectory: 20,
            max_speed: 2.0,
            max_spin: 4.0,
        }
    }
}

impl SimConfig {
    pub fn zero_gravity() -> Self {
        SimConfig { gravity: Vec3::ZERO, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let h = self.body_half_dims;
        if !(h.x > 0.0 && h.y > 0.0 && h.z > 0.0) {
            return bad("body half dimensions must be positive".into());
        }
        if !(h.norm() < self.box_half_extent) {
            return bad(format!("body half diagonal {} does not fit the box half extent {}", h.norm(), self.box_half_extent));
        }
        if !(self.mass > 0.0) {
            return bad("mass must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.restitution) || !(0.0..=1.0).contains(&self.friction) {
            return bad("restitution and friction must lie in [0, 1]".into());
        }
        if !(self.dt_internal > 0.0) || self.output_every < 1 {
            return bad("dt_internal must be positive and output_every at least 1".into());
        }
        if self.records_per_trajectory < 1 {
            return bad("records_per_trajectory must be at least 1".into());
        }
        if !self.gravity.is_finite() || !(self.max_speed >= 0.0) || !(self.max_spin >= 0.0) {
            return bad("gravity, max_speed and max_spin must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn inertia_body(&self) -> Vec3 {
        cuboid_inertia(self.mass, self.body_half_dims)
    }

    /// Time between records.
    pub fn interval(&self) -> f64 {
        self.output_every as f64 * self.dt_internal
    }

    pub fn n_trajectories(&self) -> usize {
        self.n_records.div_ceil(self.records_per_trajectory)
    }
}

/// State at the end of a record's interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    pub orientation: Quaternion,
    pub position: Vec3,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
    pub angular_momentum: Vec3,
    pub momentum: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyRecord {
    pub trajectory: u64,
    pub step: u64,
    /// 0 for simulated records, 1..=8 for rotated copies.
    #[serde(default)]
    pub augmentation: u8,
    pub t: f64,
    pub orientation: Quaternion,
    pub position: Vec3,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
    pub half_dims: Vec3,
    pub mass: f64,
    pub angular_momentum: Vec3,
    pub momentum: Vec3,
    pub collision_label: CollisionLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<Successor>,
}

impl RigidBodyRecord {
    pub fn from_state(s: &RigidBodyState, trajectory: u64, step: u64, t: f64, label: CollisionLabel) -> Self {
        RigidBodyRecord {
            trajectory,
            step,
            augmentation: 0,
            t,
            orientation: s.orientation(),
            position: s.position(),
            velocity: s.velocity,
            angular_velocity: s.angular_velocity,
            half_dims: s.half_dims,
            mass: s.mass,
            angular_momentum: s.angular_momentum,
            momentum: s.momentum,
            collision_label: label,
            next: None,
        }
    }

    pub fn pose(&self) -> Result<DualQuaternion> {
        DualQuaternion::from_rot_trans(self.orientation, self.position)
    }

    /// State with the recorded momenta.
    pub fn state(&self) -> Result<RigidBodyState> {
        if !(self.mass > 0.0) {
            return degenerate("record mass must be positive");
        }
        Ok(RigidBodyState {
            pose: self.pose()?,
            velocity: self.velocity,
            angular_velocity: self.angular_velocity,
            momentum: self.momentum,
            angular_momentum: self.angular_momentum,
            half_dims: self.half_dims,
            mass: self.mass,
            inertia_body: cuboid_inertia(self.mass, self.half_dims),
        })
    }

    pub fn successor_state(&self) -> Result<Option<RigidBodyState>> {
        let Some(n) = self.next else { return Ok(None) };
        Ok(Some(RigidBodyState {
            pose: DualQuaternion::from_rot_trans(n.orientation, n.position)?,
            velocity: n.velocity,
            angular_velocity: n.angular_velocity,
            momentum: n.momentum,
            angular_momentum: n.angular_momentum,
            half_dims: self.half_dims,
            mass: self.mass,
            inertia_body: cuboid_inertia(self.mass, self.half_dims),
        }))
    }
}

fn successor_of(s: &RigidBodyState) -> Successor {
    Successor {
        orientation: s.orientation(),
        position: s.position(),
        velocity: s.velocity,
        angular_velocity: s.angular_velocity,
        angular_momentum: s.angular_momentum,
        momentum: s.momentum,
    }
}

/// Wall contact of a pose: signed gap (negative on penetration) and the
/// mean of the corners within [`TIE`] of the deepest one.
fn wall_contacts(s: &RigidBodyState, half_extent: f64) -> [(f64, Vec3); 6] {
    let corners = s.corners();
    std::array::from_fn(|w| {
        let n = CollisionLabel::ALL[w].normal().unwrap();
        let reach = corners.iter().map(|c| c.dot(n)).fold(f64::NEG_INFINITY, f64::max);
        let (mut sum, mut k) = (Vec3::ZERO, 0.0);
        for c in &corners {
            if c.dot(n) >= reach - TIE {
                sum += *c;
                k += 1.0;
            }
        }
        (half_extent - reach, sum / k)
    })
}

/// Smallest corner-to-wall gap.
pub fn min_gap(s: &RigidBodyState, half_extent: f64) -> f64 {
    wall_contacts(s, half_extent).iter().map(|c| c.0).fold(f64::INFINITY, f64::min)
}

fn inv_inertia_world(s: &RigidBodyState, x: Vec3) -> Vec3 {
    let r = s.orientation().to_rotation_matrix();
    let b = r.transpose().mul_vec(x);
    let i = s.inertia_body;
    r.mul_vec(Vec3::new(b.x / i.x, b.y / i.y, b.z / i.z))
}

fn apply_impulse(s: &mut RigidBodyState, r: Vec3, j: Vec3) {
    s.velocity += j / s.mass;
    s.angular_velocity += inv_inertia_world(s, r.cross(j));
}

/// Inverse effective mass at lever `r` along unit direction `d`.
fn inv_effective_mass(s: &RigidBodyState, r: Vec3, d: Vec3) -> f64 {
    1.0 / s.mass + d.dot(inv_inertia_world(s, r.cross(d)).cross(r))
}

/// Resolves penetrations. Returns whether the state changed and the first
/// wall that received an impulse.
fn resolve_contacts(s: &mut RigidBodyState, cfg: &SimConfig) -> Result<(bool, Option<CollisionLabel>)> {
    let contacts = wall_contacts(s, cfg.box_half_extent);
    let mut hits: Vec<usize> = (0..6).filter(|&w| contacts[w].0 < 0.0).collect();
    if hits.is_empty() {
        return Ok((false, None));
    }
    hits.sort_by(|a, b| contacts[*a].0.total_cmp(&contacts[*b].0));
    let p = s.position();
    let mut first = None;
    for &w in &hits {
        let inward = -CollisionLabel::ALL[w].normal().unwrap();
        let r = contacts[w].1 - p;
        let un = (s.velocity + s.angular_velocity.cross(r)).dot(inward);
        if un >= 0.0 {
            continue;
        }
        let jn = -(1.0 + cfg.restitution) * un / inv_effective_mass(s, r, inward);
        apply_impulse(s, r, inward * jn);
        let u = s.velocity + s.angular_velocity.cross(r);
        let ut = u - inward * u.dot(inward);
        let speed = ut.norm();
        if speed > 1e-12 && cfg.friction > 0.0 {
            let t = ut / speed;
            let jt = (speed / inv_effective_mass(s, r, t)).min(cfg.friction * jn);
            apply_impulse(s, r, t * -jt);
        }
        first.get_or_insert(CollisionLabel::ALL[w]);
    }
    let mut shift = Vec3::ZERO;
    for &w in &hits {
        shift += CollisionLabel::ALL[w].normal().unwrap() * contacts[w].0;
    }
    s.pose = DualQuaternion::from_rot_trans(s.orientation(), p + shift)?;
    s.sync_momenta()?;
    Ok((true, first))
}

/// Advances `s` by one output interval. Returns the first wall that
/// received an impulse, or `None`.
pub fn simulate_interval(s: &mut RigidBodyState, cfg: &SimConfig) -> Result<CollisionLabel> {
    let total = cfg.output_every;
    let dt = cfg.dt_internal;
    let gravity = cfg.gravity != Vec3::ZERO;
    // bound on |c - p| for any corner c and any twist reference point p in the box
    let reach = 2.0 * 3f64.sqrt() * cfg.box_half_extent * 1.1;
    let (mut event_pose, mut xi, mut k_event) = (s.pose, s.twist(), 0u64);
    let mut k = 0u64;
    let mut label = None;
    while k < total {
        let jump = if gravity {
            s.velocity += cfg.gravity * dt;
            event_pose = s.pose;
            xi = s.twist();
            k_event = k;
            1
        } else {
            let bound = s.velocity.norm() + s.angular_velocity.norm() * reach;
            if bound == 0.0 {
                total - k
            } else {
                let gap = min_gap(s, cfg.box_half_extent).max(0.0);
                ((gap / (bound * dt)).floor() as u64).clamp(1, total - k)
            }
        };
        k += jump;
        s.pose = integrate_pose(&event_pose, &xi, (k - k_event) as f64 * dt)?;
        let (changed, hit) = resolve_contacts(s, cfg)?;
        if let Some(w) = hit {
            label.get_or_insert(w);
        }
        if changed {
            event_pose = s.pose;
            xi = s.twist();
            k_event = k;
        }
    }
    s.sync_momenta()?;
    Ok(label.unwrap_or(CollisionLabel::None))
}

/// Simulates `n` records from `initial`. Every record carries the state at
/// the end of its interval in `next`.
pub fn simulate_trajectory(
    cfg: &SimConfig,
    initial: RigidBodyState,
    n: usize,
    trajectory: u64,
) -> Result<Vec<RigidBodyRecord>> {
    cfg.validate()?;
    if min_gap(&initial, cfg.box_half_extent) < 0.0 {
        return degenerate("initial body intersects a wall");
    }
    let mut state = initial;
    state.sync_momenta()?;
    let mut out = Vec::with_capacity(n);
    for step in 0..n as u64 {
        let mut rec = RigidBodyRecord::from_state(&state, trajectory, step, step as f64 * cfg.interval(), CollisionLabel::None);
        // continue from exactly what is recorded
        state = rec.state()?;
        rec.collision_label = simulate_interval(&mut state, cfg)?;
        rec.next = Some(successor_of(&state));
        out.push(rec);
    }
    Ok(out)
}

fn random_unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_orientation<R: Rng>(rng: &mut R) -> Quaternion {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            return q * (1.0 / n);
        }
    }
}

/// Random non-intersecting initial state.
pub fn random_initial_state<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<RigidBodyState> {
    let l = cfg.box_half_extent;
    loop {
        let q = random_orientation(rng);
        let p = Vec3::new(rng.random_range(-l..l), rng.random_range(-l..l), rng.random_range(-l..l)) * 0.5;
        let v = random_unit_vector(rng) * rng.random_range(0.0..=cfg.max_speed);
        let w = random_unit_vector(rng) * rng.random_range(0.0..=cfg.max_spin);
        let s = RigidBodyState::new(DualQuaternion::from_rot_trans(q, p)?, v, w, cfg.body_half_dims, cfg.mass)?;
        if min_gap(&s, l) > 1e-3 {
            return Ok(s);
        }
    }
}

/// Simulates `cfg.n_records` records over independent trajectories. Each
/// trajectory draws from its own stream of the seeded generator, so output
/// is independent of scheduling.
pub fn simulate(cfg: &SimConfig, seed: u64) -> Result<Vec<RigidBodyRecord>> {
    cfg.validate()?;
    let n_traj = cfg.n_trajectories();
    let run = |traj: usize| -> Result<Vec<RigidBodyRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(traj as u64);
        let initial = random_initial_state(cfg, &mut rng)?;
        let n = cfg.records_per_trajectory.min(cfg.n_records - traj * cfg.records_per_trajectory);
        simulate_trajectory(cfg, initial, n, traj as u64)
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(n_traj.max(1));
    let chunks: Vec<Result<Vec<RigidBodyRecord>>> = if workers <= 1 {
        (0..n_traj).map(run).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let run = &run;
                    scope.spawn(move || (w..n_traj).step_by(workers).map(|t| (t, run(t))).collect::<Vec<_>>())
                })
                .collect();
            let mut all: Vec<_> = handles.into_iter().flat_map(|h| h.join().expect("simulation worker panicked")).collect();
            all.sort_by_key(|(t, _)| *t);
            all.into_iter().map(|(_, r)| r).collect()
        })
    };
    let mut out = Vec::with_capacity(cfg.n_records);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Record counts per label, in label index order.
pub fn label_counts(records: &[RigidBodyRecord]) -> [usize; 7] {
    let mut c = [0; 7];
    for r in records {
        c[r.collision_label.index()] += 1;
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentPolicy {
    /// Rotate every record.
    All,
    /// Rotate collision records; keep non-collision records once.
    CollisionsOnly,
}

/// Rotation of augmentation `index` (1..=8) for a record labelled `wall`,
/// with the label it maps to. 1..=3 spin about the wall's axis by 90, 180
/// and 270 degrees; 4..=8 carry the wall onto each other wall in index
/// order. Non-collision records use the `+x` set.
pub fn augmentation(wall: CollisionLabel, index: u8) -> Result<(Quaternion, CollisionLabel)> {
    let src = if wall.is_wall() { wall } else { CollisionLabel::PosX };
    let n = src.normal().unwrap();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let (rot, dst) = match index {
        1..=3 => (Quaternion::from_axis_angle(n, half_pi * index as f64)?, src),
        4..=8 => {
            let dst = CollisionLabel::ALL[..6].iter().copied().filter(|w| *w != src).nth(index as usize - 4).unwrap();
            let m = dst.normal().unwrap();
            let axis = n.cross(m);
            let rot = if axis.norm() > 0.5 {
                Quaternion::from_axis_angle(axis, half_pi)?
            } else {
                // opposite wall: half turn about a fixed perpendicular axis
                let perp = if src.index() < 4 { Vec3::Z } else { Vec3::X };
                Quaternion::from_axis_angle(perp, 2.0 * half_pi)?
            };
            (rot, dst)
        }
        _ => return Err(Error::Config(format!("augmentation index {index} outside 1..=8"))),
    };
    Ok((rot, if wall.is_wall() { dst } else { CollisionLabel::None }))
}

fn rotate_record(r: &RigidBodyRecord, q: &Quaternion, label: CollisionLabel, index: u8) -> Result<RigidBodyRecord> {
    let rot = |v: Vec3| q.rotate(v);
    let next = match r.next {
        Some(n) => Some(Successor {
            orientation: (*q * n.orientation).normalize()?,
            position: rot(n.position)?,
            velocity: rot(n.velocity)?,
            angular_velocity: rot(n.angular_velocity)?,
            angular_momentum: rot(n.angular_momentum)?,
            momentum: rot(n.momentum)?,
        }),
        None => None,
    };
    Ok(RigidBodyRecord {
        augmentation: index,
        orientation: (*q * r.orientation).normalize()?,
        position: rot(r.position)?,
        velocity: rot(r.velocity)?,
        angular_velocity: rot(r.angular_velocity)?,
        angular_momentum: rot(r.angular_momentum)?,
        momentum: rot(r.momentum)?,
        collision_label: label,
        next,
        ..r.clone()
    })
}

/// Each selected record followed by its eight rotated copies. Rotations
/// have zero translation and map the origin-centred box onto itself.
pub fn augment(records: &[RigidBodyRecord], policy: AugmentPolicy) -> Result<Vec<RigidBodyRecord>> {
    let mut out = Vec::with_capacity(records.len() * 9);
    for r in records {
        if !r.orientation.is_unit(1e-9) {
            return degenerate(format!("record {}/{} has a non-unit orientation", r.trajectory, r.step));
        }
        out.push(r.clone());
        if policy == AugmentPolicy::CollisionsOnly && !r.collision_label.is_wall() {
            continue;
        }
        for a in 1..=8 {
            let (q, label) = augmentation(r.collision_label, a)?;
            out.push(rotate_record(r, &q, label, a)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(default)]
    count: Option<usize>,
}

/// Header line followed by one JSON object per record.
pub fn write_jsonl<W: Write>(mut w: W, records: &[RigidBodyRecord]) -> Result<()> {
    let h = Header { format: RECORDS_FORMAT.into(), version: RECORDS_VERSION, count: Some(records.len()) };
    serde_json::to_writer(&mut w, &h).map_err(|e| Error::Malformed(e.to_string()))?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Malformed(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<RigidBodyRecord>> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| Error::Malformed("empty record file".into()))??;
    let h: Header = serde_json::from_str(&first).map_err(|e| Error::Malformed(format!("record header: {e}")))?;
    if h.format != RECORDS_FORMAT {
        return Err(Error::Malformed(format!("expected format {RECORDS_FORMAT:?}, found {:?}", h.format)));
    }
    if h.version != RECORDS_VERSION {
        return Err(Error::SchemaVersion { format: RECORDS_FORMAT.into(), expected: RECORDS_VERSION, found: h.version });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RigidBodyRecord =
            serde_json::from_str(&line).map_err(|e| Error::Malformed(format!("record line {}: {e}", i + 2)))?;
        out.push(rec);
    }
    if let Some(c) = h.count {
        if c != out.len() {
            return Err(Error::Malformed(format!("header announces {c} records, found {}", out.len())));
        }
    }
    Ok(out)
}

/// Version comment line, header row and [`CSV_COLUMNS`]. Half dimensions
/// are constant per body and only appear in the JSON records.
pub fn write_csv<W: Write>(mut w: W, records: &[RigidBodyRecord]) -> Result<()> {
    writeln!(w, "# {CSV_FORMAT} v{RECORDS_VERSION}")?;
    let mut c = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Malformed(e.to_string());
    c.write_record(CSV_COLUMNS).map_err(err)?;
    for r in records {
        let q = r.orientation;
        let mut row: Vec<String> = vec![r.trajectory.to_string(), r.step.to_string(), r.t.to_string()];
        row.extend([q.w, q.x, q.y, q.z].iter().map(|v| v.to_string()));
        for v in [r.position, r.velocity, r.angular_velocity] {
            row.extend(v.to_array().iter().map(|x| x.to_string()));
        }
        row.push(r.mass.to_string());
        for v in [r.angular_momentum, r.momentum] {
            row.extend(v.to_array().iter().map(|x| x.to_string()));
        }
        row.push(r.collision_label.to_string());
        c.write_record(&row).map_err(err)?;
    }
    c.flush()?;
    Ok(())
}
