use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Optimizer, ParamStore, Tape, Var};
use crate::dualquat::DualQuaternion;
use crate::error::{degenerate, Error, Result};
use crate::simulator::{AugmentPolicy, CollisionLabel, RigidBodyRecord};

use super::{
    box_walls, collision_targets, encode_inputs, AttentionBinary, AttentionMulti, CollisionModel, CollisionTargets,
    InputSet, PathTaken, TraceRecord, TrainConfig, N_CLASSES, N_REDUCED,
};

type Rng = ChaCha8Rng;

/// Columns evaluated per forward pass outside training.
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<RigidBodyRecord>,
    pub val: Vec<RigidBodyRecord>,
    pub test: Vec<RigidBodyRecord>,
}

/// Assigns whole trajectories, in id order, to train, validation and test
/// by the given fractions. Augmented copies follow their original.
pub fn split_by_trajectory(records: &[RigidBodyRecord], fractions: [f64; 3]) -> Result<Split> {
    let mut ids: Vec<u64> = records.iter().map(|r| r.trajectory).collect();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    if n < 3 {
        return degenerate(format!("{n} trajectories cannot be split three ways"));
    }
    let n_train = ((fractions[0] * n as f64).round() as usize).clamp(1, n - 2);
    let n_val = ((fractions[1] * n as f64).round() as usize).clamp(1, n - 1 - n_train);
    let (train_end, val_end) = (ids[n_train - 1], ids[n_train + n_val - 1]);
    let mut s = Split::default();
    for r in records {
        let part = if r.trajectory <= train_end {
            &mut s.train
        } else if r.trajectory <= val_end {
            &mut s.val
        } else {
            &mut s.test
        };
        part.push(r.clone());
    }
    Ok(s)
}

/// Splits by trajectory, then rotates the collision records of each part
/// when `augment` is set and the records carry no rotated copies yet.
pub fn prepare_split(records: &[RigidBodyRecord], fractions: [f64; 3], augment: bool) -> Result<Split> {
    let s = split_by_trajectory(records, fractions)?;
    if !augment || records.iter().any(|r| r.augmentation != 0) {
        return Ok(s);
    }
    let aug = |v: &[RigidBodyRecord]| crate::simulator::augment(v, AugmentPolicy::CollisionsOnly);
    Ok(Split { train: aug(&s.train)?, val: aug(&s.val)?, test: aug(&s.test)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSample {
    pub input: InputSet,
    pub label: CollisionLabel,
}

/// Wall-collision sample: the reduced input for the labelled wall and the
/// targets reproducing the recorded successor.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSample {
    pub reduced: [DualQuaternion; N_REDUCED],
    pub wall: usize,
    pub targets: CollisionTargets,
}

pub fn attention_dataset(records: &[RigidBodyRecord], half_extent: f64) -> Result<Vec<AttentionSample>> {
    if records.is_empty() {
        return degenerate("no records for the attention stage");
    }
    let walls = box_walls(half_extent);
    records.iter().map(|r| Ok(AttentionSample { input: encode_inputs(r, &walls)?, label: r.collision_label })).collect()
}

/// Keeps exactly the records labelled with a wall.
pub fn collision_dataset(records: &[RigidBodyRecord], half_extent: f64, dt: f64) -> Result<Vec<CollisionSample>> {
    let walls = box_walls(half_extent);
    let out: Vec<CollisionSample> = records
        .iter()
        .filter(|r| r.collision_label.is_wall())
        .map(|r| {
            let wall = r.collision_label.index();
            Ok(CollisionSample {
                reduced: encode_inputs(r, &walls)?.reduced(wall)?,
                wall,
                targets: collision_targets(r, dt)?,
            })
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return degenerate("no collision records after reduction");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub val_loss: f64,
    /// Validation accuracy of a classifier.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// Validation losses of the twist, impulse and angular momentum paths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_losses: Option<[f64; 3]>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Malformed(e.to_string());
        out.write_record(["epoch", "lr", "loss", "val_loss", "accuracy", "twist", "impulse", "angular_momentum", "seconds"])
            .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            let p = r.path_losses;
            out.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.loss.to_string(),
                r.val_loss.to_string(),
                opt(r.accuracy),
                opt(p.map(|p| p[0])),
                opt(p.map(|p| p[1])),
                opt(p.map(|p| p[2])),
                r.seconds.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn best(&self) -> Option<&LogRow> {
        self.rows.iter().find(|r| r.epoch == self.best_epoch)
    }
}

fn gather(m: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(m.rows(), cols.len(), |i, j| m.get(i, cols[j]))
}

struct Validation {
    loss: f64,
    accuracy: Option<f64>,
    path_losses: Option<[f64; 3]>,
}

impl Validation {
    fn better_than(&self, o: &Validation) -> bool {
        match (self.accuracy, o.accuracy) {
            (Some(a), Some(b)) if a != b => a > b,
            _ => self.loss < o.loss,
        }
    }
}

/// Minibatch training with best-on-validation selection. `batch_loss`
/// builds the loss of the given training indices, `validate` scores the
/// current parameters on held-out data.
#[allow(clippy::too_many_arguments)]
fn fit(
    store: &mut ParamStore,
    cfg: &TrainConfig,
    epochs: usize,
    n_train: usize,
    seed: u64,
    batch_loss: &dyn Fn(&mut Tape, &ParamStore, &[usize], Option<&mut Rng>) -> Result<Var>,
    project: &dyn Fn(&mut ParamStore),
    validate: &dyn Fn(&ParamStore) -> Result<Validation>,
    on_epoch: &mut dyn FnMut(&LogRow),
) -> Result<TrainLog> {
    if n_train == 0 {
        return degenerate("empty training set");
    }
    let start = std::time::Instant::now();
    let mut shuffle_rng = Rng::seed_from_u64(seed);
    let mut dropout_rng = Rng::seed_from_u64(seed);
    dropout_rng.set_stream(1);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.schedule)?;
    opt.clip_norm = cfg.clip_norm;

    let all: Vec<usize> = (0..n_train).collect();
    let initial_loss = {
        let mut total = 0.0;
        for c in all.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let l = batch_loss(&mut tape, store, c, None)?;
            total += tape.scalar(l) * c.len() as f64;
        }
        total / n_train as f64
    };
    let v = validate(store)?;
    let row = |epoch, lr, loss, v: &Validation, t: std::time::Instant| LogRow {
        epoch,
        lr,
        loss,
        val_loss: v.loss,
        accuracy: v.accuracy,
        path_losses: v.path_losses,
        seconds: t.elapsed().as_secs_f64(),
    };
    let mut log = TrainLog { rows: vec![row(0, cfg.lr, initial_loss, &v, start)], best_epoch: 0 };
    on_epoch(&log.rows[0]);
    let mut best_val = v;
    let mut best = store.clone();

    let mut order = all;
    for epoch in 1..=epochs {
        opt.set_epoch(epoch - 1);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let l = batch_loss(&mut tape, store, batch, Some(&mut dropout_rng))?;
            let lv = tape.scalar(l);
            if !lv.is_finite() {
                return degenerate(format!("non-finite training loss at epoch {epoch}"));
            }
            total += lv * batch.len() as f64;
            tape.backward(l, store)?;
            opt.step(store);
            project(store);
        }
        let v = validate(store)?;
        let r = row(epoch, opt.lr(), total / n_train as f64, &v, start);
        on_epoch(&r);
        log.rows.push(r);
        if v.better_than(&best_val) {
            best_val = v;
            best.copy_values_from(store)?;
            log.best_epoch = epoch;
        }
    }
    store.copy_values_from(&best)?;
    Ok(log)
}

fn multi_features(samples: &[AttentionSample]) -> Result<Matrix> {
    Matrix::from_columns(&samples.iter().map(|s| s.input.features()).collect::<Vec<_>>())
}

fn multi_loss(model: &AttentionMulti, store: &ParamStore, x: &Matrix, labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    let idx: Vec<usize> = (0..labels.len()).collect();
    for c in idx.chunks(EVAL_CHUNK) {
        let mut tape = Tape::new();
        let xv = tape.leaf(gather(x, c));
        let s = model.scores(&mut tape, store, xv, None)?;
        let lab: Vec<usize> = c.iter().map(|&i| labels[i]).collect();
        let l = tape.softmax_cross_entropy(s, &lab)?;
        total += tape.scalar(l) * c.len() as f64;
    }
    Ok(total / labels.len() as f64)
}

pub fn train_attention_multi(
    train: &[AttentionSample],
    val: &[AttentionSample],
    cfg: &TrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&LogRow),
) -> Result<(AttentionMulti, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return degenerate("attention training needs training and validation samples");
    }
    let mut model = AttentionMulti::new(&cfg.multi, cfg.alpha, &mut Rng::seed_from_u64(seed))?;
    let x = multi_features(train)?;
    let y: Vec<usize> = train.iter().map(|s| s.label.index()).collect();
    let xv = multi_features(val)?;
    let yv: Vec<usize> = val.iter().map(|s| s.label.index()).collect();
    let mut store = std::mem::take(&mut model.store);
    let net = model.clone();
    let log = fit(
        &mut store,
        cfg,
        cfg.epochs,
        train.len(),
        seed,
        &|tape, store, idx, rng| {
            let xb = tape.leaf(gather(&x, idx));
            let s = net.scores(tape, store, xb, rng)?;
            let lab: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            tape.softmax_cross_entropy(s, &lab)
        },
        &|store| net.net.project(store),
        &|store| {
            let m = AttentionMulti { store: store.clone(), ..net.clone() };
            let p = m.probabilities_of(&xv)?;
            let correct = p
                .iter()
                .zip(&yv)
                .filter(|(p, y)| super::select_multi(&p[..]).map(|l| l.index()).ok() == Some(**y))
                .count();
            Ok(Validation {
                loss: multi_loss(&net, store, &xv, &yv)?,
                accuracy: Some(correct as f64 / yv.len() as f64),
                path_losses: None,
            })
        },
        on_epoch,
    )?;
    model.store = store;
    Ok((model, log))
}

fn binary_targets(samples: &[AttentionSample]) -> Matrix {
    Matrix::from_fn(1, 6 * samples.len(), |_, j| if samples[j / 6].label.index() == j % 6 { 1.0 } else { 0.0 })
}

fn binary_columns(idx: &[usize]) -> Vec<usize> {
    idx.iter().flat_map(|&i| (6 * i)..(6 * i + 6)).collect()
}

fn binary_loss(model: &AttentionBinary, store: &ParamStore, x: &Matrix, y: &Matrix, pos_weight: f64) -> Result<f64> {
    let n = y.cols() / 6;
    let idx: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for c in idx.chunks(EVAL_CHUNK / 6) {
        let cols = binary_columns(c);
        let mut tape = Tape::new();
        let xv = tape.leaf(gather(x, &cols));
        let z = model.logits(&mut tape, store, xv, None)?;
        let l = tape.sigmoid_binary_cross_entropy(z, &gather(y, &cols), pos_weight)?;
        total += tape.scalar(l) * c.len() as f64;
    }
    Ok(total / n as f64)
}

pub fn train_attention_binary(
    train: &[AttentionSample],
    val: &[AttentionSample],
    cfg: &TrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&LogRow),
) -> Result<(AttentionBinary, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return degenerate("attention training needs training and validation samples");
    }
    let mut model = AttentionBinary::new(&cfg.binary, cfg.alpha, cfg.threshold, &mut Rng::seed_from_u64(seed))?;
    let inputs: Vec<InputSet> = train.iter().map(|s| s.input).collect();
    let x = AttentionBinary::wall_columns(&inputs)?;
    let y = binary_targets(train);
    let val_inputs: Vec<InputSet> = val.iter().map(|s| s.input).collect();
    let xv = AttentionBinary::wall_columns(&val_inputs)?;
    let yv = binary_targets(val);
    let labels_v: Vec<CollisionLabel> = val.iter().map(|s| s.label).collect();
    let mut store = std::mem::take(&mut model.store);
    let net = model.clone();
    let pw = cfg.pos_weight;
    let log = fit(
        &mut store,
        cfg,
        cfg.epochs,
        train.len(),
        seed,
        &|tape, store, idx, rng| {
            let cols = binary_columns(idx);
            let xb = tape.leaf(gather(&x, &cols));
            let z = net.logits(tape, store, xb, rng)?;
            tape.sigmoid_binary_cross_entropy(z, &gather(&y, &cols), pw)
        },
        &|store| net.net.project(store),
        &|store| {
            let m = AttentionBinary { store: store.clone(), ..net.clone() };
            let p = m.probabilities_of(&xv)?;
            let correct = p
                .iter()
                .zip(&labels_v)
                .filter(|(p, y)| super::select_binary(&p[..], m.threshold).ok() == Some(**y))
                .count();
            Ok(Validation {
                loss: binary_loss(&net, store, &xv, &yv, pw)?,
                accuracy: Some(correct as f64 / labels_v.len() as f64),
                path_losses: None,
            })
        },
        on_epoch,
    )?;
    model.store = store;
    Ok((model, log))
}

struct CollisionData {
    x: Matrix,
    y: [Matrix; 3],
}

impl CollisionData {
    fn new(samples: &[CollisionSample]) -> Result<Self> {
        let x = Matrix::from_columns(
            &samples.iter().map(|s| s.reduced.iter().flat_map(|q| q.to_array()).collect()).collect::<Vec<_>>(),
        )?;
        let y = std::array::from_fn(|k| {
            Matrix::from_fn(8, samples.len(), |i, j| samples[j].targets.to_array()[8 * k + i])
        });
        Ok(Self { x, y })
    }

    fn n(&self) -> usize {
        self.x.cols()
    }

    /// Mean-squared error per path over the given columns.
    fn losses(&self, model: &CollisionModel, store: &ParamStore) -> Result<[f64; 3]> {
        let idx: Vec<usize> = (0..self.n()).collect();
        let mut total = [0.0; 3];
        for c in idx.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let xv = tape.leaf(gather(&self.x, c));
            let out = model.forward(&mut tape, store, xv, None)?;
            for k in 0..3 {
                let l = tape.mse(out[k], &gather(&self.y[k], c))?;
                total[k] += tape.scalar(l) * c.len() as f64;
            }
        }
        Ok(total.map(|t| t / self.n() as f64))
    }
}

/// Trains the three collision paths jointly on the sum of their losses.
pub fn train_collision(
    train: &[CollisionSample],
    val: &[CollisionSample],
    cfg: &TrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&LogRow),
) -> Result<(CollisionModel, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return degenerate("collision training needs training and validation samples");
    }
    let mut model = CollisionModel::new(&cfg.collision, &mut Rng::seed_from_u64(seed))?;
    let d = CollisionData::new(train)?;
    let dv = CollisionData::new(val)?;
    let mut store = std::mem::take(&mut model.store);
    let net = model.clone();
    let log = fit(
        &mut store,
        cfg,
        cfg.collision_epochs.unwrap_or(cfg.epochs),
        train.len(),
        seed,
        &|tape, store, idx, rng| {
            let xb = tape.leaf(gather(&d.x, idx));
            let out = net.forward(tape, store, xb, rng)?;
            let l0 = tape.mse(out[0], &gather(&d.y[0], idx))?;
            let l1 = tape.mse(out[1], &gather(&d.y[1], idx))?;
            let l2 = tape.mse(out[2], &gather(&d.y[2], idx))?;
            let s = tape.add(l0, l1)?;
            tape.add(s, l2)
        },
        &|store| net.paths.iter().for_each(|p| p.project(store)),
        &|store| {
            let p = dv.losses(&net, store)?;
            Ok(Validation { loss: p.iter().sum(), accuracy: None, path_losses: Some(p) })
        },
        on_epoch,
    )?;
    model.store = store;
    Ok((model, log))
}

/// Counts with true labels as rows and decisions as columns, both in
/// label index order (six walls, then none).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl Confusion {
    pub fn add(&mut self, truth: CollisionLabel, decision: CollisionLabel) {
        self.counts[truth.index()][decision.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total().max(1) as f64
    }

    /// Errors with `none` on either side.
    pub fn none_errors(&self) -> usize {
        let n = CollisionLabel::NONE_INDEX;
        (0..N_CLASSES).filter(|&i| i != n).map(|i| self.counts[i][n] + self.counts[n][i]).sum()
    }

    /// Misclassifications per class, counting both the class's row and
    /// column.
    pub fn class_errors(&self) -> [usize; N_CLASSES] {
        std::array::from_fn(|c| (0..N_CLASSES).filter(|&k| k != c).map(|k| self.counts[c][k] + self.counts[k][c]).sum())
    }

    /// Whether `none` takes part in at least as many errors as any wall.
    pub fn none_dominant(&self) -> bool {
        let e = self.class_errors();
        e[..CollisionLabel::NONE_INDEX].iter().all(|w| *w <= e[CollisionLabel::NONE_INDEX])
    }

    /// One wall mistaken for another.
    pub fn wall_errors(&self) -> usize {
        let n = CollisionLabel::NONE_INDEX;
        let mut e = 0;
        for i in (0..N_CLASSES).filter(|&i| i != n) {
            for j in (0..N_CLASSES).filter(|&j| j != n && j != i) {
                e += self.counts[i][j];
            }
        }
        e
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Malformed(e.to_string());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(CollisionLabel::ALL.iter().map(|l| l.to_string()));
        out.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.counts.iter().enumerate() {
            let mut rec = vec![CollisionLabel::ALL[i].to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub samples: usize,
    /// Share of samples whose interface decision equals the label.
    pub accuracy: f64,
    pub loss: f64,
    pub confusion: Confusion,
    pub none_errors: usize,
    pub wall_errors: usize,
    pub class_errors: [usize; N_CLASSES],
    pub none_dominant: bool,
}

impl ClassifierReport {
    pub fn from_confusion(confusion: Confusion, loss: f64) -> Self {
        ClassifierReport {
            samples: confusion.total(),
            accuracy: confusion.accuracy(),
            loss,
            none_errors: confusion.none_errors(),
            wall_errors: confusion.wall_errors(),
            class_errors: confusion.class_errors(),
            none_dominant: confusion.none_dominant(),
            confusion,
        }
    }
}

pub fn evaluate_multi(model: &AttentionMulti, samples: &[AttentionSample]) -> Result<ClassifierReport> {
    if samples.is_empty() {
        return degenerate("no samples to evaluate");
    }
    let x = multi_features(samples)?;
    let y: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
    let mut c = Confusion::default();
    for (p, s) in model.probabilities_of(&x)?.iter().zip(samples) {
        c.add(s.label, super::select_multi(&p[..])?);
    }
    Ok(ClassifierReport::from_confusion(c, multi_loss(model, &model.store, &x, &y)?))
}

pub fn evaluate_binary(model: &AttentionBinary, samples: &[AttentionSample]) -> Result<ClassifierReport> {
    if samples.is_empty() {
        return degenerate("no samples to evaluate");
    }
    let inputs: Vec<InputSet> = samples.iter().map(|s| s.input).collect();
    let x = AttentionBinary::wall_columns(&inputs)?;
    let mut c = Confusion::default();
    for (p, s) in model.probabilities_of(&x)?.iter().zip(samples) {
        c.add(s.label, super::select_binary(&p[..], model.threshold)?);
    }
    Ok(ClassifierReport::from_confusion(c, binary_loss(model, &model.store, &x, &binary_targets(samples), 1.0)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub samples: usize,
    /// Mean-squared error of the twist, impulse and angular momentum paths.
    pub path_losses: [f64; 3],
}

pub fn evaluate_collision(model: &CollisionModel, samples: &[CollisionSample]) -> Result<CollisionReport> {
    if samples.is_empty() {
        return degenerate("no samples to evaluate");
    }
    let d = CollisionData::new(samples)?;
    Ok(CollisionReport { samples: samples.len(), path_losses: d.losses(model, &model.store)? })
}

/// Step-by-step agreement between a predicted trace and the recorded
/// trajectory it started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    pub position_errors: Vec<f64>,
    pub orientation_errors: Vec<f64>,
    /// First step whose attention decision differs from the label.
    pub first_attention_error: Option<usize>,
    /// States produced by correct `none` decisions only, from the start.
    pub free_prefix: usize,
    pub free_prefix_max_error: f64,
    pub out_of_domain_steps: usize,
    /// Every state finite with a unit orientation.
    pub well_formed: bool,
}

/// First step where the decision recorded in the trace differs from the
/// recorded label.
pub fn first_attention_error(trace: &[TraceRecord], truth: &[RigidBodyRecord]) -> Option<usize> {
    trace.iter().zip(truth).take(trace.len().saturating_sub(1)).position(|(t, r)| t.record.collision_label != r.collision_label)
}

pub fn compare_trace(trace: &[TraceRecord], truth: &[RigidBodyRecord]) -> Result<TraceComparison> {
    let n = trace.len().min(truth.len());
    if n == 0 {
        return degenerate("nothing to compare");
    }
    let mut position_errors = Vec::with_capacity(n);
    let mut orientation_errors = Vec::with_capacity(n);
    for (t, r) in trace.iter().zip(truth) {
        position_errors.push((t.record.position - r.position).norm());
        let (a, b) = (t.record.orientation, r.orientation);
        orientation_errors.push((a - b).norm().min((a + b).norm()));
    }
    let first_attention_error = first_attention_error(&trace[..n], &truth[..n]);
    let first_other = (0..n.saturating_sub(1))
        .find(|&k| trace[k].record.collision_label != CollisionLabel::None || truth[k].collision_label != CollisionLabel::None)
        .unwrap_or(n - 1);
    let free_prefix = first_other + 1;
    debug_assert!(trace[1..free_prefix].iter().all(|t| t.path_taken == PathTaken::Hard));
    let free_prefix_max_error = position_errors[..free_prefix]
        .iter()
        .chain(&orientation_errors[..free_prefix])
        .fold(0.0f64, |m, e| m.max(*e));
    let well_formed = trace.iter().all(|t| {
        let r = &t.record;
        r.orientation.is_unit(1e-9)
            && [r.position, r.velocity, r.angular_velocity, r.momentum, r.angular_momentum]
                .iter()
                .all(|v| v.is_finite())
    });
    Ok(TraceComparison {
        position_errors,
        orientation_errors,
        first_attention_error,
        free_prefix,
        free_prefix_max_error,
        out_of_domain_steps: trace.iter().filter(|t| t.out_of_domain).count(),
        well_formed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub trajectory: u64,
    pub steps: usize,
    pub first_attention_error: Option<usize>,
    pub free_prefix: usize,
    pub free_prefix_max_error: f64,
    pub final_position_error: f64,
    pub out_of_domain_steps: usize,
    pub well_formed: bool,
}

impl SequenceReport {
    pub fn new(trajectory: u64, c: &TraceComparison) -> Self {
        SequenceReport {
            trajectory,
            steps: c.position_errors.len().saturating_sub(1),
            first_attention_error: c.first_attention_error,
            free_prefix: c.free_prefix,
            free_prefix_max_error: c.free_prefix_max_error,
            final_position_error: c.position_errors.last().copied().unwrap_or(0.0),
            out_of_domain_steps: c.out_of_domain_steps,
            well_formed: c.well_formed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `multi`, `binary` or `oracle`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<ClassifierReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collision: Option<CollisionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceReport>,
}
