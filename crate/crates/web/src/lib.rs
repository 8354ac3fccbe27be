use dqrnn::pipeline::{predict_sequence, LabelOracle, PipelineConfig, TargetOracle};
use dqrnn::plot::{three_pose_svg, three_poses, trajectory_svg};
use dqrnn::simulator::{simulate, RigidBodyRecord};
use dqrnn::{attention, Vec3};
use wasm_bindgen::prelude::*;

fn js(e: dqrnn::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// The unit cuboid rotated about an axis and then translated.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn pose_figure(ax: f64, ay: f64, az: f64, angle_deg: f64, tx: f64, ty: f64, tz: f64) -> Result<String, JsError> {
    let axis = Vec3::new(ax, ay, az);
    if !(axis.norm() > 1e-9) {
        return Err(JsError::new("rotation axis must be non-zero"));
    }
    let p = three_poses(Vec3::new(1.0, 0.5, 0.5), axis, angle_deg.to_radians(), Vec3::new(tx, ty, tz)).map_err(js)?;
    Ok(three_pose_svg(&p))
}

fn one_trajectory(seed: u64) -> Result<(PipelineConfig, Vec<RigidBodyRecord>), JsError> {
    let mut cfg = PipelineConfig::default();
    cfg.sim.n_records = cfg.sim.records_per_trajectory;
    let records = simulate(&cfg.sim, seed).map_err(js)?;
    Ok((cfg, records))
}

/// Collision label of every record of the trajectory simulated from `seed`.
#[wasm_bindgen]
pub fn trajectory_labels(seed: u64) -> Result<Vec<String>, JsError> {
    Ok(one_trajectory(seed)?.1.iter().map(|r| r.collision_label.to_string()).collect())
}

/// Simulated trajectory against a replay from its first record. With
/// `replay_collisions` the recorded labels and collision outcomes drive the
/// replay; otherwise every step takes the force-free path.
#[wasm_bindgen]
pub fn trajectory_figure(seed: u64, replay_collisions: bool) -> Result<String, JsError> {
    let (cfg, truth) = one_trajectory(seed)?;
    let dt = cfg.sim.interval();
    let (labels, targets) = if replay_collisions {
        (truth.iter().map(|r| r.collision_label).collect(), TargetOracle::from_records(&truth, dt).map_err(js)?)
    } else {
        (Vec::new(), TargetOracle(Vec::new()))
    };
    let trace = predict_sequence(
        &mut LabelOracle(labels),
        &mut { targets },
        &truth[0],
        cfg.sim.box_half_extent,
        truth.len() - 1,
        dt,
    )
    .map_err(js)?;
    Ok(trajectory_svg(&trace, &truth))
}

/// Row-major error scores of every pair of poses along the trajectory.
#[wasm_bindgen]
pub fn attention_heatmap(seed: u64, alpha: f64) -> Result<Vec<f64>, JsError> {
    let (_, truth) = one_trajectory(seed)?;
    let poses = truth.iter().map(|r| r.pose()).collect::<dqrnn::Result<Vec<_>>>().map_err(js)?;
    let m = attention::pairwise_error_scores(&poses, alpha).map_err(js)?;
    Ok(m.into_iter().flatten().collect())
}
