//! Dual-quaternion geometry, a small autodiff engine, dual-quaternion
//! neural layers and a cube-in-a-box simulation pipeline.

pub mod attention;
pub mod autodiff;
pub mod dqnn;
pub mod dualquat;
pub mod error;
pub mod kinematics;
pub mod pipeline;
pub mod plot;
pub mod quat;
pub mod series;
pub mod simulator;
pub mod vec3;

pub use dualquat::{DualNumber, DualQuaternion};
pub use error::{Error, Result};
pub use quat::Quaternion;
pub use vec3::{Mat3, Vec3};
