//! Minimal reverse-mode differentiation over dense matrices.

mod gradcheck;
mod matrix;
mod optim;
mod params;
mod tape;

pub use gradcheck::{check_gradients, GradCheck, DEFAULT_STEP};
pub use matrix::Matrix;
pub use optim::{Optimizer, OptimizerKind, Schedule};
pub use params::{Checkpoint, ParamId, ParamStore, SavedParam, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tape::{error_score, Tape, Var};

pub(crate) use tape::softmax_cols;

/// Column-wise softmax outside a tape.
pub fn softmax(m: &Matrix) -> Matrix {
    softmax_cols(m)
}
