use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Worst relative error between analytic and central-difference
/// gradients over every parameter entry. Relative error is
/// `|a - n| / max(|a|, |n|, floor)` with `floor = 1e-6 max(1, |loss|)`, so
/// entries far below the difference quotient's roundoff level are compared
/// on the loss scale. The measure is invariant to rescaling the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub entries: usize,
}

pub const DEFAULT_STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

/// Compares the gradients of the scalar built by `f` against central
/// differences with step `h`. `f` must be deterministic.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store)?;
    let floor = FLOOR * tape.scalar(loss).abs().max(1.0);
    let analytic: Vec<Vec<f64>> = store.ids().map(|id| store.grad(id).as_slice().to_vec()).collect();
    store.zero_grads();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t, s)?;
        Ok(t.scalar(l))
    };
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    let ids: Vec<_> = store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        for i in 0..store.value(id).len() {
            let orig = store.value(id).as_slice()[i];
            store.value_mut(id).as_mut_slice()[i] = orig + h;
            let up = eval(store)?;
            store.value_mut(id).as_mut_slice()[i] = orig - h;
            let down = eval(store)?;
            store.value_mut(id).as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
            entries += 1;
        }
    }
    Ok(GradCheck { max_rel_error: worst, entries })
}
