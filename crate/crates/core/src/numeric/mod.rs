//! Deterministic numerical kernels.
//!
//! Everything here works on `f64` and plain row-major `Vec`s. Each layer
//! exposes a forward pass that returns a cache and a backward pass that
//! consumes it, so composite models can chain them by hand.

mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod optim;
mod params;
mod tape;

pub use dense::{dense_backward, dense_forward, Activation, DenseCache};
pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckReport};
pub use loss::{bce_loss, bce_with_logit, mse_loss, sigmoid, PROB_CLAMP};
pub use lstm::{
    lstm_cell_backward, lstm_cell_forward, lstm_sequence_backward, lstm_sequence_forward,
    LstmGrads, LstmParams, LstmStepCache, LstmSequenceCache,
};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{ParamSet, ParameterBlock};
pub use tape::GradientTape;

/// `out = W · x` for a row-major `rows × cols` matrix.
#[inline]
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `out += Wᵀ · y`.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `G += y · xᵀ`.
#[inline]
pub(crate) fn outer_acc(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(g.len(), y.len() * cols);
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += yr * xv;
        }
    }
}
