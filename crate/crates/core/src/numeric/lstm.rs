//! Four-gate LSTM cell and sequence encoder.
//!
//! Gate rows in the stacked weight matrices are ordered input, forget,
//! candidate, output. `w_ih` is `(4M, D)`, `w_hh` is `(4M, M)` and `bias`
//! is `(4M)`.

use super::{matvec, matvec_t_acc, outer_acc, sigmoid, ParameterBlock};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    pub w_ih: &'a ParameterBlock,
    pub w_hh: &'a ParameterBlock,
    pub bias: &'a ParameterBlock,
}

pub struct LstmGrads<'a> {
    pub w_ih: &'a mut ParameterBlock,
    pub w_hh: &'a mut ParameterBlock,
    pub bias: &'a mut ParameterBlock,
}

impl LstmParams<'_> {
    /// Returns `(hidden M, input D)`.
    pub fn dims(&self) -> Result<(usize, usize)> {
        if self.w_ih.shape.len() != 2 || self.w_hh.shape.len() != 2 {
            return Err(Error::shape("lstm weight rank", 2, self.w_ih.shape.len()));
        }
        let gates = self.w_ih.shape[0];
        if !gates.is_multiple_of(4) {
            return Err(Error::shape("lstm gate rows", "multiple of 4", gates));
        }
        let hidden = gates / 4;
        if self.w_hh.shape != [gates, hidden] {
            return Err(Error::shape(
                "lstm recurrent weight",
                format!("[{gates}, {hidden}]"),
                format!("{:?}", self.w_hh.shape),
            ));
        }
        if self.bias.len() != gates {
            return Err(Error::shape("lstm bias", gates, self.bias.len()));
        }
        Ok((hidden, self.w_ih.shape[1]))
    }
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates, `4M` long, in i, f, g, o order.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct LstmSequenceCache {
    pub steps: Vec<LstmStepCache>,
}

impl LstmSequenceCache {
    /// Hidden state after clip `j` (1-based).
    pub fn hidden_at(&self, j: usize) -> Option<&[f64]> {
        j.checked_sub(1)
            .and_then(|i| self.steps.get(i))
            .map(|s| s.h.as_slice())
    }
}

pub fn lstm_cell_forward(
    params: &LstmParams<'_>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache)> {
    let (m, d) = params.dims()?;
    if x.len() != d {
        return Err(Error::shape("lstm input", d, x.len()));
    }
    if h_prev.len() != m || c_prev.len() != m {
        return Err(Error::shape("lstm state", m, h_prev.len().max(c_prev.len())));
    }
    let mut gates = params.bias.values.clone();
    let mut tmp = vec![0.0; 4 * m];
    matvec(&params.w_ih.values, 4 * m, d, x, &mut tmp);
    for (g, t) in gates.iter_mut().zip(&tmp) {
        *g += t;
    }
    matvec(&params.w_hh.values, 4 * m, m, h_prev, &mut tmp);
    for (g, t) in gates.iter_mut().zip(&tmp) {
        *g += t;
    }
    for (k, g) in gates.iter_mut().enumerate() {
        *g = if (2 * m..3 * m).contains(&k) {
            g.tanh()
        } else {
            sigmoid(*g)
        };
    }
    let mut c = vec![0.0; m];
    let mut tanh_c = vec![0.0; m];
    let mut h = vec![0.0; m];
    for k in 0..m {
        let (i, f, g, o) = (gates[k], gates[m + k], gates[2 * m + k], gates[3 * m + k]);
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
    let cache = LstmStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c: c.clone(),
        tanh_c,
        h: h.clone(),
    };
    Ok((h, c, cache))
}

/// Backward through one cell. Accumulates parameter gradients and returns
/// `(d h_prev, d c_prev)`.
pub fn lstm_cell_backward(
    params: &LstmParams<'_>,
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmGrads<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (m, _) = params.dims()?;
    if dh.len() != m || dc.len() != m {
        return Err(Error::shape("lstm state gradient", m, dh.len()));
    }
    let g = &cache.gates;
    let mut dz = vec![0.0; 4 * m];
    let mut dc_prev = vec![0.0; m];
    for k in 0..m {
        let (i, f, cand, o) = (g[k], g[m + k], g[2 * m + k], g[3 * m + k]);
        let tc = cache.tanh_c[k];
        let d_o = dh[k] * tc;
        let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
        let d_i = dc_total * cand;
        let d_g = dc_total * i;
        let d_f = dc_total * cache.c_prev[k];
        dc_prev[k] = dc_total * f;
        dz[k] = d_i * i * (1.0 - i);
        dz[m + k] = d_f * f * (1.0 - f);
        dz[2 * m + k] = d_g * (1.0 - cand * cand);
        dz[3 * m + k] = d_o * o * (1.0 - o);
    }
    outer_acc(&mut grads.w_ih.values, &dz, &cache.x);
    outer_acc(&mut grads.w_hh.values, &dz, &cache.h_prev);
    for (gb, d) in grads.bias.values.iter_mut().zip(&dz) {
        *gb += d;
    }
    let mut dh_prev = vec![0.0; m];
    matvec_t_acc(&params.w_hh.values, 4 * m, m, &dz, &mut dh_prev);
    Ok((dh_prev, dc_prev))
}

/// Folds the cell over `clips` (flat, row-major by clip, `dim` wide) from a
/// zero state and returns the final hidden state.
pub fn lstm_sequence_forward(
    params: &LstmParams<'_>,
    clips: &[f64],
    dim: usize,
) -> Result<(Vec<f64>, LstmSequenceCache)> {
    let (m, d) = params.dims()?;
    if dim != d {
        return Err(Error::shape("clip dimension", d, dim));
    }
    if clips.is_empty() {
        return Err(Error::EmptyInput("lstm sequence has no clips"));
    }
    if !clips.len().is_multiple_of(d) {
        return Err(Error::shape("flat clip buffer", format!("multiple of {d}"), clips.len()));
    }
    let mut h = vec![0.0; m];
    let mut c = vec![0.0; m];
    let mut cache = LstmSequenceCache {
        steps: Vec::with_capacity(clips.len() / d),
    };
    for x in clips.chunks_exact(d) {
        let (h_next, c_next, step) = lstm_cell_forward(params, x, &h, &c)?;
        h = h_next;
        c = c_next;
        cache.steps.push(step);
    }
    Ok((h, cache))
}

/// Backpropagation through time from a gradient on the final hidden state.
pub fn lstm_sequence_backward(
    params: &LstmParams<'_>,
    cache: &LstmSequenceCache,
    d_out: &[f64],
    grads: &mut LstmGrads<'_>,
) -> Result<()> {
    if cache.steps.is_empty() {
        return Err(Error::State("lstm backward called without a forward pass"));
    }
    let mut dh = d_out.to_vec();
    let mut dc = vec![0.0; dh.len()];
    for step in cache.steps.iter().rev() {
        let (dh_prev, dc_prev) = lstm_cell_backward(params, step, &dh, &dc, grads)?;
        dh = dh_prev;
        dc = dc_prev;
    }
    Ok(())
}
