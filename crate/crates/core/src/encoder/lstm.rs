//! Single LSTM layer over a full sequence, with cached activations for BPTT.
//!
//! Gate rows are stacked as `[input, forget, cell, output]`, each `hidden` wide.

use super::ops::{gemv_add, gemv_t_add, outer_add, sigmoid};

pub(crate) struct LstmWeights<'a> {
    pub w_input: &'a [f64],
    pub w_recurrent: &'a [f64],
    pub bias: &'a [f64],
    pub input: usize,
    pub hidden: usize,
}

pub(crate) struct LstmGrads<'a> {
    pub w_input: &'a mut [f64],
    pub w_recurrent: &'a mut [f64],
    pub bias: &'a mut [f64],
}

/// Activations for every time step, row-major by time.
pub(crate) struct LstmCache {
    /// Post-activation gates `[i, f, g, o]`, `T x 4H`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    pub hidden: Vec<f64>,
    steps: usize,
}

pub(crate) fn forward(w: &LstmWeights<'_>, xs: &[f64]) -> LstmCache {
    let (n_in, h) = (w.input, w.hidden);
    let steps = xs.len() / n_in;
    let mut gates = vec![0.0; steps * 4 * h];
    let mut cells = vec![0.0; steps * h];
    let mut tanh_cells = vec![0.0; steps * h];
    let mut hidden = vec![0.0; steps * h];
    let zeros = vec![0.0; h];
    for t in 0..steps {
        let z = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        z.copy_from_slice(w.bias);
        gemv_add(z, w.w_input, &xs[t * n_in..(t + 1) * n_in]);
        let h_prev = if t == 0 {
            &zeros[..]
        } else {
            &hidden[(t - 1) * h..t * h]
        };
        gemv_add(z, w.w_recurrent, h_prev);
        for j in 0..h {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[h + j]);
            let g = z[2 * h + j].tanh();
            let o = sigmoid(z[3 * h + j]);
            z[j] = i;
            z[h + j] = f;
            z[2 * h + j] = g;
            z[3 * h + j] = o;
            let c_prev = if t == 0 { 0.0 } else { cells[(t - 1) * h + j] };
            let c = f * c_prev + i * g;
            let tc = c.tanh();
            cells[t * h + j] = c;
            tanh_cells[t * h + j] = tc;
            hidden[t * h + j] = o * tc;
        }
    }
    LstmCache {
        gates,
        cells,
        tanh_cells,
        hidden,
        steps,
    }
}

/// Backpropagates `d_hidden` (`T x H`, gradient w.r.t. every output) through
/// time. Accumulates into `grads` and returns the gradient w.r.t. `xs`.
pub(crate) fn backward(
    w: &LstmWeights<'_>,
    xs: &[f64],
    cache: &LstmCache,
    d_hidden: &[f64],
    grads: LstmGrads<'_>,
) -> Vec<f64> {
    let (n_in, h) = (w.input, w.hidden);
    let steps = cache.steps;
    let mut d_xs = vec![0.0; steps * n_in];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let zeros = vec![0.0; h];
    for t in (0..steps).rev() {
        let g = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        let c_prev = if t == 0 {
            &zeros[..]
        } else {
            &cache.cells[(t - 1) * h..t * h]
        };
        for j in 0..h {
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = cache.tanh_cells[t * h + j];
            let dh = d_hidden[t * h + j] + dh_next[j];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * gg * i * (1.0 - i);
            dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - gg * gg);
            dz[3 * h + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let x_t = &xs[t * n_in..(t + 1) * n_in];
        outer_add(grads.w_input, &dz, x_t);
        grads.bias.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
        gemv_t_add(&mut d_xs[t * n_in..(t + 1) * n_in], w.w_input, &dz);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        if t > 0 {
            outer_add(grads.w_recurrent, &dz, &cache.hidden[(t - 1) * h..t * h]);
            gemv_t_add(&mut dh_next, w.w_recurrent, &dz);
        }
    }
    d_xs
}
