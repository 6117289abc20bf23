//! Gate nonlinearities and the cell/hidden state update shared by every LSTM
//! variant. Variants differ only in how the four gate pre-activations are
//! produced.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Result};
use crate::math::sigmoid;

pub const FORGET: usize = 0;
pub const INPUT: usize = 1;
pub const CANDIDATE: usize = 2;
pub const OUTPUT: usize = 3;

/// One vector per gate, indexed by [`FORGET`], [`INPUT`], [`CANDIDATE`], [`OUTPUT`].
pub type PerGate<T> = [T; 4];

/// Hidden and cell state threaded between time steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden_dim: usize) -> Self {
        CellState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.h.len()
    }
}

/// `f`, `i`, `o` after the sigmoid and `C̃` after tanh.
#[derive(Clone, Debug, PartialEq)]
pub struct GateActivations {
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
}

impl GateActivations {
    pub fn from_preactivations(pre: &PerGate<Vec<f64>>) -> Self {
        let sig = |v: &Vec<f64>| v.iter().map(|&x| sigmoid(x)).collect();
        GateActivations {
            forget: sig(&pre[FORGET]),
            input: sig(&pre[INPUT]),
            candidate: pre[CANDIDATE].iter().map(|x| x.tanh()).collect(),
            output: sig(&pre[OUTPUT]),
        }
    }
}

/// `c = f∘c_prev + i∘C̃`, `h = o∘tanh(c)`.
pub fn combine(acts: &GateActivations, c_prev: &[f64]) -> Result<CellState> {
    ensure_len("combine: c_prev", acts.forget.len(), c_prev.len())?;
    let c: Vec<f64> = (0..c_prev.len())
        .map(|k| acts.forget[k] * c_prev[k] + acts.input[k] * acts.candidate[k])
        .collect();
    let h = c
        .iter()
        .zip(&acts.output)
        .map(|(ck, ok)| ok * ck.tanh())
        .collect();
    Ok(CellState { h, c })
}

/// Reverse of [`GateActivations::from_preactivations`] followed by [`combine`].
///
/// Given upstream gradients on `h` and `c`, returns the gradient on each gate
/// pre-activation and on `c_prev`.
pub fn combine_backward(
    acts: &GateActivations,
    c_prev: &[f64],
    c: &[f64],
    dh: &[f64],
    dc_in: &[f64],
) -> (PerGate<Vec<f64>>, Vec<f64>) {
    let n = c.len();
    let mut d_pre: PerGate<Vec<f64>> = std::array::from_fn(|_| vec![0.0; n]);
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let (f, i, g, o) = (
            acts.forget[k],
            acts.input[k],
            acts.candidate[k],
            acts.output[k],
        );
        let tc = c[k].tanh();
        let d_o = dh[k] * tc;
        let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
        d_pre[FORGET][k] = dc * c_prev[k] * f * (1.0 - f);
        d_pre[INPUT][k] = dc * g * i * (1.0 - i);
        d_pre[CANDIDATE][k] = dc * i * (1.0 - g * g);
        d_pre[OUTPUT][k] = d_o * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
    (d_pre, dc_prev)
}

/// `[h; x]`, hidden state first.
pub fn concat_hidden_input(h: &[f64], x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(h.len() + x.len());
    v.extend_from_slice(h);
    v.extend_from_slice(x);
    v
}
