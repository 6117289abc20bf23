//! Quantum LSTM: one variational circuit per gate in place of the gate MACs.
//!
//! The hidden/input concatenation `v` (dimension `hidden + input`) is mapped to
//! the qubit register by a shared affine input projection, each gate's circuit
//! produces `n_qubits` Pauli-Z expectations, and a per-gate affine output
//! projection lifts those back to `hidden` pre-activations.
//!
//! ```text
//! z   = P_in·[h_{t-1}; x_t] + b_in
//! e_g = VQC(z; θ_g)                 g ∈ {f, i, C̃, o}
//! u_g = P_out_g·e_g + b_out_g
//! ```
//!
//! The state update from `u_g` onwards is the classic one.

use serde::{Deserialize, Serialize};

use crate::cell::{
    combine, combine_backward, concat_hidden_input, CellState, GateActivations, PerGate,
};
use crate::error::{ensure_len, Error, Result};
use crate::math::{mat_vec_mac, Matrix, Prng};
use crate::params::ParamSet;
use crate::quantum::{parameter_shift_grad, vqc_forward, ExpectationMode, VqcParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QlstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub n_qubits: usize,
    pub theta: PerGate<VqcParams>,
    /// `n_qubits × (hidden + input)`
    pub p_in: Matrix,
    pub b_in: Vec<f64>,
    /// `hidden × n_qubits`, one per gate.
    pub p_out: PerGate<Matrix>,
    pub b_out: PerGate<Vec<f64>>,
    pub w_y: Matrix,
    pub b_y: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QlstmDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub n_qubits: usize,
    pub depth: usize,
}

impl Default for QlstmDims {
    fn default() -> Self {
        QlstmDims {
            input_dim: 1,
            hidden_dim: 5,
            output_dim: 1,
            n_qubits: 4,
            depth: 1,
        }
    }
}

impl QlstmParams {
    pub fn zeros(dims: QlstmDims) -> Self {
        let fan_in = dims.hidden_dim + dims.input_dim;
        QlstmParams {
            input_dim: dims.input_dim,
            hidden_dim: dims.hidden_dim,
            output_dim: dims.output_dim,
            n_qubits: dims.n_qubits,
            theta: std::array::from_fn(|_| VqcParams::zeros(dims.n_qubits, dims.depth)),
            p_in: Matrix::zeros(dims.n_qubits, fan_in),
            b_in: vec![0.0; dims.n_qubits],
            p_out: std::array::from_fn(|_| Matrix::zeros(dims.hidden_dim, dims.n_qubits)),
            b_out: std::array::from_fn(|_| vec![0.0; dims.hidden_dim]),
            w_y: Matrix::zeros(dims.output_dim, dims.hidden_dim),
            b_y: vec![0.0; dims.output_dim],
        }
    }

    /// Circuit angles uniform on `[−π, π)`; each affine map uniform on
    /// `±1/√fan_in` with zero bias.
    pub fn init(dims: QlstmDims, rng: &mut Prng) -> Result<Self> {
        for (field, d) in [
            ("input_dim", dims.input_dim),
            ("hidden_dim", dims.hidden_dim),
            ("output_dim", dims.output_dim),
            ("n_qubits", dims.n_qubits),
            ("depth", dims.depth),
        ] {
            if d == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        let mut p = QlstmParams::zeros(dims);
        for t in p.theta.iter_mut() {
            *t = VqcParams::init(dims.n_qubits, dims.depth, rng)?;
        }
        let fan_in = dims.hidden_dim + dims.input_dim;
        p.p_in = Matrix::uniform(dims.n_qubits, fan_in, 1.0 / (fan_in as f64).sqrt(), rng);
        let out_bound = 1.0 / (dims.n_qubits as f64).sqrt();
        for m in p.p_out.iter_mut() {
            *m = Matrix::uniform(dims.hidden_dim, dims.n_qubits, out_bound, rng);
        }
        p.w_y = Matrix::uniform(
            dims.output_dim,
            dims.hidden_dim,
            1.0 / (dims.hidden_dim as f64).sqrt(),
            rng,
        );
        Ok(p)
    }
}

impl ParamSet for QlstmParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.theta.iter().map(|t| t.angles.as_slice()).collect();
        out.push(self.p_in.as_slice());
        out.push(&self.b_in);
        out.extend(self.p_out.iter().map(Matrix::as_slice));
        out.extend(self.b_out.iter().map(Vec::as_slice));
        out.push(self.w_y.as_slice());
        out.push(&self.b_y);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .theta
            .iter_mut()
            .map(|t| t.angles.as_mut_slice())
            .collect();
        out.push(self.p_in.as_mut_slice());
        out.push(&mut self.b_in);
        out.extend(self.p_out.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.b_out.iter_mut().map(Vec::as_mut_slice));
        out.push(self.w_y.as_mut_slice());
        out.push(&mut self.b_y);
        out
    }
}

#[derive(Clone, Debug)]
pub struct QlstmStep {
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    /// Circuit outputs per gate, each in `[−1, 1]`.
    pub e: PerGate<Vec<f64>>,
    pub u: PerGate<Vec<f64>>,
    pub acts: GateActivations,
    pub c_prev: Vec<f64>,
    pub state: CellState,
}

#[derive(Clone, Debug)]
pub struct QlstmCache {
    pub steps: Vec<QlstmStep>,
}

pub fn qlstm_cell_forward(
    p: &QlstmParams,
    x: &[f64],
    prev: &CellState,
    mode: ExpectationMode,
    rng: &mut Prng,
) -> Result<(CellState, QlstmStep)> {
    ensure_len("qlstm input", p.input_dim, x.len())?;
    ensure_len("qlstm prev.h", p.hidden_dim, prev.h.len())?;
    ensure_len("qlstm prev.c", p.hidden_dim, prev.c.len())?;
    let v = concat_hidden_input(&prev.h, x);
    let z = mat_vec_mac(&p.p_in, &v, &p.b_in)?;
    let mut e: PerGate<Vec<f64>> = Default::default();
    let mut u: PerGate<Vec<f64>> = Default::default();
    for g in 0..4 {
        e[g] = vqc_forward(&z, &p.theta[g], mode, rng)?;
        u[g] = mat_vec_mac(&p.p_out[g], &e[g], &p.b_out[g])?;
    }
    let acts = GateActivations::from_preactivations(&u);
    let state = combine(&acts, &prev.c)?;
    let step = QlstmStep {
        v,
        z,
        e,
        u,
        acts,
        c_prev: prev.c.clone(),
        state: state.clone(),
    };
    Ok((state, step))
}

pub fn qlstm_sequence_forward(
    p: &QlstmParams,
    window: &[Vec<f64>],
    mode: ExpectationMode,
    rng: &mut Prng,
) -> Result<(Vec<f64>, QlstmCache)> {
    if window.is_empty() {
        return Err(Error::Degenerate("empty input window"));
    }
    let mut state = CellState::zeros(p.hidden_dim);
    let mut steps = Vec::with_capacity(window.len());
    for x in window {
        let (next, step) = qlstm_cell_forward(p, x, &state, mode, rng)?;
        steps.push(step);
        state = next;
    }
    let prediction = mat_vec_mac(&p.w_y, &state.h, &p.b_y)?;
    Ok((prediction, QlstmCache { steps }))
}

/// Hybrid BPTT: exact reverse mode through every affine map and the state
/// update, parameter-shift gradients through each circuit.
///
/// In shot mode the shifted circuits draw from `rng` with the forward shot count.
pub fn qlstm_sequence_backward(
    p: &QlstmParams,
    cache: &QlstmCache,
    d_prediction: &[f64],
    mode: ExpectationMode,
    rng: &mut Prng,
) -> Result<QlstmParams> {
    ensure_len("qlstm backward: d_prediction", p.output_dim, d_prediction.len())?;
    let last = cache
        .steps
        .last()
        .ok_or(Error::Degenerate("empty forward cache"))?;
    let fan_in = p.hidden_dim + p.input_dim;
    for step in &cache.steps {
        ensure_len("qlstm backward: cached v", fan_in, step.v.len())?;
        ensure_len("qlstm backward: cached z", p.n_qubits, step.z.len())?;
        ensure_len("qlstm backward: cached c", p.hidden_dim, step.state.c.len())?;
    }

    let mut grad = p.zeros_like();
    grad.w_y.add_outer(d_prediction, &last.state.h);
    grad.b_y.copy_from_slice(d_prediction);

    let mut dh = p.w_y.transpose_mul(d_prediction)?;
    let mut dc = vec![0.0; p.hidden_dim];
    for step in cache.steps.iter().rev() {
        let (du, dc_prev) = combine_backward(&step.acts, &step.c_prev, &step.state.c, &dh, &dc);
        let mut dz = vec![0.0; p.n_qubits];
        for g in 0..4 {
            grad.p_out[g].add_outer(&du[g], &step.e[g]);
            for (b, d) in grad.b_out[g].iter_mut().zip(&du[g]) {
                *b += d;
            }
            let de = p.p_out[g].transpose_mul(&du[g])?;
            let (d_theta, d_z) = parameter_shift_grad(&step.z, &p.theta[g], mode, &de, rng)?;
            grad.theta[g].add_assign(&d_theta);
            for (acc, d) in dz.iter_mut().zip(d_z) {
                *acc += d;
            }
        }
        grad.p_in.add_outer(&dz, &step.v);
        for (b, d) in grad.b_in.iter_mut().zip(&dz) {
            *b += d;
        }
        let dv = p.p_in.transpose_mul(&dz)?;
        dh = dv[..p.hidden_dim].to_vec();
        dc = dc_prev;
    }
    Ok(grad)
}
