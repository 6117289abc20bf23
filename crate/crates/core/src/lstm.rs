//! Classic LSTM cell with an affine prediction head and full BPTT.
//!
//! The gate pre-activations are `u = W·[h_{t-1}; x_t] + b`. The stochastic
//! variant reuses this module, substituting a quantizer on `u` during the
//! forward pass and a straight-through mask during the backward pass.

use serde::{Deserialize, Serialize};

use crate::cell::{
    combine, combine_backward, concat_hidden_input, CellState, GateActivations, PerGate,
};
use crate::error::{ensure_len, Error, Result};
use crate::math::{mat_vec_mac, Matrix, Prng};
use crate::params::ParamSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// Gate weights, `hidden × (hidden + input)`, ordered forget, input, candidate, output.
    pub w: PerGate<Matrix>,
    pub b: PerGate<Vec<f64>>,
    pub w_y: Matrix,
    pub b_y: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        let fan_in = hidden_dim + input_dim;
        LstmParams {
            input_dim,
            hidden_dim,
            output_dim,
            w: std::array::from_fn(|_| Matrix::zeros(hidden_dim, fan_in)),
            b: std::array::from_fn(|_| vec![0.0; hidden_dim]),
            w_y: Matrix::zeros(output_dim, hidden_dim),
            b_y: vec![0.0; output_dim],
        }
    }

    /// Weights uniform on `±1/√(hidden + input)`, biases zero.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut Prng,
    ) -> Result<Self> {
        for (field, d) in [
            ("input_dim", input_dim),
            ("hidden_dim", hidden_dim),
            ("output_dim", output_dim),
        ] {
            if d == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        let fan_in = hidden_dim + input_dim;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut p = LstmParams::zeros(input_dim, hidden_dim, output_dim);
        for w in p.w.iter_mut() {
            *w = Matrix::uniform(hidden_dim, fan_in, bound, rng);
        }
        p.w_y = Matrix::uniform(output_dim, hidden_dim, bound, rng);
        Ok(p)
    }

    fn check_input(&self, x: &[f64], prev: &CellState) -> Result<()> {
        ensure_len("lstm input", self.input_dim, x.len())?;
        ensure_len("lstm prev.h", self.hidden_dim, prev.h.len())?;
        ensure_len("lstm prev.c", self.hidden_dim, prev.c.len())
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.w.iter().map(Matrix::as_slice).collect();
        out.extend(self.b.iter().map(Vec::as_slice));
        out.push(self.w_y.as_slice());
        out.push(&self.b_y);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.w.iter_mut().map(Matrix::as_mut_slice).collect();
        out.extend(self.b.iter_mut().map(Vec::as_mut_slice));
        out.push(self.w_y.as_mut_slice());
        out.push(&mut self.b_y);
        out
    }
}

/// Everything one forward step leaves behind for BPTT.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub v: Vec<f64>,
    /// MAC outputs `u` before any quantization.
    pub raw: PerGate<Vec<f64>>,
    /// Values fed to the activations (`û`; equal to `raw` for the classic cell).
    pub used: PerGate<Vec<f64>>,
    pub acts: GateActivations,
    pub c_prev: Vec<f64>,
    pub state: CellState,
}

#[derive(Clone, Debug)]
pub struct SequenceCache {
    pub steps: Vec<StepRecord>,
}

impl SequenceCache {
    pub fn final_state(&self) -> &CellState {
        &self.steps.last().expect("cache holds at least one step").state
    }
}

/// One step with an arbitrary transform applied to each pre-activation vector.
pub(crate) fn cell_forward_with<Q>(
    p: &LstmParams,
    x: &[f64],
    prev: &CellState,
    mut quantize: Q,
) -> Result<(CellState, StepRecord)>
where
    Q: FnMut(&[f64]) -> Vec<f64>,
{
    p.check_input(x, prev)?;
    let v = concat_hidden_input(&prev.h, x);
    let raw: PerGate<Vec<f64>> = [
        mat_vec_mac(&p.w[0], &v, &p.b[0])?,
        mat_vec_mac(&p.w[1], &v, &p.b[1])?,
        mat_vec_mac(&p.w[2], &v, &p.b[2])?,
        mat_vec_mac(&p.w[3], &v, &p.b[3])?,
    ];
    let used: PerGate<Vec<f64>> = std::array::from_fn(|g| quantize(&raw[g]));
    let acts = GateActivations::from_preactivations(&used);
    let state = combine(&acts, &prev.c)?;
    let record = StepRecord {
        v,
        raw,
        used,
        acts,
        c_prev: prev.c.clone(),
        state: state.clone(),
    };
    Ok((state, record))
}

pub(crate) fn sequence_forward_with<Q>(
    p: &LstmParams,
    window: &[Vec<f64>],
    mut quantize: Q,
) -> Result<(Vec<f64>, SequenceCache)>
where
    Q: FnMut(&[f64]) -> Vec<f64>,
{
    if window.is_empty() {
        return Err(Error::Degenerate("empty input window"));
    }
    let mut state = CellState::zeros(p.hidden_dim);
    let mut steps = Vec::with_capacity(window.len());
    for x in window {
        let (next, record) = cell_forward_with(p, x, &state, &mut quantize)?;
        steps.push(record);
        state = next;
    }
    let prediction = mat_vec_mac(&p.w_y, &state.h, &p.b_y)?;
    Ok((prediction, SequenceCache { steps }))
}

/// BPTT where `pass_through(raw)` scales the gradient reaching each raw
/// pre-activation (1 everywhere for the classic cell).
pub(crate) fn sequence_backward_with<M>(
    p: &LstmParams,
    cache: &SequenceCache,
    d_prediction: &[f64],
    pass_through: M,
) -> Result<LstmParams>
where
    M: Fn(f64) -> f64,
{
    ensure_len("backward: d_prediction", p.output_dim, d_prediction.len())?;
    if cache.steps.is_empty() {
        return Err(Error::Degenerate("empty forward cache"));
    }
    let fan_in = p.hidden_dim + p.input_dim;
    for step in &cache.steps {
        ensure_len("backward: cached v", fan_in, step.v.len())?;
        ensure_len("backward: cached c", p.hidden_dim, step.state.c.len())?;
    }

    let mut grad = p.zeros_like();
    let h_last = &cache.final_state().h;
    grad.w_y.add_outer(d_prediction, h_last);
    grad.b_y.copy_from_slice(d_prediction);

    let mut dh = p.w_y.transpose_mul(d_prediction)?;
    let mut dc = vec![0.0; p.hidden_dim];
    for step in cache.steps.iter().rev() {
        let (mut d_pre, dc_prev) =
            combine_backward(&step.acts, &step.c_prev, &step.state.c, &dh, &dc);
        let mut dv = vec![0.0; fan_in];
        for g in 0..4 {
            for (d, &raw) in d_pre[g].iter_mut().zip(&step.raw[g]) {
                *d *= pass_through(raw);
            }
            grad.w[g].add_outer(&d_pre[g], &step.v);
            for (b, d) in grad.b[g].iter_mut().zip(&d_pre[g]) {
                *b += d;
            }
            for (acc, x) in dv.iter_mut().zip(p.w[g].transpose_mul(&d_pre[g])?) {
                *acc += x;
            }
        }
        dh = dv[..p.hidden_dim].to_vec();
        dc = dc_prev;
    }
    Ok(grad)
}

pub fn lstm_cell_forward(
    p: &LstmParams,
    x: &[f64],
    prev: &CellState,
) -> Result<(CellState, StepRecord)> {
    cell_forward_with(p, x, prev, <[f64]>::to_vec)
}

/// Unrolls the cell over `window` from a zero state and applies the head to the
/// final hidden state.
pub fn sequence_forward(p: &LstmParams, window: &[Vec<f64>]) -> Result<(Vec<f64>, SequenceCache)> {
    sequence_forward_with(p, window, <[f64]>::to_vec)
}

/// Gradient of `prediction · d_prediction` with respect to every parameter.
pub fn sequence_backward(
    p: &LstmParams,
    cache: &SequenceCache,
    d_prediction: &[f64],
) -> Result<LstmParams> {
    sequence_backward_with(p, cache, d_prediction, |_| 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{finite_diff_grad, sigmoid, FD_STEP};

    fn random_params(seed: u64, input: usize, hidden: usize, scale: f64) -> LstmParams {
        let mut rng = Prng::seed_from_u64(seed);
        let mut p = LstmParams::init(input, hidden, 1, &mut rng).unwrap();
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = (rng.uniform() * 2.0 - 1.0) * scale;
            }
        }
        p
    }

    fn random_window(seed: u64, len: usize, input: usize) -> Vec<Vec<f64>> {
        let mut rng = Prng::seed_from_u64(seed ^ 0xABCD);
        (0..len)
            .map(|_| (0..input).map(|_| rng.uniform() * 2.0 - 1.0).collect())
            .collect()
    }

    /// Eq.-by-eq. scalar loop, independent of the vectorized path.
    fn scalar_cell(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = p.hidden_dim;
        let mut v = h.to_vec();
        v.extend_from_slice(x);
        let mut h_out = vec![0.0; n];
        let mut c_out = vec![0.0; n];
        for k in 0..n {
            let mut u = [0.0; 4];
            for g in 0..4 {
                let mut acc = p.b[g][k];
                for j in 0..v.len() {
                    acc += p.w[g].get(k, j) * v[j];
                }
                u[g] = acc;
            }
            let f = sigmoid(u[0]);
            let i = sigmoid(u[1]);
            let cand = u[2].tanh();
            let o = sigmoid(u[3]);
            c_out[k] = f * c[k] + i * cand;
            h_out[k] = o * c_out[k].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn init_shapes_and_bounds() {
        let mut rng = Prng::seed_from_u64(1);
        let p = LstmParams::init(1, 5, 1, &mut rng).unwrap();
        assert_eq!((p.w[0].rows(), p.w[0].cols()), (5, 6));
        assert_eq!((p.w_y.rows(), p.w_y.cols()), (1, 5));
        assert!(p.b.iter().all(|b| b.iter().all(|&x| x == 0.0)));

        let q = LstmParams::init(1, 5, 1, &mut Prng::seed_from_u64(1)).unwrap();
        assert_eq!(p, q);

        let tiny = LstmParams::init(1, 1, 1, &mut Prng::seed_from_u64(5)).unwrap();
        let bound = 1.0 / 2.0_f64.sqrt();
        let weights: Vec<f64> = tiny.w.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        assert_eq!(weights.len(), 8);
        assert!(weights.iter().all(|w| w.abs() <= bound));
        assert!(tiny.w_y.as_slice()[0].abs() <= bound);

        assert!(LstmParams::init(0, 5, 1, &mut rng).is_err());
    }

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(1, 3, 1);
        let (s, rec) = lstm_cell_forward(&p, &[0.7], &CellState::zeros(3)).unwrap();
        assert_eq!(rec.acts.forget, vec![0.5; 3]);
        assert_eq!(rec.acts.input, vec![0.5; 3]);
        assert_eq!(rec.acts.output, vec![0.5; 3]);
        assert_eq!(rec.acts.candidate, vec![0.0; 3]);
        assert_eq!(s.c, vec![0.0; 3]);
        assert_eq!(s.h, vec![0.0; 3]);
    }

    #[test]
    fn zero_params_decay_cell_state() {
        let p = LstmParams::zeros(1, 2, 1);
        let prev = CellState {
            h: vec![0.0; 2],
            c: vec![1.0, 1.0],
        };
        let (s, _) = lstm_cell_forward(&p, &[2.0], &prev).unwrap();
        assert_eq!(s.c, vec![0.5, 0.5]);
        assert_eq!(s.h, vec![0.5 * 0.5_f64.tanh(); 2]);
    }

    #[test]
    fn cell_matches_scalar_oracle() {
        for seed in 0..5 {
            let p = random_params(seed, 2, 4, 1.5);
            let prev = CellState {
                h: vec![0.1, -0.4, 0.3, 0.9],
                c: vec![1.2, -0.7, 0.0, 2.0],
            };
            let x = [0.5, -1.5];
            let (s, _) = lstm_cell_forward(&p, &x, &prev).unwrap();
            let (h, c) = scalar_cell(&p, &x, &prev.h, &prev.c);
            for k in 0..4 {
                assert!((s.h[k] - h[k]).abs() < 1e-12);
                assert!((s.c[k] - c[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = LstmParams::zeros(1, 3, 1);
        assert!(lstm_cell_forward(&p, &[1.0, 2.0], &CellState::zeros(3)).is_err());
        assert!(lstm_cell_forward(&p, &[1.0], &CellState::zeros(2)).is_err());
        assert!(matches!(sequence_forward(&p, &[]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_params_predict_bias() {
        let mut p = LstmParams::zeros(1, 3, 1);
        p.b_y = vec![0.25];
        let (y, _) = sequence_forward(&p, &random_window(1, 6, 1)).unwrap();
        assert_eq!(y, vec![0.25]);
    }

    #[test]
    fn single_step_window_is_cell_plus_head() {
        let p = random_params(2, 1, 3, 1.0);
        let (y, _) = sequence_forward(&p, &[vec![0.4]]).unwrap();
        let (s, _) = lstm_cell_forward(&p, &[0.4], &CellState::zeros(3)).unwrap();
        assert_eq!(y, mat_vec_mac(&p.w_y, &s.h, &p.b_y).unwrap());
    }

    #[test]
    fn four_step_unroll_matches_manual_oracle() {
        let p = random_params(3, 1, 3, 1.0);
        let window = random_window(3, 4, 1);
        let (y, _) = sequence_forward(&p, &window).unwrap();
        let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
        for x in &window {
            let next = scalar_cell(&p, x, &h, &c);
            h = next.0;
            c = next.1;
        }
        let manual: f64 = p.b_y[0] + (0..3).map(|k| p.w_y.get(0, k) * h[k]).sum::<f64>();
        assert!((y[0] - manual).abs() < 1e-12);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let p = random_params(4, 1, 5, 1.0);
        let window = random_window(4, 4, 1);
        let (a, _) = sequence_forward(&p, &window).unwrap();
        let (b, _) = sequence_forward(&p, &window).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn backward_trivial_cases() {
        let p = random_params(5, 1, 3, 1.0);
        let (_, cache) = sequence_forward(&p, &random_window(5, 4, 1)).unwrap();
        let g = sequence_backward(&p, &cache, &[0.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let g = sequence_backward(&p, &cache, &[0.37]).unwrap();
        assert_eq!(g.b_y, vec![0.37]);
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let small = random_params(6, 1, 2, 1.0);
        let big = random_params(6, 1, 3, 1.0);
        let (_, cache) = sequence_forward(&small, &random_window(6, 3, 1)).unwrap();
        assert!(sequence_backward(&big, &cache, &[1.0]).is_err());
        assert!(sequence_backward(&small, &cache, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..20 {
            let p = random_params(100 + seed, 1, 3, 1.0);
            let window = random_window(100 + seed, 4, 1);
            let (_, cache) = sequence_forward(&p, &window).unwrap();
            let grad = sequence_backward(&p, &cache, &[1.0]).unwrap().flatten();
            let mut probe = p.clone();
            let fd = finite_diff_grad(
                |flat| {
                    probe.assign_flat(flat);
                    sequence_forward(&probe, &window).unwrap().0[0]
                },
                &p.flatten(),
                FD_STEP,
            )
            .unwrap();
            for (a, e) in grad.iter().zip(&fd) {
                let tol = 1e-6_f64.max(1e-4 * e.abs());
                assert!((a - e).abs() <= tol, "seed {seed}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn hidden_state_stays_bounded() {
        let p = random_params(7, 1, 5, 4.0);
        let window: Vec<Vec<f64>> = (0..20).map(|k| vec![(k as f64) * 3.0 - 30.0]).collect();
        let (_, cache) = sequence_forward(&p, &window).unwrap();
        for s in &cache.steps {
            assert!(s.state.h.iter().all(|h| h.abs() < 1.0));
            assert!(s.acts.forget.iter().all(|f| (0.0..=1.0).contains(f)));
            assert!(s.acts.candidate.iter().all(|g| g.abs() <= 1.0));
        }
    }
}
