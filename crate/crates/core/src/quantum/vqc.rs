//! The gate circuit used inside each quantum LSTM gate.
//!
//! Layout: Hadamard on every qubit, then `R_y(atan xᵢ)` and `R_z(atan xᵢ²)`
//! per qubit, then `depth` variational layers (CNOT ring of stride 1, CNOT ring
//! of stride 2, and a general rotation `R(α, β, γ)` per qubit), then a Pauli-Z
//! readout of every qubit, either exact or shot-sampled.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::statevector::{hadamard, rot, ry, rz, Statevector};
use crate::error::{ensure_len, Error, Result};
use crate::math::Prng;
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpectationMode {
    Analytic,
    Shots(u32),
}

impl ExpectationMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExpectationMode::Shots(0) => Err(Error::config("shots", "must be at least 1")),
            _ => Ok(()),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, ExpectationMode::Shots(_))
    }
}

/// Rotation angles, laid out `[layer][qubit][α, β, γ]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqcParams {
    pub n_qubits: usize,
    pub depth: usize,
    pub angles: Vec<f64>,
}

impl VqcParams {
    pub fn zeros(n_qubits: usize, depth: usize) -> Self {
        VqcParams {
            n_qubits,
            depth,
            angles: vec![0.0; depth * n_qubits * 3],
        }
    }

    /// Angles uniform on `[−π, π)`.
    pub fn init(n_qubits: usize, depth: usize, rng: &mut Prng) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::config("n_qubits", "must be at least 1"));
        }
        if depth == 0 {
            return Err(Error::config("depth", "must be at least 1"));
        }
        let angles = (0..depth * n_qubits * 3)
            .map(|_| (2.0 * rng.uniform() - 1.0) * PI)
            .collect();
        Ok(VqcParams {
            n_qubits,
            depth,
            angles,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth", "must be at least 1"));
        }
        ensure_len(
            "VqcParams angles",
            self.depth * self.n_qubits * 3,
            self.angles.len(),
        )
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        let width = self.n_qubits * 3;
        &self.angles[l * width..(l + 1) * width]
    }
}

impl ParamSet for VqcParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.angles]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.angles]
    }
}

/// Per-qubit `(R_y angle, R_z angle)` for input `x`.
fn encoding_angles(x: &[f64]) -> Vec<[f64; 2]> {
    x.iter().map(|&xi| [xi.atan(), (xi * xi).atan()]).collect()
}

fn encode_angles(s: &mut Statevector, enc: &[[f64; 2]]) -> Result<()> {
    for (q, [a, b]) in enc.iter().enumerate() {
        s.apply_1q_gate(&hadamard(), q)?;
        s.apply_1q_gate(&ry(*a), q)?;
        s.apply_1q_gate(&rz(*b), q)?;
    }
    Ok(())
}

/// Hadamard, `R_y(atan xᵢ)`, `R_z(atan xᵢ²)` on every qubit of `s`.
pub fn encode_input(s: &mut Statevector, x: &[f64]) -> Result<()> {
    ensure_len("encode_input", s.n_qubits(), x.len())?;
    encode_angles(s, &encoding_angles(x))
}

fn cnot_ring(s: &mut Statevector, stride: usize) -> Result<()> {
    let n = s.n_qubits();
    for control in 0..n {
        let target = (control + stride) % n;
        if target != control {
            s.apply_cnot(control, target)?;
        }
    }
    Ok(())
}

/// Two CNOT rings (strides 1 and 2), then `R(αᵢ, βᵢ, γᵢ)` on each qubit.
///
/// Ring links that would connect a qubit to itself are dropped, so a two-qubit
/// register gets only the stride-1 ring.
pub fn variational_layer(s: &mut Statevector, layer_angles: &[f64]) -> Result<()> {
    ensure_len("variational_layer angles", s.n_qubits() * 3, layer_angles.len())?;
    cnot_ring(s, 1)?;
    cnot_ring(s, 2)?;
    for (q, abc) in layer_angles.chunks_exact(3).enumerate() {
        s.apply_1q_gate(&rot(abc[0], abc[1], abc[2]), q)?;
    }
    Ok(())
}

fn run(
    enc: &[[f64; 2]],
    p: &VqcParams,
    mode: ExpectationMode,
    rng: &mut Prng,
) -> Result<Vec<f64>> {
    let mut s = Statevector::zero(p.n_qubits);
    encode_angles(&mut s, enc)?;
    for l in 0..p.depth {
        variational_layer(&mut s, p.layer(l))?;
    }
    match mode {
        ExpectationMode::Analytic => s.pauli_z_expectations(),
        ExpectationMode::Shots(k) => s.sample_measurement(k, rng),
    }
}

/// Per-qubit `⟨Z⟩` of the full circuit on input `x`.
///
/// `rng` is only drawn from in shot mode.
pub fn vqc_forward(
    x: &[f64],
    p: &VqcParams,
    mode: ExpectationMode,
    rng: &mut Prng,
) -> Result<Vec<f64>> {
    p.validate()?;
    mode.validate()?;
    ensure_len("vqc_forward input", p.n_qubits, x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vqc_forward input"));
    }
    run(&encoding_angles(x), p, mode, rng)
}

/// `(f(θ + π/2) − f(θ − π/2)) / 2`, exact for any gate `e^{−iθP/2}` with `P` a Pauli.
pub fn shift_rule<F: FnMut(f64) -> f64>(mut f: F, theta: f64) -> f64 {
    (f(theta + FRAC_PI_2) - f(theta - FRAC_PI_2)) / 2.0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of `d_out · vqc_forward(x, p)` with respect to every rotation angle
/// and every input component, by the parameter-shift rule.
///
/// Input gradients shift the two encoding angles separately and chain through
/// `d atan(x)/dx = 1/(1+x²)` and `d atan(x²)/dx = 2x/(1+x⁴)`. In shot mode every
/// shifted circuit is sampled with the same shot count as the forward pass.
pub fn parameter_shift_grad(
    x: &[f64],
    p: &VqcParams,
    mode: ExpectationMode,
    d_out: &[f64],
    rng: &mut Prng,
) -> Result<(VqcParams, Vec<f64>)> {
    p.validate()?;
    mode.validate()?;
    ensure_len("parameter_shift_grad input", p.n_qubits, x.len())?;
    ensure_len("parameter_shift_grad d_out", p.n_qubits, d_out.len())?;

    let enc = encoding_angles(x);
    let mut grad = p.zeros_like();
    let mut shifted = p.clone();
    for k in 0..p.angles.len() {
        let theta = p.angles[k];
        let mut err = None;
        let g = shift_rule(
            |t| {
                shifted.angles[k] = t;
                match run(&enc, &shifted, mode, rng) {
                    Ok(e) => dot(&e, d_out),
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            },
            theta,
        );
        shifted.angles[k] = theta;
        if let Some(e) = err {
            return Err(e);
        }
        grad.angles[k] = g;
    }

    let mut dx = vec![0.0; x.len()];
    let mut enc_shifted = enc.clone();
    for q in 0..x.len() {
        let mut partial = [0.0; 2];
        for (which, slot) in partial.iter_mut().enumerate() {
            let angle = enc[q][which];
            let mut err = None;
            *slot = shift_rule(
                |t| {
                    enc_shifted[q][which] = t;
                    match run(&enc_shifted, p, mode, rng) {
                        Ok(e) => dot(&e, d_out),
                        Err(e) => {
                            err = Some(e);
                            0.0
                        }
                    }
                },
                angle,
            );
            enc_shifted[q][which] = angle;
            if let Some(e) = err {
                return Err(e);
            }
        }
        let xi = x[q];
        dx[q] = partial[0] / (1.0 + xi * xi) + partial[1] * 2.0 * xi / (1.0 + xi.powi(4));
    }
    Ok((grad, dx))
}
