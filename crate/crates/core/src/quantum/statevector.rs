//! Dense statevector with single-qubit gates, CNOT, and Pauli-Z readout.
//!
//! Qubit 0 is the most significant bit of the basis-state index.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::Prng;

/// Tolerance on `Σ|αᵢ|² = 1`.
pub const NORM_TOLERANCE: f64 = 1e-10;
const UNITARY_TOLERANCE: f64 = 1e-10;

/// A 2×2 complex matrix, row-major.
pub type Gate = [[Complex64; 2]; 2];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity() -> Gate {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}

pub fn hadamard() -> Gate {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]]
}

/// `[[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`
pub fn ry(theta: f64) -> Gate {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
}

/// `diag(e^{−iθ/2}, e^{iθ/2})`
pub fn rz(theta: f64) -> Gate {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co, -s), c(0.0, 0.0)], [c(0.0, 0.0), c(co, s)]]
}

pub fn matmul(a: &Gate, b: &Gate) -> Gate {
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// General rotation `R(α, β, γ) = R_z(γ)·R_y(β)·R_z(α)`.
pub fn rot(alpha: f64, beta: f64, gamma: f64) -> Gate {
    matmul(&rz(gamma), &matmul(&ry(beta), &rz(alpha)))
}

fn unitarity_defect(g: &Gate) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            let entry = g[0][i].conj() * g[0][j] + g[1][i].conj() * g[1][j];
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((entry - c(target, 0.0)).norm());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// `|0…0⟩`
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![c(0.0, 0.0); 1 << n_qubits];
        amps[0] = c(1.0, 0.0);
        Statevector { n_qubits, amps }
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if index >= 1 << n_qubits {
            return Err(Error::shape("Statevector::basis", 1 << n_qubits, index));
        }
        let mut s = Statevector::zero(n_qubits);
        s.amps[0] = c(0.0, 0.0);
        s.amps[index] = c(1.0, 0.0);
        Ok(s)
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        if amps.is_empty() || amps.len() != 1 << n_qubits {
            return Err(Error::Degenerate("amplitude count must be a power of two"));
        }
        let s = Statevector { n_qubits, amps };
        s.check_normalized()?;
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    fn check_normalized(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Unnormalized(n));
        }
        Ok(())
    }

    fn mask(&self, q: usize) -> Result<usize> {
        if q >= self.n_qubits {
            return Err(Error::QubitIndex {
                index: q,
                n_qubits: self.n_qubits,
            });
        }
        Ok(1 << (self.n_qubits - 1 - q))
    }

    /// Applies a 2×2 unitary to qubit `q`.
    pub fn apply_1q_gate(&mut self, g: &Gate, q: usize) -> Result<()> {
        let defect = unitarity_defect(g);
        if defect > UNITARY_TOLERANCE {
            return Err(Error::NonUnitary(defect));
        }
        let mask = self.mask(q)?;
        for i in 0..self.amps.len() {
            if i & mask != 0 {
                continue;
            }
            let j = i | mask;
            let (a0, a1) = (self.amps[i], self.amps[j]);
            self.amps[i] = g[0][0] * a0 + g[0][1] * a1;
            self.amps[j] = g[1][0] * a0 + g[1][1] * a1;
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        if control == target {
            return Err(Error::config("cnot", "control and target must differ"));
        }
        let cm = self.mask(control)?;
        let tm = self.mask(target)?;
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
        Ok(())
    }

    /// Exact `⟨Zᵢ⟩` for every qubit.
    pub fn pauli_z_expectations(&self) -> Result<Vec<f64>> {
        self.check_normalized()?;
        let mut out = vec![0.0; self.n_qubits];
        for (idx, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, e) in out.iter_mut().enumerate() {
                if idx & (1 << (self.n_qubits - 1 - q)) == 0 {
                    *e += p;
                } else {
                    *e -= p;
                }
            }
        }
        Ok(out)
    }

    /// Born-rule sampling: per-qubit mean of `+1` (bit 0) / `−1` (bit 1) over
    /// `shots` measured basis states.
    pub fn sample_measurement(&self, shots: u32, rng: &mut Prng) -> Result<Vec<f64>> {
        if shots == 0 {
            return Err(Error::config("shots", "must be at least 1"));
        }
        let mut cumulative = Vec::with_capacity(self.amps.len());
        let mut acc = 0.0;
        for a in &self.amps {
            acc += a.norm_sqr();
            cumulative.push(acc);
        }
        let last = self.amps.len() - 1;
        let mut counts = vec![0i64; self.n_qubits];
        for _ in 0..shots {
            let u = rng.uniform() * acc;
            let idx = cumulative.partition_point(|&c| c <= u).min(last);
            for (q, n) in counts.iter_mut().enumerate() {
                if idx & (1 << (self.n_qubits - 1 - q)) == 0 {
                    *n += 1;
                } else {
                    *n -= 1;
                }
            }
        }
        Ok(counts
            .into_iter()
            .map(|n| n as f64 / shots as f64)
            .collect())
    }
}
