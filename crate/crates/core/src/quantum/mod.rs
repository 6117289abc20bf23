//! Statevector simulation of the variational gate circuit.

mod statevector;
mod vqc;

pub use statevector::{
    hadamard, identity, matmul, rot, ry, rz, Gate, Statevector, NORM_TOLERANCE,
};
pub use vqc::{
    encode_input, parameter_shift_grad, shift_rule, variational_layer, vqc_forward,
    ExpectationMode, VqcParams,
};
