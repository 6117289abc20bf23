//! Classic, quantum, and quantum-inspired stochastic LSTM cells, trained and
//! compared on synthetic time-series forecasting tasks.
//!
//! - [`lstm`]: the classic cell with BPTT.
//! - [`stochastic`]: stochastic rounding of gate MAC outputs.
//! - [`quantum`] and [`qlstm`]: a statevector-simulated variational circuit
//!   per gate, trained with parameter-shift gradients.
//! - [`datasets`], [`train`], [`harness`]: the benchmark pipeline.

pub mod cell;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod lstm;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod params;
pub mod qlstm;
pub mod quantum;
pub mod stochastic;
pub mod train;

pub use error::{Error, Result};
pub use par::Execution;
