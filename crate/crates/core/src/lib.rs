//! Simulator and learning harness for a dipolar-coupled nuclear-spin
//! quantum reservoir.
//!
//! - [`linalg`]: dense matrix kernels (Kronecker products, Hermitian
//!   eigendecomposition, propagators, pseudoinverse least squares).
//! - [`reservoir`]: spin system, effective Hamiltonian, thermal state,
//!   input injection and sampled probe traces.
//! - [`readout`]: design matrices, noise augmentation, linear readout
//!   training and metrics.
//! - [`tasks`]: benchmark task battery, spatial multiplexing and the three
//!   evaluation schemes.

pub mod linalg;
pub mod readout;
pub mod reservoir;
pub mod tasks;
