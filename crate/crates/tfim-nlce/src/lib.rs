//! Numerical linked-cluster expansion for the ferromagnetic
//! transverse-field Ising model, with a simulated variational circuit as
//! the cluster solver.
//!
//! The crate covers the full pipeline: rectangular cluster enumeration
//! and embedding combinatorics, exact diagonalization references, a
//! boundary-augmented Hamiltonian variational ansatz with adjoint
//! gradients, trust-region optimization with adiabatic parameter
//! continuation, series summation, and shot-noise propagation through
//! the expansion.
//!
//! All numerics are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the default `f64` precision.

pub mod ansatz;
pub mod circuit;
pub mod error;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod nlce;
pub mod noise;
pub mod optimize;
pub mod quadrature;
pub mod reference;
pub mod scalar;
pub mod state;

pub use error::{Error, Result};
pub use lattice::{Bond, BoundaryStyle, Cluster};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;
/// Complex amplitude in default precision.
pub type Amplitude = num_complex::Complex<Real>;
/// Couplings in default precision.
pub type Params = model::TfimParams<Real>;
