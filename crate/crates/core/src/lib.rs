//! Simulator for photon-echo storage protocols in a three-level Λ system.
//!
//! The library integrates the density-matrix equations of a single Λ atom
//! (two ground states |1⟩, |2⟩ coupled to one excited state |3⟩ by two
//! optical fields) over an inhomogeneously broadened ensemble, and extracts
//! macroscopic echo observables from the weighted coherence sum.
//!
//! Module layout:
//! - [`lambda_core`]: state, parameters, Hamiltonian, and the Liouvillian
//!   right-hand side (coherent commutator + decay).
//! - [`propagator`]: single-atom time evolution through a pulse sequence
//!   (RK4 inside pulses, closed-form free evolution across gaps).
//! - [`sequences`]: pulse/sequence model, validation, and scenario presets.
//! - [`ensemble`]: Gaussian detuning grid, parallel per-atom runs, and the
//!   deterministic reduction into macroscopic observables.
//! - [`analysis`]: echo detection, timing oracles, comb metrics, phase
//!   trajectories, and linearity fits.

pub mod analysis;
pub mod ensemble;
pub mod lambda_core;
pub mod propagator;
pub mod sequences;

pub use lambda_core::{DensityMatrix, Detuning, DriveField, SystemParams};
pub use num_complex::Complex64;
pub use sequences::{Channel, Pulse, Sequence};
