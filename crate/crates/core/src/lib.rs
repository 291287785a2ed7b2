//! Truncated Fock-space simulation of a dissipative Kerr oscillator driven by
//! two periodic forces.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the numerical
//! kernels: the oscillator model ([`fock`]), deterministic Lindblad
//! integration ([`master`]), quantum-state-diffusion trajectories and their
//! ensemble reduction ([`qsd`]), the classical mean-field limit with
//! stroboscopic maps and Lyapunov estimates ([`classical`]), and number
//! statistics plus Wigner functions ([`observables`]).
//!
//! All rates are measured in units of the decay rate and times in units of
//! its inverse; `hbar = 1`.
#![no_std]

extern crate alloc;

pub mod classical;
pub mod error;
pub mod fock;
pub mod master;
pub mod observables;
pub mod qsd;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, InitialState, ModelParams, StateVector};

pub use num_complex::Complex64;
