//! Hierarchical equations of motion (HEOM) for exciton-coupled electron
//! transfer networks coupled to several non-Markovian harmonic baths.
//!
//! The pipeline is split into the stages of the calculation:
//!
//! - [`model`]: site-basis system Hamiltonian and system-bath coupling
//!   operators.
//! - [`bath`]: spectral densities, Padé/Matsubara decomposition of the bath
//!   correlation functions into exponential series, and a quadrature
//!   reference for validation.
//! - [`hierarchy`]: enumeration of the auxiliary density operator (ADO)
//!   multi-indices with neighbor tables.
//! - [`propagator`]: the HEOM right-hand side and a fourth-order Lawson
//!   exponential integrator.
//! - [`scenarios`]: declarative JSON configuration and the builtin presets.
//! - [`validate`]: oracle checks (closed-system, pure dephasing, dense
//!   superoperator, thermalization, correlation reconstruction).
//!
//! Units: ħ = 1, energies in units of a reference frequency ω₀ and times in
//! units of 1/ω₀.

pub mod bath;
pub mod error;
pub mod hierarchy;
pub mod model;
pub mod propagator;
pub mod quad;
pub mod scenarios;
pub mod validate;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;
