//! Simulation of the coupled electron / ¹⁴N nuclear spin system of NV centers
//! in diamond under off-axis magnetic fields.
//!
//! Units throughout: frequencies and rates in MHz, fields in Gauss, times in
//! microseconds, angles in radians. Hamiltonians are expressed in frequency
//! units (h = 1); the coherent part of every master equation therefore carries
//! an explicit factor 2π. Incoherent rates are plain inverse microseconds.
//!
//! Product basis ordering used everywhere: `m_S ∈ (+1, 0, −1)` outer,
//! `m_I ∈ (+1, 0, −1)` inner, i.e. bare index `3·s + n` with
//! `s = 1 − m_S`, `n = 1 − m_I`.

pub mod calibration;
pub mod error;
pub mod fitting;
pub mod lindblad;
pub mod linalg;
pub mod params;
pub mod photophysics;
pub mod sequences;
pub mod spin;
pub mod trace;
pub mod transitions;

pub use error::{NvError, Result};
pub use params::{FieldConfig, NvParams};
pub use spin::{BareState, EigenSystem, Hamiltonian, Manifold};
pub use trace::{SpectrumTrace, TimeTrace};

pub use num_complex::Complex64 as C64;
