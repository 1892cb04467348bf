//! Spin-Hamiltonian spectroscopy and decoherence modelling for rare-earth
//! ions in Y₂SiO₅ coupled to planar microwave resonators.
//!
//! The crate is organised around four subsystems:
//!
//! - [`spinham`] — electron–nuclear spin Hamiltonians in the (D1, D2, b)
//!   crystal frame: construction, dense Hermitian eigensolve, transition
//!   frequencies and microwave matrix elements, field gradients ∇_B f and
//!   effective g-factors, Zeeman temperatures.
//! - [`fieldsearch`] — the inverse problem: resonance fields at fixed probe
//!   frequency along a field direction, angular sweeps in a crystal plane
//!   with subsite duplication, and low-field ∇_B f (clock-transition) maps.
//! - [`decomodels`] — closed-form decoherence models: instantaneous
//!   diffusion, multi-sub-ensemble spectral diffusion versus temperature and
//!   angle, the ⁸⁹Y nuclear-bath contribution, Purcell relaxation, resonator
//!   excitation filtering, and echo envelope modulation.
//! - [`fitkit`] — a deterministic trust-region least-squares engine plus the
//!   measurement models used to analyse echo decays, stimulated echoes (with
//!   the R·Γ_SD covariance-ridge analysis), inversion recovery, avoided
//!   crossings (cooperativity), field sweeps, and ESEEM traces.
//!
//! [`presets`] ships the literature tensor sets for ¹⁴⁵Nd and ¹⁷¹Yb (site 1
//! and 2), and [`synth`] generates seeded synthetic data for round-trip
//! testing of every fit model.
//!
//! All operations are pure functions of their inputs and are safe to call
//! concurrently.

pub mod consts;
pub mod decomodels;
pub mod error;
pub mod fieldsearch;
pub mod fitkit;
pub mod linalg;
pub mod presets;
pub mod spinham;
pub mod synth;

pub use consts::PhysicalConstants;
pub use error::{Error, Result};
pub use spinham::{FieldVector, LevelSet, SpinSystem, Transition};
