//! Classical and quantum filtering toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`operator`]: dense operator algebra, spectral measurement, Lindblad generators.
//! * [`bayes`]: Bayesian updates on one-dimensional grids and the von Neumann pointer model.
//! * [`sde`]: seeded Wiener paths, Euler-Maruyama, generators, Fokker-Planck evolution.
//! * [`classical`]: the continuous-time filtering problem (DMZ, Kushner, Kalman-Bucy).
//! * [`qsc`]: symbolic quantum Ito calculus over (S, L, H) models.
//! * [`belavkin`]: the quantum filter for homodyne detection and its oracles.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod belavkin;
pub mod classical;
pub mod error;
pub mod grid;
pub mod operator;
pub mod qsc;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
pub use grid::{ComplexGridFunction, GridDensity};
pub use operator::{Ket, Operator, SpectralDecomposition, C64};
pub use rng::{seed_derive, RngStream, Sampler};
pub use bayes::Likelihood;
pub use belavkin::{ConditionedDensity, ConditionedKet, EmissionAbsorptionModel, QuantumRecord};
pub use classical::{FilterState, ObservationModel, TrajectoryRecord};
pub use qsc::{IncrementBasis, ItoExpr, SlhTriple};
pub use sde::{DiffusionSpec, Path};
