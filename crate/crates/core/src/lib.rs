//! Steady-state flux of small-noise diffusions on flat tori, computed three
//! independent ways and cross-validated:
//!
//! * exact stationary Fokker-Planck solves on periodic grids ([`fp`]),
//! * Monte-Carlo path simulation with lifted line integrals ([`sde`]),
//! * graph-theoretic small-noise asymptotics from Morse data ([`morse`],
//!   [`trees`]) with an independent merge-tree route ([`merge_tree`]).
//!
//! The drift class is `v = -grad U + tilt` for a periodic potential `U` on a
//! flat torus of dimension 1 or 2; the flux pairs the stationary probability
//! current with a cohomology class and decays like `exp(-h*/eps)` for small
//! noise, with the exponent `h*` computable from spanning-tree optimization
//! on the Morse graph. Increasing the tilt can decrease the flux; the
//! [`asymptotics`] module reproduces that negative-resistance effect.

pub mod action;
pub mod asymptotics;
pub mod critical;
pub mod error;
pub mod fields;
pub mod fp;
pub mod graph_io;
pub mod merge_tree;
pub mod morse;
pub mod sde;
pub mod spline;
pub mod trees;

pub use critical::CriticalPoint;
pub use error::{FluxError, Result};
pub use fields::{
    ClosedOneForm, DriftSpec, PeriodicPotential, Point, PotentialSpec, TiltedDrift, Torus,
};
pub use fp::{FluxEstimate, FluxMethod, StationaryField};
pub use morse::MorseGraph;
pub use trees::{CrstResult, CycleSign, HstarMode, TreeResult, WeightedDigraph};
