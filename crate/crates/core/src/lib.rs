//! Ergodicity analysis for probabilistic cellular automata (PCA) with a
//! two-cell neighbourhood and binary alphabet.
//!
//! A PCA with parameter `(p00, p01, p10, p11)` updates every cell `i`
//! synchronously: the new value is `1` with probability `p_ab`, where
//! `(a, b)` are the old values of cells `i` and `i + 1`.
//!
//! The crate evaluates a closed-form sufficient condition for ergodicity
//! built from the random walk performed by the boundaries of *decorrelated
//! islands* in the envelope PCA, and cross-checks every closed form against
//! exact enumeration or Monte Carlo simulation:
//!
//! * [`params`]: derived quantities, boundary-state chain, the `γ` table and
//!   the ergodicity condition.
//! * [`boundary`]: exact increment laws of island boundaries, samplers and
//!   drift estimation.
//! * [`envelope`]: envelope PCA on a ring, coupled copies, raster output.
//! * [`refined`]: size-2 boundary refinement for CA 1000 (and 1110).
//! * [`sweep`]: ε-sweeps, volume estimation, renewal experiments and I/O.

pub mod boundary;
pub mod envelope;
pub mod error;
pub mod params;
pub mod refined;
pub mod rng;
pub mod stats;
pub mod sweep;
pub mod tol;

pub use boundary::{DriftEstimate, IncrementLaw, IslandState};
pub use envelope::{CellState, CoupledTriple, RingState, SpaceTimeRaster};
pub use error::{Error, Result};
pub use params::{
    BoundaryChain, BoundaryState3, ConditionReport, DerivedParams, ExtendedReal, ParamQuad,
    Probability, Side, StationaryDist,
};
pub use refined::{HalfInt, PairState, RefinedLaw};
pub use sweep::{SweepRow, VolumeEstimate};
