//! Entrance and exit chains of Markov chains and random walks.
//!
//! * [`finite`]: exact entrance/exit kernels, their invariant measures, Kac
//!   reconstruction and duality for finite chains, generic over [`Scalar`]
//!   (`f64`, `f32` or exact [`Q`]).
//! * [`laws`], [`walk`], [`subchain`]: increment laws, walk simulation,
//!   crossing extraction and sampled entrance/exit chains.
//! * [`measures`]: the closed-form invariant measures `pi`, `pi_+`, `pi_-` and
//!   the general entrance/exit measures of a walk.
//! * [`verify`] and [`stats`]: seeded Monte Carlo checks and the statistics
//!   they use.

pub mod alias;
pub mod finite;
pub mod laws;
pub mod linalg;
pub mod measures;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod subchain;
pub mod target;
pub mod verify;
pub mod walk;

pub use finite::{Bipartition, FiniteChain, FiniteError};
pub use laws::{ContinuousLaw, IncrementLaw, LatticeLaw, LawSpec};
pub use linalg::Matrix;
pub use measures::LatticeMeasure;
pub use scalar::Scalar;
pub use target::TargetSet;
pub use verify::ExperimentReport;

/// Exact rational scalar.
pub type Q = num_rational::BigRational;

pub type MatrixF64 = Matrix<f64>;
pub type MatrixQ = Matrix<Q>;
pub type FiniteChainF64 = FiniteChain<f64>;
pub type FiniteChainF32 = FiniteChain<f32>;
pub type FiniteChainQ = FiniteChain<Q>;
pub type LatticeMeasureF64 = LatticeMeasure<f64>;
pub type LatticeMeasureQ = LatticeMeasure<Q>;
