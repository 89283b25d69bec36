//! Brownian last passage percolation in scaled polymer coordinates.

pub mod ensembles;
pub mod environment;
pub mod error;
pub mod estimators;
pub mod events;
pub mod geometry;
pub mod io;
pub mod lpp;
pub mod scalar;
pub mod scaled;
pub mod selftest;

pub use environment::{Environment, GridSpec, Origin};
pub use error::{LppError, Result};
pub use lpp::{LatticePoint, MultiStaircase, Staircase, TieRule};
pub use scalar::Scalar;
pub use scaled::{CompatibleTriple, ScaledPoint, Zigzag};

pub type Env = Environment<f64>;
pub type EnvF32 = Environment<f32>;
