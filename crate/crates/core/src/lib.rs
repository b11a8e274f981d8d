//! Kernel Stein discrepancy on Stiefel, Grassmann and SPD manifolds.
//!
//! Stein kernels are built from killing vector fields of the group actions
//! on each manifold. On top of them sit U/V statistics, minimum-KSD
//! estimation for exponential families and a composite goodness-of-fit test.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod gof;
pub mod io;
pub mod kernels;
pub mod ksdstats;
pub mod manifolds;
pub mod matalg;
pub mod mksde;
pub mod models;
pub mod rng;
pub mod sampling;
pub mod selftest;
pub mod steinkernel;

pub use error::{KsdError, Result};
pub use kernels::RadialKernel;
pub use ksdstats::{StatKind, WeightedSample};
pub use manifolds::{Manifold, ManifoldPoint};
pub use matalg::Mat;
pub use models::{ExpFamilyKind, ExponentialFamily, Family, ScoreModel};
pub use steinkernel::SteinKernel;
