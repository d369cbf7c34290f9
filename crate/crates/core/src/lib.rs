//! Exact verification laboratory for the infinite-dimensional affine
//! group over a p-adic base field.
//!
//! The crate builds, with exact rational arithmetic throughout:
//!
//! * ultrametric ball geometry and Haar measure ([`region`]),
//! * piecewise-constant function algebra ([`step`]),
//! * affine elements with step coefficients, their two product
//!   semantics, bijectivity certificates and pushforward densities
//!   ([`affine`]),
//! * Poisson configuration sampling and exact Laplace-functional
//!   calculus ([`poisson`]),
//! * the operators V_g, U_g and the Radon–Nikodym cocycle ([`rep`]),
//! * and a check harness that machine-verifies the identities relating
//!   all of the above, including a registry of expected failures
//!   ([`lab`]).

pub mod affine;
pub mod error;
pub mod lab;
pub mod padic;
pub mod poisson;
pub mod region;
pub mod rep;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod step;

pub use affine::{AffineElement, BijectivityCertificate, InverseMode, ProductMode};
pub use error::{Error, Result};
pub use padic::{norm, valuation, Prime, Valuation};
pub use poisson::Configuration;
pub use region::{Ball, BallForest, Region, Relation};
pub use rep::ConfigFunction;
pub use rng::SplitMix64;
pub use sampling::SamplePoint;
pub use scalar::Scalar;
pub use step::{StepFn, StepFunction};
