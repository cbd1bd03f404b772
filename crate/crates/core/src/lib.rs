//! Self-similar solutions of mean curvature flow with SO(p)×SO(q) symmetry.
//!
//! The crate reduces shrinkers, expanders and minimal cones in R^p × R^q to planar
//! profile curves and provides shooting, matched asymptotics, a front-tracking flow
//! and monotonicity diagnostics on top of that reduction.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod evolve;
pub mod functionals;
pub mod geometry;
pub mod ode;
pub mod quadrature;
pub mod shooting;

pub use error::{Error, Result};
pub use geometry::{FlowParams, ProfileCurve, ProfilePoint};
pub use ode::{EquationKind, IntegratorConfig, TerminationEvent, TerminationTag};
