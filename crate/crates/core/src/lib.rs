//! Planar stability analysis of viscous shock profiles of
//! hyperbolic-parabolic systems of conservation laws.

pub mod cli;
pub mod error;
pub mod evans;
pub mod inviscid;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod profile;
pub mod structure;
pub mod verify;

pub use error::{Error, Result};
