//! Radial Keller-Segel dynamics, stationary states, functional inequalities
//! and related gradient-flow toolkits.

pub mod burgers;
pub mod diagnostics;
pub mod entropy_toolkit;
pub mod error;
pub mod fields;
pub mod harness;
pub mod jko1d;
pub mod ks_radial;
pub mod numerics;
pub mod particles;
pub mod potential;
pub mod stationary;

pub use error::{Error, Result};
