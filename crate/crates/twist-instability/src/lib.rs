//! Instability measures, shadowing orbits and entropy bounds for
//! area-preserving twist maps given by a generating function.

pub mod error;
pub mod numerics;
pub mod twistmap;
pub mod aubry;
pub mod gradflow;
pub mod ode;
pub mod instability;
pub mod spg;
pub mod shadowing;
pub mod cli;

pub use error::{Error, Result};
