//! Bond-based peridynamic simulation of dynamic mode-I brittle fracture with
//! a cohesive double-well bond potential.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod material;
pub mod output;
pub mod run;
pub mod verify;

pub use error::{Error, Result};
