pub mod cli;
pub mod dynamics;
pub mod hamilton;
pub mod lattice;
pub mod normalform;
pub mod resonance;
pub mod selfcheck;
pub mod spectra;
mod ode;

pub use ode::{OdeError, OdeOptions};
