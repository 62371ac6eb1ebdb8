//! Simulation of a single-photon source built from a ⁴⁰Ca⁺ ion in a
//! high-finesse optical cavity.

pub mod config;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod level;
pub mod lindblad;
pub mod model;
pub mod ode;
pub mod operator;
pub mod params;
pub mod reduced;
pub mod sequence;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use level::{AtomicLevel, LevelScheme, Manifold};
pub use operator::{HilbertSpace, OperatorMatrix, C64};
pub use params::SystemParams;
