//! Simple exclusion process on a segment in a quenched i.i.d. random environment.
//!
//! Sites are 1-indexed. A particle at `x` jumps to `x + 1` at rate `omega_x` and to
//! `x - 1` at rate `1 - omega_x`, subject to exclusion.

pub mod dynamics;
pub mod environment;
pub mod equilibrium;
pub mod estimators;
pub mod error;
pub mod exact;
pub mod law;
mod linalg;
pub mod rng;
pub mod state;
pub mod stats;

pub use dynamics::{CensoringScheme, DisplacementSchedule, EventSource, FlowState, Ring};
pub use environment::{potential, sample_env, Environment, PotentialProfile, Trap};
pub use equilibrium::EquilibriumTable;
pub use error::{Error, Result};
pub use exact::ExactChain;
pub use law::{LawAnalytics, LawSpec, LawVariant};
pub use state::Configuration;
