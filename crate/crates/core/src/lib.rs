//! Hierarchical transactive microgrid simulation.
//!
//! * [`accounting`]: household, microgrid, and distributor energy balances and costs
//! * [`datagen`]: seeded demand, PV, and grid price/emission series
//! * [`env`]: the episodic three-layer market environment
//! * [`agents`]: shared-parameter policy-gradient and actor-critic learners
//! * [`oracle`]: no-battery baseline, optimal dispatch, and scoring

pub mod accounting;
pub mod agents;
pub mod datagen;
pub mod env;
pub mod error;
pub mod oracle;
pub mod rng;

pub use error::{GridError, Result};
