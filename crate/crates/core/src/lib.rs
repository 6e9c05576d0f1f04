//! Inference of an actor's blind spots and execution noise from
//! state-action-error demonstrations.

pub mod domains;
pub mod error;
pub mod inference;
pub mod io;
pub mod math;
pub mod model;

pub use error::{GemError, Result};
pub use model::data::{DataSource, Dataset, Demonstration};
pub use model::domain::{ActionId, Domain};
pub use model::priors::{NoiseLevel, Priors, NOISE_SUPPORT};
pub use model::schema::{BlindSpotMask, FeatureSchema, Observation, State};
