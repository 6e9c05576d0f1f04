//! TOML run configurations and prior files.

use std::fs;
use std::path::Path;

use gem_core::domains::gridworld::GridConfig;
use gem_core::domains::kitchen::{kitchen_blind_spot_support, KitchenConfig, SimulationConfig};
use gem_core::io::AnyDomain;
use gem_core::{Domain, Priors};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Kitchen runs: a `[simulation]` table and a `[kitchen]` table, both optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KitchenRun {
    pub simulation: SimulationConfig,
    pub kitchen: KitchenConfig,
}

pub fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn grid_config(path: Option<&Path>) -> CliResult<GridConfig> {
    read_toml(path)
}

pub fn kitchen_run(path: Option<&Path>) -> CliResult<KitchenRun> {
    read_toml(path)
}

/// Priors from a TOML file, or the domain default: independent fair coins
/// per feature for the gridworld, uniform over the restricted support for
/// the kitchen. Noise is uniform in both.
pub fn priors(path: Option<&Path>, domain: &AnyDomain) -> CliResult<Priors> {
    let features = domain.schema().len();
    let priors = match path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str::<Priors>(&text).map_err(|e| CliError::Config {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        }
        None => match domain {
            AnyDomain::Gridworld(_) => Priors::uniform(features),
            AnyDomain::Kitchen(_) => Priors::uniform_support(features, kitchen_blind_spot_support())?,
        },
    };
    priors.check_features(features)?;
    Ok(priors)
}
