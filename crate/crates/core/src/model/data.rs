use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::model::domain::{ActionId, Domain};
use crate::model::schema::State;

/// One observed step of the actor: the true state, the action it took and
/// whether that action was an error.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Demonstration {
    pub state: State,
    pub action: ActionId,
    pub error: bool,
}

impl Demonstration {
    /// Builds a demonstration whose error flag is derived from the domain.
    pub fn derived(domain: &dyn Domain, state: State, action: ActionId) -> Self {
        let error = !domain.acceptable(&state, action);
        Demonstration {
            state,
            action,
            error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Simulated { seed: u64 },
    Ingested,
}

/// Ordered demonstrations sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema_id: String,
    demonstrations: Vec<Demonstration>,
    source: DataSource,
}

impl Dataset {
    /// Validates every demonstration against `domain`: state shape and
    /// domains, known action, and an error flag equal to the complement of
    /// the acceptability function.
    pub fn new(
        domain: &dyn Domain,
        demonstrations: Vec<Demonstration>,
        source: DataSource,
    ) -> Result<Self> {
        let schema = domain.schema();
        for (index, d) in demonstrations.iter().enumerate() {
            schema.state(d.state.values().to_vec())?;
            domain.check_action(d.action)?;
            let derived = !domain.acceptable(&d.state, d.action);
            if derived != d.error {
                return Err(GemError::ErrorFlagMismatch {
                    index,
                    stored: d.error as u8,
                    derived: derived as u8,
                });
            }
        }
        Ok(Dataset {
            schema_id: schema.id().to_string(),
            demonstrations,
            source,
        })
    }

    pub fn schema_id(&self) -> &str {
        &self.schema_id
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    pub fn demonstrations(&self) -> &[Demonstration] {
        &self.demonstrations
    }

    pub fn len(&self) -> usize {
        self.demonstrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demonstrations.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&Demonstration> {
        self.demonstrations
            .get(index)
            .ok_or(GemError::IndexOutOfRange {
                index,
                len: self.len(),
            })
    }

    /// The first `n` demonstrations (all of them when `n` exceeds the length).
    pub fn prefix(&self, n: usize) -> Dataset {
        Dataset {
            schema_id: self.schema_id.clone(),
            demonstrations: self.demonstrations[..n.min(self.len())].to_vec(),
            source: self.source,
        }
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema_id != other.schema_id {
            return Err(GemError::InvalidSchema(format!(
                "cannot concatenate `{}` with `{}`",
                self.schema_id, other.schema_id
            )));
        }
        let mut demonstrations = self.demonstrations.clone();
        demonstrations.extend_from_slice(&other.demonstrations);
        Ok(Dataset {
            schema_id: self.schema_id.clone(),
            demonstrations,
            source: self.source,
        })
    }

    /// Same demonstrations in a different order.
    pub fn reordered(&self, order: &[usize]) -> Dataset {
        Dataset {
            schema_id: self.schema_id.clone(),
            demonstrations: order.iter().map(|i| self.demonstrations[*i].clone()).collect(),
            source: self.source,
        }
    }

    pub fn error_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.demonstrations.iter().filter(|d| d.error).count() as f64 / self.len() as f64
    }

    pub(crate) fn require_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(GemError::EmptyDataset)
        } else {
            Ok(())
        }
    }
}
