//! Single-object gridworld. The state is the offset from the agent to the
//! object plus the object's color; green objects should be collected and
//! red ones avoided.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::model::data::{DataSource, Dataset, Demonstration};
use crate::model::domain::{ActionId, Domain};
use crate::model::likelihood::{mask_observe, sample_action};
use crate::model::priors::NoiseLevel;
use crate::model::schema::{BlindSpotMask, Feature, FeatureSchema, State, ValueIndex};

pub const DX: usize = 0;
pub const DY: usize = 1;
pub const COLOR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Green,
    Red,
}

impl Color {
    pub fn name(self) -> &'static str {
        match self {
            Color::Green => "green",
            Color::Red => "red",
        }
    }

    fn index(self) -> ValueIndex {
        match self {
            Color::Green => 0,
            Color::Red => 1,
        }
    }
}

/// Agent moves. The offset is `object - agent`, so moving right shrinks `dx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
    ];

    /// Offset after the agent takes this move.
    pub fn apply(self, dx: i32, dy: i32) -> (i32, i32) {
        match self {
            GridAction::Up => (dx, dy - 1),
            GridAction::Down => (dx, dy + 1),
            GridAction::Left => (dx + 1, dy),
            GridAction::Right => (dx - 1, dy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub dx: i32,
    pub dy: i32,
    pub color: Color,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    size: usize,
    schema: FeatureSchema,
    actions: Vec<String>,
}

impl GridWorld {
    /// Panics when `size < 2`; use [`GridConfig::validate`] for user input.
    pub fn new(size: usize) -> Self {
        assert!(size >= 2, "grid size must be at least 2");
        let r = size as i32 - 1;
        let offsets: Vec<String> = (-r..=r).map(|v| v.to_string()).collect();
        let schema = FeatureSchema::new(
            format!("gridworld-{size}"),
            vec![
                Feature {
                    name: "dx".into(),
                    values: offsets.clone(),
                },
                Feature {
                    name: "dy".into(),
                    values: offsets,
                },
                Feature {
                    name: "color".into(),
                    values: vec!["green".into(), "red".into()],
                },
            ],
        )
        .expect("static schema");
        GridWorld {
            size,
            schema,
            actions: ["up", "down", "left", "right"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn radius(&self) -> i32 {
        self.size as i32 - 1
    }

    fn in_range(&self, dx: i32, dy: i32) -> bool {
        dx.abs() <= self.radius() && dy.abs() <= self.radius()
    }

    pub fn state(&self, dx: i32, dy: i32, color: Color) -> State {
        assert!(self.in_range(dx, dy), "offset ({dx}, {dy}) outside the grid");
        let r = self.radius();
        State::from_raw(vec![
            (dx + r) as ValueIndex,
            (dy + r) as ValueIndex,
            color.index(),
        ])
    }

    pub fn decode(&self, state: &State) -> GridState {
        let r = self.radius();
        GridState {
            dx: state.get(DX) as i32 - r,
            dy: state.get(DY) as i32 - r,
            color: if state.get(COLOR) == 0 {
                Color::Green
            } else {
                Color::Red
            },
        }
    }

    /// Uniform over offsets other than (0, 0) and both colors.
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let r = self.radius();
        loop {
            let dx = rng.gen_range(-r..=r);
            let dy = rng.gen_range(-r..=r);
            if (dx, dy) == (0, 0) {
                continue;
            }
            let color = if rng.gen::<bool>() {
                Color::Red
            } else {
                Color::Green
            };
            return self.state(dx, dy, color);
        }
    }

    /// Every state a generator can emit.
    pub fn valid_states(&self) -> Vec<State> {
        let r = self.radius();
        let mut out = Vec::new();
        for dx in -r..=r {
            for dy in -r..=r {
                if (dx, dy) == (0, 0) {
                    continue;
                }
                for color in [Color::Green, Color::Red] {
                    out.push(self.state(dx, dy, color));
                }
            }
        }
        out
    }

    /// Green: every move that strictly shortens the Manhattan distance.
    /// Red: every in-grid move that strictly lengthens it; when none exists
    /// (pinned in a corner) every in-grid move.
    pub fn grid_optimal_set(&self, s: GridState) -> Vec<GridAction> {
        let dist = |dx: i32, dy: i32| dx.abs() + dy.abs();
        let here = dist(s.dx, s.dy);
        let moves = GridAction::ALL.iter().copied().filter(|a| {
            let (nx, ny) = a.apply(s.dx, s.dy);
            self.in_range(nx, ny)
        });
        let chosen: Vec<GridAction> = match s.color {
            Color::Green => moves
                .clone()
                .filter(|a| {
                    let (nx, ny) = a.apply(s.dx, s.dy);
                    dist(nx, ny) < here
                })
                .collect(),
            Color::Red => moves
                .clone()
                .filter(|a| {
                    let (nx, ny) = a.apply(s.dx, s.dy);
                    dist(nx, ny) > here
                })
                .collect(),
        };
        if chosen.is_empty() {
            moves.collect()
        } else {
            chosen
        }
    }

    pub fn grid_acceptable(&self, s: GridState, action: GridAction) -> bool {
        self.grid_optimal_set(s).contains(&action)
    }
}

impl Domain for GridWorld {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn actions(&self) -> &[String] {
        &self.actions
    }

    fn optimal_actions(&self, state: &State) -> Vec<ActionId> {
        self.grid_optimal_set(self.decode(state))
            .into_iter()
            .map(|a| a as ActionId)
            .collect()
    }

    fn acceptable(&self, state: &State, action: ActionId) -> bool {
        self.optimal_actions(state).contains(&action)
    }

    fn admits(&self, state: &State) -> bool {
        let s = self.decode(state);
        (s.dx, s.dy) != (0, 0)
    }
}

/// Generator settings for a simulated gridworld actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct GridConfig {
    pub grid_size: usize,
    pub noise_true: f64,
    /// Bit string over (dx, dy, color).
    pub mask_true: String,
    pub assumed_color: Color,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            grid_size: 10,
            noise_true: 0.10,
            mask_true: "001".into(),
            assumed_color: Color::Green,
            seed: 0,
        }
    }
}

impl GridConfig {
    /// Checks every field, reporting all problems at once.
    pub fn validate(&self) -> Result<(BlindSpotMask, NoiseLevel)> {
        let mut problems = Vec::new();
        if self.grid_size < 2 {
            problems.push(format!("grid-size: {} is below the minimum of 2", self.grid_size));
        }
        let noise = NoiseLevel::new(self.noise_true);
        if noise.is_err() {
            problems.push(format!(
                "noise-true: {} must lie strictly between 0 and 1",
                self.noise_true
            ));
        }
        let mask = BlindSpotMask::parse(&self.mask_true).ok().filter(|m| m.len() == 3);
        if mask.is_none() {
            problems.push(format!(
                "mask-true: `{}` must be three 0/1 characters",
                self.mask_true
            ));
        }
        match (mask, noise) {
            (Some(mask), Ok(noise)) if problems.is_empty() => Ok((mask, noise)),
            _ => Err(GemError::InvalidConfig(problems)),
        }
    }
}

/// Draws `n` i.i.d. tuples from a simulated actor that resolves a hidden
/// color to `assumed_color` (other hidden features uniformly) and then acts
/// with the noisy optimal policy.
pub fn generate_grid_dataset(config: &GridConfig, n: usize) -> Result<(GridWorld, Dataset)> {
    let (mask, noise) = config.validate()?;
    if n == 0 {
        return Err(GemError::InvalidConfig(vec!["n: must be at least 1".into()]));
    }
    let world = GridWorld::new(config.grid_size);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut demos = Vec::with_capacity(n);
    for _ in 0..n {
        let state = world.random_state(&mut rng);
        let obs = mask_observe(&state, &mask)?;
        let mut comps = world.completions(&obs)?;
        if mask.is_hidden(COLOR) {
            comps.retain(|s| s.get(COLOR) == config.assumed_color.index());
        }
        let implicit = &comps[rng.gen_range(0..comps.len())];
        let action = sample_action(implicit, noise, &world, &mut rng);
        demos.push(Demonstration::derived(&world, state, action));
    }
    let data = Dataset::new(&world, demos, DataSource::Simulated { seed: config.seed })?;
    Ok((world, data))
}
