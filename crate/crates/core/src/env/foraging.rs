//! A compact level-based foraging gridworld.
//!
//! Agents and food items carry levels. A food item is collected when the
//! agents loading next to it have a combined level at least equal to the
//! food's level. Rewards are normalised so collecting everything over an
//! episode returns exactly 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DiscreteEnv, Observation, StepResult};
use crate::error::{Error, Result};
use crate::rng::LabRng;

pub const NOOP: usize = 0;
pub const UP: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;
pub const RIGHT: usize = 4;
pub const LOAD: usize = 5;
pub const N_ACTIONS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForagingConfig {
    pub rows: usize,
    pub cols: usize,
    pub n_agents: usize,
    pub n_foods: usize,
    /// Every agent must take part in each collection.
    pub coop: bool,
    pub time_limit: usize,
    pub max_agent_level: u32,
    /// Relative food offsets are clipped to `±sight` in observation keys.
    pub sight: i32,
}

impl Default for ForagingConfig {
    fn default() -> Self {
        Self { rows: 8, cols: 8, n_agents: 2, n_foods: 3, coop: true, time_limit: 25, max_agent_level: 2, sight: 3 }
    }
}

impl ForagingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 3 || self.cols < 3 {
            return Err(Error::Config("grid must be at least 3×3".into()));
        }
        if self.n_agents < 2 {
            return Err(Error::Config("n_agents must be at least 2".into()));
        }
        if self.n_foods == 0 || self.time_limit == 0 || self.max_agent_level == 0 {
            return Err(Error::Config("n_foods, time_limit and max_agent_level must be positive".into()));
        }
        if self.sight < 1 {
            return Err(Error::Config("sight must be at least 1".into()));
        }
        // Interior cells spaced two apart hold foods without touching.
        let spaced = ((self.rows - 1) / 2) * ((self.cols - 1) / 2);
        if self.n_foods > spaced {
            return Err(Error::Config(format!("{} foods do not fit a {}×{} grid", self.n_foods, self.rows, self.cols)));
        }
        if self.n_agents + 9 * self.n_foods > self.rows * self.cols {
            return Err(Error::Config("grid too small for the requested entities".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Food {
    pub pos: (usize, usize),
    pub level: u32,
    pub collected: bool,
}

#[derive(Debug, Clone)]
pub struct ForagingWorld {
    config: ForagingConfig,
    agents: Vec<(usize, usize)>,
    levels: Vec<u32>,
    foods: Vec<Food>,
    total_food_level: u32,
    steps: usize,
    action_counts: Vec<usize>,
    rng: LabRng,
}

impl ForagingWorld {
    pub fn new(config: ForagingConfig, rng: LabRng) -> Result<Self> {
        config.validate()?;
        let mut world = Self {
            config,
            agents: Vec::new(),
            levels: Vec::new(),
            foods: Vec::new(),
            total_food_level: 0,
            steps: 0,
            action_counts: vec![N_ACTIONS; config.n_agents],
            rng,
        };
        world.scatter();
        Ok(world)
    }

    /// A world with a fixed layout; `reset` re-scatters randomly.
    pub fn from_layout(
        config: ForagingConfig,
        agents: Vec<((usize, usize), u32)>,
        foods: Vec<((usize, usize), u32)>,
        rng: LabRng,
    ) -> Result<Self> {
        let mut world = Self::new(config, rng)?;
        if agents.len() != config.n_agents || foods.len() != config.n_foods {
            return Err(Error::Config("layout does not match the configured counts".into()));
        }
        world.agents = agents.iter().map(|&(p, _)| p).collect();
        world.levels = agents.iter().map(|&(_, l)| l).collect();
        world.foods = foods.iter().map(|&(pos, level)| Food { pos, level, collected: false }).collect();
        world.total_food_level = world.foods.iter().map(|f| f.level).sum();
        let mut cells: Vec<(usize, usize)> = world.agents.clone();
        cells.extend(world.foods.iter().map(|f| f.pos));
        for &(r, c) in &cells {
            if r >= config.rows || c >= config.cols {
                return Err(Error::Config(format!("cell ({r},{c}) is out of bounds")));
            }
        }
        cells.sort_unstable();
        if cells.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("two entities share a cell".into()));
        }
        Ok(world)
    }

    pub fn config(&self) -> &ForagingConfig {
        &self.config
    }

    pub fn agents(&self) -> &[(usize, usize)] {
        &self.agents
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn foods(&self) -> &[Food] {
        &self.foods
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn scatter(&mut self) {
        let cfg = self.config;
        self.steps = 0;
        self.levels = (0..cfg.n_agents).map(|_| self.rng.random_range(1..=cfg.max_agent_level)).collect();
        let max_level = *self.levels.iter().max().unwrap();
        let coop_level: u32 = self.levels.iter().sum();
        self.foods.clear();
        let mut attempts = 0;
        while self.foods.len() < cfg.n_foods {
            // Greedy placement can jam on crowded grids; start over.
            attempts += 1;
            if attempts % 1000 == 0 {
                self.foods.clear();
            }
            let pos = (self.rng.random_range(1..cfg.rows - 1), self.rng.random_range(1..cfg.cols - 1));
            if self.foods.iter().any(|f| chebyshev(f.pos, pos) <= 1) {
                continue;
            }
            let level = if cfg.coop { coop_level } else { self.rng.random_range(1..=max_level) };
            self.foods.push(Food { pos, level, collected: false });
        }
        self.total_food_level = self.foods.iter().map(|f| f.level).sum();
        self.agents.clear();
        while self.agents.len() < cfg.n_agents {
            let pos = (self.rng.random_range(0..cfg.rows), self.rng.random_range(0..cfg.cols));
            if self.is_free(pos) {
                self.agents.push(pos);
            }
        }
    }

    fn is_free(&self, pos: (usize, usize)) -> bool {
        !self.agents.contains(&pos) && !self.foods.iter().any(|f| !f.collected && f.pos == pos)
    }

    fn target(&self, pos: (usize, usize), action: usize) -> Option<(usize, usize)> {
        let (r, c) = pos;
        match action {
            UP if r > 0 => Some((r - 1, c)),
            DOWN if r + 1 < self.config.rows => Some((r + 1, c)),
            LEFT if c > 0 => Some((r, c - 1)),
            RIGHT if c + 1 < self.config.cols => Some((r, c + 1)),
            _ => None,
        }
    }

    fn observe(&self) -> Observation {
        let remaining =
            self.foods.iter().enumerate().filter(|(_, f)| !f.collected).fold(0u64, |m, (k, _)| m | (1 << k));
        let agent_keys = (0..self.agents.len()).map(|i| self.agent_key(i)).collect();
        Observation { state_key: remaining, agent_keys }
    }

    /// Egocentric key: clipped offset to the nearest remaining food and the
    /// number of other agents already next to it.
    fn agent_key(&self, i: usize) -> u64 {
        let me = self.agents[i];
        let nearest = self.foods.iter().filter(|f| !f.collected).min_by_key(|f| manhattan(me, f.pos));
        let Some(food) = nearest else {
            return u64::MAX;
        };
        let s = self.config.sight;
        let dr = (food.pos.0 as i32 - me.0 as i32).clamp(-s, s);
        let dc = (food.pos.1 as i32 - me.1 as i32).clamp(-s, s);
        let helpers =
            self.agents.iter().enumerate().filter(|&(j, &p)| j != i && manhattan(p, food.pos) == 1).count() as u64;
        let width = (2 * s + 1) as u64;
        (helpers * width + (dr + s) as u64) * width + (dc + s) as u64
    }
}

fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

impl DiscreteEnv for ForagingWorld {
    fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    fn horizon(&self) -> usize {
        self.config.time_limit
    }

    fn reset(&mut self) -> Observation {
        self.scatter();
        self.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if actions.len() != self.agents.len() {
            return Err(Error::Contract(format!("expected {} actions, got {}", self.agents.len(), actions.len())));
        }
        // Moves: the target must be free now and claimed by nobody else.
        let targets: Vec<Option<(usize, usize)>> =
            self.agents.iter().zip(actions).map(|(&p, &a)| self.target(p, a).filter(|&t| self.is_free(t))).collect();
        for i in 0..self.agents.len() {
            if let Some(t) = targets[i] {
                let contested = targets.iter().enumerate().any(|(j, &o)| j != i && o == Some(t));
                if !contested {
                    self.agents[i] = t;
                }
            }
        }

        let mut reward = 0.0;
        let n = self.agents.len();
        for k in 0..self.foods.len() {
            let food = self.foods[k];
            if food.collected {
                continue;
            }
            let loaders: Vec<usize> =
                (0..n).filter(|&i| actions[i] == LOAD && manhattan(self.agents[i], food.pos) == 1).collect();
            if loaders.is_empty() || (self.config.coop && loaders.len() < n) {
                continue;
            }
            let power: u32 = loaders.iter().map(|&i| self.levels[i]).sum();
            if power >= food.level {
                self.foods[k].collected = true;
                reward += food.level as f64 / self.total_food_level as f64;
            }
        }

        self.steps += 1;
        let done = self.foods.iter().all(|f| f.collected) || self.steps >= self.config.time_limit;
        Ok(StepResult { observation: self.observe(), reward, done })
    }
}

impl ForagingWorld {
    /// Current observation without advancing the episode.
    pub fn observation(&self) -> Observation {
        self.observe()
    }
}
