//! Scenario configuration document and seeded spawning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expert::ExpertParams;
use crate::geometry::{Arena, Cell, ObstacleSet, Vec2};
use crate::perception::{NoiseModel, DEFAULT_MATCHING_RADIUS};
use crate::threat::ZoneGrid;
use crate::world::{AgentId, AgentState, EngagementParams, Team, WorldState};

const MAX_SPAWN_ATTEMPTS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("could not place {0} within the attempt budget")]
    Unsatisfiable(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ObstacleSpec {
    /// `count` square cells of side `side` at seeded uniform positions.
    Random { count: usize, side: f64 },
    Explicit { cells: Vec<Cell> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnMode {
    /// Both teams uniformly at random in free space.
    Uniform,
    /// Allies uniformly at random; each enemy at the point reflection of its
    /// ally through the arena center, with the heading reversed. Random
    /// obstacles are placed point-symmetrically too.
    Mirrored,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoneSpec {
    pub rows: usize,
    pub cols: usize,
    pub center_weight: f64,
}

impl Default for ZoneSpec {
    fn default() -> Self {
        Self { rows: 2, cols: 3, center_weight: 1.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub arena: Arena,
    pub team_size: usize,
    pub obstacles: ObstacleSpec,
    pub spawn: SpawnMode,
    /// Minimum distance between opposing agents at spawn, meters.
    pub min_spawn_separation: f64,
    pub engagement: EngagementParams,
    pub expert: ExpertParams,
    pub zones: ZoneSpec,
    /// Ticks between scheduled commander invocations.
    pub cadence: u64,
    /// Ticks after which an active path is replanned.
    pub replan_interval: u64,
    pub nav_cell_size: f64,
    /// Perception noise applied to reports handed to commanders.
    pub noise: NoiseModel,
    pub matching_radius: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            arena: Arena { width: 30.0, height: 16.0 },
            team_size: 5,
            obstacles: ObstacleSpec::Random { count: 30, side: 0.3 },
            spawn: SpawnMode::Uniform,
            min_spawn_separation: 3.0,
            engagement: EngagementParams::default(),
            expert: ExpertParams::default(),
            zones: ZoneSpec::default(),
            cadence: 10,
            replan_interval: 10,
            nav_cell_size: crate::nav::DEFAULT_CELL_SIZE,
            noise: NoiseModel::default(),
            matching_radius: DEFAULT_MATCHING_RADIUS,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        Arena::new(self.arena.width, self.arena.height).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.team_size == 0 {
            return bad("team_size must be at least 1".into());
        }
        if self.cadence == 0 || self.replan_interval == 0 {
            return bad("cadence and replan_interval must be at least 1".into());
        }
        if !(self.nav_cell_size > 0.0 && self.matching_radius > 0.0 && self.min_spawn_separation >= 0.0) {
            return bad("nav_cell_size and matching_radius must be positive, min_spawn_separation non-negative".into());
        }
        if let ObstacleSpec::Random { side, .. } = self.obstacles {
            if !(side > 0.0 && side < self.arena.width.min(self.arena.height)) {
                return bad(format!("obstacle side {side} does not fit the arena"));
            }
        }
        self.engagement.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.expert.threat.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.expert.cost.validate().map_err(ConfigError::Invalid)?;
        self.expert.thresholds.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.noise.validate().map_err(ConfigError::Invalid)?;
        self.zone_grid()?;
        Ok(())
    }

    pub fn zone_grid(&self) -> Result<ZoneGrid, ConfigError> {
        let z = &self.zones;
        if z.rows == 0 || z.cols == 0 || !(z.center_weight > 0.0) {
            return Err(ConfigError::Invalid("zone grid needs rows, cols and a positive center weight".into()));
        }
        Ok(ZoneGrid::with_center_weight(self.arena, z.rows, z.cols, z.center_weight))
    }

    /// Same scenario with `n` agents per side.
    pub fn with_team_size(&self, n: usize) -> Self {
        Self { team_size: n, ..self.clone() }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn mirror(arena: Arena, p: Vec2) -> Vec2 {
    Vec2::new(arena.width - p.x, arena.height - p.y)
}

fn random_heading(rng: &mut impl Rng) -> Vec2 {
    let a = rng.random::<f64>() * std::f64::consts::TAU;
    Vec2::new(a.cos(), a.sin())
}

fn place_obstacles(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<ObstacleSet, ConfigError> {
    let arena = cfg.arena;
    let mut set = ObstacleSet::empty(arena);
    match &cfg.obstacles {
        ObstacleSpec::Explicit { cells } => {
            for c in cells {
                set.insert(*c).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
        }
        &ObstacleSpec::Random { count, side } => {
            let h = side / 2.0;
            let mirrored = cfg.spawn == SpawnMode::Mirrored;
            while set.len() < count {
                let c = Vec2::new(h + rng.random::<f64>() * (arena.width - side), h + rng.random::<f64>() * (arena.height - side));
                set.insert(Cell::new(c, side)).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if mirrored && set.len() < count {
                    set.insert(Cell::new(mirror(arena, c), side)).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                }
            }
        }
    }
    Ok(set)
}

/// Clear of every obstacle by at least `clearance`.
fn clear_spot(set: &ObstacleSet, p: Vec2, clearance: f64) -> bool {
    set.arena().contains(p) && set.cells_near(p, clearance).all(|i| !set.cells()[i].contains_closed(p, clearance))
}

/// Builds the initial world for `seed`.
pub fn spawn(cfg: &ScenarioConfig, seed: u64) -> Result<WorldState, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obstacles = place_obstacles(cfg, &mut rng)?;
    let arena = cfg.arena;
    let clearance = cfg.nav_cell_size;
    let margin = clearance;
    let sample = |rng: &mut ChaCha8Rng| {
        Vec2::new(margin + rng.random::<f64>() * (arena.width - 2.0 * margin), margin + rng.random::<f64>() * (arena.height - 2.0 * margin))
    };
    let n = cfg.team_size;
    let sep = cfg.min_spawn_separation;
    let mut allies: Vec<(Vec2, Vec2)> = Vec::with_capacity(n);
    let mut enemies: Vec<(Vec2, Vec2)> = Vec::with_capacity(n);
    match cfg.spawn {
        SpawnMode::Uniform => {
            for team in [Team::Allied, Team::Enemy] {
                for _ in 0..n {
                    let mut placed = false;
                    for _ in 0..MAX_SPAWN_ATTEMPTS {
                        let p = sample(&mut rng);
                        let far = match team {
                            Team::Allied => true,
                            Team::Enemy => allies.iter().all(|(q, _)| q.distance(p) >= sep),
                        };
                        if far && clear_spot(&obstacles, p, clearance) {
                            let entry = (p, random_heading(&mut rng));
                            match team {
                                Team::Allied => allies.push(entry),
                                Team::Enemy => enemies.push(entry),
                            }
                            placed = true;
                            break;
                        }
                    }
                    if !placed {
                        return Err(ConfigError::Unsatisfiable(format!("{n} agents per side")));
                    }
                }
            }
        }
        SpawnMode::Mirrored => {
            for _ in 0..n {
                let mut placed = false;
                for _ in 0..MAX_SPAWN_ATTEMPTS {
                    let p = sample(&mut rng);
                    let m = mirror(arena, p);
                    let far = p.distance(m) >= sep && allies.iter().all(|(q, _)| mirror(arena, *q).distance(p) >= sep);
                    if far && clear_spot(&obstacles, p, clearance) && clear_spot(&obstacles, m, clearance) {
                        let h = random_heading(&mut rng);
                        allies.push((p, h));
                        enemies.push((m, -h));
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    return Err(ConfigError::Unsatisfiable(format!("{n} mirrored agent pairs")));
                }
            }
        }
    }
    let agents = allies
        .iter()
        .enumerate()
        .map(|(i, (p, h))| AgentState::new(AgentId::new(Team::Allied, i as u32), *p, *h))
        .chain(enemies.iter().enumerate().map(|(i, (p, h))| AgentState::new(AgentId::new(Team::Enemy, i as u32), *p, *h)))
        .collect();
    WorldState::new(obstacles, agents, cfg.engagement.clone(), seed).map_err(|e| ConfigError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = ScenarioConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(ScenarioConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn spawn_is_deterministic_and_free() {
        let cfg = ScenarioConfig::default();
        let a = spawn(&cfg, 11).unwrap();
        let b = spawn(&cfg, 11).unwrap();
        assert_eq!(a.agents(), b.agents());
        assert_eq!(a.static_obstacles().len(), 30);
        for x in a.agents() {
            assert!(a.point_free(x.position));
        }
    }

    #[test]
    fn mirrored_spawn_is_point_symmetric() {
        let cfg = ScenarioConfig { spawn: SpawnMode::Mirrored, ..ScenarioConfig::default() };
        let w = spawn(&cfg, 5).unwrap();
        for i in 0..5 {
            let a = &w.team(Team::Allied)[i];
            let e = &w.team(Team::Enemy)[i];
            assert!(mirror(w.arena(), a.position).distance(e.position) < 1e-12);
            assert!((a.heading + e.heading).norm() < 1e-12);
        }
        for c in w.static_obstacles().cells() {
            let m = mirror(w.arena(), c.center);
            assert!(w.static_obstacles().cells().iter().any(|d| d.center.distance(m) < 1e-9));
        }
    }

    #[test]
    fn overcrowded_spawn_is_a_config_error() {
        let cfg = ScenarioConfig { team_size: 200, min_spawn_separation: 10.0, ..ScenarioConfig::default() };
        assert!(matches!(spawn(&cfg, 1), Err(ConfigError::Unsatisfiable(_))));
    }
}
