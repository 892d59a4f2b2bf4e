//! Battlefield state, motion integration, fire resolution and termination.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{first_contact_among, in_attack_cone, Arena, Axis, Cell, GeometryError, ObstacleSet, Vec2};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("velocity command for eliminated agent {0}")]
    CommandForEliminated(AgentId),
    #[error("velocity command for unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("non-finite velocity command for agent {0}")]
    NonFiniteCommand(AgentId),
    #[error("agent {0} placed outside free space")]
    AgentNotInFreeSpace(AgentId),
    #[error("agents must be listed allied first, each team indexed 0..n")]
    BadAgentOrder,
    #[error("invalid engagement parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Team {
    Allied,
    Enemy,
}

impl Team {
    pub fn opponent(self) -> Team {
        match self {
            Team::Allied => Team::Enemy,
            Team::Enemy => Team::Allied,
        }
    }
}

/// Team-scoped agent identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub team: Team,
    pub index: u32,
}

impl AgentId {
    pub fn new(team: Team, index: u32) -> Self {
        Self { team, index }
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.team {
            Team::Allied => write!(f, "a{}", self.index),
            Team::Enemy => write!(f, "e{}", self.index),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStatus {
    Alive,
    Eliminated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct AgentState<S = f64> {
    pub id: AgentId,
    pub position: Vec2<S>,
    pub velocity: Vec2<S>,
    /// Unit vector; kept when the agent stops.
    pub heading: Vec2<S>,
    pub status: AgentStatus,
    /// Ticks until the agent may fire again.
    pub fire_cooldown: u32,
}

impl<S: Scalar> AgentState<S> {
    pub fn new(id: AgentId, position: Vec2<S>, heading: Vec2<S>) -> Self {
        Self {
            id,
            position,
            velocity: Vec2::zero(),
            heading: heading.normalized().unwrap_or(Vec2::new(S::one(), S::zero())),
            status: AgentStatus::Alive,
            fire_cooldown: 0,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.status == AgentStatus::Alive
    }

    pub fn team(&self) -> Team {
        self.id.team
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(default)]
pub struct EngagementParams<S = f64> {
    /// Attack radius in meters.
    pub attack_radius: S,
    /// Full field-of-view angle of the attack cone, radians.
    pub fov: S,
    pub v_max: S,
    /// Integration step, seconds.
    pub dt: S,
    pub max_ticks: u64,
    pub fire_cooldown_ticks: u32,
    /// Footprint of the obstacle an eliminated agent leaves behind.
    pub corpse_side: S,
}

impl<S: Scalar> Default for EngagementParams<S> {
    fn default() -> Self {
        Self {
            attack_radius: S::one(),
            fov: S::lit(2.0) * S::PI() / S::lit(3.0),
            v_max: S::lit(2.0),
            dt: S::lit(0.1),
            max_ticks: 2000,
            fire_cooldown_ticks: 10,
            corpse_side: S::lit(0.3),
        }
    }
}

impl<S: Scalar> EngagementParams<S> {
    pub fn validate(&self) -> Result<(), WorldError> {
        let positive = [
            ("attack_radius", self.attack_radius),
            ("fov", self.fov),
            ("v_max", self.v_max),
            ("dt", self.dt),
            ("corpse_side", self.corpse_side),
        ];
        for (name, value) in positive {
            if !(value > S::zero() && value.is_finite()) {
                return Err(WorldError::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        if self.fov > S::TAU() {
            return Err(WorldError::InvalidParams(format!("fov must not exceed 2*pi, got {}", self.fov)));
        }
        if self.max_ticks == 0 || self.fire_cooldown_ticks == 0 {
            return Err(WorldError::InvalidParams("max_ticks and fire_cooldown_ticks must be at least 1".into()));
        }
        Ok(())
    }
}

/// Obstacle left at an eliminated agent's final position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Corpse<S = f64> {
    pub agent: AgentId,
    pub cell: Cell<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Elimination {
    pub shooter: AgentId,
    pub target: AgentId,
    /// Tick at which the step that produced it started.
    pub tick: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Allied,
    Enemy,
    Draw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub winner: Winner,
    pub end_tick: u64,
    pub survivors_allied: u32,
    pub survivors_enemy: u32,
}

pub type VelocityCommands<S = f64> = BTreeMap<AgentId, Vec2<S>>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub eliminations: Vec<Elimination>,
}

/// Full battlefield truth at one tick.
#[derive(Clone, Debug)]
pub struct WorldState<S = f64> {
    pub tick: u64,
    agents: Vec<AgentState<S>>,
    allied_count: usize,
    static_obstacles: ObstacleSet<S>,
    corpses: Vec<Corpse<S>>,
    params: EngagementParams<S>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> WorldState<S> {
    /// Agents must be ordered allied first, each team indexed from zero.
    pub fn new(
        static_obstacles: ObstacleSet<S>,
        agents: Vec<AgentState<S>>,
        params: EngagementParams<S>,
        seed: u64,
    ) -> Result<Self, WorldError> {
        params.validate()?;
        let allied_count = agents.iter().take_while(|a| a.id.team == Team::Allied).count();
        for (slot, agent) in agents.iter().enumerate() {
            let expected = if slot < allied_count {
                AgentId::new(Team::Allied, slot as u32)
            } else {
                AgentId::new(Team::Enemy, (slot - allied_count) as u32)
            };
            if agent.id != expected {
                return Err(WorldError::BadAgentOrder);
            }
        }
        let world = Self { tick: 0, agents, allied_count, static_obstacles, corpses: Vec::new(), params, rng: ChaCha8Rng::seed_from_u64(seed) };
        for agent in &world.agents {
            if !agent.position.is_finite() || !world.point_free(agent.position) {
                return Err(WorldError::AgentNotInFreeSpace(agent.id));
            }
        }
        Ok(world)
    }

    pub fn arena(&self) -> Arena<S> {
        self.static_obstacles.arena()
    }

    pub fn params(&self) -> &EngagementParams<S> {
        &self.params
    }

    pub fn static_obstacles(&self) -> &ObstacleSet<S> {
        &self.static_obstacles
    }

    pub fn corpses(&self) -> &[Corpse<S>] {
        &self.corpses
    }

    pub fn agents(&self) -> &[AgentState<S>] {
        &self.agents
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn team_size(&self, team: Team) -> usize {
        match team {
            Team::Allied => self.allied_count,
            Team::Enemy => self.agents.len() - self.allied_count,
        }
    }

    fn slot(&self, id: AgentId) -> Option<usize> {
        let i = id.index as usize;
        if i >= self.team_size(id.team) {
            return None;
        }
        Some(match id.team {
            Team::Allied => i,
            Team::Enemy => self.allied_count + i,
        })
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState<S>> {
        self.slot(id).map(|s| &self.agents[s])
    }

    pub fn team(&self, team: Team) -> &[AgentState<S>] {
        match team {
            Team::Allied => &self.agents[..self.allied_count],
            Team::Enemy => &self.agents[self.allied_count..],
        }
    }

    pub fn alive(&self, team: Team) -> impl Iterator<Item = &AgentState<S>> + '_ {
        self.team(team).iter().filter(|a| a.is_alive())
    }

    pub fn alive_count(&self, team: Team) -> usize {
        self.alive(team).count()
    }

    /// Inside the arena and outside every obstacle interior.
    pub fn point_free(&self, p: Vec2<S>) -> bool {
        self.arena().contains(p)
            && self.static_obstacles.cell_containing(p).is_none()
            && !self.corpses.iter().any(|c| c.cell.contains_interior(p))
    }

    /// Visibility against static and corpse obstacles. Endpoints are assumed
    /// to be in free space.
    pub fn line_of_sight(&self, a: Vec2<S>, b: Vec2<S>) -> bool {
        !self.static_obstacles.segment_blocked(a, b, S::zero())
            && !self.corpses.iter().any(|c| c.cell.blocks_open_segment(a, b, S::zero()))
    }

    /// All obstacle cells, static first, then corpses.
    pub fn all_cells(&self) -> impl Iterator<Item = &Cell<S>> + '_ {
        self.static_obstacles.cells().iter().chain(self.corpses.iter().map(|c| &c.cell))
    }

    /// Advances one tick: clamp and integrate commands, stop moves at the
    /// first contact, resolve fire simultaneously, then increment the clock.
    pub fn step(&mut self, commands: &VelocityCommands<S>) -> Result<StepReport, WorldError> {
        for (&id, v) in commands {
            let agent = self.agent(id).ok_or(WorldError::UnknownAgent(id))?;
            if !agent.is_alive() {
                return Err(WorldError::CommandForEliminated(id));
            }
            if !v.is_finite() {
                return Err(WorldError::NonFiniteCommand(id));
            }
        }
        for agent in self.agents.iter_mut().filter(|a| a.is_alive()) {
            agent.fire_cooldown = agent.fire_cooldown.saturating_sub(1);
        }
        let dt = self.params.dt;
        for slot in 0..self.agents.len() {
            if !self.agents[slot].is_alive() {
                continue;
            }
            let id = self.agents[slot].id;
            let command = commands.get(&id).copied().unwrap_or_else(Vec2::zero).clamp_norm(self.params.v_max);
            let start = self.agents[slot].position;
            let end = self.swept_end(start, start + command * dt);
            let agent = &mut self.agents[slot];
            agent.position = end;
            agent.velocity = (end - start) * (S::one() / dt);
            if let Some(h) = command.normalized() {
                agent.heading = h;
            }
        }
        let eliminations = self.resolve_fire();
        self.tick += 1;
        Ok(StepReport { eliminations })
    }

    /// Where a move from `a` toward `b` ends: at `b`, or flush against the
    /// first obstacle face or arena wall it touches.
    fn swept_end(&self, a: Vec2<S>, b: Vec2<S>) -> Vec2<S> {
        if a == b {
            return a;
        }
        let d = b - a;
        let arena = self.arena();
        let mut best_t = S::one();
        let mut snap: Option<(Axis, S)> = None;
        for (axis, origin, dir, limit) in [(Axis::X, a.x, d.x, arena.width), (Axis::Y, a.y, d.y, arena.height)] {
            let wall = if dir < S::zero() { Some(S::zero()) } else if dir > S::zero() { Some(limit) } else { None };
            if let Some(wall) = wall {
                let t = ((wall - origin) / dir).max(S::zero());
                if t < best_t {
                    best_t = t;
                    snap = Some((axis, wall));
                }
            }
        }
        let corpse_cells = self.corpses.iter().enumerate().map(|(i, c)| (i, &c.cell));
        let contacts = [
            self.static_obstacles.first_contact(a, b).map(|c| (c, self.static_obstacles.cells()[c.cell])),
            first_contact_among(corpse_cells, a, b).map(|c| (c, self.corpses[c.cell].cell)),
        ];
        for (contact, cell) in contacts.into_iter().flatten() {
            if contact.t < best_t {
                best_t = contact.t;
                snap = contact.axis.map(|axis| match axis {
                    Axis::X => (axis, if d.x > S::zero() { cell.min().x } else { cell.max().x }),
                    Axis::Y => (axis, if d.y > S::zero() { cell.min().y } else { cell.max().y }),
                });
                if contact.axis.is_none() {
                    return a;
                }
            }
        }
        if best_t >= S::one() {
            return b;
        }
        let mut p = a + d * best_t;
        match snap {
            Some((Axis::X, v)) => p.x = v,
            Some((Axis::Y, v)) => p.y = v,
            None => {}
        }
        p
    }

    /// Simultaneous fire against the pre-fire state. Each ready shooter hits
    /// its nearest eligible opponent; hit agents become corpse obstacles.
    pub fn resolve_fire(&mut self) -> Vec<Elimination> {
        let radius = self.params.attack_radius;
        let fov = self.params.fov;
        let mut hits: Vec<Elimination> = Vec::new();
        for shooter in self.agents.iter().filter(|a| a.is_alive() && a.fire_cooldown == 0) {
            let mut best: Option<(S, AgentId)> = None;
            for target in self.alive(shooter.team().opponent()) {
                let in_cone = in_attack_cone(shooter.position, shooter.heading, target.position, radius, fov).unwrap_or(false);
                if !in_cone || !self.line_of_sight(shooter.position, target.position) {
                    continue;
                }
                let d = shooter.position.distance(target.position);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, target.id));
                }
            }
            if let Some((_, target)) = best {
                hits.push(Elimination { shooter: shooter.id, target, tick: self.tick });
            }
        }
        let cooldown = self.params.fire_cooldown_ticks;
        for hit in &hits {
            if let Some(slot) = self.slot(hit.shooter) {
                self.agents[slot].fire_cooldown = cooldown;
            }
        }
        let mut eliminated: Vec<AgentId> = hits.iter().map(|h| h.target).collect();
        eliminated.sort();
        eliminated.dedup();
        for id in eliminated {
            let slot = self.slot(id).expect("eliminated agent exists");
            let agent = &mut self.agents[slot];
            agent.status = AgentStatus::Eliminated;
            agent.velocity = Vec2::zero();
            let cell = Cell::new(agent.position, self.params.corpse_side);
            self.corpses.push(Corpse { agent: id, cell });
            self.eject_from(cell);
        }
        hits
    }

    /// Moves alive agents engulfed by a fresh corpse to its nearest face.
    fn eject_from(&mut self, cell: Cell<S>) {
        let arena = self.arena();
        for agent in self.agents.iter_mut().filter(|a| a.is_alive()) {
            let p = agent.position;
            if !cell.contains_interior(p) {
                continue;
            }
            let (lo, hi) = (cell.min(), cell.max());
            let options = [
                (p.x - lo.x, Vec2::new(lo.x, p.y)),
                (hi.x - p.x, Vec2::new(hi.x, p.y)),
                (p.y - lo.y, Vec2::new(p.x, lo.y)),
                (hi.y - p.y, Vec2::new(p.x, hi.y)),
            ];
            let target = options
                .iter()
                .filter(|(_, q)| arena.contains(*q))
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(_, q)| *q);
            if let Some(q) = target {
                agent.position = q;
            }
        }
    }

    pub fn check_termination(&self) -> Option<EpisodeOutcome> {
        check_termination(self, &self.params)
    }
}

/// Outcome once a team is wiped out or the tick limit is reached. At the
/// limit the side with strictly more survivors wins; equal counts draw.
pub fn check_termination<S: Scalar>(world: &WorldState<S>, params: &EngagementParams<S>) -> Option<EpisodeOutcome> {
    let allied = world.alive_count(Team::Allied) as u32;
    let enemy = world.alive_count(Team::Enemy) as u32;
    if allied > 0 && enemy > 0 && world.tick < params.max_ticks {
        return None;
    }
    let winner = match allied.cmp(&enemy) {
        std::cmp::Ordering::Greater => Winner::Allied,
        std::cmp::Ordering::Less => Winner::Enemy,
        std::cmp::Ordering::Equal => Winner::Draw,
    };
    Some(EpisodeOutcome { winner, end_tick: world.tick, survivors_allied: allied, survivors_enemy: enemy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arena() -> Arena<f64> {
        Arena::new(30.0, 16.0).unwrap()
    }

    fn world_with(cells: Vec<Cell<f64>>, allies: &[(Vec2, Vec2)], enemies: &[(Vec2, Vec2)]) -> WorldState {
        let mut agents = Vec::new();
        for (i, &(p, h)) in allies.iter().enumerate() {
            agents.push(AgentState::new(AgentId::new(Team::Allied, i as u32), p, h));
        }
        for (i, &(p, h)) in enemies.iter().enumerate() {
            agents.push(AgentState::new(AgentId::new(Team::Enemy, i as u32), p, h));
        }
        WorldState::new(ObstacleSet::new(arena(), cells).unwrap(), agents, EngagementParams::default(), 7).unwrap()
    }

    fn a(i: u32) -> AgentId {
        AgentId::new(Team::Allied, i)
    }

    fn e(i: u32) -> AgentId {
        AgentId::new(Team::Enemy, i)
    }

    const EAST: Vec2 = Vec2 { x: 1.0, y: 0.0 };
    const WEST: Vec2 = Vec2 { x: -1.0, y: 0.0 };

    #[test]
    fn speed_is_clamped_to_v_max() {
        let mut w = world_with(vec![], &[(Vec2::new(5.0, 5.0), EAST)], &[(Vec2::new(20.0, 5.0), WEST)]);
        let cmds = VelocityCommands::from([(a(0), Vec2::new(3.0, 0.0))]);
        w.step(&cmds).unwrap();
        let p = w.agent(a(0)).unwrap().position;
        assert!((p.x - 5.2).abs() < 1e-12 && p.y == 5.0);
        assert_eq!(w.tick, 1);
    }

    #[test]
    fn zero_commands_keep_positions() {
        let mut w = world_with(vec![], &[(Vec2::new(5.0, 5.0), EAST)], &[(Vec2::new(20.0, 5.0), WEST)]);
        let before: Vec<_> = w.agents().iter().map(|a| a.position).collect();
        w.step(&VelocityCommands::new()).unwrap();
        let after: Vec<_> = w.agents().iter().map(|a| a.position).collect();
        assert_eq!(before, after);
        assert_eq!(w.tick, 1);
    }

    #[test]
    fn blocked_move_ends_flush_at_face() {
        // Cell face at x = 10 - 0.15; agent 0.05 m short of it.
        let cell = Cell::new(Vec2::new(10.0, 5.0), 0.3);
        let start = Vec2::new(9.8, 5.0);
        let mut w = world_with(vec![cell], &[(start, EAST)], &[(Vec2::new(20.0, 5.0), WEST)]);
        w.step(&VelocityCommands::from([(a(0), Vec2::new(2.0, 0.0))])).unwrap();
        let p = w.agent(a(0)).unwrap().position;
        // Contact oracle: smallest t with start.x + t * 0.2 == face.
        let face = cell.center.x - cell.side / 2.0;
        let t = (face - start.x) / 0.2;
        assert!((0.0..=1.0).contains(&t));
        assert_eq!(p, Vec2::new(start.x + t * 0.2, 5.0));
        assert!(!cell.contains_interior(p));
        assert!((p.x - 9.85).abs() < 1e-12);
    }

    #[test]
    fn arena_wall_stops_motion() {
        let mut w = world_with(vec![], &[(Vec2::new(0.05, 5.0), WEST)], &[(Vec2::new(20.0, 5.0), WEST)]);
        w.step(&VelocityCommands::from([(a(0), Vec2::new(-2.0, 0.0))])).unwrap();
        assert_eq!(w.agent(a(0)).unwrap().position, Vec2::new(0.0, 5.0));
    }

    #[test]
    fn command_for_eliminated_agent_is_rejected() {
        let mut w = world_with(vec![], &[(Vec2::new(5.0, 5.0), EAST)], &[(Vec2::new(5.5, 5.0), WEST), (Vec2::new(20.0, 5.0), WEST)]);
        w.step(&VelocityCommands::new()).unwrap();
        assert!(!w.agent(a(0)).unwrap().is_alive());
        let err = w.step(&VelocityCommands::from([(a(0), Vec2::new(1.0, 0.0))])).unwrap_err();
        assert_eq!(err, WorldError::CommandForEliminated(a(0)));
    }

    #[test]
    fn facing_opponents_trade_simultaneously() {
        let mut w = world_with(vec![], &[(Vec2::new(5.0, 5.0), EAST)], &[(Vec2::new(5.5, 5.0), WEST)]);
        let report = w.step(&VelocityCommands::new()).unwrap();
        assert_eq!(report.eliminations.len(), 2);
        assert_eq!(w.alive_count(Team::Allied), 0);
        assert_eq!(w.alive_count(Team::Enemy), 0);
        assert_eq!(w.corpses().len(), 2);
        let out = w.check_termination().unwrap();
        assert_eq!(out.winner, Winner::Draw);
    }

    #[test]
    fn obstacle_between_blocks_fire() {
        let cell = Cell::new(Vec2::new(5.25, 5.0), 0.3);
        let mut w = world_with(vec![cell], &[(Vec2::new(5.0, 5.0), EAST)], &[(Vec2::new(5.5, 5.0), WEST)]);
        let report = w.step(&VelocityCommands::new()).unwrap();
        assert!(report.eliminations.is_empty());
    }

    #[test]
    fn shooter_hits_only_nearest_target() {
        let mut w = world_with(
            vec![],
            &[(Vec2::new(5.0, 5.0), EAST)],
            &[(Vec2::new(5.4, 5.0), Vec2::new(0.0, 1.0)), (Vec2::new(5.8, 5.0), Vec2::new(0.0, 1.0))],
        );
        // Eligibility oracle: both targets are in the cone with clear sight.
        let shooter = w.agent(a(0)).unwrap().clone();
        let eligible: Vec<_> = w
            .alive(Team::Enemy)
            .filter(|t| in_attack_cone(shooter.position, shooter.heading, t.position, 1.0, w.params().fov).unwrap())
            .map(|t| t.id)
            .collect();
        assert_eq!(eligible, vec![e(0), e(1)]);
        let report = w.step(&VelocityCommands::new()).unwrap();
        assert_eq!(report.eliminations, vec![Elimination { shooter: a(0), target: e(0), tick: 0 }]);
        assert!(w.agent(e(1)).unwrap().is_alive());
        assert_eq!(w.agent(a(0)).unwrap().fire_cooldown, 10);
    }

    #[test]
    fn cooldown_gates_the_next_shot() {
        // e1 sits off-axis so e0's corpse does not hide it.
        let mut w = world_with(
            vec![],
            &[(Vec2::new(5.0, 5.0), EAST)],
            &[(Vec2::new(5.4, 5.0), Vec2::new(0.0, 1.0)), (Vec2::new(5.6, 5.5), Vec2::new(0.0, 1.0))],
        );
        w.step(&VelocityCommands::new()).unwrap();
        for _ in 0..9 {
            assert!(w.step(&VelocityCommands::new()).unwrap().eliminations.is_empty());
        }
        let report = w.step(&VelocityCommands::new()).unwrap();
        assert_eq!(report.eliminations.len(), 1);
        assert_eq!(report.eliminations[0].target, e(1));
    }

    #[test]
    fn termination_rules() {
        let mut w = world_with(
            vec![],
            &[(Vec2::new(2.0, 2.0), EAST), (Vec2::new(2.0, 6.0), EAST), (Vec2::new(2.0, 10.0), EAST)],
            &[(Vec2::new(20.0, 2.0), WEST), (Vec2::new(20.0, 6.0), WEST), (Vec2::new(20.0, 10.0), WEST)],
        );
        assert!(w.check_termination().is_none());
        w.tick = 2000;
        assert_eq!(w.check_termination().unwrap().winner, Winner::Draw);
        w.agents[3].status = AgentStatus::Eliminated;
        w.agents[4].status = AgentStatus::Eliminated;
        let out = w.check_termination().unwrap();
        assert_eq!((out.winner, out.survivors_allied, out.survivors_enemy), (Winner::Allied, 3, 1));
        w.tick = 500;
        for s in 0..3 {
            w.agents[s].status = AgentStatus::Eliminated;
        }
        w.agents[3].status = AgentStatus::Alive;
        w.agents[4].status = AgentStatus::Alive;
        let out = w.check_termination().unwrap();
        assert_eq!((out.winner, out.end_tick), (Winner::Enemy, 500));
    }

    #[test]
    fn corpse_ejects_engulfed_agent() {
        // e0 is hit by a0; a1 stands 0.05 m from e0's final position.
        let mut w = world_with(
            vec![],
            &[(Vec2::new(5.0, 5.0), EAST), (Vec2::new(5.45, 5.0), Vec2::new(0.0, 1.0))],
            &[(Vec2::new(5.5, 5.0), Vec2::new(0.0, 1.0))],
        );
        w.step(&VelocityCommands::new()).unwrap();
        assert!(!w.agent(e(0)).unwrap().is_alive());
        let p = w.agent(a(1)).unwrap().position;
        assert!(w.point_free(p));
        assert!((p.x - 5.35).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn stepping_conserves_agents_and_keeps_free_space(
            seed in 0u64..1000,
            cmds in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 8),
            steps in 1usize..30,
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cells: Vec<Cell<f64>> = (0..15).map(|_| Cell::new(Vec2::new(rng.random_range(1.0..29.0), rng.random_range(1.0..15.0)), 0.3)).collect();
            let obs = ObstacleSet::new(arena(), cells).unwrap();
            let mut agents = Vec::new();
            for i in 0..8u32 {
                let team = if i < 4 { Team::Allied } else { Team::Enemy };
                let p = loop {
                    let p = Vec2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..16.0));
                    if obs.cell_containing(p).is_none() { break p; }
                };
                agents.push(AgentState::new(AgentId::new(team, i % 4), p, Vec2::new(rng.random_range(-1.0..1.0), 1.0)));
            }
            let mut w = WorldState::new(obs, agents, EngagementParams::default(), seed).unwrap();
            let mut corpses = 0;
            for _ in 0..steps {
                let before = [w.alive_count(Team::Allied), w.alive_count(Team::Enemy)];
                let commands: VelocityCommands = w.agents().iter().filter(|a| a.is_alive()).zip(&cmds).map(|(a, &(x, y))| (a.id, Vec2::new(x, y))).collect();
                let report = w.step(&commands).unwrap();
                for (k, team) in [Team::Allied, Team::Enemy].into_iter().enumerate() {
                    let lost = report.eliminations.iter().map(|h| h.target).filter(|t| t.team == team).collect::<std::collections::BTreeSet<_>>().len();
                    prop_assert_eq!(w.alive_count(team) + lost, before[k]);
                }
                prop_assert!(w.corpses().len() >= corpses);
                corpses = w.corpses().len();
                for agent in w.agents().iter().filter(|a| a.is_alive()) {
                    prop_assert!(w.point_free(agent.position));
                    prop_assert!(agent.velocity.norm() <= w.params().v_max + 1e-9);
                }
            }
        }
    }
}
