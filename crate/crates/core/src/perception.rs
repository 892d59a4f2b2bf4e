//! Hierarchical semantic reports (units, local interactions, regions), a
//! perception noise model, and precision/recall scoring against truth.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::threat::ZoneGrid;
use crate::world::{AgentStatus, Team, WorldState};

pub const SCHEMA_VERSION: u32 = 1;
/// Radius of the local interaction neighborhood, meters.
pub const DEFAULT_INTERACTION_RADIUS: f64 = 5.0;
/// An obstacle within this distance is flagged as adjacent, meters.
pub const OBSTACLE_FLAG_RADIUS: f64 = 1.0;
pub const DEFAULT_MATCHING_RADIUS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArenaInfo {
    pub width: f64,
    pub height: f64,
    pub zone_rows: usize,
    pub zone_cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    /// Team-local index; `None` for units that do not correspond to a real
    /// agent.
    pub id: Option<u32>,
    pub team: Team,
    pub status: AgentStatus,
    pub position: Vec2,
    pub zone: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// Index into `units`.
    pub unit: usize,
    pub distance: f64,
    pub visible: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pressure {
    None,
    Favorable,
    Even,
    Unfavorable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    /// Index into `units` of the friendly unit this record describes.
    pub subject: usize,
    pub contacts: Vec<Contact>,
    pub obstacle_adjacent: bool,
    pub pressure: Pressure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionState {
    Contested,
    AlliedHeld,
    EnemyHeld,
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub zone: usize,
    pub allied: u32,
    pub enemy: u32,
    pub state: RegionState,
}

/// Battlefield description handed to a commander. Interactions are written
/// from the point of view of `side`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticReport {
    pub schema_version: u32,
    pub tick: u64,
    pub side: Team,
    pub arena: ArenaInfo,
    pub units: Vec<UnitRecord>,
    pub interactions: Vec<InteractionRecord>,
    pub regions: Vec<RegionRecord>,
}

impl SemanticReport {
    /// Rebuilds interactions and regions from `units`.
    pub fn derive(tick: u64, side: Team, units: Vec<UnitRecord>, world: &WorldState, zones: &ZoneGrid) -> Self {
        let arena = world.arena();
        let mut regions: Vec<RegionRecord> = (0..zones.len()).map(|zone| RegionRecord { zone, allied: 0, enemy: 0, state: RegionState::Empty }).collect();
        for u in &units {
            match u.team {
                Team::Allied => regions[u.zone].allied += 1,
                Team::Enemy => regions[u.zone].enemy += 1,
            }
        }
        for r in &mut regions {
            r.state = match (r.allied > 0, r.enemy > 0) {
                (true, true) => RegionState::Contested,
                (true, false) => RegionState::AlliedHeld,
                (false, true) => RegionState::EnemyHeld,
                (false, false) => RegionState::Empty,
            };
        }
        let mut interactions = Vec::new();
        for (s, subject) in units.iter().enumerate().filter(|(_, u)| u.team == side) {
            let mut contacts = Vec::new();
            let mut friends = 0usize;
            for (o, other) in units.iter().enumerate() {
                if o == s {
                    continue;
                }
                let distance = subject.position.distance(other.position);
                if distance > DEFAULT_INTERACTION_RADIUS {
                    continue;
                }
                if other.team == side {
                    friends += 1;
                } else {
                    contacts.push(Contact { unit: o, distance, visible: world.line_of_sight(subject.position, other.position) });
                }
            }
            let pressure = match contacts.len() {
                0 => Pressure::None,
                n if n < friends + 1 => Pressure::Favorable,
                n if n == friends + 1 => Pressure::Even,
                _ => Pressure::Unfavorable,
            };
            let obstacle_adjacent = world.all_cells().any(|c| c.contains_closed(subject.position, OBSTACLE_FLAG_RADIUS));
            interactions.push(InteractionRecord { subject: s, contacts, obstacle_adjacent, pressure });
        }
        Self {
            schema_version: SCHEMA_VERSION,
            tick,
            side,
            arena: ArenaInfo { width: arena.width, height: arena.height, zone_rows: zones.rows(), zone_cols: zones.cols() },
            units,
            interactions,
            regions,
        }
    }
}

/// Exact report from ground truth: every alive agent, allies first.
pub fn observe(world: &WorldState, side: Team, zones: &ZoneGrid) -> SemanticReport {
    let units = world
        .agents()
        .iter()
        .filter(|a| a.is_alive())
        .map(|a| UnitRecord { id: Some(a.id.index), team: a.id.team, status: a.status, position: a.position, zone: zones.zone_of(a.position) })
        .collect();
    SemanticReport::derive(world.tick, side, units, world, zones)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Root-mean-square radial position error, meters.
    pub position_jitter_sigma: f64,
    pub p_drop: f64,
    /// Probability, per true unit, of inserting one ghost unit.
    pub p_spurious: f64,
    pub p_team_flip: f64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.position_jitter_sigma >= 0.0 && self.position_jitter_sigma.is_finite()) {
            return Err(format!("position_jitter_sigma must be non-negative, got {}", self.position_jitter_sigma));
        }
        for (name, p) in [("p_drop", self.p_drop), ("p_spurious", self.p_spurious), ("p_team_flip", self.p_team_flip)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.position_jitter_sigma == 0.0 && self.p_drop == 0.0 && self.p_spurious == 0.0 && self.p_team_flip == 0.0
    }
}

/// Applies `noise` to the unit list of a noiseless report and rebuilds the
/// derived layers. Each true unit independently may be dropped, jittered,
/// team-flipped, and may spawn a ghost at a uniform free position.
pub fn corrupt<R: Rng + ?Sized>(report: &SemanticReport, noise: &NoiseModel, world: &WorldState, zones: &ZoneGrid, rng: &mut R) -> SemanticReport {
    if noise.is_zero() {
        return report.clone();
    }
    let arena = world.arena();
    // Per-axis deviation so the radial RMS equals the configured sigma.
    let axis = Normal::new(0.0, noise.position_jitter_sigma / std::f64::consts::SQRT_2).expect("validated sigma");
    let mut units = Vec::with_capacity(report.units.len());
    let mut ghosts = 0usize;
    for u in &report.units {
        let drop = rng.random::<f64>() < noise.p_drop;
        let dx = axis.sample(rng);
        let dy = axis.sample(rng);
        let flip = rng.random::<f64>() < noise.p_team_flip;
        if rng.random::<f64>() < noise.p_spurious {
            ghosts += 1;
        }
        if drop {
            continue;
        }
        let mut v = u.clone();
        v.position = arena.clamp(u.position + Vec2::new(dx, dy), 0.0);
        if flip {
            v.team = v.team.opponent();
        }
        v.zone = zones.zone_of(v.position);
        units.push(v);
    }
    for _ in 0..ghosts {
        let team = if rng.random::<bool>() { Team::Allied } else { Team::Enemy };
        let position = random_free_point(world, rng);
        units.push(UnitRecord { id: None, team, status: AgentStatus::Alive, position, zone: zones.zone_of(position) });
    }
    SemanticReport::derive(report.tick, report.side, units, world, zones)
}

/// Uniform point in free space by rejection sampling.
pub fn random_free_point<R: Rng + ?Sized>(world: &WorldState, rng: &mut R) -> Vec2 {
    let arena = world.arena();
    loop {
        let p = Vec2::new(rng.random::<f64>() * arena.width, rng.random::<f64>() * arena.height);
        if world.point_free(p) {
            return p;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionScore {
    pub precision: f64,
    pub recall: f64,
    pub hallucination: f64,
}

/// Greedy nearest-first one-to-one matching between reported units and true
/// alive agents of the same team within `matching_radius`.
pub fn score(report: &SemanticReport, truth: &WorldState, matching_radius: f64) -> PerceptionScore {
    let truth_units: Vec<_> = truth.agents().iter().filter(|a| a.is_alive()).collect();
    let mut pairs = Vec::new();
    for (r, u) in report.units.iter().enumerate() {
        for (t, a) in truth_units.iter().enumerate() {
            let d = u.position.distance(a.position);
            if u.team == a.id.team && d <= matching_radius {
                pairs.push((d, r, t));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_r = vec![false; report.units.len()];
    let mut used_t = vec![false; truth_units.len()];
    let mut matched = 0usize;
    for (_, r, t) in pairs {
        if !used_r[r] && !used_t[t] {
            used_r[r] = true;
            used_t[t] = true;
            matched += 1;
        }
    }
    let reported = report.units.len();
    let actual = truth_units.len();
    let precision = if reported == 0 {
        if actual == 0 { 1.0 } else { 0.0 }
    } else {
        matched as f64 / reported as f64
    };
    let recall = if actual == 0 { 1.0 } else { matched as f64 / actual as f64 };
    PerceptionScore { precision, recall, hallucination: 1.0 - precision }
}
