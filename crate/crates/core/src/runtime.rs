//! Per-side decision loop: commander cadence and event triggers,
//! instruction validation, path following, reflexive fallback and drive
//! attribution.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::commander::{Commander, Correction, DecisionInput, Instruction, Rejection};
use crate::expert::{RuleId, RuleTrace};
use crate::geometry::{Cell, Vec2};
use crate::nav::{plan_path, NavGrid, PathFollower};
use crate::perception::{corrupt, observe, score, NoiseModel, PerceptionScore, SemanticReport};
use crate::threat::ZoneGrid;
use crate::world::{AgentId, AgentState, Team, WorldState};

/// Speed used to turn toward a target once a waypoint is reached, m/s.
const FACE_SPEED: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribution {
    Commander,
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Cadence,
    Elimination,
    Contact,
}

/// Per-tick attribution counts of one side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriveLedger {
    pub commander: u64,
    pub fallback: u64,
}

impl DriveLedger {
    pub fn record(&mut self, a: Attribution) {
        match a {
            Attribution::Commander => self.commander += 1,
            Attribution::Fallback => self.fallback += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.commander + self.fallback
    }

    /// Share of agent-ticks driven by the commander; `None` before any entry.
    pub fn rate(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.commander as f64 / self.total() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub tick: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub agent: i64,
    pub reason: Rejection,
}

/// One commander invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub tick: u64,
    pub side: Team,
    pub trigger: Trigger,
    pub commander: String,
    pub report: SemanticReport,
    pub instructions: Vec<Instruction>,
    pub traces: Vec<RuleTrace>,
    pub rejections: Vec<RejectionRecord>,
    pub corrections: Vec<Correction>,
    pub failure: Option<FailureRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuntimeConfig {
    pub cadence: u64,
    pub replan_interval: u64,
    /// Distance at which a newly close opponent triggers a decision.
    pub engage_radius: f64,
    pub noise: NoiseModel,
    pub matching_radius: f64,
}

struct ActiveOrder {
    instruction: Instruction,
    follower: Option<PathFollower>,
    planned_at: u64,
}

/// Output of one controller tick.
#[derive(Debug, Default)]
pub struct TickOutput {
    pub commands: Vec<(AgentId, Vec2)>,
    pub attribution: Vec<(u32, Attribution)>,
    pub epoch: Option<EpochRecord>,
}

/// Everything a side accumulates over an episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SideStats {
    pub ledger: DriveLedger,
    pub invocations: u64,
    /// Wall-clock seconds per invocation.
    pub latencies: Vec<f64>,
    pub failures: Vec<FailureRecord>,
    pub rejections: u64,
    pub corrections: u64,
    pub perception: Vec<PerceptionScore>,
    pub rule_histogram: BTreeMap<RuleId, u64>,
}

pub struct SideController {
    side: Team,
    commander: Box<dyn Commander>,
    config: RuntimeConfig,
    orders: BTreeMap<u32, ActiveOrder>,
    noise_rng: ChaCha8Rng,
    seen_corpses: usize,
    close_prev: BTreeSet<u32>,
    pub stats: SideStats,
}

impl SideController {
    pub fn new(side: Team, commander: Box<dyn Commander>, config: RuntimeConfig, noise_seed: u64) -> Self {
        Self {
            side,
            commander,
            config,
            orders: BTreeMap::new(),
            noise_rng: ChaCha8Rng::seed_from_u64(noise_seed),
            seen_corpses: 0,
            close_prev: BTreeSet::new(),
            stats: SideStats::default(),
        }
    }

    pub fn side(&self) -> Team {
        self.side
    }

    pub fn commander_name(&self) -> &str {
        self.commander.name()
    }

    fn trigger(&mut self, world: &WorldState) -> Option<Trigger> {
        let eliminated = world.corpses().len() > self.seen_corpses;
        self.seen_corpses = world.corpses().len();
        let r = self.config.engage_radius;
        let close: BTreeSet<u32> = world
            .alive(self.side.opponent())
            .filter(|e| world.alive(self.side).any(|a| a.position.distance(e.position) <= r))
            .map(|e| e.id.index)
            .collect();
        let new_contact = close.difference(&self.close_prev).next().is_some();
        self.close_prev = close;
        if world.tick % self.config.cadence == 0 {
            Some(Trigger::Cadence)
        } else if eliminated {
            Some(Trigger::Elimination)
        } else if new_contact {
            Some(Trigger::Contact)
        } else {
            None
        }
    }

    fn invoke(&mut self, world: &WorldState, nav: &NavGrid, zones: &ZoneGrid, trigger: Trigger) -> EpochRecord {
        let truth = observe(world, self.side, zones);
        let report = corrupt(&truth, &self.config.noise, world, zones, &mut self.noise_rng);
        self.stats.perception.push(score(&report, world, self.config.matching_radius));
        let input = DecisionInput { world, side: self.side, report: &report, nav, zones };
        let started = Instant::now();
        let result = self.commander.decide(&input);
        self.stats.latencies.push(started.elapsed().as_secs_f64());
        self.stats.invocations += 1;
        let mut record = EpochRecord {
            tick: world.tick,
            side: self.side,
            trigger,
            commander: self.commander.name().to_string(),
            report,
            instructions: Vec::new(),
            traces: Vec::new(),
            rejections: Vec::new(),
            corrections: Vec::new(),
            failure: None,
        };
        self.orders.clear();
        match result {
            Err(e) => {
                log::warn!("{} commander failed at tick {}: {e}", self.side_name(), world.tick);
                let f = FailureRecord { tick: world.tick, kind: e.kind().to_string(), message: e.to_string() };
                self.stats.failures.push(f.clone());
                record.failure = Some(f);
            }
            Ok(out) => {
                for t in &out.traces {
                    *self.stats.rule_histogram.entry(t.rule).or_default() += 1;
                }
                record.traces = out.traces;
                for wire in &out.instructions {
                    match crate::commander::validate_instruction(wire, world, self.side, nav) {
                        Ok(acc) if self.orders.contains_key(&acc.instruction.agent) => {
                            record.rejections.push(RejectionRecord {
                                agent: wire.agent,
                                reason: Rejection::DanglingReference(format!("duplicate instruction for agent {}", wire.agent)),
                            });
                        }
                        Ok(acc) => {
                            if let Some(c) = acc.correction {
                                record.corrections.push(c);
                            }
                            record.instructions.push(acc.instruction.clone());
                            self.orders.insert(acc.instruction.agent, ActiveOrder { instruction: acc.instruction, follower: None, planned_at: world.tick });
                        }
                        Err(reason) => {
                            log::debug!("{} instruction rejected: {reason}", self.side_name());
                            record.rejections.push(RejectionRecord { agent: wire.agent, reason });
                        }
                    }
                }
                self.stats.rejections += record.rejections.len() as u64;
                self.stats.corrections += record.corrections.len() as u64;
            }
        }
        record
    }

    fn side_name(&self) -> &'static str {
        match self.side {
            Team::Allied => "allied",
            Team::Enemy => "enemy",
        }
    }

    /// Computes this side's velocity commands for the current tick.
    /// `new_corpses` are the obstacles added to `nav` since the last tick.
    pub fn tick(&mut self, world: &WorldState, nav: &NavGrid, zones: &ZoneGrid, new_corpses: &[Cell]) -> TickOutput {
        let mut out = TickOutput::default();
        if let Some(trigger) = self.trigger(world) {
            out.epoch = Some(self.invoke(world, nav, zones, trigger));
        }
        let params = world.params();
        let ids: Vec<AgentId> = world.alive(self.side).map(|a| a.id).collect();
        for id in ids {
            let agent = world.agent(id).expect("alive agent");
            let mut command = None;
            if let Some(order) = self.orders.get_mut(&id.index) {
                command = follow(order, agent, world, nav, new_corpses, self.config.replan_interval);
                if command.is_none() {
                    self.orders.remove(&id.index);
                }
            }
            let attribution = if command.is_some() { Attribution::Commander } else { Attribution::Fallback };
            let v = command.unwrap_or_else(|| fallback(world, id, self.config.engage_radius));
            self.stats.ledger.record(attribution);
            out.attribution.push((id.index, attribution));
            out.commands.push((id, v.clamp_norm(params.v_max)));
        }
        out
    }
}

/// Velocity for a still-valid order, `None` once the order is invalid.
fn follow(order: &mut ActiveOrder, me: &AgentState, world: &WorldState, nav: &NavGrid, new_corpses: &[Cell], replan_interval: u64) -> Option<Vec2> {
    let instr = &order.instruction;
    let target = match instr.target {
        Some(t) => {
            let e = world.agent(AgentId::new(me.id.team.opponent(), t))?;
            if !e.is_alive() {
                return None;
            }
            Some(e)
        }
        None => None,
    };
    if !world.point_free(instr.waypoint) {
        return None;
    }
    let stale = world.tick.saturating_sub(order.planned_at) >= replan_interval;
    let blocked = order.follower.as_ref().is_some_and(|f| {
        let mut prev = me.position;
        f.remaining().iter().any(|&w| {
            let hit = new_corpses.iter().any(|c| c.blocks_open_segment(prev, w, 0.0));
            prev = w;
            hit
        })
    });
    if order.follower.is_none() || stale || blocked {
        let path = plan_path(nav, me.position, instr.waypoint).ok()?;
        order.follower = Some(PathFollower::new(path));
        order.planned_at = world.tick;
    }
    let params = world.params();
    let v = order.follower.as_mut().expect("planned").steer(me.position, params.v_max, params.dt);
    if v == Vec2::zero() {
        if let Some(e) = target {
            if let Some(u) = (e.position - me.position).normalized() {
                return Some(u * FACE_SPEED);
            }
        }
    }
    Some(v)
}

/// Reflexive behavior: close on the nearest visible opponent within
/// `radius`, else hold.
pub fn fallback(world: &WorldState, id: AgentId, radius: f64) -> Vec2 {
    let Some(me) = world.agent(id) else { return Vec2::zero() };
    let nearest = world
        .alive(id.team.opponent())
        .map(|e| (e.position.distance(me.position), e))
        .filter(|(d, e)| *d <= radius && world.line_of_sight(me.position, e.position))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match nearest {
        Some((_, e)) => (e.position - me.position).normalized().map_or(Vec2::zero(), |u| u * world.params().v_max),
        None => Vec2::zero(),
    }
}
