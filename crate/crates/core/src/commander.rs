//! Commander interface, instruction schema and validation, and the built-in
//! commanders (expert, scripted, random).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expert::{decide, ActionType, ExpertContext, ExpertParams, RuleTrace, ATTACK_STANDOFF};
use crate::geometry::Vec2;
use crate::nav::{NavGrid, SNAP_RADIUS};
use crate::perception::{random_free_point, SemanticReport};
use crate::threat::{ThreatField, ZoneGrid};
use crate::world::{AgentId, Team, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionSource {
    Commander,
    Fallback,
}

/// One command for one agent. Agent, target and partner are team-local
/// indices: `agent` and `partner` on the commanded side, `target` on the
/// opposing side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub agent: u32,
    pub action: ActionType,
    pub waypoint: Vec2,
    pub target: Option<u32>,
    pub partner: Option<u32>,
    pub source: InstructionSource,
    pub issued_tick: u64,
}

impl Instruction {
    pub fn to_wire(&self) -> WireInstruction {
        WireInstruction {
            agent: i64::from(self.agent),
            action: self.action.name().to_string(),
            waypoint: [self.waypoint.x, self.waypoint.y],
            target: self.target.map(i64::from),
            partner: self.partner.map(i64::from),
        }
    }
}

/// Instruction as exchanged with external commanders and stored in datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireInstruction {
    pub agent: i64,
    pub action: String,
    pub waypoint: [f64; 2],
    #[serde(default)]
    pub target: Option<i64>,
    #[serde(default)]
    pub partner: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WirePlan {
    pub instructions: Vec<WireInstruction>,
}

#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Rejection {
    #[error("agent {0} is eliminated")]
    DeadAgent(u32),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("waypoint ({0}, {1}) is outside the arena")]
    OutOfBounds(f64, f64),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
}

/// Waypoint moved out of an obstacle during validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub agent: u32,
    pub from: Vec2,
    pub to: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Accepted {
    pub instruction: Instruction,
    pub correction: Option<Correction>,
}

fn index_on(world: &WorldState, team: Team, raw: i64, what: &str) -> Result<u32, Rejection> {
    let size = world.team_size(team) as i64;
    if (0..size).contains(&raw) {
        Ok(raw as u32)
    } else {
        Err(Rejection::DanglingReference(format!("{what} {raw} does not exist")))
    }
}

/// Checks a wire instruction from `side`'s commander against the world.
/// Waypoints inside an obstacle are moved to the nearest free grid cell
/// and reported as a correction. Never mutates the world.
pub fn validate_instruction(wire: &WireInstruction, world: &WorldState, side: Team, nav: &NavGrid) -> Result<Accepted, Rejection> {
    let agent = index_on(world, side, wire.agent, "agent")?;
    if !world.agent(AgentId::new(side, agent)).is_some_and(|a| a.is_alive()) {
        return Err(Rejection::DeadAgent(agent));
    }
    let action = ActionType::parse(&wire.action).ok_or_else(|| Rejection::UnknownAction(wire.action.clone()))?;
    let [x, y] = wire.waypoint;
    let waypoint = Vec2::new(x, y);
    if !waypoint.is_finite() || !world.arena().contains(waypoint) {
        return Err(Rejection::OutOfBounds(x, y));
    }
    let target = match wire.target {
        Some(raw) => {
            let t = index_on(world, side.opponent(), raw, "target")?;
            if !world.agent(AgentId::new(side.opponent(), t)).is_some_and(|a| a.is_alive()) {
                return Err(Rejection::DanglingReference(format!("target {t} is eliminated")));
            }
            Some(t)
        }
        None if action.needs_target() => return Err(Rejection::DanglingReference(format!("{action} requires a target"))),
        None => None,
    };
    let partner = match wire.partner {
        Some(raw) => Some(index_on(world, side, raw, "partner")?),
        None => None,
    };
    let mut correction = None;
    let mut final_point = waypoint;
    if !world.point_free(waypoint) {
        let cell = nav.nearest_free(waypoint, SNAP_RADIUS).ok_or(Rejection::OutOfBounds(x, y))?;
        final_point = nav.center(cell);
        correction = Some(Correction { agent, from: waypoint, to: final_point });
    }
    Ok(Accepted {
        instruction: Instruction { agent, action, waypoint: final_point, target, partner, source: InstructionSource::Commander, issued_tick: world.tick },
        correction,
    })
}

#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum CommanderError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("endpoint returned HTTP {0}")]
    HttpStatus(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("commander failed: {0}")]
    Internal(String),
}

impl CommanderError {
    pub fn kind(&self) -> &'static str {
        match self {
            CommanderError::Timeout(_) => "timeout",
            CommanderError::HttpStatus(_) => "http_status",
            CommanderError::Transport(_) => "transport",
            CommanderError::MalformedReply(_) => "malformed_reply",
            CommanderError::Internal(_) => "internal",
        }
    }
}

/// Everything a commander may look at for one decision. Built-in
/// commanders read the ground-truth world; external ones only the report.
pub struct DecisionInput<'a> {
    pub world: &'a WorldState,
    pub side: Team,
    pub report: &'a SemanticReport,
    pub nav: &'a NavGrid,
    pub zones: &'a ZoneGrid,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommanderOutput {
    pub instructions: Vec<WireInstruction>,
    pub traces: Vec<RuleTrace>,
}

/// Maps the current situation to one instruction per alive agent of the
/// commanded side, or fails explicitly.
pub trait Commander: Send {
    fn name(&self) -> &str;
    fn decide(&mut self, input: &DecisionInput) -> Result<CommanderOutput, CommanderError>;
}

/// Wraps the rule engine.
pub struct ExpertCommander {
    params: ExpertParams,
}

impl ExpertCommander {
    pub fn new(params: ExpertParams) -> Self {
        Self { params }
    }
}

impl Commander for ExpertCommander {
    fn name(&self) -> &str {
        "expert"
    }

    fn decide(&mut self, input: &DecisionInput) -> Result<CommanderOutput, CommanderError> {
        let field = ThreatField::build(input.world, input.side, input.zones, &self.params.threat);
        let ctx = ExpertContext { world: input.world, side: input.side, field: &field, zones: input.zones, params: &self.params, nav: input.nav };
        let d = decide(&ctx);
        Ok(CommanderOutput { instructions: d.instructions.iter().map(Instruction::to_wire).collect(), traces: d.traces })
    }
}

/// Every agent advances on its nearest opponent.
#[derive(Default)]
pub struct ScriptedCommander;

impl Commander for ScriptedCommander {
    fn name(&self) -> &str {
        "scripted"
    }

    fn decide(&mut self, input: &DecisionInput) -> Result<CommanderOutput, CommanderError> {
        let w = input.world;
        let rho = w.params().attack_radius;
        let mut out = CommanderOutput::default();
        for a in w.alive(input.side) {
            let nearest = w.alive(input.side.opponent()).min_by(|x, y| x.position.distance(a.position).total_cmp(&y.position.distance(a.position)));
            match nearest {
                Some(e) => {
                    let waypoint = match (e.position - a.position).normalized() {
                        Some(u) => e.position - u * (ATTACK_STANDOFF * rho),
                        None => e.position,
                    };
                    out.instructions.push(WireInstruction {
                        agent: i64::from(a.id.index),
                        action: ActionType::Attack.name().into(),
                        waypoint: [waypoint.x, waypoint.y],
                        target: Some(i64::from(e.id.index)),
                        partner: None,
                    });
                }
                None => out.instructions.push(WireInstruction {
                    agent: i64::from(a.id.index),
                    action: ActionType::Retreat.name().into(),
                    waypoint: [a.position.x, a.position.y],
                    target: None,
                    partner: None,
                }),
            }
        }
        Ok(out)
    }
}

/// Uniformly random actions and free-space waypoints.
pub struct RandomCommander {
    rng: ChaCha8Rng,
}

impl RandomCommander {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Commander for RandomCommander {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&mut self, input: &DecisionInput) -> Result<CommanderOutput, CommanderError> {
        let w = input.world;
        let enemies: Vec<u32> = w.alive(input.side.opponent()).map(|e| e.id.index).collect();
        let allies: Vec<u32> = w.alive(input.side).map(|a| a.id.index).collect();
        let mut out = CommanderOutput::default();
        for &a in &allies {
            let mut action = ActionType::ALL[self.rng.random_range(0..ActionType::ALL.len())];
            if action.needs_target() && enemies.is_empty() {
                action = ActionType::Retreat;
            }
            let p = random_free_point(w, &mut self.rng);
            let target = if action.needs_target() { Some(i64::from(enemies[self.rng.random_range(0..enemies.len())])) } else { None };
            let partner = if allies.len() > 1 && matches!(action, ActionType::Support | ActionType::Cooperate) {
                let k = allies[self.rng.random_range(0..allies.len())];
                Some(i64::from(k))
            } else {
                None
            };
            out.instructions.push(WireInstruction { agent: i64::from(a), action: action.name().into(), waypoint: [p.x, p.y], target, partner });
        }
        Ok(out)
    }
}

/// Commander that always fails; useful for exercising the fallback path.
pub struct FailingCommander;

impl Commander for FailingCommander {
    fn name(&self) -> &str {
        "failing"
    }

    fn decide(&mut self, _input: &DecisionInput) -> Result<CommanderOutput, CommanderError> {
        Err(CommanderError::Internal("configured to fail".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Arena, Cell, ObstacleSet};
    use crate::nav::DEFAULT_CELL_SIZE;
    use crate::world::{AgentState, EngagementParams};

    fn world() -> WorldState {
        let arena = Arena::new(30.0, 16.0).unwrap();
        let obstacles = ObstacleSet::new(arena, vec![Cell::new(Vec2::new(10.0, 10.0), 0.3)]).unwrap();
        let agents = vec![
            AgentState::new(AgentId::new(Team::Allied, 0), Vec2::new(5.0, 5.0), Vec2::new(1.0, 0.0)),
            AgentState::new(AgentId::new(Team::Enemy, 0), Vec2::new(25.0, 5.0), Vec2::new(-1.0, 0.0)),
        ];
        WorldState::new(obstacles, agents, EngagementParams::default(), 0).unwrap()
    }

    fn wire(action: &str, x: f64, y: f64) -> WireInstruction {
        WireInstruction { agent: 0, action: action.into(), waypoint: [x, y], target: Some(0), partner: None }
    }

    #[test]
    fn rejects_out_of_bounds_and_unknown_actions() {
        let w = world();
        let nav = NavGrid::for_world(&w, DEFAULT_CELL_SIZE);
        assert_eq!(validate_instruction(&wire("Attack", 31.0, 8.0), &w, Team::Allied, &nav), Err(Rejection::OutOfBounds(31.0, 8.0)));
        assert_eq!(validate_instruction(&wire("Flank", 3.0, 8.0), &w, Team::Allied, &nav), Err(Rejection::UnknownAction("Flank".into())));
        let mut dangling = wire("Attack", 3.0, 8.0);
        dangling.target = Some(4);
        assert!(matches!(validate_instruction(&dangling, &w, Team::Allied, &nav), Err(Rejection::DanglingReference(_))));
        let mut missing = wire("Attack", 3.0, 8.0);
        missing.target = None;
        assert!(matches!(validate_instruction(&missing, &w, Team::Allied, &nav), Err(Rejection::DanglingReference(_))));
    }

    #[test]
    fn waypoint_in_obstacle_is_snapped() {
        let w = world();
        let nav = NavGrid::for_world(&w, DEFAULT_CELL_SIZE);
        let got = validate_instruction(&wire("Attack", 10.0, 10.0), &w, Team::Allied, &nav).unwrap();
        let c = got.correction.expect("correction logged");
        assert!(w.point_free(got.instruction.waypoint));
        assert_eq!(c.to, nav.center(nav.nearest_free(Vec2::new(10.0, 10.0), SNAP_RADIUS).unwrap()));
    }

    #[test]
    fn wire_round_trip() {
        let i = Instruction { agent: 2, action: ActionType::Lure, waypoint: Vec2::new(1.5, 2.5), target: Some(1), partner: None, source: InstructionSource::Commander, issued_tick: 0 };
        let text = serde_json::to_string(&WirePlan { instructions: vec![i.to_wire()] }).unwrap();
        assert_eq!(text, r#"{"instructions":[{"agent":2,"action":"Lure","waypoint":[1.5,2.5],"target":1,"partner":null}]}"#);
        let back: WirePlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back.instructions[0], i.to_wire());
    }
}
