//! Single-episode orchestration, per-episode metrics and JSONL replays.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commander::{Commander, ExpertCommander, RandomCommander, ScriptedCommander};
use crate::expert::RuleId;
use crate::external::{ExternalCommander, ExternalConfig};
use crate::geometry::{Cell, ObstacleSet, Vec2};
use crate::metrics::mean;
use crate::nav::NavGrid;
use crate::perception::PerceptionScore;
use crate::runtime::{Attribution, DriveLedger, EpochRecord, FailureRecord, RuntimeConfig, SideController, SideStats};
use crate::scenario::{spawn, ConfigError, ScenarioConfig};
use crate::world::{AgentId, AgentState, Elimination, EpisodeOutcome, Team, VelocityCommands, WorldError, WorldState};

pub const REPLAY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("replay error: {0}")]
    Replay(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("episode with seed {seed} in matchup {matchup:?} panicked: {message}")]
    EpisodePanic { matchup: String, seed: u64, message: String },
    #[error("thread pool error: {0}")]
    Pool(String),
}

/// Which commander drives a side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommanderSpec {
    Expert,
    Scripted,
    Random,
    External(ExternalConfig),
}

impl CommanderSpec {
    pub fn label(&self) -> &'static str {
        match self {
            CommanderSpec::Expert => "expert",
            CommanderSpec::Scripted => "scripted",
            CommanderSpec::Random => "random",
            CommanderSpec::External(_) => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "expert" => Some(CommanderSpec::Expert),
            "scripted" => Some(CommanderSpec::Scripted),
            "random" => Some(CommanderSpec::Random),
            _ => None,
        }
    }

    pub fn build(&self, cfg: &ScenarioConfig, seed: u64) -> Box<dyn Commander> {
        match self {
            CommanderSpec::Expert => Box::new(ExpertCommander::new(cfg.expert.clone())),
            CommanderSpec::Scripted => Box::new(ScriptedCommander),
            CommanderSpec::Random => Box::new(RandomCommander::new(seed)),
            CommanderSpec::External(ext) => Box::new(ExternalCommander::new(ext.clone())),
        }
    }
}

/// SplitMix64 finalizer; the basis of every derived seed.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based derivation of a child seed.
pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ splitmix64(stream)) ^ index)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SideMetrics {
    pub commander: String,
    pub drive: DriveLedger,
    pub invocations: u64,
    /// Wall-clock seconds per invocation; not part of deterministic output.
    #[serde(skip)]
    pub latencies: Vec<f64>,
    pub failures: Vec<FailureRecord>,
    pub rejections: u64,
    pub corrections: u64,
    pub perception: Option<PerceptionScore>,
    pub rule_histogram: BTreeMap<RuleId, u64>,
}

impl SideMetrics {
    fn from_stats(commander: &str, s: &SideStats) -> Self {
        let perception = (!s.perception.is_empty()).then(|| PerceptionScore {
            precision: mean(s.perception.iter().map(|p| p.precision)).unwrap_or(0.0),
            recall: mean(s.perception.iter().map(|p| p.recall)).unwrap_or(0.0),
            hallucination: mean(s.perception.iter().map(|p| p.hallucination)).unwrap_or(0.0),
        });
        Self {
            commander: commander.to_string(),
            drive: s.ledger,
            invocations: s.invocations,
            latencies: s.latencies.clone(),
            failures: s.failures.clone(),
            rejections: s.rejections,
            corrections: s.corrections,
            perception,
            rule_histogram: s.rule_histogram.clone(),
        }
    }

    pub fn drive_rate(&self) -> Option<f64> {
        self.drive.rate()
    }

    pub fn mean_latency(&self) -> Option<f64> {
        mean(self.latencies.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub team_size: usize,
    pub outcome: EpisodeOutcome,
    pub allied: SideMetrics,
    pub enemy: SideMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandRow {
    pub agent: AgentId,
    pub velocity: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub allied: String,
    pub enemy: String,
    pub obstacles: Vec<Cell>,
    pub initial: Vec<AgentState>,
}

/// Everything that happened in one tick: the commands applied, the
/// resulting agent states, eliminations, attribution and any decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: u64,
    pub commands: Vec<CommandRow>,
    pub agents: Vec<AgentState>,
    pub eliminations: Vec<Elimination>,
    pub attribution: Vec<(AgentId, Attribution)>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReplayLine {
    Header(Box<ReplayHeader>),
    Tick(Box<TickRow>),
    Outcome(EpisodeOutcome),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub header: ReplayHeader,
    pub ticks: Vec<TickRow>,
    pub outcome: Option<EpisodeOutcome>,
}

impl Replay {
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), HarnessError> {
        let mut line = |l: &ReplayLine| -> Result<(), HarnessError> {
            serde_json::to_writer(&mut out, l).map_err(|e| HarnessError::Replay(e.to_string()))?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(&ReplayLine::Header(Box::new(self.header.clone())))?;
        for t in &self.ticks {
            line(&ReplayLine::Tick(Box::new(t.clone())))?;
        }
        if let Some(o) = self.outcome {
            line(&ReplayLine::Outcome(o))?;
        }
        Ok(())
    }

    /// Strict load: every line must parse and ticks must be ordered.
    pub fn load<R: BufRead>(input: R) -> Result<Self, HarnessError> {
        let (replay, warnings) = Self::load_lenient(input)?;
        match warnings.first() {
            Some(w) => Err(HarnessError::Replay(w.clone())),
            None => Ok(replay),
        }
    }

    /// Loads the longest valid prefix and reports what was skipped.
    pub fn load_lenient<R: BufRead>(input: R) -> Result<(Self, Vec<String>), HarnessError> {
        let mut header = None;
        let mut ticks: Vec<TickRow> = Vec::new();
        let mut outcome = None;
        let mut warnings = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ReplayLine>(&line) {
                Ok(ReplayLine::Header(h)) if header.is_none() && n == 0 => header = Some(*h),
                Ok(ReplayLine::Tick(t)) if header.is_some() && outcome.is_none() => {
                    if ticks.last().is_some_and(|p| p.tick >= t.tick) {
                        warnings.push(format!("line {}: tick {} out of order", n + 1, t.tick));
                        break;
                    }
                    ticks.push(*t);
                }
                Ok(ReplayLine::Outcome(o)) if header.is_some() && outcome.is_none() => outcome = Some(o),
                Ok(_) => {
                    warnings.push(format!("line {}: unexpected record", n + 1));
                    break;
                }
                Err(e) => {
                    warnings.push(format!("line {}: {e}", n + 1));
                    break;
                }
            }
        }
        let header = header.ok_or_else(|| HarnessError::Replay("missing header line".into()))?;
        if outcome.is_none() && warnings.is_empty() {
            warnings.push("replay has no outcome line (truncated)".into());
        }
        Ok((Self { header, ticks, outcome }, warnings))
    }

    /// Every decision epoch of `side`, in tick order.
    pub fn epochs(&self, side: Team) -> impl Iterator<Item = &EpochRecord> + '_ {
        self.ticks.iter().flat_map(|t| t.epochs.iter()).filter(move |e| e.side == side)
    }

    /// Re-simulates from the header using the recorded commands and checks
    /// every state and the final outcome.
    pub fn verify(&self) -> Result<EpisodeOutcome, HarnessError> {
        let h = &self.header;
        let obstacles = ObstacleSet::new(h.config.arena, h.obstacles.clone()).map_err(|e| HarnessError::Replay(e.to_string()))?;
        let mut world = WorldState::new(obstacles, h.initial.clone(), h.config.engagement.clone(), h.seed)?;
        for row in &self.ticks {
            if row.tick != world.tick {
                return Err(HarnessError::Replay(format!("row tick {} does not follow world tick {}", row.tick, world.tick)));
            }
            let commands: VelocityCommands = row.commands.iter().map(|c| (c.agent, c.velocity)).collect();
            let report = world.step(&commands)?;
            if report.eliminations != row.eliminations || world.agents() != row.agents.as_slice() {
                return Err(HarnessError::Replay(format!("state diverged at tick {}", row.tick)));
            }
        }
        let outcome = world.check_termination().ok_or_else(|| HarnessError::Replay("episode did not terminate".into()))?;
        if Some(outcome) != self.outcome {
            return Err(HarnessError::Replay(format!("outcome mismatch: replayed {outcome:?}, recorded {:?}", self.outcome)));
        }
        Ok(outcome)
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub metrics: EpisodeMetrics,
    pub replay: Option<Replay>,
}

fn runtime_config(cfg: &ScenarioConfig) -> RuntimeConfig {
    RuntimeConfig {
        cadence: cfg.cadence,
        replan_interval: cfg.replan_interval,
        engage_radius: cfg.expert.thresholds.epsilon_engage,
        noise: cfg.noise.clone(),
        matching_radius: cfg.matching_radius,
    }
}

pub fn run_episode(cfg: &ScenarioConfig, allied: &CommanderSpec, enemy: &CommanderSpec, seed: u64, record: bool) -> Result<EpisodeResult, HarnessError> {
    let a = allied.build(cfg, derive_seed(seed, 3, 0));
    let e = enemy.build(cfg, derive_seed(seed, 3, 1));
    run_episode_with(cfg, a, e, seed, record)
}

/// Runs one episode to termination with the given commanders.
pub fn run_episode_with(cfg: &ScenarioConfig, allied: Box<dyn Commander>, enemy: Box<dyn Commander>, seed: u64, record: bool) -> Result<EpisodeResult, HarnessError> {
    let mut world = spawn(cfg, seed)?;
    let zones = cfg.zone_grid()?;
    let mut nav = NavGrid::for_world(&world, cfg.nav_cell_size);
    let rc = runtime_config(cfg);
    let mut sides = [
        SideController::new(Team::Allied, allied, rc.clone(), derive_seed(seed, 1, 0)),
        SideController::new(Team::Enemy, enemy, rc, derive_seed(seed, 1, 1)),
    ];
    let header = record.then(|| ReplayHeader {
        schema_version: REPLAY_SCHEMA_VERSION,
        seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        allied: sides[0].commander_name().to_string(),
        enemy: sides[1].commander_name().to_string(),
        obstacles: world.static_obstacles().cells().to_vec(),
        initial: world.agents().to_vec(),
    });
    let mut rows = Vec::new();
    let outcome = loop {
        if let Some(o) = world.check_termination() {
            break o;
        }
        let fresh = nav.refresh(&world);
        let mut commands = VelocityCommands::new();
        let mut attribution = Vec::new();
        let mut epochs = Vec::new();
        for ctl in &mut sides {
            let out = ctl.tick(&world, &nav, &zones, &fresh);
            let team = ctl.side();
            commands.extend(out.commands);
            attribution.extend(out.attribution.into_iter().map(|(i, a)| (AgentId::new(team, i), a)));
            epochs.extend(out.epoch);
        }
        let tick = world.tick;
        let step = world.step(&commands)?;
        if record {
            rows.push(TickRow {
                tick,
                commands: commands.iter().map(|(&agent, &velocity)| CommandRow { agent, velocity }).collect(),
                agents: world.agents().to_vec(),
                eliminations: step.eliminations,
                attribution,
                epochs,
            });
        }
    };
    let metrics = EpisodeMetrics {
        seed,
        team_size: cfg.team_size,
        outcome,
        allied: SideMetrics::from_stats(sides[0].commander_name(), &sides[0].stats),
        enemy: SideMetrics::from_stats(sides[1].commander_name(), &sides[1].stats),
    };
    let replay = header.map(|header| Replay { header, ticks: rows, outcome: Some(outcome) });
    Ok(EpisodeResult { metrics, replay })
}
