//! Two-team skirmish simulator with a tiered tactical rule engine, threat
//! fields, grid navigation, semantic perception reports and a pluggable
//! commander layer, plus batch evaluation, replays and dataset export.
//!
//! The geometry, world, field and cost layers are generic over [`Scalar`]
//! (`f32` or `f64`); the decision and harness layers run on `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod batch;
pub mod commander;
pub mod cost;
pub mod dataset;
pub mod episode;
pub mod expert;
pub mod external;
pub mod geometry;
pub mod metrics;
pub mod nav;
pub mod oracle;
pub mod perception;
pub mod render;
pub mod runtime;
pub mod scalar;
pub mod scenario;
pub mod threat;
pub mod world;

pub use batch::{default_matrix, run_batch, BatchReport, BatchSpec, Matchup};
pub use commander::{Commander, Instruction, WireInstruction};
pub use episode::{run_episode, CommanderSpec, EpisodeMetrics, HarnessError, Replay};
pub use expert::{decide, ActionType, ExpertParams, RuleId, RuleThresholds};
pub use scalar::Scalar;
pub use scenario::ScenarioConfig;
pub use world::{AgentId, Team, Winner};

pub type Vec2 = geometry::Vec2<f64>;
pub type Vec2F32 = geometry::Vec2<f32>;
pub type Cell = geometry::Cell<f64>;
pub type CellF32 = geometry::Cell<f32>;
pub type ObstacleSet = geometry::ObstacleSet<f64>;
pub type ObstacleSetF32 = geometry::ObstacleSet<f32>;
pub type Agent = world::AgentState<f64>;
pub type AgentF32 = world::AgentState<f32>;
pub type World = world::WorldState<f64>;
pub type WorldF32 = world::WorldState<f32>;
pub type ThreatField = threat::ThreatField<f64>;
pub type ThreatFieldF32 = threat::ThreatField<f32>;
pub type ZoneGrid = threat::ZoneGrid<f64>;
pub type ZoneGridF32 = threat::ZoneGrid<f32>;
