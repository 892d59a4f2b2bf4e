//! Priority-tiered tactical rule engine (rules R1 to R11), greedy pair
//! assignment for the cooperative rules, and per-action waypoint synthesis.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commander::{Instruction, InstructionSource};
use crate::cost::{approach_angle, attack_cost, coop_attack_cost, CostParams};
use crate::geometry::Vec2;
use crate::nav::{NavGrid, SNAP_RADIUS};
use crate::threat::{danger_value, ThreatField, ThreatParams, ZoneGrid};
use crate::world::{AgentState, Team, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid rule thresholds: {0}")]
pub struct ThresholdError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionType {
    Attack,
    Support,
    Retreat,
    Intercept,
    Lure,
    Cooperate,
    Contain,
}

impl ActionType {
    pub const ALL: [ActionType; 7] = [
        ActionType::Attack,
        ActionType::Support,
        ActionType::Retreat,
        ActionType::Intercept,
        ActionType::Lure,
        ActionType::Cooperate,
        ActionType::Contain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionType::Attack => "Attack",
            ActionType::Support => "Support",
            ActionType::Retreat => "Retreat",
            ActionType::Intercept => "Intercept",
            ActionType::Lure => "Lure",
            ActionType::Cooperate => "Cooperate",
            ActionType::Contain => "Contain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn needs_target(self) -> bool {
        matches!(self, ActionType::Attack | ActionType::Contain | ActionType::Lure | ActionType::Intercept | ActionType::Cooperate)
    }
}

impl std::fmt::Display for ActionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
    R11,
}

impl RuleId {
    pub fn tier(self) -> u8 {
        match self {
            RuleId::R1 | RuleId::R2 | RuleId::R3 | RuleId::R4 => 1,
            RuleId::R5 | RuleId::R6 | RuleId::R7 => 2,
            _ => 3,
        }
    }
}

impl std::fmt::Display for RuleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleThresholds {
    pub theta_cost: f64,
    /// Meters.
    pub theta_dist: f64,
    /// Radians.
    pub theta_sep: f64,
    pub theta_coop: f64,
    pub delta_attack: f64,
    pub delta_threat: f64,
    pub delta_cost: f64,
    pub delta_contain: f64,
    /// Meters.
    pub epsilon_engage: f64,
    /// Meters.
    pub epsilon_threat: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            theta_cost: 1.2,
            theta_dist: 6.0,
            theta_sep: FRAC_PI_4,
            theta_coop: 1.0,
            delta_attack: 1.5,
            delta_threat: 0.8,
            delta_cost: 0.9,
            delta_contain: 2.0,
            epsilon_engage: 3.0,
            epsilon_threat: 2.0,
        }
    }
}

impl RuleThresholds {
    pub fn validate(&self) -> Result<(), ThresholdError> {
        for (name, v) in [
            ("theta_dist", self.theta_dist),
            ("theta_sep", self.theta_sep),
            ("epsilon_engage", self.epsilon_engage),
            ("epsilon_threat", self.epsilon_threat),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ThresholdError(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("theta_cost", self.theta_cost),
            ("theta_coop", self.theta_coop),
            ("delta_attack", self.delta_attack),
            ("delta_threat", self.delta_threat),
            ("delta_cost", self.delta_cost),
            ("delta_contain", self.delta_contain),
        ] {
            if !v.is_finite() {
                return Err(ThresholdError(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Every tunable of the expert system in one bundle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertParams {
    pub threat: ThreatParams,
    pub cost: CostParams,
    pub thresholds: RuleThresholds,
}

/// Which rule bound an agent in one decision epoch, with the values that
/// satisfied it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub agent: u32,
    pub rule: RuleId,
    pub tier: u8,
    pub action: ActionType,
    pub target: Option<u32>,
    pub partner: Option<u32>,
    pub snapshot: BTreeMap<String, f64>,
}

/// Inputs for one decision of one side.
pub struct ExpertContext<'a> {
    pub world: &'a WorldState,
    pub side: Team,
    pub field: &'a ThreatField,
    pub zones: &'a ZoneGrid,
    pub params: &'a ExpertParams,
    pub nav: &'a NavGrid,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Decision {
    pub instructions: Vec<Instruction>,
    pub traces: Vec<RuleTrace>,
}

/// Rule selected for one agent before waypoint synthesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Binding {
    pub agent: usize,
    pub rule: RuleId,
    pub action: ActionType,
    pub target: Option<usize>,
    pub partner: Option<usize>,
    pub snapshot: BTreeMap<String, f64>,
}

/// Per-epoch quantities shared by every rule.
pub struct Situation<'a> {
    pub allies: Vec<&'a AgentState>,
    pub enemies: Vec<&'a AgentState>,
    /// Danger value per ally.
    pub danger: Vec<f64>,
    /// Threat score per enemy.
    pub threat: Vec<f64>,
    /// Single attack cost, `[ally][enemy]`.
    pub cost: Vec<Vec<f64>>,
    /// Line of sight, `[ally][enemy]`.
    pub visible: Vec<Vec<bool>>,
}

impl<'a> Situation<'a> {
    pub fn new(ctx: &ExpertContext<'a>) -> Self {
        let w = ctx.world;
        let allies: Vec<&AgentState> = w.alive(ctx.side).collect();
        let enemies: Vec<&AgentState> = w.alive(ctx.side.opponent()).collect();
        let danger = allies.iter().map(|a| danger_value(a, w, &ctx.params.threat)).collect();
        let threat = enemies.iter().map(|e| ctx.field.score(e.id).unwrap_or(0.0)).collect();
        let cost = allies
            .iter()
            .map(|a| enemies.iter().map(|e| attack_cost(a, e, ctx.field, &ctx.params.cost, w)).collect())
            .collect();
        let visible = allies.iter().map(|a| enemies.iter().map(|e| w.line_of_sight(a.position, e.position)).collect()).collect();
        Self { allies, enemies, danger, threat, cost, visible }
    }
}

/// A cooperative assignment chosen in tier 2. `first` plays the leading
/// role (Contain, Lure or Cooperate) and `second` the supporting one.
#[derive(Clone, Debug, PartialEq)]
pub struct PairAssignment {
    pub first: usize,
    pub second: usize,
    pub enemy: usize,
    pub rule: RuleId,
    pub cost: f64,
    pub separation: f64,
    pub angle: f64,
}

/// Runs the rule table for every alive agent of `ctx.side`.
pub fn decide(ctx: &ExpertContext) -> Decision {
    let sit = Situation::new(ctx);
    let bindings = select_rules(ctx, &sit);
    let mut synth = WaypointSynth::new(ctx);
    let mut decision = Decision::default();
    for b in &bindings {
        let waypoint = synth.waypoint(ctx, &sit, b, &bindings);
        let agent = sit.allies[b.agent];
        let target = b.target.map(|j| sit.enemies[j].id.index);
        let partner = b.partner.map(|k| sit.allies[k].id.index);
        decision.instructions.push(Instruction {
            agent: agent.id.index,
            action: b.action,
            waypoint,
            target,
            partner,
            source: InstructionSource::Commander,
            issued_tick: ctx.world.tick,
        });
        decision.traces.push(RuleTrace {
            agent: agent.id.index,
            rule: b.rule,
            tier: b.rule.tier(),
            action: b.action,
            target,
            partner,
            snapshot: b.snapshot.clone(),
        });
    }
    decision
}

fn snap(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn argmin_by<I: Iterator<Item = (usize, f64)>>(it: I) -> Option<(usize, f64)> {
    it.fold(None, |best, (i, v)| match best {
        Some((_, bv)) if bv <= v => best,
        _ => Some((i, v)),
    })
}

/// Rule bindings in ally order, one per alive ally.
pub fn select_rules(ctx: &ExpertContext, sit: &Situation) -> Vec<Binding> {
    let th = &ctx.params.thresholds;
    let n = sit.allies.len();
    let mut out: Vec<Option<Binding>> = vec![None; n];

    // Tier 1.
    for i in 0..n {
        out[i] = tier_one(sit, th, i);
    }

    // Tier 2.
    let free: Vec<usize> = (0..n).filter(|&i| out[i].is_none()).collect();
    let enemies: Vec<usize> = (0..sit.enemies.len()).collect();
    for p in assign_pairs(ctx, sit, &free, &enemies) {
        let (lead, support) = match p.rule {
            RuleId::R5 => (ActionType::Contain, ActionType::Support),
            RuleId::R6 => (ActionType::Lure, ActionType::Intercept),
            _ => (ActionType::Cooperate, ActionType::Cooperate),
        };
        let snapshot = snap(&[
            ("C_pair", p.cost),
            ("d_pair", p.separation),
            ("angle", p.angle),
            ("D_first", sit.danger[p.first]),
            ("D_second", sit.danger[p.second]),
            ("T", sit.threat[p.enemy]),
            ("v_first", f64::from(u8::from(sit.visible[p.first][p.enemy]))),
        ]);
        out[p.first] = Some(Binding { agent: p.first, rule: p.rule, action: lead, target: Some(p.enemy), partner: Some(p.second), snapshot: snapshot.clone() });
        out[p.second] = Some(Binding { agent: p.second, rule: p.rule, action: support, target: Some(p.enemy), partner: Some(p.first), snapshot });
    }

    // Tier 3.
    let engaged: Vec<bool> = out.iter().map(|b| b.is_some()).collect();
    for i in 0..n {
        if out[i].is_none() {
            out[i] = Some(tier_three(sit, th, i, &engaged));
        }
    }
    out.into_iter().map(|b| b.expect("every ally bound")).collect()
}

fn tier_one(sit: &Situation, th: &RuleThresholds, i: usize) -> Option<Binding> {
    let a = sit.allies[i];
    let n_e = sit.enemies.len();
    if n_e == 1 {
        return Some(Binding { agent: i, rule: RuleId::R1, action: ActionType::Attack, target: Some(0), partner: None, snapshot: snap(&[("enemies", 1.0)]) });
    }
    if sit.allies.len() == 1 && n_e > 1 {
        return Some(Binding { agent: i, rule: RuleId::R2, action: ActionType::Retreat, target: None, partner: None, snapshot: snap(&[("allies", 1.0), ("enemies", n_e as f64)]) });
    }
    let dist = |j: usize| a.position.distance(sit.enemies[j].position);
    let close_visible = argmin_by((0..n_e).filter(|&j| sit.visible[i][j]).map(|j| (j, dist(j))).filter(|&(_, d)| d <= th.epsilon_engage));
    if let Some((j, d)) = close_visible {
        return Some(Binding { agent: i, rule: RuleId::R3, action: ActionType::Attack, target: Some(j), partner: None, snapshot: snap(&[("d", d)]) });
    }
    let close_hidden = argmin_by((0..n_e).filter(|&j| !sit.visible[i][j]).map(|j| (j, dist(j))).filter(|&(_, d)| d <= th.epsilon_threat));
    if let Some((_, d)) = close_hidden {
        return Some(Binding { agent: i, rule: RuleId::R4, action: ActionType::Retreat, target: None, partner: None, snapshot: snap(&[("d", d)]) });
    }
    None
}

fn tier_three(sit: &Situation, th: &RuleThresholds, i: usize, engaged: &[bool]) -> Binding {
    let d = sit.danger[i];
    let n_e = sit.enemies.len();
    if d < th.delta_attack {
        let pick = argmin_by((0..n_e).filter(|&j| sit.threat[j] < th.delta_threat).map(|j| (j, sit.cost[i][j])).filter(|&(_, c)| c < th.delta_cost));
        if let Some((j, c)) = pick {
            return Binding { agent: i, rule: RuleId::R8, action: ActionType::Attack, target: Some(j), partner: None, snapshot: snap(&[("D", d), ("T", sit.threat[j]), ("C", c)]) };
        }
    }
    if d < th.delta_contain {
        let pick = argmin_by((0..n_e).map(|j| (j, sit.cost[i][j])).filter(|&(_, c)| c < th.delta_cost));
        if let Some((j, c)) = pick {
            return Binding { agent: i, rule: RuleId::R9, action: ActionType::Contain, target: Some(j), partner: None, snapshot: snap(&[("D", d), ("C", c)]) };
        }
        if let Some(k) = support_partner(sit, i, engaged) {
            let min_c = sit.cost[i].iter().copied().fold(f64::INFINITY, f64::min);
            return Binding { agent: i, rule: RuleId::R10, action: ActionType::Support, target: None, partner: Some(k), snapshot: snap(&[("D", d), ("C_min", min_c)]) };
        }
    }
    Binding { agent: i, rule: RuleId::R11, action: ActionType::Retreat, target: None, partner: None, snapshot: snap(&[("D", d)]) }
}

/// Nearest ally already committed in tiers 1 or 2, else the nearest ally.
pub fn support_partner(sit: &Situation, i: usize, engaged: &[bool]) -> Option<usize> {
    let me = sit.allies[i].position;
    let nearest = |only_engaged: bool| argmin_by((0..sit.allies.len()).filter(|&k| k != i && (!only_engaged || engaged[k])).map(|k| (k, sit.allies[k].position.distance(me))));
    nearest(true).or_else(|| nearest(false)).map(|(k, _)| k)
}

/// Greedy global-minimum assignment of (pair, enemy) triples for tier 2.
/// Ties break on the lowest (ally, ally, enemy) indices.
pub fn assign_pairs(ctx: &ExpertContext, sit: &Situation, allies: &[usize], enemies: &[usize]) -> Vec<PairAssignment> {
    let th = &ctx.params.thresholds;
    let mut candidates: Vec<PairAssignment> = Vec::new();
    for (x, &p) in allies.iter().enumerate() {
        for &q in &allies[x + 1..] {
            for &j in enemies {
                let (ap, aq, e) = (sit.allies[p], sit.allies[q], sit.enemies[j]);
                let cost = coop_attack_cost(ap, aq, e, ctx.field, ctx.zones, &ctx.params.cost, ctx.world);
                if !(cost < th.theta_cost) {
                    continue;
                }
                if let Some(c) = classify_pair(sit, th, p, q, j, cost) {
                    candidates.push(c);
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then_with(|| a.first.min(a.second).cmp(&b.first.min(b.second)))
            .then_with(|| a.first.max(a.second).cmp(&b.first.max(b.second)))
            .then_with(|| a.enemy.cmp(&b.enemy))
    });
    let mut used_allies = Vec::new();
    let mut used_enemies = Vec::new();
    let mut out = Vec::new();
    for c in candidates {
        if used_allies.contains(&c.first) || used_allies.contains(&c.second) || used_enemies.contains(&c.enemy) {
            continue;
        }
        used_allies.extend([c.first, c.second]);
        used_enemies.push(c.enemy);
        out.push(c);
    }
    out
}

/// Classifies a feasible triple with `p < q`. For R5 and R6 the leading
/// role goes to an ally without line of sight to the enemy, `p` first.
pub fn classify_pair(sit: &Situation, th: &RuleThresholds, p: usize, q: usize, j: usize, cost: f64) -> Option<PairAssignment> {
    let (ap, aq, e) = (sit.allies[p], sit.allies[q], sit.enemies[j]);
    let separation = ap.position.distance(aq.position);
    let angle = approach_angle(ap.position, aq.position, e.position)?;
    let lead = if !sit.visible[p][j] {
        Some((p, q))
    } else if !sit.visible[q][j] {
        Some((q, p))
    } else {
        None
    };
    if let Some((first, second)) = lead {
        if separation > th.theta_dist || angle > th.theta_sep {
            return Some(PairAssignment { first, second, enemy: j, rule: RuleId::R5, cost, separation, angle });
        }
        if separation < th.theta_dist && angle < th.theta_sep {
            return Some(PairAssignment { first, second, enemy: j, rule: RuleId::R6, cost, separation, angle });
        }
    }
    if sit.danger[p] < th.theta_coop && sit.danger[q] < th.theta_coop {
        return Some(PairAssignment { first: p, second: q, enemy: j, rule: RuleId::R7, cost, separation, angle });
    }
    None
}

/// Waypoint geometry constants, in multiples of the attack radius or the
/// engagement threshold.
pub const ATTACK_STANDOFF: f64 = 0.8;
pub const CONTAIN_OFFSET: f64 = 1.5;
pub const SUPPORT_OFFSET: f64 = 1.0;
pub const LURE_OFFSET: f64 = 1.2;
pub const INTERCEPT_LOOKAHEAD: f64 = 1.0;

/// Waypoint synthesis with reachability checks against the nav grid.
pub struct WaypointSynth {
    components: Vec<u32>,
}

impl WaypointSynth {
    pub fn new(ctx: &ExpertContext) -> Self {
        Self { components: ctx.nav.components() }
    }

    fn component_at(&self, nav: &NavGrid, p: Vec2) -> Option<u32> {
        let cell = nav.cell_of(p);
        let cell = if nav.is_free(cell) { cell } else { nav.nearest_free(p, SNAP_RADIUS)? };
        Some(self.components[nav.index(cell)])
    }

    /// `p` moved into free space and checked to be reachable from `from`.
    pub fn make_reachable(&self, nav: &NavGrid, from: Vec2, p: Vec2) -> Option<Vec2> {
        let p = nav.arena().clamp(p, 0.0);
        let cell = nav.cell_of(p);
        let q = if nav.point_free(p) && nav.is_free(cell) { p } else { nav.center(nav.nearest_free(p, SNAP_RADIUS)?) };
        match self.component_at(nav, from) {
            Some(c) if self.component_at(nav, q) != Some(c) => None,
            _ => Some(q),
        }
    }

    /// Reachable zone center with the lowest danger value for `actor`.
    pub fn retreat_point(&self, ctx: &ExpertContext, actor: &AgentState) -> Vec2 {
        let mut best: Option<(f64, Vec2)> = None;
        for z in 0..ctx.zones.len() {
            let Some(p) = self.make_reachable(ctx.nav, actor.position, ctx.zones.center(z)) else { continue };
            let mut probe = actor.clone();
            probe.position = p;
            let d = danger_value(&probe, ctx.world, &ctx.params.threat);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
        best.map_or(actor.position, |(_, p)| p)
    }

    fn waypoint(&mut self, ctx: &ExpertContext, sit: &Situation, b: &Binding, all: &[Binding]) -> Vec2 {
        let actor = sit.allies[b.agent];
        let target = b.target.map(|j| sit.enemies[j]);
        let partner = b.partner.map(|k| sit.allies[k]);
        let partner_target = b.partner.and_then(|k| all.iter().find(|o| o.agent == k)).and_then(|o| o.target).map(|j| sit.enemies[j]);
        let raw = synthesize_waypoint(ctx, b.action, actor, target, partner, partner_target);
        match raw {
            Some(p) if b.action != ActionType::Retreat => self.make_reachable(ctx.nav, actor.position, p).unwrap_or_else(|| self.retreat_point(ctx, actor)),
            _ => self.retreat_point(ctx, actor),
        }
    }
}

/// Raw waypoint for an action before reachability checks. `None` means the
/// action falls back to the retreat waypoint.
pub fn synthesize_waypoint(
    ctx: &ExpertContext,
    action: ActionType,
    actor: &AgentState,
    target: Option<&AgentState>,
    partner: Option<&AgentState>,
    partner_target: Option<&AgentState>,
) -> Option<Vec2> {
    let rho = ctx.world.params().attack_radius;
    let th = &ctx.params.thresholds;
    match action {
        ActionType::Retreat => None,
        ActionType::Attack => {
            let e = target?.position;
            Some(match (e - actor.position).normalized() {
                Some(u) => e - u * (ATTACK_STANDOFF * rho),
                None => e,
            })
        }
        ActionType::Contain => {
            let e = target?.position;
            let (lo, hi) = ctx.zones.bounds(ctx.zones.zone_of(e));
            let feet = [Vec2::new(lo.x, e.y), Vec2::new(hi.x, e.y), Vec2::new(e.x, lo.y), Vec2::new(e.x, hi.y)];
            let foot = feet.into_iter().min_by(|a, b| a.distance(e).total_cmp(&b.distance(e))).expect("four feet");
            let reach = (CONTAIN_OFFSET * rho).min(foot.distance(e));
            let dir = (foot - e).normalized().or_else(|| (actor.position - e).normalized());
            Some(dir.map_or(e, |u| e + u * reach))
        }
        ActionType::Support => {
            let p = partner?.position;
            match partner_target {
                Some(t) => {
                    let mid = p.lerp(t.position, 0.5);
                    let perp = (t.position - p).normalized().map_or(Vec2::zero(), |u| u.perp());
                    // Offset toward the actor's side of the partner-target line.
                    let side = if perp.dot(actor.position - mid) >= 0.0 { 1.0 } else { -1.0 };
                    Some(mid + perp * (SUPPORT_OFFSET * side))
                }
                None => Some(match (actor.position - p).normalized() {
                    Some(u) => p + u * SUPPORT_OFFSET,
                    None => p,
                }),
            }
        }
        ActionType::Lure => {
            let e = target?.position;
            let u = (actor.position - e).normalized()?;
            Some(e + u * (LURE_OFFSET * th.epsilon_engage))
        }
        ActionType::Intercept => {
            let e = target?;
            Some(e.position + e.velocity * INTERCEPT_LOOKAHEAD)
        }
        ActionType::Cooperate => {
            let e = target?.position;
            let k = partner?;
            let (mine, _) = flank_points(actor, k, e, ATTACK_STANDOFF * rho)?;
            Some(mine)
        }
    }
}

/// Flank points at `standoff` from `e` on rays 45 degrees either side of
/// the pair's mean bearing, returned as (actor's point, partner's point).
/// The lower-indexed agent picks the assignment with the shorter total
/// travel.
pub fn flank_points(actor: &AgentState, partner: &AgentState, e: Vec2, standoff: f64) -> Option<(Vec2, Vec2)> {
    let (lo, hi) = if actor.id <= partner.id { (actor, partner) } else { (partner, actor) };
    let mid = lo.position.lerp(hi.position, 0.5);
    let base = (mid - e).normalized().or_else(|| (lo.position - e).normalized())?;
    let plus = e + base.rotated(FRAC_PI_4) * standoff;
    let minus = e + base.rotated(-FRAC_PI_4) * standoff;
    let straight = lo.position.distance(plus) + hi.position.distance(minus);
    let crossed = lo.position.distance(minus) + hi.position.distance(plus);
    let (lo_pt, hi_pt) = if straight <= crossed { (plus, minus) } else { (minus, plus) };
    Some(if actor.id == lo.id { (lo_pt, hi_pt) } else { (hi_pt, lo_pt) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Arena, Cell, ObstacleSet};
    use crate::nav::DEFAULT_CELL_SIZE;
    use crate::world::{AgentId, EngagementParams};

    struct Fixture {
        world: WorldState,
        zones: ZoneGrid,
        params: ExpertParams,
        nav: NavGrid,
        field: ThreatField,
    }

    impl Fixture {
        fn new(allies: &[(f64, f64)], enemies: &[(f64, f64)], cells: Vec<Cell>, params: ExpertParams) -> Self {
            let arena = Arena::new(30.0, 16.0).unwrap();
            let mut agents = Vec::new();
            for (i, &(x, y)) in allies.iter().enumerate() {
                agents.push(AgentState::new(AgentId::new(Team::Allied, i as u32), Vec2::new(x, y), Vec2::new(1.0, 0.0)));
            }
            for (i, &(x, y)) in enemies.iter().enumerate() {
                agents.push(AgentState::new(AgentId::new(Team::Enemy, i as u32), Vec2::new(x, y), Vec2::new(-1.0, 0.0)));
            }
            let obstacles = ObstacleSet::new(arena, cells).unwrap();
            let world = WorldState::new(obstacles, agents, EngagementParams::default(), 3).unwrap();
            let zones = ZoneGrid::standard(arena);
            let nav = NavGrid::for_world(&world, DEFAULT_CELL_SIZE);
            let field = ThreatField::build(&world, Team::Allied, &zones, &params.threat);
            Self { world, zones, params, nav, field }
        }

        fn ctx(&self) -> ExpertContext<'_> {
            ExpertContext { world: &self.world, side: Team::Allied, field: &self.field, zones: &self.zones, params: &self.params, nav: &self.nav }
        }
    }

    fn wall(x: f64, y0: f64, n: usize) -> Vec<Cell> {
        (0..n).map(|i| Cell::new(Vec2::new(x, y0 + 0.3 * i as f64), 0.3)).collect()
    }

    #[test]
    fn lone_enemy_is_attacked_by_all() {
        let f = Fixture::new(&[(2.0, 2.0), (5.0, 9.0), (8.0, 3.0)], &[(20.0, 8.0)], vec![], ExpertParams::default());
        let d = decide(&f.ctx());
        assert_eq!(d.instructions.len(), 3);
        for (i, t) in d.instructions.iter().zip(&d.traces) {
            assert_eq!((i.action, i.target, t.rule, t.tier), (ActionType::Attack, Some(0), RuleId::R1, 1));
        }
    }

    #[test]
    fn lone_ally_retreats() {
        let f = Fixture::new(&[(5.0, 8.0)], &[(20.0, 8.0), (22.0, 4.0), (25.0, 12.0)], vec![], ExpertParams::default());
        let d = decide(&f.ctx());
        assert_eq!(d.traces[0].rule, RuleId::R2);
        assert_eq!(d.instructions[0].action, ActionType::Retreat);
    }

    #[test]
    fn close_visible_enemy_beats_tier_three() {
        let f = Fixture::new(&[(10.0, 8.0), (3.0, 3.0)], &[(10.8, 8.0), (25.0, 3.0)], vec![], ExpertParams::default());
        let d = decide(&f.ctx());
        assert_eq!((d.traces[0].rule, d.traces[0].tier, d.instructions[0].target), (RuleId::R3, 1, Some(0)));
    }

    #[test]
    fn attack_waypoint_standoff() {
        let f = Fixture::new(&[(6.0, 8.0), (2.0, 2.0)], &[(10.0, 8.0), (25.0, 3.0)], vec![], ExpertParams::default());
        let ctx = f.ctx();
        let p = synthesize_waypoint(&ctx, ActionType::Attack, &f.world.agents()[0], Some(&f.world.agents()[2]), None, None).unwrap();
        assert!(p.distance(Vec2::new(9.2, 8.0)) < 1e-12);
    }

    #[test]
    fn cooperate_flanks_are_perpendicular() {
        let f = Fixture::new(&[(6.0, 6.0), (6.0, 10.0)], &[(10.0, 8.0), (25.0, 3.0)], vec![], ExpertParams::default());
        let a = &f.world.agents()[0];
        let k = &f.world.agents()[1];
        let e = f.world.agents()[2].position;
        let (pa, pk) = flank_points(a, k, e, 0.8).unwrap();
        let (qk, qa) = flank_points(k, a, e, 0.8).unwrap();
        assert_eq!((pa, pk), (qa, qk));
        let angle = approach_angle(pa, pk, e).unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn retreat_matches_brute_force_zone_scan() {
        let f = Fixture::new(&[(15.0, 8.0), (3.0, 3.0)], &[(20.0, 8.0), (16.0, 12.0)], vec![], ExpertParams::default());
        let ctx = f.ctx();
        let synth = WaypointSynth::new(&ctx);
        let actor = &f.world.agents()[0];
        let got = synth.retreat_point(&ctx, actor);
        let mut best = (f64::INFINITY, Vec2::zero());
        for z in 0..f.zones.len() {
            let mut probe = actor.clone();
            probe.position = f.zones.center(z);
            let d = danger_value(&probe, &f.world, &f.params.threat);
            if d < best.0 {
                best = (d, probe.position);
            }
        }
        assert_eq!(got, best.1);
    }

    fn sit_for(f: &Fixture) -> Situation<'_> {
        Situation::new(&ExpertContext { world: &f.world, side: Team::Allied, field: &f.field, zones: &f.zones, params: &f.params, nav: &f.nav })
    }

    #[test]
    fn hidden_far_pair_contains_and_supports() {
        let mut params = ExpertParams::default();
        params.thresholds.theta_cost = 100.0;
        params.thresholds.theta_dist = 8.0;
        // Ally 0 is screened by a wall; ally 1 is 12 m away with a clear view.
        let f = Fixture::new(&[(10.0, 4.0), (22.0, 4.0)], &[(14.0, 4.0), (28.0, 15.0)], wall(12.0, 2.5, 10), params);
        let sit = sit_for(&f);
        assert!(!sit.visible[0][0]);
        let pairs = assign_pairs(&f.ctx(), &sit, &[0, 1], &[0]);
        let p = pairs.iter().find(|p| p.enemy == 0).unwrap_or_else(|| panic!("{pairs:?}"));
        assert_eq!((p.rule, p.first, p.second), (RuleId::R5, 0, 1));
    }

    #[test]
    fn hidden_close_pair_lures_and_intercepts() {
        let mut params = ExpertParams::default();
        params.thresholds.theta_cost = 100.0;
        params.thresholds.theta_sep = 30f64.to_radians();
        // Both allies west of the wall, 3 m apart, approach angle about 10 degrees.
        let f = Fixture::new(&[(8.0, 4.0), (5.0, 4.5)], &[(14.0, 4.0), (28.0, 15.0)], wall(12.0, 2.5, 10), params);
        let sit = sit_for(&f);
        assert!(!sit.visible[0][0]);
        let th = &f.params.thresholds;
        let c = classify_pair(&sit, th, 0, 1, 0, 0.5).unwrap();
        assert_eq!(c.rule, RuleId::R6);
        assert!(c.separation < th.theta_dist && c.angle < th.theta_sep);
    }

    #[test]
    fn expensive_pairs_fall_to_tier_three() {
        let mut params = ExpertParams::default();
        params.thresholds.theta_cost = -10.0;
        let f = Fixture::new(&[(5.0, 4.0), (5.0, 12.0), (3.0, 8.0)], &[(25.0, 4.0), (25.0, 12.0)], vec![], params);
        let d = decide(&f.ctx());
        assert!(d.traces.iter().all(|t| t.tier == 3));
    }

    #[test]
    fn waypoints_are_free_and_total() {
        let cells = wall(12.0, 2.5, 10);
        let f = Fixture::new(&[(5.0, 4.0), (5.0, 12.0), (3.0, 8.0), (11.0, 9.0)], &[(25.0, 4.0), (12.6, 5.0), (20.0, 8.0)], cells, ExpertParams::default());
        let d = decide(&f.ctx());
        assert_eq!(d.instructions.len(), 4);
        for i in &d.instructions {
            assert!(f.nav.point_free(i.waypoint), "{i:?}");
        }
    }
}
