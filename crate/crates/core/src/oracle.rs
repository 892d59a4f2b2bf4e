//! Brute-force reference implementations used to cross-check the fast
//! paths: field and cost formulas evaluated term by term, dense-sampling
//! line of sight, uniform-cost grid search, and a straight-line rule table
//! evaluator. Written for clarity, not speed.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::Serialize;

use crate::expert::{ActionType, ExpertParams, RuleId};
use crate::geometry::{Arena, Cell, ObstacleSet, Vec2};
use crate::nav::{GridCell, NavGrid};
use crate::threat::{ThreatParams, ZoneGrid};
use crate::cost::CostParams;
use crate::world::{AgentId, AgentState, EngagementParams, Team, WorldState};

fn zone_weight(zones: &ZoneGrid, p: Vec2) -> f64 {
    let arena = zones.arena();
    let zw = arena.width / zones.cols() as f64;
    let zh = arena.height / zones.rows() as f64;
    let mut col = (p.x / zw).floor() as i64;
    let mut row = (p.y / zh).floor() as i64;
    col = col.clamp(0, zones.cols() as i64 - 1);
    row = row.clamp(0, zones.rows() as i64 - 1);
    zones.weights()[row as usize * zones.cols() + col as usize]
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)).sqrt()
}

/// Force-balance modifier of `e` by direct enumeration of every agent.
pub fn balance(e: &AgentState, world: &WorldState, radius: f64) -> f64 {
    let mut opp = Vec::new();
    let mut mates = Vec::new();
    for x in world.agents() {
        if !x.is_alive() || x.id == e.id {
            continue;
        }
        let d = dist(x.position, e.position);
        if d > radius {
            continue;
        }
        if x.id.team == e.id.team {
            mates.push(d);
        } else {
            opp.push(d);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { radius } else { v.iter().sum::<f64>() / v.len() as f64 };
    let (d_opp, d_mate) = (mean(&opp), mean(&mates));
    let ratio = (opp.len() as f64 + 1.0) / (mates.len() as f64 + 1.0);
    let sig = if d_opp == 0.0 { 1.0 } else { 1.0 / (1.0 + (-(d_mate / d_opp)).exp()) };
    ratio * sig
}

/// Threat intensity at `x` from the opponents of `side`.
pub fn intensity(x: Vec2, world: &WorldState, side: Team, zones: &ZoneGrid, p: &ThreatParams) -> f64 {
    sum_sources(x, &sources(world, side, zones, p), p)
}

fn sources(world: &WorldState, side: Team, zones: &ZoneGrid, p: &ThreatParams) -> Vec<(AgentId, Vec2, f64)> {
    world
        .agents()
        .iter()
        .filter(|e| e.is_alive() && e.id.team != side)
        .map(|e| (e.id, e.position, zone_weight(zones, e.position) * balance(e, world, p.neighborhood_radius)))
        .collect()
}

fn sum_sources(x: Vec2, sources: &[(AgentId, Vec2, f64)], p: &ThreatParams) -> f64 {
    let mut total = 0.0;
    for &(_, c, w) in sources {
        let dx = (x.x - c.x) / p.rho;
        let dy = x.y - c.y;
        total += w * (-(dx * dx + dy * dy) / (2.0 * p.sigma * p.sigma)).exp();
    }
    total
}

/// Normalized threat per live opponent of `side`: intensity at the enemy
/// over the maximum on the sampling lattice and at every source.
pub fn threat_scores(world: &WorldState, side: Team, zones: &ZoneGrid, p: &ThreatParams) -> Vec<(AgentId, f64)> {
    let src = sources(world, side, zones, p);
    if src.is_empty() {
        return Vec::new();
    }
    let arena = world.arena();
    let nx = (arena.width / p.grid_step + 1e-9).floor() as usize;
    let ny = (arena.height / p.grid_step + 1e-9).floor() as usize;
    let mut max = 0.0f64;
    for i in 0..=nx {
        for j in 0..=ny {
            let x = Vec2::new(i as f64 * p.grid_step, j as f64 * p.grid_step);
            max = max.max(sum_sources(x, &src, p));
        }
    }
    for &(_, c, _) in &src {
        max = max.max(sum_sources(c, &src, p));
    }
    src.iter().map(|&(id, c, _)| (id, sum_sources(c, &src, p) / max)).collect()
}

/// Danger value of `a`, term by term.
pub fn danger(a: &AgentState, world: &WorldState, p: &ThreatParams) -> f64 {
    let r = p.neighborhood_radius;
    let v_max = world.params().v_max;
    let nearest_opp = world
        .agents()
        .iter()
        .filter(|x| x.is_alive() && x.id.team != a.id.team)
        .map(|x| (dist(x.position, a.position), x.position))
        .fold(None, |best: Option<(f64, Vec2)>, c| match best {
            Some(b) if b.0 <= c.0 => Some(b),
            _ => Some(c),
        });
    let mut total = 0.0;
    for x in world.agents() {
        if !x.is_alive() || x.id == a.id {
            continue;
        }
        let d = dist(x.position, a.position);
        if d > r {
            continue;
        }
        let vis = if world.line_of_sight(a.position, x.position) { 1.0 } else { p.kappa_vis };
        if x.id.team != a.id.team {
            let ahead = a.heading.x * (x.position.x - a.position.x) + a.heading.y * (x.position.y - a.position.y) > 0.0;
            let pos = if ahead { 1.0 } else { p.rear_factor };
            let closing = if d > 0.0 {
                let ux = (a.position.x - x.position.x) / d;
                let uy = (a.position.y - x.position.y) / d;
                (x.velocity.x * ux + x.velocity.y * uy).max(0.0)
            } else {
                0.0
            };
            let vel = 1.0 + (closing / v_max).min(1.0);
            total += p.w_en + p.w_d_en / (d + p.epsilon) * vis * pos * vel;
        } else {
            let screens = matches!(nearest_opp, Some((d_self, q)) if dist(x.position, q) < d_self);
            let pos = if screens { 1.0 } else { p.unscreened_factor };
            total -= p.w_al + p.w_d_al / (d + p.epsilon) * vis * pos;
        }
    }
    total
}

/// Single attack cost given the enemy's threat score.
pub fn attack_cost(a: &AgentState, e: &AgentState, threat: f64, world: &WorldState, p: &CostParams) -> f64 {
    let d = dist(a.position, e.position);
    let speed = (a.velocity.x * a.velocity.x + a.velocity.y * a.velocity.y).sqrt();
    let (fx, fy) = if speed > 1e-6 { (a.velocity.x / speed, a.velocity.y / speed) } else { (a.heading.x, a.heading.y) };
    let orient = if d > 0.0 {
        let c = (fx * (e.position.x - a.position.x) + fy * (e.position.y - a.position.y)) / d;
        c.clamp(-1.0, 1.0).acos() / std::f64::consts::PI
    } else {
        0.0
    };
    let vis = if world.line_of_sight(a.position, e.position) { 1.0 } else { 0.0 };
    p.w_distance * (d / p.d_max).min(1.0) + p.w_orientation * orient + p.w_threat * threat - p.w_visibility * vis
}

/// Angle between the two approach directions onto `e`.
pub fn approach_angle(a: Vec2, b: Vec2, e: Vec2) -> Option<f64> {
    let (da, db) = (dist(a, e), dist(b, e));
    if da == 0.0 || db == 0.0 {
        return None;
    }
    let c = ((e.x - a.x) * (e.x - b.x) + (e.y - a.y) * (e.y - b.y)) / (da * db);
    Some(c.clamp(-1.0, 1.0).acos())
}

/// Cooperative attack cost of the pair `(a, b)` on `e`.
pub fn coop_cost(a: &AgentState, b: &AgentState, e: &AgentState, threat: f64, world: &WorldState, zones: &ZoneGrid, p: &CostParams) -> f64 {
    let Some(angle) = approach_angle(a.position, b.position, e.position) else { return f64::INFINITY };
    attack_cost(a, e, threat, world, p)
        + attack_cost(b, e, threat, world, p)
        + p.gamma * (angle - std::f64::consts::FRAC_PI_2).abs() / std::f64::consts::PI
        + p.zeta * (zone_weight(zones, a.position) + zone_weight(zones, b.position))
}

/// Line of sight by testing evenly spaced samples against every cell
/// interior.
pub fn sampled_los(a: Vec2, b: Vec2, cells: &[Cell], spacing: f64) -> bool {
    let n = (dist(a, b) / spacing).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        let p = Vec2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        !cells.iter().any(|c| {
            let h = c.side / 2.0;
            (p.x - c.center.x).abs() < h && (p.y - c.center.y).abs() < h
        })
    })
}

/// Distance from `p` to the nearest cell face, used to flag grazing cases.
pub fn face_distance(a: Vec2, b: Vec2, cells: &[Cell], spacing: f64) -> f64 {
    let n = (dist(a, b) / spacing).ceil().max(1.0) as usize;
    let mut best = f64::INFINITY;
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let p = Vec2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        for c in cells {
            let h = c.side / 2.0;
            let dx = (p.x - c.center.x).abs() - h;
            let dy = (p.y - c.center.y).abs() - h;
            let outside = (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
            let inside = dx.max(dy).min(0.0).abs();
            best = best.min(if dx > 0.0 || dy > 0.0 { outside } else { inside });
        }
    }
    best
}

/// Uniform-cost search over the free cells of `grid`, 8-connected with no
/// corner cutting. Returns the optimal path cost.
pub fn ucs_cost(grid: &NavGrid, start: GridCell, goal: GridCell) -> Option<f64> {
    let (cols, rows) = grid.dims();
    if !grid.is_free(start) || !grid.is_free(goal) {
        return None;
    }
    let cs = grid.cell_size();
    let mut best = vec![f64::INFINITY; cols * rows];
    let mut heap = BinaryHeap::new();
    best[start.1 * cols + start.0] = 0.0;
    heap.push(Reverse((OrdF64(0.0), start)));
    while let Some(Reverse((OrdF64(g), (c, r)))) = heap.pop() {
        if (c, r) == goal {
            return Some(g);
        }
        if g > best[r * cols + c] {
            continue;
        }
        for dc in -1i64..=1 {
            for dr in -1i64..=1 {
                if dc == 0 && dr == 0 {
                    continue;
                }
                let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                if nc < 0 || nr < 0 || nc >= cols as i64 || nr >= rows as i64 {
                    continue;
                }
                let (nc, nr) = (nc as usize, nr as usize);
                if !grid.is_free((nc, nr)) {
                    continue;
                }
                let diagonal = dc != 0 && dr != 0;
                if diagonal && (!grid.is_free((nc, r)) || !grid.is_free((c, nr))) {
                    continue;
                }
                let step = if diagonal { cs * std::f64::consts::SQRT_2 } else { cs };
                let ng = g + step;
                if ng < best[nr * cols + nc] {
                    best[nr * cols + nc] = ng;
                    heap.push(Reverse((OrdF64(ng), (nc, nr))));
                }
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// One row of the reference rule evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RuleRow {
    pub agent: u32,
    pub rule: RuleId,
    pub action: ActionType,
    pub target: Option<u32>,
}

/// Evaluates the rule table for `side` directly from the definitions.
pub fn rule_table(world: &WorldState, side: Team, zones: &ZoneGrid, params: &ExpertParams) -> Vec<RuleRow> {
    let th = &params.thresholds;
    let allies: Vec<&AgentState> = world.agents().iter().filter(|a| a.is_alive() && a.id.team == side).collect();
    let enemies: Vec<&AgentState> = world.agents().iter().filter(|a| a.is_alive() && a.id.team != side).collect();
    let scores = threat_scores(world, side, zones, &params.threat);
    let threat: Vec<f64> = enemies.iter().map(|e| scores.iter().find(|(id, _)| *id == e.id).map_or(0.0, |s| s.1)).collect();
    let danger_of: Vec<f64> = allies.iter().map(|a| danger(a, world, &params.threat)).collect();
    let cost: Vec<Vec<f64>> = allies.iter().map(|a| enemies.iter().zip(&threat).map(|(e, t)| attack_cost(a, e, *t, world, &params.cost)).collect()).collect();
    let seen = |i: usize, j: usize| world.line_of_sight(allies[i].position, enemies[j].position);
    let mut rows: Vec<Option<RuleRow>> = vec![None; allies.len()];
    let row = |i: usize, rule, action, target: Option<usize>| Some(RuleRow { agent: allies[i].id.index, rule, action, target: target.map(|j| enemies[j].id.index) });

    // Tier 1.
    for i in 0..allies.len() {
        if enemies.len() == 1 {
            rows[i] = row(i, RuleId::R1, ActionType::Attack, Some(0));
            continue;
        }
        if allies.len() == 1 && enemies.len() > 1 {
            rows[i] = row(i, RuleId::R2, ActionType::Retreat, None);
            continue;
        }
        let mut nearest_seen: Option<(f64, usize)> = None;
        let mut hidden_close = false;
        for j in 0..enemies.len() {
            let d = dist(allies[i].position, enemies[j].position);
            if seen(i, j) {
                if d <= th.epsilon_engage && nearest_seen.is_none_or(|(bd, _)| d < bd) {
                    nearest_seen = Some((d, j));
                }
            } else if d <= th.epsilon_threat {
                hidden_close = true;
            }
        }
        if let Some((_, j)) = nearest_seen {
            rows[i] = row(i, RuleId::R3, ActionType::Attack, Some(j));
        } else if hidden_close {
            rows[i] = row(i, RuleId::R4, ActionType::Retreat, None);
        }
    }

    // Tier 2: repeatedly take the cheapest feasible (pair, enemy) triple.
    let mut ally_taken: Vec<bool> = rows.iter().map(|r| r.is_some()).collect();
    let mut enemy_taken = vec![false; enemies.len()];
    loop {
        let mut best: Option<(f64, usize, usize, usize, RuleId, usize, usize)> = None;
        for p in 0..allies.len() {
            for q in p + 1..allies.len() {
                if ally_taken[p] || ally_taken[q] {
                    continue;
                }
                for j in 0..enemies.len() {
                    if enemy_taken[j] {
                        continue;
                    }
                    let c = coop_cost(allies[p], allies[q], enemies[j], threat[j], world, zones, &params.cost);
                    if !(c < th.theta_cost) {
                        continue;
                    }
                    let Some(angle) = approach_angle(allies[p].position, allies[q].position, enemies[j].position) else { continue };
                    let sep = dist(allies[p].position, allies[q].position);
                    let lead = if !seen(p, j) {
                        Some((p, q))
                    } else if !seen(q, j) {
                        Some((q, p))
                    } else {
                        None
                    };
                    let mut rule = None;
                    if let Some((f, s)) = lead {
                        if sep > th.theta_dist || angle > th.theta_sep {
                            rule = Some((RuleId::R5, f, s));
                        } else if sep < th.theta_dist && angle < th.theta_sep {
                            rule = Some((RuleId::R6, f, s));
                        }
                    }
                    if rule.is_none() && danger_of[p] < th.theta_coop && danger_of[q] < th.theta_coop {
                        rule = Some((RuleId::R7, p, q));
                    }
                    let Some((r, f, s)) = rule else { continue };
                    let better = match best {
                        None => true,
                        Some((bc, bp, bq, bj, ..)) => (c, p, q, j) < (bc, bp, bq, bj),
                    };
                    if better {
                        best = Some((c, p, q, j, r, f, s));
                    }
                }
            }
        }
        let Some((_, p, q, j, r, f, s)) = best else { break };
        let (lead, support) = match r {
            RuleId::R5 => (ActionType::Contain, ActionType::Support),
            RuleId::R6 => (ActionType::Lure, ActionType::Intercept),
            _ => (ActionType::Cooperate, ActionType::Cooperate),
        };
        rows[f] = row(f, r, lead, Some(j));
        rows[s] = row(s, r, support, Some(j));
        ally_taken[p] = true;
        ally_taken[q] = true;
        enemy_taken[j] = true;
    }

    // Tier 3.
    let any_other = allies.len() > 1;
    for i in 0..allies.len() {
        if rows[i].is_some() {
            continue;
        }
        let d = danger_of[i];
        let mut pick: Option<(RuleId, ActionType, Option<usize>)> = None;
        if d < th.delta_attack {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..enemies.len() {
                if threat[j] < th.delta_threat && cost[i][j] < th.delta_cost && best.is_none_or(|(bc, _)| cost[i][j] < bc) {
                    best = Some((cost[i][j], j));
                }
            }
            if let Some((_, j)) = best {
                pick = Some((RuleId::R8, ActionType::Attack, Some(j)));
            }
        }
        if pick.is_none() && d < th.delta_contain {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..enemies.len() {
                if cost[i][j] < th.delta_cost && best.is_none_or(|(bc, _)| cost[i][j] < bc) {
                    best = Some((cost[i][j], j));
                }
            }
            pick = match best {
                Some((_, j)) => Some((RuleId::R9, ActionType::Contain, Some(j))),
                None if any_other => Some((RuleId::R10, ActionType::Support, None)),
                None => None,
            };
        }
        let (rule, action, target) = pick.unwrap_or((RuleId::R11, ActionType::Retreat, None));
        rows[i] = row(i, rule, action, target);
    }
    rows.into_iter().map(|r| r.expect("every ally has a row")).collect()
}

/// Random world for oracle sweeps: up to `max_team` agents per side, up to
/// `max_obstacles` 0.3 m cells, random headings and velocities.
pub fn random_world(rng: &mut impl Rng, max_team: usize, max_obstacles: usize) -> WorldState {
    let arena = Arena::new(30.0, 16.0).expect("valid arena");
    let mut obstacles = ObstacleSet::empty(arena);
    let n_obs = rng.random_range(0..=max_obstacles);
    while obstacles.len() < n_obs {
        let c = Vec2::new(rng.random_range(0.15..29.85), rng.random_range(0.15..15.85));
        let _ = obstacles.insert(Cell::new(c, 0.3));
    }
    let mut agents = Vec::new();
    for team in [Team::Allied, Team::Enemy] {
        let n = rng.random_range(1..=max_team);
        for i in 0..n {
            let p = loop {
                let p = Vec2::new(rng.random_range(0.2..29.8), rng.random_range(0.2..15.8));
                if obstacles.cells().iter().all(|c| !c.contains_closed(p, 0.05)) {
                    break p;
                }
            };
            let h = rng.random_range(0.0..std::f64::consts::TAU);
            let mut a = AgentState::new(AgentId::new(team, i as u32), p, Vec2::new(h.cos(), h.sin()));
            if rng.random_bool(0.7) {
                let va = rng.random_range(0.0..std::f64::consts::TAU);
                let s = rng.random_range(0.0..2.0);
                a.velocity = Vec2::new(s * va.cos(), s * va.sin());
            }
            agents.push(a);
        }
    }
    WorldState::new(obstacles, agents, EngagementParams::default(), rng.random()).expect("sampled agents lie in free space")
}

/// Outcome of one oracle comparison sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub comparisons: usize,
    pub mismatches: usize,
    /// Disagreements excused as boundary grazing (line of sight only).
    pub grazing: usize,
    /// Line-of-sight cases the oracle found blocked.
    pub blocked: usize,
    pub first_mismatch: Option<String>,
}

impl CheckResult {
    fn new(name: &'static str) -> Self {
        Self { name, cases: 0, comparisons: 0, mismatches: 0, grazing: 0, blocked: 0, first_mismatch: None }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.comparisons += 1;
        if !ok {
            self.mismatches += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(detail());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Relative agreement with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-3)
}

pub const FORMULA_TOLERANCE: f64 = 1e-9;

/// Field, modifier, score, danger and cost formulas against the direct
/// evaluations on `cases` random worlds.
pub fn check_formulas(cases: usize, seed: u64) -> CheckResult {
    use crate::cost;
    use crate::threat;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut out = CheckResult::new("formulas");
    let tp = ThreatParams::default();
    let cp = CostParams::default();
    for _ in 0..cases {
        let world = random_world(&mut rng, 9, 30);
        let zones = ZoneGrid::standard(world.arena());
        let side = Team::Allied;
        let field = threat::ThreatField::build(&world, side, &zones, &tp);
        let enemies: Vec<&AgentState> = world.alive(side.opponent()).collect();
        let allies: Vec<&AgentState> = world.alive(side).collect();
        for e in &enemies {
            let (m, o) = (threat::force_balance_modifier(e, &world, tp.neighborhood_radius), balance(e, &world, tp.neighborhood_radius));
            out.record(close(m, o, FORMULA_TOLERANCE), || format!("M({:?}) {m} vs {o}", e.id));
        }
        for _ in 0..8 {
            let x = Vec2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..16.0));
            let (m, o) = (threat::intensity(x, &enemies, &zones, &tp, &world), intensity(x, &world, side, &zones, &tp));
            out.record(close(m, o, FORMULA_TOLERANCE), || format!("I({x:?}) {m} vs {o}"));
        }
        let scores = threat_scores(&world, side, &zones, &tp);
        for (id, o) in &scores {
            let m = field.score(*id).unwrap_or(f64::NAN);
            out.record(close(m, *o, FORMULA_TOLERANCE), || format!("T({id:?}) {m} vs {o}"));
        }
        let t_of = |id: AgentId| scores.iter().find(|(i, _)| *i == id).map_or(0.0, |s| s.1);
        for a in &allies {
            let (m, o) = (threat::danger_value(a, &world, &tp), danger(a, &world, &tp));
            out.record(close(m, o, FORMULA_TOLERANCE), || format!("D({:?}) {m} vs {o}", a.id));
            for e in &enemies {
                let (m, o) = (cost::attack_cost(a, e, &field, &cp, &world), attack_cost(a, e, t_of(e.id), &world, &cp));
                out.record(close(m, o, FORMULA_TOLERANCE), || format!("C({:?},{:?}) {m} vs {o}", a.id, e.id));
            }
        }
        for (x, a) in allies.iter().enumerate() {
            for b in &allies[x + 1..] {
                for e in &enemies {
                    let m = cost::coop_attack_cost(a, b, e, &field, &zones, &cp, &world);
                    let o = coop_cost(a, b, e, t_of(e.id), &world, &zones, &cp);
                    out.record(close(m, o, FORMULA_TOLERANCE), || format!("C({:?},{:?},{:?}) {m} vs {o}", a.id, b.id, e.id));
                }
            }
        }
        out.cases += 1;
    }
    out
}

/// Rule engine decisions against the straight-line evaluator.
pub fn check_rules(cases: usize, seed: u64) -> CheckResult {
    use crate::expert::{decide, ExpertContext};
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut out = CheckResult::new("rule table");
    let params = ExpertParams::default();
    for _ in 0..cases {
        let world = random_world(&mut rng, 9, 30);
        let zones = ZoneGrid::standard(world.arena());
        let nav = NavGrid::for_world(&world, crate::nav::DEFAULT_CELL_SIZE);
        let field = crate::threat::ThreatField::build(&world, Team::Allied, &zones, &params.threat);
        let ctx = ExpertContext { world: &world, side: Team::Allied, field: &field, zones: &zones, params: &params, nav: &nav };
        let got: Vec<RuleRow> = decide(&ctx).traces.iter().map(|t| RuleRow { agent: t.agent, rule: t.rule, action: t.action, target: t.target }).collect();
        let want = rule_table(&world, Team::Allied, &zones, &params);
        out.record(got == want, || format!("engine {got:?}\noracle {want:?}"));
        out.cases += 1;
    }
    out
}

/// Sample spacing of the line-of-sight oracle, meters.
pub const LOS_SPACING: f64 = 0.002;

/// Segment-box line of sight against dense sampling. Disagreements within
/// one sample spacing of a cell face count as grazing, not mismatches.
pub fn check_los(cases: usize, seed: u64) -> CheckResult {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut out = CheckResult::new("line of sight");
    let arena = Arena::new(30.0, 16.0).expect("valid arena");
    for _ in 0..cases {
        let a = Vec2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..16.0));
        let b = if rng.random_bool(0.5) {
            Vec2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..16.0))
        } else {
            Vec2::new((a.x + rng.random_range(-3.0f64..3.0)).clamp(0.0, 30.0), (a.y + rng.random_range(-3.0f64..3.0)).clamp(0.0, 16.0))
        };
        let mut set = ObstacleSet::empty(arena);
        let n = rng.random_range(1..=30);
        while set.len() < n {
            // Half the cells near the segment so that blocking is common.
            let c = if rng.random_bool(0.5) {
                let t: f64 = rng.random();
                Vec2::new(a.x + (b.x - a.x) * t + rng.random_range(-0.4..0.4), a.y + (b.y - a.y) * t + rng.random_range(-0.4..0.4))
            } else {
                Vec2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..16.0))
            };
            let c = Vec2::new(f64::clamp(c.x, 0.15, 29.85), f64::clamp(c.y, 0.15, 15.85));
            let cell = Cell::new(c, 0.3);
            if cell.contains_closed(a, 0.0) || cell.contains_closed(b, 0.0) {
                continue;
            }
            let _ = set.insert(cell);
        }
        let fast = crate::geometry::line_of_sight(a, b, &set).expect("endpoints are free");
        let slow = sampled_los(a, b, set.cells(), LOS_SPACING);
        out.blocked += usize::from(!slow);
        out.comparisons += 1;
        if fast != slow {
            if face_distance(a, b, set.cells(), LOS_SPACING) <= LOS_SPACING {
                out.grazing += 1;
            } else {
                out.mismatches += 1;
                if out.first_mismatch.is_none() {
                    out.first_mismatch = Some(format!("{a:?} -> {b:?}: fast {fast}, sampled {slow}"));
                }
            }
        }
        out.cases += 1;
    }
    out
}

/// A* path costs against uniform-cost search on random cluttered grids.
pub fn check_paths(cases: usize, seed: u64) -> CheckResult {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut out = CheckResult::new("grid paths");
    let arena = Arena::new(30.0, 16.0).expect("valid arena");
    for _ in 0..cases {
        let mut set = ObstacleSet::empty(arena);
        let n = rng.random_range(0..=400);
        while set.len() < n {
            let _ = set.insert(Cell::new(Vec2::new(rng.random_range(0.15..29.85), rng.random_range(0.15..15.85)), 0.3));
        }
        let grid = NavGrid::new(set, 0.5);
        let (cols, rows) = grid.dims();
        for _ in 0..5 {
            let s = (rng.random_range(0..cols), rng.random_range(0..rows));
            let g = (rng.random_range(0..cols), rng.random_range(0..rows));
            let fast = crate::nav::astar(&grid, s, g).map(|(_, c)| c);
            let slow = ucs_cost(&grid, s, g);
            let ok = match (fast, slow) {
                (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * y.max(1.0),
                (None, None) => true,
                _ => false,
            };
            out.record(ok, || format!("{s:?} -> {g:?}: astar {fast:?}, ucs {slow:?}"));
        }
        out.cases += 1;
    }
    out
}

/// Every sweep with its default size.
pub fn run_suite(seed: u64) -> Vec<CheckResult> {
    vec![check_formulas(200, seed), check_rules(100, seed ^ 1), check_los(1000, seed ^ 2), check_paths(50, seed ^ 3)]
}

#[cfg(test)]
mod suite_tests {
    use super::*;

    #[test]
    fn small_suite_agrees() {
        for r in [check_formulas(6, 1), check_rules(10, 2), check_los(200, 3), check_paths(5, 4)] {
            assert!(r.passed(), "{r:?}");
            assert!(r.comparisons > 0);
        }
    }
}
