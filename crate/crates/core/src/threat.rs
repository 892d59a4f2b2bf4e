//! Situational metrics: the enemy threat intensity field and its normalized
//! per-enemy scores, the local force-balance modifier, and allied danger.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{gaussian_kernel, AnisotropyMatrix, Arena, GeometryError, Vec2};
use crate::scalar::{logistic, Scalar};
use crate::world::{AgentId, AgentState, Team, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThreatError {
    #[error("invalid zone grid: {0}")]
    InvalidZones(String),
    #[error("invalid threat parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Rectangular partition of the arena into `rows x cols` zones, each with a
/// positive tactical weight. Zones are indexed row-major from the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct ZoneGrid<S = f64> {
    arena: Arena<S>,
    rows: usize,
    cols: usize,
    weights: Vec<S>,
}

impl<S: Scalar> ZoneGrid<S> {
    pub fn new(arena: Arena<S>, rows: usize, cols: usize, weights: Vec<S>) -> Result<Self, ThreatError> {
        if rows == 0 || cols == 0 {
            return Err(ThreatError::InvalidZones("zone grid needs at least one row and column".into()));
        }
        if weights.len() != rows * cols {
            return Err(ThreatError::InvalidZones(format!("expected {} weights, got {}", rows * cols, weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > S::zero() && w.is_finite())) {
            return Err(ThreatError::InvalidZones(format!("zone weights must be positive, got {w}")));
        }
        Ok(Self { arena, rows, cols, weights })
    }

    /// Default layout: the center column of a 2 x 3 grid weighs 1.5, the rest 1.
    pub fn standard(arena: Arena<S>) -> Self {
        Self::with_center_weight(arena, 2, 3, S::lit(1.5))
    }

    /// Every zone weighs 1 except the middle column (when `cols` is odd).
    pub fn with_center_weight(arena: Arena<S>, rows: usize, cols: usize, center: S) -> Self {
        let weights = (0..rows * cols)
            .map(|i| if cols % 2 == 1 && i % cols == cols / 2 { center } else { S::one() })
            .collect();
        Self::new(arena, rows, cols, weights).expect("standard zone layout is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn arena(&self) -> Arena<S> {
        self.arena
    }

    fn zone_size(&self) -> Vec2<S> {
        Vec2::new(self.arena.width / S::count(self.cols), self.arena.height / S::count(self.rows))
    }

    /// Zone index containing `p`; points on shared edges go to the higher
    /// zone, points outside the arena to the nearest zone.
    pub fn zone_of(&self, p: Vec2<S>) -> usize {
        let size = self.zone_size();
        let c = (p.x / size.x).floor().to_f64_lossy().clamp(0.0, (self.cols - 1) as f64) as usize;
        let r = (p.y / size.y).floor().to_f64_lossy().clamp(0.0, (self.rows - 1) as f64) as usize;
        r * self.cols + c
    }

    pub fn weight_at(&self, p: Vec2<S>) -> S {
        self.weights[self.zone_of(p)]
    }

    /// Lower and upper corners of zone `index`.
    pub fn bounds(&self, index: usize) -> (Vec2<S>, Vec2<S>) {
        let size = self.zone_size();
        let (r, c) = (index / self.cols, index % self.cols);
        let lo = Vec2::new(size.x * S::count(c), size.y * S::count(r));
        (lo, lo + size)
    }

    pub fn center(&self, index: usize) -> Vec2<S> {
        let (lo, hi) = self.bounds(index);
        lo.lerp(hi, S::lit(0.5))
    }

    /// Same layout with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: S) -> Result<Self, ThreatError> {
        Self::new(self.arena, self.rows, self.cols, self.weights.iter().map(|w| *w * factor).collect())
    }
}

/// Tunables of the field, modifier and danger formulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(default)]
pub struct ThreatParams<S = f64> {
    /// Gaussian bandwidth, meters.
    pub sigma: S,
    /// Neighborhood radius used for the force-balance and danger sets, meters.
    pub neighborhood_radius: S,
    /// Map aspect ratio compensated by the anisotropic kernel.
    pub rho: S,
    /// Distance guard in the danger value, meters.
    pub epsilon: S,
    pub w_en: S,
    pub w_al: S,
    pub w_d_en: S,
    pub w_d_al: S,
    /// Visibility factor applied to occluded neighbors.
    pub kappa_vis: S,
    /// Position factor for enemies behind the agent.
    pub rear_factor: S,
    /// Position factor for allies that are not screening the agent.
    pub unscreened_factor: S,
    /// Spacing of the dense grid the field maximum is taken over, meters.
    pub grid_step: S,
}

impl<S: Scalar> Default for ThreatParams<S> {
    fn default() -> Self {
        Self {
            sigma: S::lit(3.0),
            neighborhood_radius: S::lit(5.0),
            rho: S::lit(30.0 / 16.0),
            epsilon: S::lit(0.1),
            w_en: S::lit(1.0),
            w_al: S::lit(0.5),
            w_d_en: S::lit(2.0),
            w_d_al: S::lit(1.0),
            kappa_vis: S::lit(0.3),
            rear_factor: S::lit(0.5),
            unscreened_factor: S::lit(0.5),
            grid_step: S::lit(0.1),
        }
    }
}

impl<S: Scalar> ThreatParams<S> {
    pub fn validate(&self) -> Result<(), ThreatError> {
        for (name, v) in [
            ("sigma", self.sigma),
            ("neighborhood_radius", self.neighborhood_radius),
            ("rho", self.rho),
            ("epsilon", self.epsilon),
            ("grid_step", self.grid_step),
        ] {
            if !(v > S::zero() && v.is_finite()) {
                return Err(ThreatError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("w_en", self.w_en),
            ("w_al", self.w_al),
            ("w_d_en", self.w_d_en),
            ("w_d_al", self.w_d_al),
            ("kappa_vis", self.kappa_vis),
            ("rear_factor", self.rear_factor),
            ("unscreened_factor", self.unscreened_factor),
        ] {
            if !(v >= S::zero() && v.is_finite()) {
                return Err(ThreatError::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn anisotropy(&self) -> AnisotropyMatrix<S> {
        AnisotropyMatrix::new(self.rho).expect("validated rho")
    }
}

/// Alive agents of `team` within `r` of `center`, excluding `exclude`.
fn neighbors<'w, S: Scalar>(
    world: &'w WorldState<S>,
    team: Team,
    center: Vec2<S>,
    r: S,
    exclude: AgentId,
) -> impl Iterator<Item = (&'w AgentState<S>, S)> + 'w {
    world
        .alive(team)
        .filter(move |a| a.id != exclude)
        .map(move |a| (a, a.position.distance(center)))
        .filter(move |(_, d)| *d <= r)
}

/// Count and mean distance of a neighbor set; an empty set reports mean `r`.
fn count_and_mean<S: Scalar>(items: impl Iterator<Item = S>, r: S) -> (usize, S) {
    let (n, sum) = items.fold((0usize, S::zero()), |(n, s), d| (n + 1, s + d));
    if n == 0 {
        (0, r)
    } else {
        (n, sum / S::count(n))
    }
}

/// Local force balance around an agent `e`:
/// `(|opponents| + 1) / (|teammates| + 1) * logistic(mean_teammate_dist / mean_opponent_dist)`,
/// both sets taken within `r` of `e` and excluding `e` itself.
pub fn force_balance_modifier<S: Scalar>(e: &AgentState<S>, world: &WorldState<S>, r: S) -> S {
    let (n_opp, d_opp) = count_and_mean(neighbors(world, e.team().opponent(), e.position, r, e.id).map(|(_, d)| d), r);
    let (n_mate, d_mate) = count_and_mean(neighbors(world, e.team(), e.position, r, e.id).map(|(_, d)| d), r);
    let ratio = S::count(n_opp + 1) / S::count(n_mate + 1);
    // A zero mean distance to opponents only happens when one stands exactly
    // on `e`; the logistic saturates either way.
    let arg = if d_opp > S::zero() { d_mate / d_opp } else { S::infinity() };
    ratio * logistic(arg)
}

/// Threat intensity at `x` from the given (alive) enemies.
pub fn intensity<S: Scalar>(
    x: Vec2<S>,
    enemies: &[&AgentState<S>],
    zones: &ZoneGrid<S>,
    params: &ThreatParams<S>,
    world: &WorldState<S>,
) -> S {
    let a = params.anisotropy();
    enemies
        .iter()
        .map(|e| {
            let weight = zones.weight_at(e.position) * force_balance_modifier(e, world, params.neighborhood_radius);
            weight * gaussian_kernel(x, e.position, &a, params.sigma)
        })
        .fold(S::zero(), |acc, v| acc + v)
}

#[derive(Clone, Debug, PartialEq)]
struct Source<S> {
    id: AgentId,
    position: Vec2<S>,
    weight: S,
}

/// The enemy threat field seen by one side at one instant, with its maximum
/// over a dense grid (plus the enemy positions) and the per-enemy scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreatField<S = f64> {
    anisotropy: AnisotropyMatrix<S>,
    sigma: S,
    sources: Vec<Source<S>>,
    max: S,
    scores: Vec<(AgentId, S)>,
}

impl<S: Scalar> ThreatField<S> {
    /// Field generated by the alive opponents of `side`.
    pub fn build(world: &WorldState<S>, side: Team, zones: &ZoneGrid<S>, params: &ThreatParams<S>) -> Self {
        let sources: Vec<Source<S>> = world
            .alive(side.opponent())
            .map(|e| Source {
                id: e.id,
                position: e.position,
                weight: zones.weight_at(e.position) * force_balance_modifier(e, world, params.neighborhood_radius),
            })
            .collect();
        let mut field = Self { anisotropy: params.anisotropy(), sigma: params.sigma, sources, max: S::zero(), scores: Vec::new() };
        if field.sources.is_empty() {
            return field;
        }
        let mut max = field.grid_max(world.arena(), params.grid_step);
        for s in &field.sources {
            max = max.max(field.intensity_at(s.position));
        }
        field.max = max;
        field.scores = field.sources.iter().map(|s| (s.id, field.intensity_at(s.position) / max)).collect();
        field
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn intensity_at(&self, x: Vec2<S>) -> S {
        self.sources
            .iter()
            .map(|s| s.weight * gaussian_kernel(x, s.position, &self.anisotropy, self.sigma))
            .fold(S::zero(), |acc, v| acc + v)
    }

    /// Field maximum used for normalization; zero when there are no enemies.
    pub fn max(&self) -> S {
        self.max
    }

    /// Normalized threat of enemy `id`, `None` if it is not a live source.
    pub fn score(&self, id: AgentId) -> Option<S> {
        self.scores.iter().find(|(i, _)| *i == id).map(|(_, s)| *s)
    }

    pub fn scores(&self) -> &[(AgentId, S)] {
        &self.scores
    }

    /// Combined weight (zone times force balance) of enemy `id`.
    pub fn source_weight(&self, id: AgentId) -> Option<S> {
        self.sources.iter().find(|s| s.id == id).map(|s| s.weight)
    }

    /// Maximum over the grid `{i * step} x {j * step}` covering the arena.
    /// The kernel factorizes per axis, so each source contributes an outer
    /// product of two 1-D profiles.
    fn grid_max(&self, arena: Arena<S>, step: S) -> S {
        let nx = (arena.width / step + S::lit(1e-9)).floor().to_f64_lossy() as usize;
        let ny = (arena.height / step + S::lit(1e-9)).floor().to_f64_lossy() as usize;
        let two_sigma_sq = S::lit(2.0) * self.sigma * self.sigma;
        let rho = self.anisotropy.rho();
        let profile_x: Vec<Vec<S>> = self
            .sources
            .iter()
            .map(|s| {
                (0..=nx)
                    .map(|i| {
                        let dx = (S::count(i) * step - s.position.x) / rho;
                        s.weight * (-dx * dx / two_sigma_sq).exp()
                    })
                    .collect()
            })
            .collect();
        let profile_y: Vec<Vec<S>> = self
            .sources
            .iter()
            .map(|s| {
                (0..=ny)
                    .map(|j| {
                        let dy = S::count(j) * step - s.position.y;
                        (-dy * dy / two_sigma_sq).exp()
                    })
                    .collect()
            })
            .collect();
        let mut row = vec![S::zero(); nx + 1];
        let mut best = S::zero();
        for j in 0..=ny {
            row.iter_mut().for_each(|v| *v = S::zero());
            for (px, py) in profile_x.iter().zip(&profile_y) {
                let gy = py[j];
                for (acc, gx) in row.iter_mut().zip(px) {
                    *acc = *acc + *gx * gy;
                }
            }
            for v in &row {
                best = best.max(*v);
            }
        }
        best
    }
}

/// Normalized threat of enemy `e`; `None` is the no-threat state (the field
/// has no live sources or `e` is not one of them).
pub fn threat_score<S: Scalar>(e: &AgentState<S>, field: &ThreatField<S>) -> Option<S> {
    field.score(e.id)
}

/// Per-neighbor factors entering the danger value, exposed for tracing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnemyFactors<S> {
    pub distance: S,
    pub visibility: S,
    pub position: S,
    pub velocity: S,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AllyFactors<S> {
    pub distance: S,
    pub visibility: S,
    pub position: S,
}

/// Visibility, frontal-position and closing-speed factors of enemy `e` as
/// seen from `a`.
pub fn enemy_factors<S: Scalar>(a: &AgentState<S>, e: &AgentState<S>, world: &WorldState<S>, params: &ThreatParams<S>) -> EnemyFactors<S> {
    let offset = e.position - a.position;
    let visibility = if world.line_of_sight(a.position, e.position) { S::one() } else { params.kappa_vis };
    let position = if a.heading.dot(offset) > S::zero() { S::one() } else { params.rear_factor };
    let closing = match (-offset).normalized() {
        Some(toward_a) => e.velocity.dot(toward_a).max(S::zero()),
        None => S::zero(),
    };
    let velocity = S::one() + (closing / world.params().v_max).min(S::one());
    EnemyFactors { distance: offset.norm(), visibility, position, velocity }
}

/// Visibility and screening factors of teammate `k` as seen from `a`. `k`
/// screens `a` when it is nearer than `a` to `a`'s nearest opponent.
pub fn ally_factors<S: Scalar>(a: &AgentState<S>, k: &AgentState<S>, world: &WorldState<S>, params: &ThreatParams<S>) -> AllyFactors<S> {
    let visibility = if world.line_of_sight(a.position, k.position) { S::one() } else { params.kappa_vis };
    let nearest_enemy = world
        .alive(a.team().opponent())
        .map(|e| (e.position.distance(a.position), e.position))
        .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    let position = match nearest_enemy {
        Some((d_self, p)) if k.position.distance(p) < d_self => S::one(),
        _ => params.unscreened_factor,
    };
    AllyFactors { distance: a.position.distance(k.position), visibility, position }
}

/// Signed exposure of agent `a`: opponent pressure within the neighborhood
/// minus teammate protection. Larger is more dangerous.
pub fn danger_value<S: Scalar>(a: &AgentState<S>, world: &WorldState<S>, params: &ThreatParams<S>) -> S {
    let r = params.neighborhood_radius;
    let mut n_enemy = 0usize;
    let mut enemy_term = S::zero();
    for (e, _) in neighbors(world, a.team().opponent(), a.position, r, a.id) {
        n_enemy += 1;
        let f = enemy_factors(a, e, world, params);
        enemy_term = enemy_term + params.w_d_en / (f.distance + params.epsilon) * f.visibility * f.position * f.velocity;
    }
    let mut n_ally = 0usize;
    let mut ally_term = S::zero();
    for (k, _) in neighbors(world, a.team(), a.position, r, a.id) {
        n_ally += 1;
        let f = ally_factors(a, k, world, params);
        ally_term = ally_term + params.w_d_al / (f.distance + params.epsilon) * f.visibility * f.position;
    }
    params.w_en * S::count(n_enemy) - params.w_al * S::count(n_ally) + enemy_term - ally_term
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObstacleSet;
    use crate::world::EngagementParams;

    fn arena() -> Arena<f64> {
        Arena::new(30.0, 16.0).unwrap()
    }

    fn world(allies: &[Vec2], enemies: &[Vec2]) -> WorldState {
        let mut agents = Vec::new();
        for (i, p) in allies.iter().enumerate() {
            agents.push(AgentState::new(AgentId::new(Team::Allied, i as u32), *p, Vec2::new(1.0, 0.0)));
        }
        for (i, p) in enemies.iter().enumerate() {
            agents.push(AgentState::new(AgentId::new(Team::Enemy, i as u32), *p, Vec2::new(-1.0, 0.0)));
        }
        WorldState::new(ObstacleSet::empty(arena()), agents, EngagementParams::default(), 1).unwrap()
    }

    #[test]
    fn zone_lookup_and_weights() {
        let z = ZoneGrid::standard(arena());
        assert_eq!(z.len(), 6);
        assert_eq!(z.zone_of(Vec2::new(1.0, 1.0)), 0);
        assert_eq!(z.zone_of(Vec2::new(15.0, 1.0)), 1);
        assert_eq!(z.zone_of(Vec2::new(29.0, 15.0)), 5);
        assert_eq!(z.zone_of(Vec2::new(30.0, 16.0)), 5);
        assert_eq!(z.weight_at(Vec2::new(15.0, 12.0)), 1.5);
        assert_eq!(z.weight_at(Vec2::new(2.0, 12.0)), 1.0);
        assert_eq!(z.center(4), Vec2::new(15.0, 12.0));
        assert!(ZoneGrid::new(arena(), 2, 3, vec![1.0; 5]).is_err());
        assert!(ZoneGrid::new(arena(), 1, 1, vec![0.0]).is_err());
    }

    #[test]
    fn no_enemies_means_no_intensity() {
        let w = world(&[Vec2::new(3.0, 3.0)], &[]);
        let z = ZoneGrid::standard(arena());
        let p = ThreatParams::default();
        assert_eq!(intensity(Vec2::new(1.0, 1.0), &[], &z, &p, &w), 0.0);
        let field = ThreatField::build(&w, Team::Allied, &z, &p);
        assert!(field.is_empty());
        assert_eq!(field.max(), 0.0);
    }

    #[test]
    fn isolated_enemy_modifier_is_logistic_one() {
        let w = world(&[Vec2::new(1.0, 1.0)], &[Vec2::new(20.0, 10.0)]);
        let e = w.agent(AgentId::new(Team::Enemy, 0)).unwrap();
        let m = force_balance_modifier(e, &w, 5.0);
        assert!((m - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-15);
        assert!((m - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn symmetric_neighborhood_modifier() {
        // Two allies and two teammates, all 2 m from the enemy.
        let e = Vec2::new(15.0, 8.0);
        let w = world(
            &[Vec2::new(17.0, 8.0), Vec2::new(13.0, 8.0)],
            &[e, Vec2::new(15.0, 10.0), Vec2::new(15.0, 6.0)],
        );
        let m = force_balance_modifier(w.agent(AgentId::new(Team::Enemy, 0)).unwrap(), &w, 5.0);
        assert!((m - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn intensity_at_lone_enemy_is_its_weight() {
        let e = Vec2::new(15.0, 12.0);
        let w = world(&[Vec2::new(1.0, 1.0)], &[e]);
        let z = ZoneGrid::standard(arena());
        let p = ThreatParams::default();
        let enemy = w.agent(AgentId::new(Team::Enemy, 0)).unwrap();
        let m = force_balance_modifier(enemy, &w, p.neighborhood_radius);
        assert_eq!(intensity(e, &[enemy], &z, &p, &w), 1.5 * m);
        let field = ThreatField::build(&w, Team::Allied, &z, &p);
        assert_eq!(threat_score(enemy, &field), Some(1.0));
    }

    #[test]
    fn far_apart_identical_enemies_score_equally() {
        let w = world(&[Vec2::new(15.0, 1.0)], &[Vec2::new(2.0, 8.0), Vec2::new(28.0, 8.0)]);
        let field = ThreatField::build(&w, Team::Allied, &ZoneGrid::standard(arena()), &ThreatParams::default());
        let s0 = field.score(AgentId::new(Team::Enemy, 0)).unwrap();
        let s1 = field.score(AgentId::new(Team::Enemy, 1)).unwrap();
        assert!((s0 - s1).abs() < 1e-12);
    }

    #[test]
    fn danger_without_neighbors_is_zero() {
        let w = world(&[Vec2::new(1.0, 1.0)], &[Vec2::new(20.0, 10.0)]);
        let a = w.agent(AgentId::new(Team::Allied, 0)).unwrap();
        assert_eq!(danger_value(a, &w, &ThreatParams::default()), 0.0);
    }

    #[test]
    fn danger_one_on_one_by_hand() {
        // Enemy 2 m ahead, standing still, clear line of sight.
        let w = world(&[Vec2::new(10.0, 8.0)], &[Vec2::new(12.0, 8.0)]);
        let a = w.agent(AgentId::new(Team::Allied, 0)).unwrap();
        let expected = 1.0 * 1.0 + 2.0 / (2.0 + 0.1) * 1.0 * 1.0 * 1.0;
        assert!((danger_value(a, &w, &ThreatParams::default()) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_zero_danger() {
        let w = world(&[Vec2::new(10.0, 8.0), Vec2::new(11.0, 9.0)], &[Vec2::new(12.0, 8.0), Vec2::new(9.0, 7.0)]);
        let p = ThreatParams { w_en: 0.0, w_al: 0.0, w_d_en: 0.0, w_d_al: 0.0, ..ThreatParams::default() };
        for a in w.alive(Team::Allied) {
            assert_eq!(danger_value(a, &w, &p), 0.0);
        }
    }

    #[test]
    fn field_in_f32_matches_f64() {
        let w64 = world(&[Vec2::new(10.0, 8.0)], &[Vec2::new(12.0, 8.0), Vec2::new(20.0, 3.0)]);
        let agents32: Vec<AgentState<f32>> = w64
            .agents()
            .iter()
            .map(|a| AgentState::new(a.id, a.position.cast(), a.heading.cast()))
            .collect();
        let w32 = WorldState::new(ObstacleSet::empty(Arena::new(30.0f32, 16.0).unwrap()), agents32, EngagementParams::default(), 1).unwrap();
        let f64_field = ThreatField::build(&w64, Team::Allied, &ZoneGrid::standard(w64.arena()), &ThreatParams::default());
        let f32_field = ThreatField::build(&w32, Team::Allied, &ZoneGrid::standard(w32.arena()), &ThreatParams::default());
        for ((_, a), (_, b)) in f64_field.scores().iter().zip(f32_field.scores()) {
            assert!((a - *b as f64).abs() < 1e-4);
        }
    }
}
