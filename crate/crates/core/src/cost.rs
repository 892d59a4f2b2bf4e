//! Attack costs for single engagements and cooperative pairs.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::scalar::Scalar;
use crate::threat::{ThreatField, ZoneGrid};
use crate::world::{AgentState, WorldState};

/// Below this speed the stored heading stands in for the velocity direction.
const REST_SPEED: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(default)]
pub struct CostParams<S = f64> {
    pub w_distance: S,
    pub w_orientation: S,
    pub w_threat: S,
    pub w_visibility: S,
    /// Distance at which the distance term saturates, meters.
    pub d_max: S,
    /// Flank-angle shaping weight for pairs.
    pub gamma: S,
    /// Zone exposure weight for pairs.
    pub zeta: S,
}

impl<S: Scalar> Default for CostParams<S> {
    fn default() -> Self {
        Self {
            w_distance: S::lit(0.4),
            w_orientation: S::lit(0.2),
            w_threat: S::lit(0.2),
            w_visibility: S::lit(0.2),
            d_max: S::lit(15.0),
            gamma: S::lit(0.5),
            zeta: S::lit(0.1),
        }
    }
}

impl<S: Scalar> CostParams<S> {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_max > S::zero() && self.d_max.is_finite()) {
            return Err(format!("d_max must be positive, got {}", self.d_max));
        }
        for (name, v) in [
            ("w_distance", self.w_distance),
            ("w_orientation", self.w_orientation),
            ("w_threat", self.w_threat),
            ("w_visibility", self.w_visibility),
            ("gamma", self.gamma),
            ("zeta", self.zeta),
        ] {
            if !(v >= S::zero() && v.is_finite()) {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Direction the agent is facing for cost purposes: its velocity when
/// moving, else its stored heading.
pub fn facing<S: Scalar>(a: &AgentState<S>) -> Vec2<S> {
    if a.velocity.norm() > S::lit(REST_SPEED) {
        a.velocity.normalized().unwrap_or(a.heading)
    } else {
        a.heading
    }
}

/// Individual terms of a single attack cost, before weighting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostTerms<S> {
    /// `min(d / d_max, 1)`.
    pub distance: S,
    /// Angle between facing and the bearing to the enemy, over pi.
    pub orientation: S,
    pub threat: S,
    /// Line-of-sight indicator, 0 or 1.
    pub visible: S,
}

pub fn attack_cost_terms<S: Scalar>(a: &AgentState<S>, e: &AgentState<S>, field: &ThreatField<S>, params: &CostParams<S>, world: &WorldState<S>) -> CostTerms<S> {
    let offset = e.position - a.position;
    let d = offset.norm();
    let orientation = match offset.normalized() {
        Some(u) => facing(a).dot(u).max(-S::one()).min(S::one()).acos() / S::PI(),
        None => S::zero(),
    };
    CostTerms {
        distance: (d / params.d_max).min(S::one()),
        orientation,
        threat: field.score(e.id).unwrap_or(S::zero()),
        visible: if world.line_of_sight(a.position, e.position) { S::one() } else { S::zero() },
    }
}

/// Risk of agent `a` engaging enemy `e`; higher is riskier. Line of sight
/// lowers the cost.
pub fn attack_cost<S: Scalar>(a: &AgentState<S>, e: &AgentState<S>, field: &ThreatField<S>, params: &CostParams<S>, world: &WorldState<S>) -> S {
    let t = attack_cost_terms(a, e, field, params, world);
    params.w_distance * t.distance + params.w_orientation * t.orientation + params.w_threat * t.threat - params.w_visibility * t.visible
}

/// Angle at `e` between the approach directions of two agents, radians.
/// `None` when either agent stands on `e`.
pub fn approach_angle<S: Scalar>(a_i: Vec2<S>, a_k: Vec2<S>, e: Vec2<S>) -> Option<S> {
    let u_i = (e - a_i).normalized()?;
    let u_k = (e - a_k).normalized()?;
    Some(u_i.dot(u_k).max(-S::one()).min(S::one()).acos())
}

/// Cooperative cost of `a_i` and `a_k` jointly engaging `e`: both single
/// costs plus a flank term that vanishes for perpendicular approaches and a
/// zone exposure term. Infinite when an agent coincides with `e`.
pub fn coop_attack_cost<S: Scalar>(
    a_i: &AgentState<S>,
    a_k: &AgentState<S>,
    e: &AgentState<S>,
    field: &ThreatField<S>,
    zones: &ZoneGrid<S>,
    params: &CostParams<S>,
    world: &WorldState<S>,
) -> S {
    let Some(angle) = approach_angle(a_i.position, a_k.position, e.position) else {
        return S::infinity();
    };
    let flank = params.gamma * (angle - S::FRAC_PI_2()).abs() / S::PI();
    attack_cost(a_i, e, field, params, world)
        + attack_cost(a_k, e, field, params, world)
        + flank
        + params.zeta * (zones.weight_at(a_i.position) + zones.weight_at(a_k.position))
}
