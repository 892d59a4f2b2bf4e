//! Planar vectors, square obstacles, line of sight, attack cones and the
//! anisotropic Gaussian kernel.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Side length of the uniform tiles used to bucket obstacle cells.
const TILE_SIZE: f64 = 1.0;
/// Cells are registered in every tile their box, grown by this pad, touches.
/// Margin queries may not exceed it.
const REGISTRATION_PAD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point ({x}, {y}) lies inside an obstacle")]
    PointInsideObstacle { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies outside the arena")]
    OutsideArena { x: f64, y: f64 },
    #[error("heading vector has zero length")]
    ZeroHeading,
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A point or displacement in the arena plane, in meters (or m/s for velocities).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[S; 2]", into = "[S; 2]")]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Vec2<S = f64> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> From<[S; 2]> for Vec2<S> {
    fn from([x, y]: [S; 2]) -> Self {
        Self { x, y }
    }
}

impl<S: Scalar> From<Vec2<S>> for [S; 2] {
    fn from(v: Vec2<S>) -> Self {
        [v.x, v.y]
    }
}

impl<S: Scalar> Vec2<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero())
    }

    pub fn dot(self, other: Self) -> S {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> S {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> S {
        (other - self).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > S::zero() && n.is_finite() {
            Some(Self::new(self.x / n, self.y / n))
        } else {
            None
        }
    }

    /// Rotates counter-clockwise by `angle` radians.
    pub fn rotated(self, angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    /// Scales the vector down so its length does not exceed `max`.
    pub fn clamp_norm(self, max: S) -> Self {
        let n = self.norm();
        if n > max && n > S::zero() {
            self * (max / n)
        } else {
            self
        }
    }

    pub fn lerp(self, other: Self, t: S) -> Self {
        self + (other - self) * t
    }

    pub fn cast<T: Scalar>(self) -> Vec2<T> {
        Vec2::new(
            T::from_f64(self.x.to_f64_lossy()).unwrap_or_else(T::nan),
            T::from_f64(self.y.to_f64_lossy()).unwrap_or_else(T::nan),
        )
    }
}

impl<S: Scalar> Add for Vec2<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<S: Scalar> AddAssign for Vec2<S> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<S: Scalar> Sub for Vec2<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<S: Scalar> SubAssign for Vec2<S> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<S: Scalar> Mul<S> for Vec2<S> {
    type Output = Self;
    fn mul(self, rhs: S) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl<S: Scalar> Neg for Vec2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle `[0, width] x [0, height]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Arena<S = f64> {
    pub width: S,
    pub height: S,
}

impl<S: Scalar> Arena<S> {
    pub fn new(width: S, height: S) -> Result<Self, GeometryError> {
        if !(width > S::zero() && height > S::zero() && width.is_finite() && height.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!(
                "arena dimensions must be positive, got {width} x {height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, p: Vec2<S>) -> bool {
        p.is_finite() && p.x >= S::zero() && p.y >= S::zero() && p.x <= self.width && p.y <= self.height
    }

    pub fn center(&self) -> Vec2<S> {
        Vec2::new(self.width / S::lit(2.0), self.height / S::lit(2.0))
    }

    /// Nearest point inside the arena shrunk by `margin` on every side.
    pub fn clamp(&self, p: Vec2<S>, margin: S) -> Vec2<S> {
        Vec2::new(
            p.x.max(margin).min(self.width - margin),
            p.y.max(margin).min(self.height - margin),
        )
    }

    /// Map aspect ratio width / height.
    pub fn aspect_ratio(&self) -> S {
        self.width / self.height
    }
}

/// Which coordinate axis a ray entered a box through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Result of intersecting a segment's supporting line with a closed box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlabHit<S> {
    pub t_enter: S,
    pub t_exit: S,
    /// Axis whose slab set `t_enter`, `None` when the start lies within both slabs.
    pub entry_axis: Option<Axis>,
}

/// Axis-aligned square obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Cell<S = f64> {
    pub center: Vec2<S>,
    pub side: S,
}

impl<S: Scalar> Cell<S> {
    pub fn new(center: Vec2<S>, side: S) -> Self {
        Self { center, side }
    }

    pub fn half(&self) -> S {
        self.side / S::lit(2.0)
    }

    pub fn min(&self) -> Vec2<S> {
        Vec2::new(self.center.x - self.half(), self.center.y - self.half())
    }

    pub fn max(&self) -> Vec2<S> {
        Vec2::new(self.center.x + self.half(), self.center.y + self.half())
    }

    /// Strict interior test against the same bounds `min`/`max` report, so a
    /// point snapped onto a face is never classified as inside.
    pub fn contains_interior(&self, p: Vec2<S>) -> bool {
        let (lo, hi) = (self.min(), self.max());
        p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y
    }

    pub fn contains_closed(&self, p: Vec2<S>, margin: S) -> bool {
        let h = self.half() + margin;
        let (cx, cy) = (self.center.x, self.center.y);
        p.x >= cx - h && p.x <= cx + h && p.y >= cy - h && p.y <= cy + h
    }

    /// Slab-method intersection of the line `a + t (b - a)` with this box
    /// grown by `margin`. Returns `None` when the line misses the closed box.
    pub fn slab(&self, a: Vec2<S>, b: Vec2<S>, margin: S) -> Option<SlabHit<S>> {
        let h = self.half() + margin;
        let d = b - a;
        let mut t_enter = S::neg_infinity();
        let mut t_exit = S::infinity();
        let mut entry_axis = None;
        for (axis, origin, dir, lo, hi) in [
            (Axis::X, a.x, d.x, self.center.x - h, self.center.x + h),
            (Axis::Y, a.y, d.y, self.center.y - h, self.center.y + h),
        ] {
            if dir == S::zero() {
                if origin < lo || origin > hi {
                    return None;
                }
                continue;
            }
            let mut t1 = (lo - origin) / dir;
            let mut t2 = (hi - origin) / dir;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            if t1 > t_enter {
                t_enter = t1;
                entry_axis = Some(axis);
            }
            if t2 < t_exit {
                t_exit = t2;
            }
        }
        if t_enter > t_exit {
            return None;
        }
        Some(SlabHit { t_enter, t_exit, entry_axis })
    }

    /// True when the open segment `(a, b)` touches the closed box (grown by
    /// `margin`). Grazing contact counts.
    pub fn blocks_open_segment(&self, a: Vec2<S>, b: Vec2<S>, margin: S) -> bool {
        if a == b {
            return false;
        }
        match self.slab(a, b, margin) {
            Some(hit) => hit.t_exit > S::zero() && hit.t_enter < S::one(),
            None => false,
        }
    }
}

/// Where a swept segment first touches an obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact<S> {
    /// Segment parameter in `[0, 1]`.
    pub t: S,
    pub axis: Option<Axis>,
    pub cell: usize,
}

/// Static square obstacles bucketed into a uniform 1 m tile grid.
#[derive(Clone, Debug)]
pub struct ObstacleSet<S = f64> {
    arena: Arena<S>,
    cells: Vec<Cell<S>>,
    tiles: Vec<Vec<u32>>,
    cols: usize,
    rows: usize,
}

impl<S: Scalar> ObstacleSet<S> {
    pub fn new(arena: Arena<S>, cells: Vec<Cell<S>>) -> Result<Self, GeometryError> {
        let cols = (arena.width.to_f64_lossy() / TILE_SIZE).ceil().max(1.0) as usize;
        let rows = (arena.height.to_f64_lossy() / TILE_SIZE).ceil().max(1.0) as usize;
        let mut set = Self { arena, cells: Vec::with_capacity(cells.len()), tiles: vec![Vec::new(); cols * rows], cols, rows };
        for cell in cells {
            set.insert(cell)?;
        }
        Ok(set)
    }

    pub fn empty(arena: Arena<S>) -> Self {
        Self::new(arena, Vec::new()).expect("empty obstacle set is valid")
    }

    pub fn insert(&mut self, cell: Cell<S>) -> Result<(), GeometryError> {
        if !(cell.side > S::zero()) || !cell.center.is_finite() {
            return Err(GeometryError::InvalidObstacle(format!("side must be positive, got {}", cell.side)));
        }
        if !self.arena.contains(cell.min()) || !self.arena.contains(cell.max()) {
            return Err(GeometryError::InvalidObstacle(format!(
                "cell at ({}, {}) with side {} extends outside the arena",
                cell.center.x, cell.center.y, cell.side
            )));
        }
        let index = self.cells.len() as u32;
        let lo = cell.min().cast::<f64>();
        let hi = cell.max().cast::<f64>();
        let (c0, r0) = self.tile_of(lo.x - REGISTRATION_PAD, lo.y - REGISTRATION_PAD);
        let (c1, r1) = self.tile_of(hi.x + REGISTRATION_PAD, hi.y + REGISTRATION_PAD);
        for r in r0..=r1 {
            for c in c0..=c1 {
                self.tiles[r * self.cols + c].push(index);
            }
        }
        self.cells.push(cell);
        Ok(())
    }

    pub fn arena(&self) -> Arena<S> {
        self.arena
    }

    pub fn cells(&self) -> &[Cell<S>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn tile_of(&self, x: f64, y: f64) -> (usize, usize) {
        let c = (x / TILE_SIZE).floor().clamp(0.0, (self.cols - 1) as f64) as usize;
        let r = (y / TILE_SIZE).floor().clamp(0.0, (self.rows - 1) as f64) as usize;
        (c, r)
    }

    /// Index of a cell whose interior contains `p`.
    pub fn cell_containing(&self, p: Vec2<S>) -> Option<usize> {
        let pf = p.cast::<f64>();
        let (c, r) = self.tile_of(pf.x, pf.y);
        self.tiles[r * self.cols + c]
            .iter()
            .map(|&i| i as usize)
            .find(|&i| self.cells[i].contains_interior(p))
    }

    /// Cells whose box grown by `margin` contains `p` (closed).
    pub fn cells_near(&self, p: Vec2<S>, margin: S) -> impl Iterator<Item = usize> + '_ {
        debug_assert!(margin.to_f64_lossy() <= REGISTRATION_PAD);
        let pf = p.cast::<f64>();
        let (c, r) = self.tile_of(pf.x, pf.y);
        self.tiles[r * self.cols + c]
            .iter()
            .map(|&i| i as usize)
            .filter(move |&i| self.cells[i].contains_closed(p, margin))
    }

    /// Candidate cells for a segment, gathered by walking the tiles it crosses.
    fn candidates(&self, a: Vec2<S>, b: Vec2<S>, out: &mut Vec<u32>) {
        out.clear();
        let a = a.cast::<f64>();
        let b = b.cast::<f64>();
        let (mut ix, mut iy) = self.tile_of(a.x, a.y);
        let (ex, ey) = self.tile_of(b.x, b.y);
        let d = b - a;
        let step_x: isize = if d.x > 0.0 { 1 } else if d.x < 0.0 { -1 } else { 0 };
        let step_y: isize = if d.y > 0.0 { 1 } else if d.y < 0.0 { -1 } else { 0 };
        let delta_x = if d.x != 0.0 { TILE_SIZE / d.x.abs() } else { f64::INFINITY };
        let delta_y = if d.y != 0.0 { TILE_SIZE / d.y.abs() } else { f64::INFINITY };
        let mut next_x = match step_x {
            1 => ((ix as f64 + 1.0) * TILE_SIZE - a.x) / d.x,
            -1 => (a.x - ix as f64 * TILE_SIZE) / -d.x,
            _ => f64::INFINITY,
        };
        let mut next_y = match step_y {
            1 => ((iy as f64 + 1.0) * TILE_SIZE - a.y) / d.y,
            -1 => (a.y - iy as f64 * TILE_SIZE) / -d.y,
            _ => f64::INFINITY,
        };
        let push = |c: usize, r: usize, out: &mut Vec<u32>| out.extend_from_slice(&self.tiles[r * self.cols + c]);
        let cap = self.cols + self.rows + 4;
        for _ in 0..cap {
            push(ix, iy, out);
            if (ix == ex && iy == ey) || (next_x > 1.0 && next_y > 1.0) {
                break;
            }
            let nx = ix as isize + step_x;
            let ny = iy as isize + step_y;
            let in_x = nx >= 0 && (nx as usize) < self.cols;
            let in_y = ny >= 0 && (ny as usize) < self.rows;
            if next_x < next_y {
                if !in_x {
                    break;
                }
                ix = nx as usize;
                next_x += delta_x;
            } else if next_y < next_x {
                if !in_y {
                    break;
                }
                iy = ny as usize;
                next_y += delta_y;
            } else {
                // Exact corner crossing: visit both side neighbours too.
                if in_x {
                    push(nx as usize, iy, out);
                }
                if in_y {
                    push(ix, ny as usize, out);
                }
                if !(in_x && in_y) {
                    break;
                }
                ix = nx as usize;
                iy = ny as usize;
                next_x += delta_x;
                next_y += delta_y;
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// True when the open segment `(a, b)` touches some cell grown by `margin`.
    /// Endpoints are not validated; see [`line_of_sight`] for the checked form.
    pub fn segment_blocked(&self, a: Vec2<S>, b: Vec2<S>, margin: S) -> bool {
        if self.cells.is_empty() || a == b {
            return false;
        }
        debug_assert!(margin.to_f64_lossy() <= REGISTRATION_PAD);
        let mut buf = Vec::new();
        self.candidates(a, b, &mut buf);
        buf.iter().any(|&i| self.cells[i as usize].blocks_open_segment(a, b, margin))
    }

    /// Earliest contact of the motion `a -> b` with any cell, if it is
    /// blocked at all. A start resting on a face and moving away is free.
    pub fn first_contact(&self, a: Vec2<S>, b: Vec2<S>) -> Option<Contact<S>> {
        if self.cells.is_empty() || a == b {
            return None;
        }
        let mut buf = Vec::new();
        self.candidates(a, b, &mut buf);
        first_contact_among(buf.iter().map(|&i| (i as usize, &self.cells[i as usize])), a, b)
    }
}

/// Earliest contact of the motion `a -> b` among arbitrary cells.
pub fn first_contact_among<'c, S: Scalar>(
    cells: impl Iterator<Item = (usize, &'c Cell<S>)>,
    a: Vec2<S>,
    b: Vec2<S>,
) -> Option<Contact<S>> {
    let mut best: Option<Contact<S>> = None;
    for (index, cell) in cells {
        let Some(hit) = cell.slab(a, b, S::zero()) else { continue };
        if !(hit.t_exit > S::zero() && hit.t_enter < S::one()) {
            continue;
        }
        let t = hit.t_enter.max(S::zero());
        if best.is_none_or(|c| t < c.t) {
            best = Some(Contact { t, axis: hit.entry_axis, cell: index });
        }
    }
    best
}

/// Diagonal map-aspect compensation `diag(1/rho, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct AnisotropyMatrix<S = f64> {
    rho: S,
}

impl<S: Scalar> AnisotropyMatrix<S> {
    pub fn new(rho: S) -> Result<Self, GeometryError> {
        if !(rho > S::zero() && rho.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!("aspect ratio must be positive, got {rho}")));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> S {
        self.rho
    }

    pub fn apply(&self, v: Vec2<S>) -> Vec2<S> {
        Vec2::new(v.x / self.rho, v.y)
    }
}

/// Visibility between two free-space points: the open segment between them
/// touches no obstacle cell. Grazing a cell face counts as blocked.
pub fn line_of_sight<S: Scalar>(from: Vec2<S>, to: Vec2<S>, obstacles: &ObstacleSet<S>) -> Result<bool, GeometryError> {
    for p in [from, to] {
        if !obstacles.arena().contains(p) {
            return Err(GeometryError::OutsideArena { x: p.x.to_f64_lossy(), y: p.y.to_f64_lossy() });
        }
        if obstacles.cell_containing(p).is_some() {
            return Err(GeometryError::PointInsideObstacle { x: p.x.to_f64_lossy(), y: p.y.to_f64_lossy() });
        }
    }
    Ok(!obstacles.segment_blocked(from, to, S::zero()))
}

/// Whether `target` lies within `radius` of the shooter and within half of
/// `fov` of its heading. A target at the shooter's own position counts.
pub fn in_attack_cone<S: Scalar>(
    shooter: Vec2<S>,
    heading: Vec2<S>,
    target: Vec2<S>,
    radius: S,
    fov: S,
) -> Result<bool, GeometryError> {
    let heading = heading.normalized().ok_or(GeometryError::ZeroHeading)?;
    let offset = target - shooter;
    let dist = offset.norm();
    if dist > radius {
        return Ok(false);
    }
    if dist == S::zero() || fov >= S::TAU() {
        return Ok(true);
    }
    let cos_angle = heading.dot(offset) / dist;
    Ok(cos_angle >= (fov / S::lit(2.0)).cos())
}

/// `exp(-|A (x - center)|^2 / (2 sigma^2))`.
pub fn gaussian_kernel<S: Scalar>(x: Vec2<S>, center: Vec2<S>, anisotropy: &AnisotropyMatrix<S>, sigma: S) -> S {
    let d = anisotropy.apply(x - center);
    (-d.norm_sq() / (S::lit(2.0) * sigma * sigma)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn arena() -> Arena<f64> {
        Arena::new(30.0, 16.0).unwrap()
    }

    #[test]
    fn zero_length_segment_is_visible() {
        let obs = ObstacleSet::empty(arena());
        assert!(line_of_sight(Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0), &obs).unwrap());
    }

    #[test]
    fn straddling_cell_blocks() {
        let obs = ObstacleSet::new(arena(), vec![Cell::new(Vec2::new(5.0, 0.15), 0.3)]).unwrap();
        assert!(!line_of_sight(Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), &obs).unwrap());
    }

    #[test]
    fn grazing_a_face_blocks() {
        let obs = ObstacleSet::new(arena(), vec![Cell::new(Vec2::new(5.0, 5.0), 1.0)]).unwrap();
        // Runs exactly along the top face.
        assert!(!line_of_sight(Vec2::new(1.0, 5.5), Vec2::new(9.0, 5.5), &obs).unwrap());
        assert!(line_of_sight(Vec2::new(1.0, 5.6), Vec2::new(9.0, 5.6), &obs).unwrap());
    }

    #[test]
    fn endpoint_on_face_looking_away_is_visible() {
        let obs = ObstacleSet::new(arena(), vec![Cell::new(Vec2::new(5.0, 5.0), 1.0)]).unwrap();
        assert!(line_of_sight(Vec2::new(5.5, 5.0), Vec2::new(9.0, 5.0), &obs).unwrap());
    }

    #[test]
    fn point_inside_obstacle_is_rejected() {
        let obs = ObstacleSet::new(arena(), vec![Cell::new(Vec2::new(5.0, 5.0), 1.0)]).unwrap();
        let err = line_of_sight(Vec2::new(5.1, 5.0), Vec2::new(9.0, 5.0), &obs).unwrap_err();
        assert!(matches!(err, GeometryError::PointInsideObstacle { .. }));
    }

    #[test]
    fn obstacle_outside_arena_is_rejected() {
        assert!(ObstacleSet::new(arena(), vec![Cell::new(Vec2::new(29.9, 5.0), 0.3)]).is_err());
        assert!(ObstacleSet::new(arena(), vec![Cell::new(Vec2::new(5.0, 5.0), 0.0)]).is_err());
    }

    #[test]
    fn cone_examples() {
        let o = Vec2::new(0.0, 0.0);
        let h = Vec2::new(1.0, 0.0);
        assert!(in_attack_cone(o, h, Vec2::new(0.5, 0.0), 1.0, 2.0 * PI / 3.0).unwrap());
        for fov in [0.1, PI / 2.0, PI, 2.0 * PI] {
            assert!(!in_attack_cone(o, h, Vec2::new(1.5, 0.0), 1.0, fov).unwrap());
        }
        assert!(!in_attack_cone(o, h, Vec2::new(0.0, 0.5), 1.0, PI / 2.0).unwrap());
        assert_eq!(in_attack_cone(o, Vec2::zero(), Vec2::new(0.5, 0.0), 1.0, PI), Err(GeometryError::ZeroHeading));
    }

    #[test]
    fn kernel_examples() {
        let a = AnisotropyMatrix::new(30.0 / 16.0).unwrap();
        let c = Vec2::new(3.0, 4.0);
        assert_eq!(gaussian_kernel(c, c, &a, 2.0), 1.0);
        for rho in [0.5, 1.0, 1.875, 4.0] {
            let a = AnisotropyMatrix::new(rho).unwrap();
            let sigma = 1.7;
            let x = c + Vec2::new(rho * sigma * 2f64.sqrt(), 0.0);
            assert!((gaussian_kernel(x, c, &a, sigma) - (-1f64).exp()).abs() < 1e-12);
        }
        assert!(AnisotropyMatrix::new(0.0).is_err());
        assert_eq!(a.apply(Vec2::new(3.75, 2.0)), Vec2::new(2.0, 2.0));
    }

    #[test]
    fn kernel_works_in_f32() {
        let a = AnisotropyMatrix::new(2.0f32).unwrap();
        let v = gaussian_kernel(Vec2::new(2.0f32, 0.0), Vec2::zero(), &a, 1.0);
        assert!((v - (-0.5f32).exp()).abs() < 1e-6);
    }

    #[test]
    fn first_contact_reports_entry_face() {
        let obs = ObstacleSet::new(arena(), vec![Cell::new(Vec2::new(5.0, 5.0), 0.3)]).unwrap();
        let c = obs.first_contact(Vec2::new(4.8, 5.0), Vec2::new(5.0, 5.0)).unwrap();
        assert_eq!(c.axis, Some(Axis::X));
        assert!((c.t - 0.25).abs() < 1e-12);
        assert!(obs.first_contact(Vec2::new(5.15, 5.0), Vec2::new(5.35, 5.0)).is_none());
    }

    fn cells_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((1.0..29.0f64, 1.0..15.0f64, 0.1..1.5f64), 0..20)
    }

    proptest! {
        #[test]
        fn los_is_symmetric(cells in cells_strategy(), ax in 0.0..30.0f64, ay in 0.0..16.0f64, bx in 0.0..30.0f64, by in 0.0..16.0f64) {
            let obs = ObstacleSet::new(arena(), cells.iter().map(|&(x, y, s)| Cell::new(Vec2::new(x, y), s)).collect()).unwrap();
            let a = Vec2::new(ax, ay);
            let b = Vec2::new(bx, by);
            match (line_of_sight(a, b, &obs), line_of_sight(b, a, &obs)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "asymmetric errors {:?}", other),
            }
        }

        #[test]
        fn kernel_non_increasing_along_rays(angle in 0.0..(2.0 * PI), r1 in 0.0..20.0f64, dr in 0.0..10.0f64, rho in 0.2..5.0f64, sigma in 0.1..6.0f64) {
            let a = AnisotropyMatrix::new(rho).unwrap();
            let c = Vec2::new(3.0, -2.0);
            let dir = Vec2::new(angle.cos(), angle.sin());
            let near = gaussian_kernel(c + dir * r1, c, &a, sigma);
            let far = gaussian_kernel(c + dir * (r1 + dr), c, &a, sigma);
            prop_assert!(far <= near);
            prop_assert!((0.0..=1.0).contains(&near));
        }

        #[test]
        fn cone_is_rotation_invariant(hx in -1.0..1.0f64, hy in -1.0..1.0f64, tx in -2.0..2.0f64, ty in -2.0..2.0f64, rot in 0.0..(2.0 * PI), fov in 0.1..(2.0 * PI)) {
            let h = Vec2::new(hx, hy);
            prop_assume!(h.norm() > 0.1);
            let t = Vec2::new(tx, ty);
            prop_assume!(t.norm() > 1e-3);
            // Stay away from the cone boundary where rounding decides.
            let ang = (h.normalized().unwrap().dot(t) / t.norm()).clamp(-1.0, 1.0).acos();
            prop_assume!((ang - fov / 2.0).abs() > 1e-6 && (t.norm() - 1.0).abs() > 1e-6);
            let s = Vec2::new(0.3, -0.4);
            let before = in_attack_cone(s, h, s + t, 1.0, fov).unwrap();
            let after = in_attack_cone(s.rotated(rot), h.rotated(rot), (s + t).rotated(rot), 1.0, fov).unwrap();
            prop_assert_eq!(before, after);
        }
    }
}
