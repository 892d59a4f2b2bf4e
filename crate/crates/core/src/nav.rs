//! Waypoint navigation shared by both teams: an 8-connected occupancy grid,
//! A* with an octile heuristic, string pulling, and a path follower.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use crate::geometry::{Arena, Cell, ObstacleSet, Vec2};
use crate::world::{AgentState, WorldState};

pub const DEFAULT_CELL_SIZE: f64 = 0.25;
/// Distance within which an intermediate waypoint counts as reached.
pub const REACH_TOLERANCE: f64 = 0.1;
/// Largest distance a blocked goal may be moved to a free cell.
pub const SNAP_RADIUS: f64 = 1.0;
/// Clearance kept from obstacle faces when shortcutting grid paths.
const SHORTCUT_CLEARANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no free grid cell near the start position")]
    StartBlocked,
    #[error("goal is not reachable")]
    Unreachable,
}

/// Grid cell coordinates (column, row).
pub type GridCell = (usize, usize);

/// Occupancy grid over the arena. A cell is blocked when its center lies in
/// an obstacle grown by half a cell.
#[derive(Clone, Debug)]
pub struct NavGrid {
    arena: Arena,
    cell_size: f64,
    cols: usize,
    rows: usize,
    blocked: Vec<bool>,
    statics: ObstacleSet,
    extra: Vec<Cell>,
}

impl NavGrid {
    pub fn new(statics: ObstacleSet, cell_size: f64) -> Self {
        let arena = statics.arena();
        let cols = (arena.width / cell_size).ceil() as usize;
        let rows = (arena.height / cell_size).ceil() as usize;
        let mut grid = Self { arena, cell_size, cols, rows, blocked: vec![false; cols * rows], statics, extra: Vec::new() };
        let cells: Vec<Cell> = grid.statics.cells().to_vec();
        for cell in &cells {
            grid.mark(cell);
        }
        grid
    }

    /// Grid for the current world, static obstacles and corpses included.
    pub fn for_world(world: &WorldState, cell_size: f64) -> Self {
        let mut grid = Self::new(world.static_obstacles().clone(), cell_size);
        grid.refresh(world);
        grid
    }

    /// Adds any corpse obstacles the grid has not seen yet. Returns the cells
    /// added.
    pub fn refresh(&mut self, world: &WorldState) -> Vec<Cell> {
        let fresh: Vec<Cell> = world.corpses()[self.extra.len().min(world.corpses().len())..].iter().map(|c| c.cell).collect();
        for cell in &fresh {
            self.add_obstacle(*cell);
        }
        fresh
    }

    pub fn add_obstacle(&mut self, cell: Cell) {
        self.mark(&cell);
        self.extra.push(cell);
    }

    /// Number of dynamic obstacles folded in so far.
    pub fn dynamic_count(&self) -> usize {
        self.extra.len()
    }

    fn mark(&mut self, cell: &Cell) {
        let grow = cell.half() + self.cell_size / 2.0;
        let (c0, r0) = self.cell_of(cell.center - Vec2::new(grow, grow));
        let (c1, r1) = self.cell_of(cell.center + Vec2::new(grow, grow));
        for r in r0..=r1 {
            for c in c0..=c1 {
                if cell.contains_closed(self.center((c, r)), self.cell_size / 2.0) {
                    self.blocked[r * self.cols + c] = true;
                }
            }
        }
    }

    pub fn arena(&self) -> Arena {
        self.arena
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn index(&self, (c, r): GridCell) -> usize {
        r * self.cols + c
    }

    pub fn cell_of(&self, p: Vec2) -> GridCell {
        let c = (p.x / self.cell_size).floor().clamp(0.0, (self.cols - 1) as f64) as usize;
        let r = (p.y / self.cell_size).floor().clamp(0.0, (self.rows - 1) as f64) as usize;
        (c, r)
    }

    pub fn center(&self, (c, r): GridCell) -> Vec2 {
        let p = Vec2::new((c as f64 + 0.5) * self.cell_size, (r as f64 + 0.5) * self.cell_size);
        // The last row/column may be clipped by the arena edge.
        Vec2::new(p.x.min(self.arena.width), p.y.min(self.arena.height))
    }

    pub fn is_free(&self, cell: GridCell) -> bool {
        !self.blocked[self.index(cell)]
    }

    /// True when `p` is outside every obstacle interior (static or dynamic).
    pub fn point_free(&self, p: Vec2) -> bool {
        self.arena.contains(p) && self.statics.cell_containing(p).is_none() && !self.extra.iter().any(|c| c.contains_interior(p))
    }

    /// Open segment clear of every obstacle grown by `margin`.
    pub fn segment_clear(&self, a: Vec2, b: Vec2, margin: f64) -> bool {
        !self.statics.segment_blocked(a, b, margin) && !self.extra.iter().any(|c| c.blocks_open_segment(a, b, margin))
    }

    /// 8-connected neighbours with step costs; diagonal moves may not cut a
    /// blocked corner.
    pub fn neighbors(&self, (c, r): GridCell) -> impl Iterator<Item = (GridCell, f64)> + '_ {
        const STEPS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        let cs = self.cell_size;
        STEPS.iter().filter_map(move |&(dc, dr)| {
            let nc = c as isize + dc;
            let nr = r as isize + dr;
            if nc < 0 || nr < 0 || nc as usize >= self.cols || nr as usize >= self.rows {
                return None;
            }
            let next = (nc as usize, nr as usize);
            if !self.is_free(next) {
                return None;
            }
            if dc != 0 && dr != 0 {
                if !self.is_free((nc as usize, r)) || !self.is_free((c, nr as usize)) {
                    return None;
                }
                Some((next, cs * std::f64::consts::SQRT_2))
            } else {
                Some((next, cs))
            }
        })
    }

    /// Free cell whose center is nearest to `p`, within `max_dist`.
    pub fn nearest_free(&self, p: Vec2, max_dist: f64) -> Option<GridCell> {
        let reach = (max_dist / self.cell_size).ceil() as isize + 1;
        let (pc, pr) = self.cell_of(p);
        let mut best: Option<(f64, GridCell)> = None;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let c = pc as isize + dc;
                let r = pr as isize + dr;
                if c < 0 || r < 0 || c as usize >= self.cols || r as usize >= self.rows {
                    continue;
                }
                let cell = (c as usize, r as usize);
                if !self.is_free(cell) {
                    continue;
                }
                let d = self.center(cell).distance(p);
                if d <= max_dist && best.is_none_or(|(bd, bc)| d < bd || (d == bd && cell < bc)) {
                    best = Some((d, cell));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    /// Connected-component label per cell (`u32::MAX` for blocked cells),
    /// using the same connectivity as the planner.
    pub fn components(&self) -> Vec<u32> {
        let mut labels = vec![u32::MAX; self.blocked.len()];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let start = (c, r);
                if !self.is_free(start) || labels[self.index(start)] != u32::MAX {
                    continue;
                }
                labels[self.index(start)] = next;
                queue.push_back(start);
                while let Some(cell) = queue.pop_front() {
                    for (n, _) in self.neighbors(cell) {
                        let i = self.index(n);
                        if labels[i] == u32::MAX {
                            labels[i] = next;
                            queue.push_back(n);
                        }
                    }
                }
                next += 1;
            }
        }
        labels
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    g: f64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, then prefer deeper nodes, then lower index.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Octile distance between two cells, in meters.
pub fn octile(grid: &NavGrid, a: GridCell, b: GridCell) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    grid.cell_size * (hi - lo + lo * std::f64::consts::SQRT_2)
}

/// Shortest 8-connected cell path from `start` to `goal` and its length.
pub fn astar(grid: &NavGrid, start: GridCell, goal: GridCell) -> Option<(Vec<GridCell>, f64)> {
    if !grid.is_free(start) || !grid.is_free(goal) {
        return None;
    }
    let n = grid.blocked.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let (cols, _) = grid.dims();
    let s = grid.index(start);
    let t = grid.index(goal);
    g[s] = 0.0;
    open.push(Open { f: octile(grid, start, goal), g: 0.0, cell: s });
    while let Some(Open { cell, .. }) = open.pop() {
        if closed[cell] {
            continue;
        }
        if cell == t {
            let mut path = vec![goal];
            let mut cur = cell;
            while cur != s {
                cur = parent[cur];
                path.push((cur % cols, cur / cols));
            }
            path.reverse();
            return Some((path, g[t]));
        }
        closed[cell] = true;
        let here = (cell % cols, cell / cols);
        for (next, step) in grid.neighbors(here) {
            let ni = grid.index(next);
            if closed[ni] {
                continue;
            }
            let cand = g[cell] + step;
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = cell;
                open.push(Open { f: cand + octile(grid, next, goal), g: cand, cell: ni });
            }
        }
    }
    None
}

/// Ordered waypoints; the first is the start position.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    waypoints: Vec<Vec2>,
    total_length: f64,
}

impl Path {
    pub fn new(waypoints: Vec<Vec2>) -> Self {
        let total_length = waypoints.windows(2).map(|w| w[0].distance(w[1])).sum();
        Self { waypoints, total_length }
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn goal(&self) -> Vec2 {
        *self.waypoints.last().expect("paths are never empty")
    }
}

/// Plans from `from` to `to`: A* on the grid, then greedy string pulling
/// over the cell centers. A goal on a blocked cell is moved to the nearest
/// free cell within [`SNAP_RADIUS`].
pub fn plan_path(grid: &NavGrid, from: Vec2, to: Vec2) -> Result<Path, PlanError> {
    if from == to {
        return Ok(Path::new(vec![from]));
    }
    let mut start = grid.cell_of(from);
    if !grid.is_free(start) {
        start = grid.nearest_free(from, SNAP_RADIUS).ok_or(PlanError::StartBlocked)?;
    }
    let mut goal_point = to;
    let mut goal = grid.cell_of(to);
    if !grid.point_free(to) || !grid.is_free(goal) {
        goal = grid.nearest_free(to, SNAP_RADIUS).ok_or(PlanError::Unreachable)?;
        goal_point = grid.center(goal);
    }
    if grid.segment_clear(from, goal_point, SHORTCUT_CLEARANCE) {
        return Ok(Path::new(vec![from, goal_point]));
    }
    let (cells, _) = astar(grid, start, goal).ok_or(PlanError::Unreachable)?;
    let mut points = Vec::with_capacity(cells.len() + 2);
    points.push(from);
    points.extend(cells.iter().map(|&c| grid.center(c)));
    points.push(goal_point);
    points.dedup();
    Ok(Path::new(string_pull(grid, &points)))
}

/// Drops intermediate points that the previous kept point can see directly.
fn string_pull(grid: &NavGrid, points: &[Vec2]) -> Vec<Vec2> {
    let mut kept = vec![points[0]];
    let mut i = 0;
    while i + 1 < points.len() {
        let mut j = i + 1;
        while j + 1 < points.len() && grid.segment_clear(points[i], points[j + 1], SHORTCUT_CLEARANCE) {
            j += 1;
        }
        kept.push(points[j]);
        i = j;
    }
    kept
}

/// Follows a path waypoint by waypoint at full speed, landing exactly on a
/// waypoint when it is less than one step away.
#[derive(Clone, Debug, PartialEq)]
pub struct PathFollower {
    path: Path,
    cursor: usize,
}

impl PathFollower {
    pub fn new(path: Path) -> Self {
        Self { path, cursor: 0 }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Waypoints not yet reached, the current target first.
    pub fn remaining(&self) -> &[Vec2] {
        &self.path.waypoints[self.cursor.min(self.path.waypoints.len())..]
    }

    pub fn finished(&self, position: Vec2) -> bool {
        self.cursor + 1 >= self.path.waypoints.len() && position == self.path.goal()
    }

    pub fn steer(&mut self, position: Vec2, v_max: f64, dt: f64) -> Vec2 {
        let wps = &self.path.waypoints;
        loop {
            let target = wps[self.cursor];
            let offset = target - position;
            let d = offset.norm();
            let terminal = self.cursor + 1 == wps.len();
            if !terminal && d <= REACH_TOLERANCE {
                self.cursor += 1;
                continue;
            }
            if d == 0.0 {
                return Vec2::zero();
            }
            if d < v_max * dt {
                return offset * (1.0 / dt);
            }
            return offset * (v_max / d);
        }
    }
}

/// Velocity command for `agent` following `follower`.
pub fn steer(agent: &AgentState, follower: &mut PathFollower, v_max: f64, dt: f64) -> Vec2 {
    follower.steer(agent.position, v_max, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arena() -> Arena {
        Arena::new(30.0, 16.0).unwrap()
    }

    fn grid(cells: Vec<Cell>) -> NavGrid {
        NavGrid::new(ObstacleSet::new(arena(), cells).unwrap(), DEFAULT_CELL_SIZE)
    }

    #[test]
    fn identity_path() {
        let g = grid(vec![]);
        let p = plan_path(&g, Vec2::new(3.0, 3.0), Vec2::new(3.0, 3.0)).unwrap();
        assert_eq!(p.waypoints(), &[Vec2::new(3.0, 3.0)]);
        assert_eq!(p.total_length(), 0.0);
    }

    #[test]
    fn open_field_path_is_straight() {
        let g = grid(vec![]);
        let p = plan_path(&g, Vec2::new(0.0, 0.0), Vec2::new(3.0, 4.0)).unwrap();
        assert!((p.total_length() - 5.0).abs() <= DEFAULT_CELL_SIZE);
    }

    #[test]
    fn path_detours_around_a_wall() {
        let wall: Vec<Cell> = (0..20).map(|i| Cell::new(Vec2::new(10.0, 2.15 + 0.3 * i as f64), 0.3)).collect();
        let g = grid(wall.clone());
        let from = Vec2::new(8.0, 5.0);
        let to = Vec2::new(12.0, 5.0);
        let p = plan_path(&g, from, to).unwrap();
        assert!(p.waypoints().len() > 2);
        assert!(p.total_length() > from.distance(to));
        let obs = ObstacleSet::new(arena(), wall).unwrap();
        for w in p.waypoints().windows(2) {
            assert!(crate::geometry::line_of_sight(w[0], w[1], &obs).unwrap());
        }
    }

    #[test]
    fn goal_inside_obstacle_snaps() {
        let g = grid(vec![Cell::new(Vec2::new(10.0, 5.0), 0.3)]);
        let p = plan_path(&g, Vec2::new(5.0, 5.0), Vec2::new(10.0, 5.0)).unwrap();
        assert!(g.point_free(p.goal()));
        assert!(p.goal().distance(Vec2::new(10.0, 5.0)) <= SNAP_RADIUS);
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        let mut ring = Vec::new();
        for i in -4..=4 {
            let o = 0.3 * i as f64;
            ring.push(Cell::new(Vec2::new(10.0 + o, 5.0 - 1.2), 0.3));
            ring.push(Cell::new(Vec2::new(10.0 + o, 5.0 + 1.2), 0.3));
            ring.push(Cell::new(Vec2::new(10.0 - 1.2, 5.0 + o), 0.3));
            ring.push(Cell::new(Vec2::new(10.0 + 1.2, 5.0 + o), 0.3));
        }
        let g = grid(ring);
        assert_eq!(plan_path(&g, Vec2::new(3.0, 3.0), Vec2::new(10.0, 5.0)), Err(PlanError::Unreachable));
    }

    #[test]
    fn steering_examples() {
        let mut f = PathFollower::new(Path::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]));
        assert_eq!(f.steer(Vec2::new(0.0, 0.0), 2.0, 0.1), Vec2::new(2.0, 0.0));
        let v = f.steer(Vec2::new(9.95, 0.0), 2.0, 0.1);
        assert!((v.norm() - 0.5).abs() < 1e-9);
        assert_eq!(f.steer(Vec2::new(10.0, 0.0), 2.0, 0.1), Vec2::zero());
    }

    #[test]
    fn follower_reaches_goal_through_corners() {
        let path = Path::new(vec![Vec2::new(1.0, 1.0), Vec2::new(4.0, 1.0), Vec2::new(4.0, 6.0), Vec2::new(7.3, 6.1)]);
        let mut f = PathFollower::new(path.clone());
        let mut p = Vec2::new(1.0, 1.0);
        for _ in 0..200 {
            let v = f.steer(p, 2.0, 0.1);
            assert!(v.norm() <= 2.0 + 1e-12);
            p += v * 0.1;
        }
        assert!(p.distance(path.goal()) < 1e-9);
    }

    #[test]
    fn components_split_by_a_full_wall() {
        let wall: Vec<Cell> = (0..54).map(|i| Cell::new(Vec2::new(10.0, 0.15 + 0.3 * i as f64), 0.3)).filter(|c| c.max().y <= 16.0).collect();
        let g = grid(wall);
        let labels = g.components();
        let left = labels[g.index(g.cell_of(Vec2::new(5.0, 5.0)))];
        let right = labels[g.index(g.cell_of(Vec2::new(15.0, 5.0)))];
        assert_ne!(left, right);
    }
}
