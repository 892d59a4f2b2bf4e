//! SVG trajectory plots and survival curves from replays.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::episode::Replay;
use crate::geometry::Vec2;
use crate::world::{AgentId, Team};

pub const ALLIED_COLOR: &str = "#1f5fbf";
pub const ENEMY_COLOR: &str = "#c8312b";
const PX_PER_M: f64 = 30.0;
const MARGIN: f64 = 20.0;

fn color(team: Team) -> &'static str {
    match team {
        Team::Allied => ALLIED_COLOR,
        Team::Enemy => ENEMY_COLOR,
    }
}

fn class(team: Team) -> &'static str {
    match team {
        Team::Allied => "allied",
        Team::Enemy => "enemy",
    }
}

struct Frame {
    height: f64,
}

impl Frame {
    /// Arena meters to SVG pixels, y up.
    fn px(&self, p: Vec2) -> (f64, f64) {
        (MARGIN + p.x * PX_PER_M, MARGIN + (self.height - p.y) * PX_PER_M)
    }
}

/// Per-agent position history, starting with the initial state.
pub fn trails(replay: &Replay) -> BTreeMap<AgentId, Vec<Vec2>> {
    let mut out: BTreeMap<AgentId, Vec<Vec2>> = BTreeMap::new();
    for a in &replay.header.initial {
        out.entry(a.id).or_default().push(a.position);
    }
    for row in &replay.ticks {
        for a in &row.agents {
            let trail = out.entry(a.id).or_default();
            if trail.last() != Some(&a.position) {
                trail.push(a.position);
            }
        }
    }
    out
}

/// Trajectory plot: arena, obstacles, team-colored trails, corpses at the
/// final positions of eliminated agents, and the waypoint of every issued
/// instruction labeled with its action.
pub fn render_svg(replay: &Replay) -> String {
    let arena = replay.header.config.arena;
    let f = Frame { height: arena.height };
    let (w, h) = (arena.width * PX_PER_M + 2.0 * MARGIN, arena.height * PX_PER_M + 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(
        s,
        r##"<rect class="arena" x="{MARGIN}" y="{MARGIN}" width="{:.1}" height="{:.1}" fill="#f7f7f2" stroke="#333"/>"##,
        arena.width * PX_PER_M,
        arena.height * PX_PER_M
    );
    for c in &replay.header.obstacles {
        let (x, y) = f.px(Vec2::new(c.min().x, c.max().y));
        let side = (c.max().x - c.min().x) * PX_PER_M;
        let _ = writeln!(s, r##"<rect class="obstacle" x="{x:.1}" y="{y:.1}" width="{side:.1}" height="{side:.1}" fill="#777"/>"##);
    }
    for (id, points) in trails(replay) {
        let pts: Vec<String> = points.iter().map(|&p| f.px(p)).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="trail {}" data-agent="{}" points="{}" fill="none" stroke="{}" stroke-width="1.5" stroke-opacity="0.8"/>"#,
            class(id.team),
            id.index,
            pts.join(" "),
            color(id.team)
        );
        if let Some(&start) = points.first() {
            let (x, y) = f.px(start);
            let _ = writeln!(s, r#"<circle class="start {}" cx="{x:.1}" cy="{y:.1}" r="3" fill="{}"/>"#, class(id.team), color(id.team));
        }
    }
    let mut marked = std::collections::BTreeSet::new();
    for row in &replay.ticks {
        for ep in &row.epochs {
            for ins in &ep.instructions {
                let (x, y) = f.px(ins.waypoint);
                let _ = writeln!(
                    s,
                    r#"<g class="waypoint {}"><circle cx="{x:.1}" cy="{y:.1}" r="2" fill="none" stroke="{}" stroke-opacity="0.5"/><text x="{:.1}" y="{:.1}" font-size="7" fill="{}" fill-opacity="0.6">{} t{}</text></g>"#,
                    class(ep.side),
                    color(ep.side),
                    x + 3.0,
                    y - 3.0,
                    color(ep.side),
                    ins.action,
                    ep.tick
                );
            }
        }
        for el in &row.eliminations {
            if !marked.insert(el.target) {
                continue;
            }
            let Some(agent) = row.agents.iter().find(|a| a.id == el.target) else { continue };
            let (x, y) = f.px(agent.position);
            let r = 5.0;
            let _ = writeln!(
                s,
                r##"<g class="corpse {}" data-agent="{}" data-tick="{}"><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#222"/><path d="M{:.1} {:.1} L{:.1} {:.1} M{:.1} {:.1} L{:.1} {:.1}" stroke="{}" stroke-width="2"/></g>"##,
                class(el.target.team),
                el.target.index,
                el.tick,
                x - 0.15 * PX_PER_M,
                y - 0.15 * PX_PER_M,
                0.3 * PX_PER_M,
                0.3 * PX_PER_M,
                x - r,
                y - r,
                x + r,
                y + r,
                x - r,
                y + r,
                x + r,
                y - r,
                color(el.target.team)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Alive counts over time: the initial counts, then one point per tick
/// with at least one elimination, as (tick, allied, enemy).
pub fn survival_series(replay: &Replay) -> Vec<(u64, usize, usize)> {
    let count = |team: Team| replay.header.initial.iter().filter(|a| a.id.team == team).count();
    let (mut allied, mut enemy) = (count(Team::Allied), count(Team::Enemy));
    let mut out = vec![(0, allied, enemy)];
    for row in &replay.ticks {
        if row.eliminations.is_empty() {
            continue;
        }
        let mut dead: Vec<AgentId> = row.eliminations.iter().map(|e| e.target).collect();
        dead.sort();
        dead.dedup();
        for id in dead {
            match id.team {
                Team::Allied => allied -= 1,
                Team::Enemy => enemy -= 1,
            }
        }
        out.push((row.tick + 1, allied, enemy));
    }
    out
}

/// Step plot of alive agents per team against simulated time.
pub fn render_survival_curve(replay: &Replay) -> String {
    let series = survival_series(replay);
    let dt = replay.header.config.engagement.dt;
    let end = replay.outcome.map(|o| o.end_tick).or_else(|| replay.ticks.last().map(|t| t.tick + 1)).unwrap_or(0).max(1);
    let n = series[0].1.max(series[0].2).max(1) as f64;
    let (w, h, m) = (600.0, 300.0, 40.0);
    let x = |tick: u64| m + (w - 2.0 * m) * tick as f64 / end as f64;
    let y = |alive: usize| h - m - (h - 2.0 * m) * alive as f64 / n;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r##"<path class="axes" d="M{m} {m} L{m} {} L{} {}" fill="none" stroke="#333"/>"##, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">time (s), end {:.1}</text>"#, w / 2.0, h - 8.0, end as f64 * dt);
    let _ = writeln!(s, r#"<text x="12" y="{}" font-size="11" transform="rotate(-90 12 {})" text-anchor="middle">alive</text>"#, h / 2.0, h / 2.0);
    for (team, pick) in [(Team::Allied, 0usize), (Team::Enemy, 1usize)] {
        let value = |p: &(u64, usize, usize)| if pick == 0 { p.1 } else { p.2 };
        let mut d = format!("M{:.1} {:.1}", x(0), y(value(&series[0])));
        for win in series.windows(2) {
            let (prev, next) = (&win[0], &win[1]);
            let _ = write!(d, " L{:.1} {:.1} L{:.1} {:.1}", x(next.0), y(value(prev)), x(next.0), y(value(next)));
        }
        let last = series.last().expect("series starts non-empty");
        let _ = write!(d, " L{:.1} {:.1}", x(end), y(value(last)));
        let _ = writeln!(s, r#"<path class="curve {}" d="{d}" fill="none" stroke="{}" stroke-width="2"/>"#, class(team), color(team));
    }
    s.push_str("</svg>\n");
    s
}
