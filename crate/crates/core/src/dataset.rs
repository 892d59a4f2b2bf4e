//! Training-set export from recorded epochs: supervised records with a
//! templated rationale, and preference pairs whose rejected side is the
//! expert plan with one corruption.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::commander::WireInstruction;
use crate::episode::{HarnessError, Replay};
use crate::expert::{ActionType, RuleTrace};
use crate::perception::SemanticReport;
use crate::runtime::EpochRecord;
use crate::world::Team;

/// Minimum displacement of a corrupted waypoint, meters.
pub const MIN_DISPLACEMENT: f64 = 3.0;
const MAX_DISPLACEMENT: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    Sft,
    Dpo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub seed: u64,
    pub tick: u64,
    pub report: SemanticReport,
    pub rationale: String,
    pub instructions: Vec<WireInstruction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    ActionSwap,
    WaypointDisplaced,
    Retarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpoRecord {
    pub seed: u64,
    pub tick: u64,
    pub report: SemanticReport,
    pub chosen: Vec<WireInstruction>,
    pub rejected: Vec<WireInstruction>,
    pub corruption: Corruption,
    /// Index into `chosen` of the corrupted instruction.
    pub corrupted_index: usize,
}

/// Export summary: records written and epochs skipped for lack of traces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExportStats {
    pub records: usize,
    pub skipped: usize,
}

fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// One line per traced agent, e.g.
/// `a2: R1 (tier 1) enemies=1 -> Attack e0`.
pub fn rationale(traces: &[RuleTrace]) -> String {
    let mut s = String::new();
    for t in traces {
        let _ = write!(s, "a{}: {} (tier {})", t.agent, t.rule, t.tier);
        for (k, v) in &t.snapshot {
            let _ = write!(s, " {k}={}", fmt_value(*v));
        }
        let _ = write!(s, " -> {}", t.action);
        if let Some(e) = t.target {
            let _ = write!(s, " e{e}");
        }
        if let Some(k) = t.partner {
            let _ = write!(s, " with a{k}");
        }
        s.push('\n');
    }
    s
}

fn traced_epochs(replay: &Replay, side: Team) -> (Vec<&EpochRecord>, usize) {
    let (with, without): (Vec<&EpochRecord>, Vec<&EpochRecord>) = replay.epochs(side).partition(|e| !e.traces.is_empty());
    if !without.is_empty() {
        log::warn!("skipping {} epochs without rule traces (commander {})", without.len(), without[0].commander);
    }
    (with, without.len())
}

fn wire(epoch: &EpochRecord) -> Vec<WireInstruction> {
    epoch.instructions.iter().map(|i| i.to_wire()).collect()
}

pub fn sft_records(replay: &Replay, side: Team) -> (Vec<SftRecord>, usize) {
    let (epochs, skipped) = traced_epochs(replay, side);
    let records = epochs
        .into_iter()
        .map(|e| SftRecord { seed: replay.header.seed, tick: e.tick, report: e.report.clone(), rationale: rationale(&e.traces), instructions: wire(e) })
        .collect();
    (records, skipped)
}

/// Enemy ids named in the report, as seen by `side`.
fn reported_enemies(report: &SemanticReport) -> Vec<i64> {
    let mut ids: Vec<i64> = report.units.iter().filter(|u| u.team != report.side).filter_map(|u| u.id.map(i64::from)).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Applies one corruption to a copy of `chosen`, or `None` when it cannot
/// change anything.
pub fn corrupt_plan(
    chosen: &[WireInstruction],
    kind: Corruption,
    index: usize,
    report: &SemanticReport,
    rng: &mut impl Rng,
) -> Option<Vec<WireInstruction>> {
    let mut out = chosen.to_vec();
    let ins = out.get_mut(index)?;
    match kind {
        Corruption::ActionSwap => {
            let others: Vec<ActionType> = ActionType::ALL.into_iter().filter(|a| a.name() != ins.action).collect();
            ins.action = others.choose(rng)?.name().to_string();
        }
        Corruption::WaypointDisplaced => {
            let (w, h) = (report.arena.width, report.arena.height);
            let [x, y] = ins.waypoint;
            // Rejection-sample a direction and distance that stay inside the arena.
            let moved = (0..64).find_map(|_| {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let r = rng.random_range(MIN_DISPLACEMENT..MAX_DISPLACEMENT);
                let (nx, ny) = (x + r * theta.cos(), y + r * theta.sin());
                ((0.0..=w).contains(&nx) && (0.0..=h).contains(&ny)).then_some([nx, ny])
            });
            ins.waypoint = moved.unwrap_or_else(|| {
                // Opposite corner is always at least half the diagonal away.
                [if x < w / 2.0 { w } else { 0.0 }, if y < h / 2.0 { h } else { 0.0 }]
            });
        }
        Corruption::Retarget => {
            let current = ins.target?;
            let others: Vec<i64> = reported_enemies(report).into_iter().filter(|&e| e != current).collect();
            ins.target = Some(*others.choose(rng)?);
        }
    }
    Some(out)
}

pub fn dpo_records(replay: &Replay, side: Team, seed: u64) -> (Vec<DpoRecord>, usize) {
    let (epochs, mut skipped) = traced_epochs(replay, side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ replay.header.seed);
    let mut records = Vec::new();
    for e in epochs {
        let chosen = wire(e);
        if chosen.is_empty() {
            skipped += 1;
            continue;
        }
        let mut kinds = vec![Corruption::ActionSwap, Corruption::WaypointDisplaced, Corruption::Retarget];
        let index = rng.random_range(0..chosen.len());
        let mut made = None;
        while !kinds.is_empty() {
            let kind = kinds.swap_remove(rng.random_range(0..kinds.len()));
            if let Some(rejected) = corrupt_plan(&chosen, kind, index, &e.report, &mut rng) {
                made = Some((kind, rejected));
                break;
            }
        }
        let (corruption, rejected) = made.expect("action swap always applies");
        records.push(DpoRecord { seed: replay.header.seed, tick: e.tick, report: e.report.clone(), chosen, rejected, corruption, corrupted_index: index });
    }
    (records, skipped)
}

pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut out: W) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| HarnessError::Replay(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Exports allied epochs of every replay in `mode` to `out`.
pub fn export<W: Write>(replays: &[Replay], mode: DatasetMode, seed: u64, out: W) -> Result<ExportStats, HarnessError> {
    let mut stats = ExportStats::default();
    match mode {
        DatasetMode::Sft => {
            let mut all = Vec::new();
            for r in replays {
                let (recs, skipped) = sft_records(r, Team::Allied);
                stats.skipped += skipped;
                all.extend(recs);
            }
            stats.records = all.len();
            write_jsonl(&all, out)?;
        }
        DatasetMode::Dpo => {
            let mut all = Vec::new();
            for r in replays {
                let (recs, skipped) = dpo_records(r, Team::Allied, seed);
                stats.skipped += skipped;
                all.extend(recs);
            }
            stats.records = all.len();
            write_jsonl(&all, out)?;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{run_episode, CommanderSpec};
    use crate::scenario::ScenarioConfig;

    fn replay(allied: CommanderSpec, seed: u64) -> Replay {
        let cfg = ScenarioConfig::default();
        run_episode(&cfg, &allied, &CommanderSpec::Scripted, seed, true).unwrap().replay.unwrap()
    }

    #[test]
    fn one_sft_record_per_traced_epoch() {
        let r = replay(CommanderSpec::Expert, 4);
        let epochs = r.epochs(Team::Allied).count();
        let (recs, skipped) = sft_records(&r, Team::Allied);
        assert_eq!((recs.len(), skipped), (epochs, 0));
        for rec in &recs {
            assert_eq!(rec.rationale.lines().count(), rec.instructions.len());
        }
    }

    #[test]
    fn r1_rationale_names_rule_and_enemy() {
        let r = replay(CommanderSpec::Expert, 4);
        let epoch = r
            .epochs(Team::Allied)
            .find(|e| e.traces.iter().any(|t| t.rule == crate::expert::RuleId::R1))
            .expect("an epoch with one enemy left");
        let survivor = epoch.traces.iter().find(|t| t.rule == crate::expert::RuleId::R1).unwrap().target.unwrap();
        let text = rationale(&epoch.traces);
        assert!(text.contains("R1") && text.contains(&format!("e{survivor}")), "{text}");
    }

    #[test]
    fn untraced_epochs_are_skipped() {
        let r = replay(CommanderSpec::Scripted, 4);
        let (recs, skipped) = sft_records(&r, Team::Allied);
        assert!(recs.is_empty());
        assert_eq!(skipped, r.epochs(Team::Allied).count());
    }

    #[test]
    fn rejected_always_differs() {
        for seed in 0..6 {
            let r = replay(CommanderSpec::Expert, seed);
            let (recs, _) = dpo_records(&r, Team::Allied, 11);
            assert!(!recs.is_empty());
            for rec in recs {
                assert_ne!(rec.chosen, rec.rejected);
                let (c, x) = (&rec.chosen[rec.corrupted_index], &rec.rejected[rec.corrupted_index]);
                match rec.corruption {
                    Corruption::ActionSwap => assert_ne!(c.action, x.action),
                    Corruption::Retarget => assert_ne!(c.target, x.target),
                    Corruption::WaypointDisplaced => {
                        let d = ((c.waypoint[0] - x.waypoint[0]).powi(2) + (c.waypoint[1] - x.waypoint[1]).powi(2)).sqrt();
                        assert!(d >= MIN_DISPLACEMENT, "{d}");
                    }
                }
                for w in &rec.rejected {
                    assert!(ActionType::parse(&w.action).is_some());
                }
            }
        }
    }
}
