//! Seeded batches of episodes run in parallel and aggregated into a
//! summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episode::{derive_seed, run_episode, CommanderSpec, EpisodeMetrics, HarnessError};
use crate::expert::RuleId;
use crate::metrics::{gain_index, mean, survival_rate};
use crate::scenario::ScenarioConfig;
use crate::world::Winner;

pub const DEFAULT_EPISODES: usize = 10;

/// One row of the config matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matchup {
    pub name: String,
    pub config: ScenarioConfig,
    pub allied: CommanderSpec,
    pub enemy: CommanderSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub matchups: Vec<Matchup>,
    pub episodes: usize,
    pub master_seed: u64,
}

/// Matchups run when no matrix file is given: the expert against each
/// baseline, mirrored self-play, and the expert at larger team sizes.
pub fn default_matrix(base: &ScenarioConfig) -> Vec<Matchup> {
    let row = |name: &str, config: ScenarioConfig, allied: CommanderSpec, enemy: CommanderSpec| Matchup { name: name.into(), config, allied, enemy };
    let n = base.team_size;
    let mirrored = ScenarioConfig { spawn: crate::scenario::SpawnMode::Mirrored, ..base.clone() };
    vec![
        row(&format!("expert-vs-scripted-{n}v{n}"), base.clone(), CommanderSpec::Expert, CommanderSpec::Scripted),
        row(&format!("expert-vs-random-{n}v{n}"), base.clone(), CommanderSpec::Expert, CommanderSpec::Random),
        row(&format!("scripted-vs-scripted-{n}v{n}"), base.clone(), CommanderSpec::Scripted, CommanderSpec::Scripted),
        row(&format!("expert-self-play-{n}v{n}"), mirrored, CommanderSpec::Expert, CommanderSpec::Expert),
        row("expert-vs-scripted-7v7", base.with_team_size(7), CommanderSpec::Expert, CommanderSpec::Scripted),
        row("expert-vs-scripted-9v9", base.with_team_size(9), CommanderSpec::Expert, CommanderSpec::Scripted),
    ]
}

/// Seed of episode `episode` of matchup `matchup`, independent of
/// scheduling order.
pub fn episode_seed(master: u64, matchup: usize, episode: usize) -> u64 {
    derive_seed(master, matchup as u64, episode as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub name: String,
    pub allied: String,
    pub enemy: String,
    pub team_size: usize,
    pub episodes: usize,
    pub wins: usize,
    pub losses: usize,
    pub draws: usize,
    /// Wins over episodes.
    pub win_rate: f64,
    /// Wins plus half the draws, over episodes.
    pub draw_adjusted_win_rate: f64,
    pub mean_survivors_allied: f64,
    pub mean_survivors_enemy: f64,
    /// `None` when no agent survived on either side in any episode.
    pub survival_rate: Option<f64>,
    /// Survival rate with the no-survivor case scored as an even split.
    pub survival_rate_draw_adjusted: f64,
    pub mean_drive_rate: Option<f64>,
    pub gain_index: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub hallucination: Option<f64>,
    pub mean_end_tick: f64,
    pub commander_failures: BTreeMap<String, u64>,
    pub rule_histogram: BTreeMap<RuleId, u64>,
    /// Mean wall-clock seconds per allied decision; only filled on request
    /// because it varies between runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision_time_s: Option<f64>,
}

impl BatchRow {
    pub fn aggregate(m: &Matchup, episodes: &[EpisodeMetrics], timing: bool) -> Self {
        let n = episodes.len();
        let count = |w: Winner| episodes.iter().filter(|e| e.outcome.winner == w).count();
        let (wins, losses, draws) = (count(Winner::Allied), count(Winner::Enemy), count(Winner::Draw));
        let s_b = mean(episodes.iter().map(|e| f64::from(e.outcome.survivors_allied))).unwrap_or(0.0);
        let s_r = mean(episodes.iter().map(|e| f64::from(e.outcome.survivors_enemy))).unwrap_or(0.0);
        let rs = survival_rate(s_b, s_r);
        let drive = mean(episodes.iter().filter_map(|e| e.allied.drive_rate()));
        let gi = match (rs, drive) {
            (Some(r), Some(d)) => gain_index(r, d),
            _ => None,
        };
        let perception: Vec<_> = episodes.iter().filter_map(|e| e.allied.perception).collect();
        let mut failures = BTreeMap::new();
        let mut rules = BTreeMap::new();
        for e in episodes {
            for f in &e.allied.failures {
                *failures.entry(f.kind.clone()).or_insert(0) += 1;
            }
            for (r, c) in &e.allied.rule_histogram {
                *rules.entry(*r).or_insert(0) += c;
            }
        }
        Self {
            name: m.name.clone(),
            allied: m.allied.label().into(),
            enemy: m.enemy.label().into(),
            team_size: m.config.team_size,
            episodes: n,
            wins,
            losses,
            draws,
            win_rate: wins as f64 / n.max(1) as f64,
            draw_adjusted_win_rate: (wins as f64 + 0.5 * draws as f64) / n.max(1) as f64,
            mean_survivors_allied: s_b,
            mean_survivors_enemy: s_r,
            survival_rate: rs,
            survival_rate_draw_adjusted: rs.unwrap_or(0.5),
            mean_drive_rate: drive,
            gain_index: gi,
            precision: mean(perception.iter().map(|p| p.precision)),
            recall: mean(perception.iter().map(|p| p.recall)),
            hallucination: mean(perception.iter().map(|p| p.hallucination)),
            mean_end_tick: mean(episodes.iter().map(|e| e.outcome.end_tick as f64)).unwrap_or(0.0),
            commander_failures: failures,
            rule_histogram: rules,
            decision_time_s: if timing { mean(episodes.iter().flat_map(|e| e.allied.latencies.iter().copied())) } else { None },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub master_seed: u64,
    pub episodes_per_matchup: usize,
    pub rows: Vec<BatchRow>,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl BatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "master seed {}, {} episodes per matchup", self.master_seed, self.episodes_per_matchup);
        let _ = writeln!(
            s,
            "{:<24} {:>4} {:>9} {:>7} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "matchup", "N", "T_c(s)", "R_W", "draws", "R_S", "R_drv", "I_drv", "P", "R", "R_H"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<24} {:>4} {:>9} {:>6.1}% {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
                r.name,
                r.team_size,
                opt(r.decision_time_s, 4),
                100.0 * r.win_rate,
                r.draws,
                opt(r.survival_rate, 3),
                opt(r.mean_drive_rate, 3),
                opt(r.gain_index, 3),
                opt(r.precision, 3),
                opt(r.recall, 3),
                opt(r.hallucination, 3),
            );
        }
        s
    }
}

/// Runs every matchup for `spec.episodes` seeded episodes on a pool of
/// `parallel` threads. Results do not depend on `parallel`.
pub fn run_batch(spec: &BatchSpec, parallel: usize, timing: bool) -> Result<BatchReport, HarnessError> {
    Ok(run_batch_detailed(spec, parallel, timing)?.0)
}

/// Like [`run_batch`], also returning the per-episode metrics per matchup.
pub fn run_batch_detailed(spec: &BatchSpec, parallel: usize, timing: bool) -> Result<(BatchReport, Vec<Vec<EpisodeMetrics>>), HarnessError> {
    let jobs: Vec<(usize, usize, u64)> = (0..spec.matchups.len())
        .flat_map(|m| (0..spec.episodes).map(move |e| (m, e, episode_seed(spec.master_seed, m, e))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallel.max(1)).build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    let results: Vec<Result<EpisodeMetrics, HarnessError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, _, seed)| {
                let mu = &spec.matchups[m];
                let run = catch_unwind(AssertUnwindSafe(|| run_episode(&mu.config, &mu.allied, &mu.enemy, seed, false)));
                match run {
                    Ok(r) => r.map(|r| r.metrics),
                    Err(panic) => {
                        let message = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "unknown panic".into());
                        Err(HarnessError::EpisodePanic { matchup: mu.name.clone(), seed, message })
                    }
                }
            })
            .collect()
    });
    let mut per: Vec<Vec<EpisodeMetrics>> = vec![Vec::new(); spec.matchups.len()];
    for ((m, _, _), r) in jobs.iter().zip(results) {
        per[*m].push(r?);
    }
    let rows = spec.matchups.iter().zip(&per).map(|(m, eps)| BatchRow::aggregate(m, eps, timing)).collect();
    Ok((BatchReport { master_seed: spec.master_seed, episodes_per_matchup: spec.episodes, rows }, per))
}
