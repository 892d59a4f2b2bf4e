use std::io::Cursor;

use skirmish_core::batch::run_batch_detailed;
use skirmish_core::episode::{run_episode, CommanderSpec, Replay};
use skirmish_core::oracle;
use skirmish_core::runtime::fallback;
use skirmish_core::scenario::{spawn, ScenarioConfig, SpawnMode};
use skirmish_core::world::{Team, VelocityCommands};
use skirmish_core::{default_matrix, BatchSpec};

fn recorded(allied: CommanderSpec, enemy: CommanderSpec, seed: u64) -> Replay {
    run_episode(&ScenarioConfig::default(), &allied, &enemy, seed, true).unwrap().replay.unwrap()
}

fn bytes(r: &Replay) -> Vec<u8> {
    let mut out = Vec::new();
    r.save(&mut out).unwrap();
    out
}

#[test]
fn replay_round_trips_and_resimulates() {
    for seed in 0..4 {
        let r = recorded(CommanderSpec::Expert, CommanderSpec::Scripted, seed);
        let loaded = Replay::load(Cursor::new(bytes(&r))).unwrap();
        assert_eq!(loaded, r);
        assert_eq!(loaded.verify().unwrap(), r.outcome.unwrap());
    }
}

#[test]
fn equal_seeds_give_identical_replays() {
    for (a, e) in [(CommanderSpec::Expert, CommanderSpec::Expert), (CommanderSpec::Random, CommanderSpec::Scripted)] {
        assert_eq!(bytes(&recorded(a.clone(), e.clone(), 21)), bytes(&recorded(a, e, 21)));
    }
}

#[test]
fn tampered_replay_fails_verification() {
    let mut r = recorded(CommanderSpec::Expert, CommanderSpec::Scripted, 5);
    let row = r.ticks.iter_mut().find(|t| !t.commands.is_empty()).unwrap();
    row.commands[0].velocity.x += 0.5;
    assert!(r.verify().is_err());
}

#[test]
fn truncated_replay_loads_leniently() {
    let r = recorded(CommanderSpec::Expert, CommanderSpec::Scripted, 6);
    let text = String::from_utf8(bytes(&r)).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let keep = lines.len() / 2;
    lines.truncate(keep);
    let cut = format!("{}\n{{\"kind\":\"tick\",\"tick\":", lines.join("\n"));
    assert!(Replay::load(Cursor::new(cut.as_bytes())).is_err());
    let (prefix, warnings) = Replay::load_lenient(Cursor::new(cut.as_bytes())).unwrap();
    assert_eq!(prefix.ticks.len(), keep - 1);
    assert_eq!(prefix.ticks[..], r.ticks[..keep - 1]);
    assert!(prefix.outcome.is_none());
    assert_eq!(warnings.len(), 1);
}

#[test]
fn batch_results_do_not_depend_on_thread_count() {
    let base = ScenarioConfig { team_size: 3, ..ScenarioConfig::default() };
    let spec = BatchSpec { matchups: default_matrix(&base), episodes: 4, master_seed: 77 };
    let (one, per_one) = run_batch_detailed(&spec, 1, false).unwrap();
    let (three, per_three) = run_batch_detailed(&spec, 3, false).unwrap();
    assert_eq!(one.to_json(), three.to_json());
    assert_eq!(serde_json::to_string(&per_one).unwrap(), serde_json::to_string(&per_three).unwrap());
    for row in &one.rows {
        assert!(row.mean_drive_rate.is_some_and(|r| (0.0..=1.0).contains(&r)));
        assert_eq!(row.wins + row.losses + row.draws, row.episodes);
    }
}

#[test]
fn drive_rate_is_commander_share_of_ledger() {
    let res = run_episode(&ScenarioConfig::default(), &CommanderSpec::Random, &CommanderSpec::Expert, 12, false).unwrap();
    for side in [&res.metrics.allied, &res.metrics.enemy] {
        let d = side.drive;
        assert_eq!(side.drive_rate(), Some(d.commander as f64 / (d.commander + d.fallback) as f64));
    }
}

#[test]
fn mirrored_spawn_is_point_symmetric() {
    let cfg = ScenarioConfig { spawn: SpawnMode::Mirrored, ..ScenarioConfig::default() };
    let w = spawn(&cfg, 3).unwrap();
    let (a, e) = (w.team(Team::Allied), w.team(Team::Enemy));
    for (x, y) in a.iter().zip(e) {
        assert!((x.position.x + y.position.x - 30.0).abs() < 1e-12 && (x.position.y + y.position.y - 16.0).abs() < 1e-12);
        assert!((x.heading.x + y.heading.x).abs() < 1e-12 && (x.heading.y + y.heading.y).abs() < 1e-12);
    }
    let cells = w.static_obstacles().cells();
    for c in cells {
        assert!(cells.iter().any(|d| (c.center.x + d.center.x - 30.0).abs() < 1e-9 && (c.center.y + d.center.y - 16.0).abs() < 1e-9));
    }
}

#[test]
fn stepping_conserves_agents_and_keeps_corpses() {
    let cfg = ScenarioConfig::default();
    for seed in 0..5 {
        let mut w = spawn(&cfg, seed).unwrap();
        let mut corpses = 0;
        while w.check_termination().is_none() {
            let before = (w.alive_count(Team::Allied), w.alive_count(Team::Enemy));
            let cmds: VelocityCommands = w.agents().iter().filter(|a| a.is_alive()).map(|a| (a.id, fallback(&w, a.id, 3.0))).collect();
            let report = w.step(&cmds).unwrap();
            let lost = |t: Team| report.eliminations.iter().filter(|e| e.target.team == t).map(|e| e.target).collect::<std::collections::BTreeSet<_>>().len();
            assert_eq!(w.alive_count(Team::Allied) + lost(Team::Allied), before.0);
            assert_eq!(w.alive_count(Team::Enemy) + lost(Team::Enemy), before.1);
            assert!(w.corpses().len() >= corpses);
            corpses = w.corpses().len();
        }
    }
}

#[test]
fn grid_search_matches_uniform_cost_on_fifty_maps() {
    let r = oracle::check_paths(50, 31);
    assert!(r.passed(), "{r:?}");
    assert_eq!(r.cases, 50);
}

#[test]
fn formula_and_rule_oracles_agree() {
    for r in [oracle::check_formulas(40, 32), oracle::check_rules(40, 33), oracle::check_los(500, 34)] {
        assert!(r.passed(), "{r:?}");
    }
}
