use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skirmish_core::cost::{attack_cost_terms, coop_attack_cost, CostParams};
use skirmish_core::expert::{decide, ExpertContext, ExpertParams};
use skirmish_core::geometry::{gaussian_kernel, in_attack_cone, AnisotropyMatrix, Vec2};
use skirmish_core::nav::{plan_path, NavGrid, PathFollower, DEFAULT_CELL_SIZE};
use skirmish_core::oracle::random_world;
use skirmish_core::perception::{corrupt, observe, NoiseModel};
use skirmish_core::threat::{danger_value, intensity, ThreatField, ThreatParams, ZoneGrid};
use skirmish_core::world::{Team, WorldState};

fn world(seed: u64) -> WorldState {
    random_world(&mut ChaCha8Rng::seed_from_u64(seed), 9, 30)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn kernel_decreases_along_rays(cx in 0.0..30.0f64, cy in 0.0..16.0f64, theta in 0.0..std::f64::consts::TAU, t1 in 0.0..20.0f64, dt in 0.0..20.0f64, rho in 0.5..3.0f64, sigma in 0.5..5.0f64) {
        let a = AnisotropyMatrix::new(rho).unwrap();
        let c = Vec2::new(cx, cy);
        let dir = Vec2::new(theta.cos(), theta.sin());
        let near = gaussian_kernel(c + dir * t1, c, &a, sigma);
        let far = gaussian_kernel(c + dir * (t1 + dt), c, &a, sigma);
        prop_assert!(near >= far);
    }

    #[test]
    fn attack_cone_is_rotation_invariant(sx in -10.0..10.0f64, sy in -10.0..10.0f64, h in 0.0..std::f64::consts::TAU, tx in -10.0..10.0f64, ty in -10.0..10.0f64, rot in 0.0..std::f64::consts::TAU) {
        let (s, t, heading) = (Vec2::new(sx, sy), Vec2::new(tx, ty), Vec2::new(h.cos(), h.sin()));
        let (radius, fov) = (5.0, 2.0 * std::f64::consts::PI / 3.0);
        let off = t - s;
        let margin = (off.norm() - radius).abs().min((heading.dot(off) / off.norm() - (fov / 2.0).cos()).abs());
        prop_assume!(margin > 1e-9);
        let before = in_attack_cone(s, heading, t, radius, fov).unwrap();
        let after = in_attack_cone(s.rotated(rot), heading.rotated(rot), t.rotated(rot), radius, fov).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn threat_scores_are_normalized(seed in any::<u64>()) {
        let w = world(seed);
        let zones = ZoneGrid::standard(w.arena());
        let field = ThreatField::build(&w, Team::Allied, &zones, &ThreatParams::default());
        let scores = field.scores();
        prop_assert!(scores.iter().all(|(_, s)| (0.0..=1.0).contains(s)));
        // Scores are source intensity over the field maximum, which bounds
        // every source; summed kernels can peak between sources, so no enemy
        // need reach 1.
        for (id, score) in scores {
            let at = field.intensity_at(w.agent(*id).unwrap().position);
            prop_assert!(at <= field.max());
            prop_assert!(close(*score, at / field.max()), "{score} vs {}", at / field.max());
        }
    }

    #[test]
    fn intensity_ignores_enemy_order(seed in any::<u64>(), x in 0.0..30.0f64, y in 0.0..16.0f64) {
        let w = world(seed);
        let zones = ZoneGrid::standard(w.arena());
        let p = ThreatParams::default();
        let mut enemies: Vec<_> = w.alive(Team::Enemy).collect();
        let forward = intensity(Vec2::new(x, y), &enemies, &zones, &p, &w);
        enemies.reverse();
        let backward = intensity(Vec2::new(x, y), &enemies, &zones, &p, &w);
        prop_assert!(close(forward, backward), "{forward} vs {backward}");
    }

    #[test]
    fn scaling_zone_weights_leaves_scores(seed in any::<u64>(), k in 0.1..10.0f64) {
        let w = world(seed);
        let zones = ZoneGrid::standard(w.arena());
        let p = ThreatParams::default();
        let a = ThreatField::build(&w, Team::Allied, &zones, &p);
        let b = ThreatField::build(&w, Team::Allied, &zones.scaled(k).unwrap(), &p);
        for ((ia, sa), (ib, sb)) in a.scores().iter().zip(b.scores()) {
            prop_assert_eq!(ia, ib);
            prop_assert!((sa - sb).abs() <= 1e-9, "{sa} vs {sb}");
        }
    }

    #[test]
    fn danger_with_zero_weights_is_zero(seed in any::<u64>()) {
        let w = world(seed);
        let p = ThreatParams { w_en: 0.0, w_al: 0.0, w_d_en: 0.0, w_d_al: 0.0, ..ThreatParams::default() };
        for a in w.agents() {
            prop_assert_eq!(danger_value(a, &w, &p), 0.0);
        }
    }

    #[test]
    fn coop_cost_is_symmetric(seed in any::<u64>()) {
        let w = world(seed);
        let zones = ZoneGrid::standard(w.arena());
        let field = ThreatField::build(&w, Team::Allied, &zones, &ThreatParams::default());
        let cp = CostParams::default();
        let allies: Vec<_> = w.alive(Team::Allied).collect();
        for (i, a) in allies.iter().enumerate() {
            for b in &allies[i + 1..] {
                for e in w.alive(Team::Enemy) {
                    let ab = coop_attack_cost(a, b, e, &field, &zones, &cp, &w);
                    let ba = coop_attack_cost(b, a, e, &field, &zones, &cp, &w);
                    prop_assert!(ab == ba || close(ab, ba), "{ab} vs {ba}");
                }
            }
        }
    }

    #[test]
    fn distance_term_saturates(seed in any::<u64>(), theta in 0.0..std::f64::consts::TAU) {
        let w = world(seed);
        let zones = ZoneGrid::standard(w.arena());
        let field = ThreatField::build(&w, Team::Allied, &zones, &ThreatParams::default());
        let cp = CostParams::default();
        let a = w.team(Team::Allied)[0].clone();
        let mut e = w.team(Team::Enemy)[0].clone();
        let dir = Vec2::new(theta.cos(), theta.sin());
        let mut last = -1.0;
        for step in 0..40 {
            e.position = a.position + dir * (step as f64 * 0.5);
            let t = attack_cost_terms(&a, &e, &field, &cp, &w).distance;
            prop_assert!(t >= last && t <= 1.0);
            if step as f64 * 0.5 > cp.d_max + 1e-6 {
                prop_assert_eq!(t, 1.0);
            }
            last = t;
        }
    }

    #[test]
    fn decisions_are_total_exclusive_free_and_repeatable(seed in any::<u64>()) {
        let w = world(seed);
        let zones = ZoneGrid::standard(w.arena());
        let params = ExpertParams::default();
        let nav = NavGrid::for_world(&w, DEFAULT_CELL_SIZE);
        let field = ThreatField::build(&w, Team::Allied, &zones, &params.threat);
        let ctx = ExpertContext { world: &w, side: Team::Allied, field: &field, zones: &zones, params: &params, nav: &nav };
        let d = decide(&ctx);
        let mut agents: Vec<u32> = d.instructions.iter().map(|i| i.agent).collect();
        agents.sort_unstable();
        let alive: Vec<u32> = w.alive(Team::Allied).map(|a| a.id.index).collect();
        prop_assert_eq!(agents, alive);
        for i in &d.instructions {
            prop_assert!(w.point_free(i.waypoint), "{:?}", i);
        }
        // Each tier-2 pair names each other; nobody is in two pairs.
        for t in d.traces.iter().filter(|t| t.tier == 2) {
            let partner = t.partner.expect("pair rules name a partner");
            let back = d.traces.iter().find(|u| u.agent == partner).expect("partner traced");
            prop_assert_eq!(back.tier, 2);
            prop_assert_eq!(back.partner, Some(t.agent));
        }
        prop_assert_eq!(decide(&ctx), d);
    }

    #[test]
    fn zero_noise_is_identity_and_regions_match_units(seed in any::<u64>(), p_drop in 0.0..0.5f64, p_spurious in 0.0..0.5f64, p_flip in 0.0..0.5f64, sigma in 0.0..1.0f64) {
        let w = world(seed);
        let zones = ZoneGrid::standard(w.arena());
        let clean = observe(&w, Team::Allied, &zones);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(&corrupt(&clean, &NoiseModel::default(), &w, &zones, &mut rng), &clean);
        let noise = NoiseModel { position_jitter_sigma: sigma, p_drop, p_spurious, p_team_flip: p_flip };
        for report in [clean.clone(), corrupt(&clean, &noise, &w, &zones, &mut rng)] {
            for r in &report.regions {
                let count = |team: Team| report.units.iter().filter(|u| u.zone == r.zone && u.team == team && u.status == skirmish_core::world::AgentStatus::Alive).count() as u32;
                prop_assert_eq!((r.allied, r.enemy), (count(Team::Allied), count(Team::Enemy)));
            }
        }
    }

    #[test]
    fn paths_are_clear_and_no_shorter_than_the_chord(seed in any::<u64>()) {
        let w = world(seed);
        let nav = NavGrid::for_world(&w, DEFAULT_CELL_SIZE);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let from = w.team(Team::Allied)[0].position;
        let to = Vec2::new(rng.random_range(0.5..29.5), rng.random_range(0.5..15.5));
        prop_assume!(w.point_free(to));
        if let Ok(path) = plan_path(&nav, from, to) {
            prop_assert!(path.total_length() + 1e-9 >= from.distance(path.goal()));
            for pair in path.waypoints().windows(2) {
                prop_assert!(w.line_of_sight(pair[0], pair[1]), "{pair:?}");
            }
            let mut follower = PathFollower::new(path);
            let v_max = w.params().v_max;
            let mut pos = from;
            for _ in 0..50 {
                let v = follower.steer(pos, v_max, 0.1);
                prop_assert!(v.norm() <= v_max + 1e-12);
                pos += v * 0.1;
            }
        }
    }
}
