use std::f64::consts::PI;

use super::*;

fn still() -> ActionCommand {
    ActionCommand::new(0.0, 0.0)
}

#[test]
fn reward_examples() {
    assert_eq!(reward(2.5, 0.0), 1.0);
    assert!((reward(5.0, PI / 8.0) - 1.0 / 6.0).abs() < 1e-12);
    assert!(reward(10.0, 0.0).abs() < 1e-12);
}

#[test]
fn reset_spawns_at_desired_pose() {
    for h in [0.3, 1.0, 3.0] {
        let e = EmbodimentConfig::default().with_height(h);
        let (s, mask) = reset(&e, &Scenario::default()).unwrap();
        let p = privileged_state(&s);
        assert_eq!((p.rho, p.theta), (RHO_STAR, 0.0));
        assert_eq!((p.rho_dot, p.theta_dot), (0.0, 0.0));
        assert_eq!(reward(p.rho, p.theta), 1.0);
        assert!(mask.target_pixels() > 0);
    }
}

#[test]
fn reset_is_deterministic_per_seed() {
    let e = EmbodimentConfig::default();
    let sc = Scenario {
        obstacle_count: 4,
        seed: 11,
        ..Scenario::default()
    };
    let (mut a, _) = reset(&e, &sc).unwrap();
    let (mut b, _) = reset(&e, &sc).unwrap();
    assert_eq!(a.obstacles, b.obstacles);
    for _ in 0..100 {
        let oa = step(&mut a, still(), &e).unwrap();
        let ob = step(&mut b, still(), &e).unwrap();
        assert_eq!(oa.mask, ob.mask);
        assert_eq!((a.target_x, a.target_y), (b.target_x, b.target_y));
    }
    let (c, _) = reset(&e, &Scenario { seed: 12, ..sc }).unwrap();
    assert_ne!(a.obstacles, c.obstacles);
}

#[test]
fn zero_action_on_stationary_target_succeeds() {
    let e = EmbodimentConfig::default();
    let (mut s, _) = reset(&e, &Scenario::stationary(3)).unwrap();
    let mut total = 0.0;
    let mut steps = 0;
    loop {
        let out = step(&mut s, still(), &e).unwrap();
        assert_eq!(out.reward, 1.0);
        total += out.reward;
        steps += 1;
        if out.terminated {
            assert_eq!(out.info.termination, Some(Termination::Success));
            break;
        }
    }
    assert_eq!((total, steps), (500.0, 500));
    assert!(matches!(step(&mut s, still(), &e), Err(SimError::Terminated(Termination::Success))));
}

#[test]
fn far_target_counts_as_lost_with_zero_reward() {
    let e = EmbodimentConfig::default();
    let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
    s.target_x = 10.0;
    let out = step(&mut s, still(), &e).unwrap();
    assert!(out.info.lost);
    assert_eq!(out.info.consecutive_lost, 1);
    assert!(out.reward.abs() < 1e-12);
    s.target_x = 3.0;
    let out = step(&mut s, still(), &e).unwrap();
    assert_eq!(out.info.consecutive_lost, 0);
}

#[test]
fn co_located_target_has_zero_bearing() {
    let e = EmbodimentConfig::default();
    let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
    s.target_x = 1e-12;
    let p = privileged_state(&s);
    assert!(p.rho < 1e-9);
    assert_eq!(p.theta, 0.0);
}

#[test]
fn positive_bearing_is_to_the_left() {
    let e = EmbodimentConfig::default();
    let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
    s.target_y = 1.0;
    assert!(s.polar().1 > 0.0);
    let m = render_mask(&s, &e);
    assert!(m.target_centroid_col().unwrap() < e.mask_w as f64 / 2.0);
}

#[test]
fn target_behind_agent_is_not_drawn() {
    let e = EmbodimentConfig::default();
    let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
    s.target_x = -2.5;
    assert_eq!(render_mask(&s, &e).target_pixels(), 0);
    s.target_x = 2.5;
    s.target_y = 2.6;
    assert_eq!(render_mask(&s, &e).target_pixels(), 0);
}

#[test]
fn target_at_desired_pose_is_centered() {
    for h in [0.3, 0.5, 1.0, 1.7, 3.0] {
        let e = EmbodimentConfig::default().with_height(h);
        let (_, m) = reset(&e, &Scenario::stationary(0)).unwrap();
        let (c0, _, c1, _) = m.bounds(LABEL_TARGET).unwrap();
        let center = (c0 + c1 + 1) as f64 / 2.0;
        assert!((center - e.mask_w as f64 / 2.0).abs() <= 1.0, "h={h}: {center}");
    }
}

#[test]
fn higher_camera_sees_fewer_target_rows() {
    let rows = |h| {
        let e = EmbodimentConfig::default().with_height(h);
        reset(&e, &Scenario::stationary(0)).unwrap().1.rows_with(LABEL_TARGET)
    };
    assert!(rows(1.7) < rows(0.3), "{} vs {}", rows(1.7), rows(0.3));
}

#[test]
fn lag_relaxes_toward_command() {
    let e = EmbodimentConfig {
        inertia_tau: 0.5,
        ..EmbodimentConfig::default()
    };
    let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
    step(&mut s, ActionCommand::new(1.0, -1.0), &e).unwrap();
    let a = (-DT / 0.5f64).exp();
    assert!((s.agent_v - (1.0 - a) * e.v_max).abs() < 1e-12);
    assert!((s.agent_omega + (1.0 - a) * e.omega_max).abs() < 1e-12);
    // reverse commands produce no backward motion
    let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
    step(&mut s, ActionCommand::new(-1.0, 0.0), &e).unwrap();
    assert_eq!(s.agent_v, 0.0);
}

#[test]
fn obstacles_block_the_agent() {
    let e = EmbodimentConfig {
        inertia_tau: 0.0,
        ..EmbodimentConfig::default()
    };
    let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
    s.obstacles.push(Obstacle {
        x: 0.6,
        y: 0.0,
        radius: 0.3,
    });
    for _ in 0..10 {
        step(&mut s, ActionCommand::new(1.0, 0.0), &e).unwrap();
    }
    assert!(s.agent_x + AGENT_RADIUS <= 0.3 + 1e-9);
}

#[test]
fn moving_target_travels_at_configured_speed() {
    let e = EmbodimentConfig::default();
    for motion in [TargetMotion::Waypoints, TargetMotion::SCurve] {
        let sc = Scenario {
            target_speed: 1.5,
            motion,
            obstacle_count: 0,
            seed: 5,
        };
        let (mut s, _) = reset(&e, &sc).unwrap();
        for _ in 0..60 {
            step(&mut s, still(), &e).unwrap();
            let speed = s.target_vx.hypot(s.target_vy);
            // corners cut by waypoint switches can only shorten the displacement
            assert!(speed <= 1.5 + 1e-9 && speed > 0.5, "{motion:?}: {speed}");
        }
    }
}

#[test]
fn scenario_file_round_trips() {
    let cfg = ScenarioConfig {
        embodiment: EmbodimentConfig::default().with_height(1.7),
        scenario: Scenario {
            motion: TargetMotion::SCurve,
            ..Scenario::default()
        },
    };
    let text = cfg.to_toml();
    assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
    assert!(ScenarioConfig::from_toml("[embodiment]\nbogus = 1\n").is_err());
}

#[test]
fn trace_round_trips() {
    let recs = vec![TraceRecord {
        t: 1,
        rho: 2.5,
        theta: -0.1,
        v_norm: 0.3,
        omega_norm: -1.0,
        reward: 0.87,
        lost: false,
    }];
    let mut buf = Vec::new();
    write_trace(&mut buf, &recs).unwrap();
    assert_eq!(read_trace(&buf[..]).unwrap(), recs);
}
