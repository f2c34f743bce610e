use std::f64::consts::PI;

use ctxtrack::tracksim::*;
use proptest::prelude::*;

mod common;
use common::{area_oracle, reward_oracle};

#[test]
fn reward_table_matches_closed_form() {
    let mut table = vec![(2.5, 0.0, 1.0), (5.0, PI / 8.0, 1.0 / 6.0), (10.0, 0.0, 0.0)];
    for rho in [0.0, 1.0, 2.0, 3.0, 4.5, 7.5] {
        for theta in [-PI / 4.0, -0.2, 0.1, PI / 6.0] {
            table.push((rho, theta, reward_oracle(rho, theta)));
        }
    }
    assert!(table.len() >= 20);
    for (rho, theta, want) in table {
        let got = reward(rho, theta);
        assert!((got - want).abs() < 1e-9, "reward({rho}, {theta}) = {got}, want {want}");
    }
}

fn rendered_area(h: f64, rho: f64) -> usize {
    let e = EmbodimentConfig::default().with_height(h);
    let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
    s.target_x = s.agent_x + rho;
    s.target_y = s.agent_y;
    render_mask(&s, &e).target_pixels()
}

#[test]
fn target_area_shrinks_with_distance_and_matches_the_oracle() {
    let e = EmbodimentConfig::default();
    for h in [0.3, 1.0, 1.7, 3.0] {
        let mut prev = usize::MAX;
        for rho in [1.0, 1.5, 2.5, 3.5, 5.0, 7.5] {
            let got = rendered_area(h, rho);
            assert!(got > 0, "h {h} rho {rho}: target not drawn");
            assert!(got <= prev, "h {h} rho {rho}: area grew");
            assert_eq!(got, area_oracle(h, rho, e.mask_w, e.mask_h, e.fov_h), "h {h} rho {rho}");
            prev = got;
        }
    }
}

#[test]
fn oracle_agreement_holds_on_other_image_sizes() {
    for (w, rows, fov) in [(16, 12, 1.2), (48, 40, 1.9)] {
        let e = EmbodimentConfig { mask_w: w, mask_h: rows, fov_h: fov, ..EmbodimentConfig::default() };
        for h in [0.4, 2.2] {
            for rho in [0.9, 2.0, 6.0] {
                let e = e.clone().with_height(h);
                let (mut s, _) = reset(&e, &Scenario::stationary(0)).unwrap();
                s.target_x = rho;
                assert_eq!(render_mask(&s, &e).target_pixels(), area_oracle(h, rho, w, rows, fov), "{w}x{rows} h {h} rho {rho}");
            }
        }
    }
}

#[test]
fn turning_away_fails_on_the_fiftieth_lost_step() {
    let e = EmbodimentConfig::default();
    let (mut s, _) = reset(&e, &Scenario::stationary(5)).unwrap();
    let mut first_lost = None;
    let mut t = 0;
    loop {
        let out = step(&mut s, ActionCommand::new(0.0, -1.0), &e).unwrap();
        t += 1;
        if out.info.lost && first_lost.is_none() {
            first_lost = Some(t);
        }
        if out.terminated {
            assert_eq!(out.info.termination, Some(Termination::Failure));
            assert_eq!(out.info.consecutive_lost, LOST_LIMIT);
            assert_eq!(t - first_lost.unwrap() + 1, LOST_LIMIT);
            break;
        }
        assert!(t < MAX_STEPS, "never failed");
    }
    assert!(matches!(step(&mut s, ActionCommand::new(0.0, 0.0), &e), Err(SimError::Terminated(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reward_peaks_only_at_the_desired_pose(rho in 0.0..20.0f64, theta in -PI..PI) {
        let r = reward(rho, theta);
        prop_assert!(r <= 1.0);
        prop_assert!((r - reward_oracle(rho, theta)).abs() < 1e-12);
        if (rho - 2.5).abs() > 1e-9 || theta.abs() > 1e-9 {
            prop_assert!(r < 1.0);
        }
    }

    #[test]
    fn rollouts_stay_within_limits(
        seed in 0u64..1000,
        h in 0.3..3.0f64,
        v_max in 0.5..2.0f64,
        actions in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..60),
    ) {
        let e = EmbodimentConfig::default().with_height(h).with_v_max(v_max);
        let sc = Scenario { seed, ..Scenario::default() };
        let (mut a, m0) = reset(&e, &sc).unwrap();
        let (mut b, _) = reset(&e, &sc).unwrap();
        prop_assert!(m0.data.iter().all(|&l| l == LABEL_BACKGROUND || l == LABEL_OBSTACLE || l == LABEL_TARGET));
        for (v, w) in actions {
            let cmd = ActionCommand::new(v, w);
            let oa = step(&mut a, cmd, &e).unwrap();
            let ob = step(&mut b, cmd, &e).unwrap();
            prop_assert_eq!(&oa.mask, &ob.mask);
            prop_assert!(oa.mask.data.iter().all(|&l| l == LABEL_BACKGROUND || l == LABEL_OBSTACLE || l == LABEL_TARGET));
            prop_assert!(a.agent_v.abs() <= e.v_max + 1e-12);
            prop_assert!(a.agent_omega.abs() <= e.omega_max + 1e-12);
            prop_assert!(oa.info.theta > -PI - 1e-12 && oa.info.theta <= PI + 1e-12);
            prop_assert!((oa.reward - reward(oa.info.rho, oa.info.theta)).abs() < 1e-12);
            if oa.terminated {
                break;
            }
        }
    }

    #[test]
    fn clamped_commands_are_normalized(v in prop::num::f64::ANY, w in prop::num::f64::ANY) {
        let c = ActionCommand::new(v, w).clamped();
        prop_assert!(c.v_norm.abs() <= 1.0 && c.omega_norm.abs() <= 1.0);
    }
}
