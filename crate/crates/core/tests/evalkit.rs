use ctxtrack::evalkit::*;
use ctxtrack::tracksim::{ActionCommand, EmbodimentConfig, Mask, Scenario, TargetMotion, LABEL_TARGET, LOST_LIMIT};
use proptest::prelude::*;

mod common;

fn r_dev_oracle(a: common::PixBox, b: common::PixBox) -> f64 {
    common::r_dev_oracle(16, a, b)
}

fn rect(c0: usize, r0: usize, c1: usize, r1: usize) -> Mask {
    let mut m = Mask::blank(16, 16);
    for r in r0..=r1 {
        for c in c0..=c1 {
            m.data[r * 16 + c] = LABEL_TARGET;
        }
    }
    m
}

#[test]
fn mr_hand_traces() {
    let base = (4, 4, 7, 9);
    let moved = (6, 5, 9, 10);
    let grown = (3, 3, 8, 10);
    let masks = vec![rect(4, 4, 7, 9), rect(6, 5, 9, 10), rect(3, 3, 8, 10), Mask::blank(16, 16)];
    let want = (1.0 + r_dev_oracle(base, moved) + r_dev_oracle(base, grown) + 0.0) / 4.0;
    assert!((mr_metric(&masks).unwrap() - want).abs() < 1e-9);

    let still = vec![rect(4, 4, 7, 9); 20];
    assert!((mr_metric(&still).unwrap() - 1.0).abs() < 1e-12);

    // a box that disappears for the second half halves the visible mean
    let mut half: Vec<Mask> = (0..10).map(|i| if i % 2 == 0 { rect(4, 4, 7, 9) } else { rect(5, 4, 8, 9) }).collect();
    let visible = (5.0 + 5.0 * r_dev_oracle(base, (5, 4, 8, 9))) / 10.0;
    half.extend(std::iter::repeat_n(Mask::blank(16, 16), 10));
    assert!((mr_metric(&half).unwrap() - 0.5 * visible).abs() < 1e-9);

    let init = BoundingBox { cx: 0.5, cy: 0.5, w: 0.2, h: 0.4 };
    let shifted = BoundingBox { cx: 0.8, ..init };
    assert!((r_dev(&shifted, &init) - 1.0 / 1.3).abs() < 1e-9);

    assert!(matches!(mr_metric(&[]), Err(EvalError::EmptyTrace)));
    assert!(matches!(mr_metric(&[Mask::blank(16, 16)]), Err(EvalError::EmptyInitialMask)));
}

#[test]
fn turning_away_fails_on_the_fiftieth_consecutive_lost_step() {
    let e = EmbodimentConfig::default();
    for seed in 0..4 {
        let sc = Scenario { seed, motion: TargetMotion::Stationary, obstacle_count: 0, ..Scenario::default() };
        let mut ctrl = ConstantController(ActionCommand::new(0.0, 1.0));
        let r = run_episode(&mut ctrl, &e, &sc, true).unwrap();
        assert!(!r.success);
        let first_lost = r.trace.iter().position(|s| s.lost).unwrap();
        assert!(r.trace[first_lost..].iter().all(|s| s.lost));
        assert_eq!(r.trace.len() - first_lost, LOST_LIMIT as usize);
        assert!(!rejudge_success(&r.trace, LOST_LIMIT));
    }
}

#[test]
fn zero_action_holds_a_stationary_target_in_every_height() {
    let spec = GridSpec {
        speeds: vec![0.0],
        motion: TargetMotion::Stationary,
        obstacle_count: 0,
        ..GridSpec::default()
    };
    let report = run_grid(&spec, || ConstantController(ActionCommand::new(0.0, 0.0))).unwrap();
    assert_eq!(report.cells.len(), 4);
    for c in &report.cells {
        assert_eq!((c.ar, c.el, c.sr), (500.0, 500.0, 1.0));
    }
    assert_eq!(report.sr.std, 0.0);
}

#[test]
fn pid_baseline_degrades_with_target_speed() {
    let spec = GridSpec {
        heights: vec![1.0],
        speeds: vec![0.5, 3.0],
        episodes_per_cell: 6,
        ..GridSpec::default()
    };
    let report = run_grid(&spec, PidTracker::default).unwrap();
    let slow = report.cell(1.0, 0.5).unwrap().sr;
    let fast = report.cell(1.0, 3.0).unwrap().sr;
    assert!(slow > fast, "slow {slow} fast {fast}");
}

#[test]
fn grid_csv_layout() {
    let spec = GridSpec { heights: vec![0.3, 3.0], speeds: vec![1.0], episodes_per_cell: 2, ..GridSpec::default() };
    let csv = run_grid(&spec, PidTracker::default).unwrap().to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "height,speed,episodes,AR,EL,SR");
    assert_eq!(lines.len(), 1 + 2 + 2);
    assert!(lines[3].starts_with(",,mean,") && lines[4].starts_with(",,std,"));
    assert!(lines.iter().all(|l| l.split(',').count() == 6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mr_lies_in_the_unit_interval(boxes in prop::collection::vec(
        prop::option::weighted(0.8, (0usize..12, 0usize..12, 1usize..5, 1usize..5)), 1..30)) {
        let mut masks: Vec<Mask> = boxes
            .iter()
            .map(|b| b.map_or_else(|| Mask::blank(16, 16), |(c, r, w, h)| rect(c, r, c + w - 1, r + h - 1)))
            .collect();
        masks[0] = rect(2, 2, 5, 5);
        let mr = mr_metric(&masks).unwrap();
        prop_assert!(mr > 0.0 && mr <= 1.0);
        let constant = masks.iter().all(|m| *m == masks[0]);
        prop_assert_eq!(constant, (mr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lost_limit_relaxation_is_monotone(lost in prop::collection::vec(prop::bool::weighted(0.3), 500)) {
        let trace: Vec<_> = lost
            .iter()
            .enumerate()
            .map(|(t, &l)| ctxtrack::tracksim::TraceRecord {
                t: t as u32 + 1, rho: 2.5, theta: 0.0, v_norm: 0.0, omega_norm: 0.0, reward: 1.0, lost: l,
            })
            .collect();
        for k in 1..20u32 {
            prop_assert!(!rejudge_success(&trace, k) || rejudge_success(&trace, k + 1));
        }
    }
}
