use super::*;
use crate::rng;
use crate::tracksim::{self, Scenario, TargetMotion, RHO_STAR};

fn small_config(noise: f64, seed: u64) -> GenConfig {
    GenConfig {
        episodes_per_cell: 1,
        noise,
        seed,
        grid: EmbodimentGrid {
            heights: vec![0.5, 1.7],
            v_max: vec![1.0],
            ..EmbodimentGrid::default()
        },
        ..GenConfig::default()
    }
}

#[test]
fn expert_is_quiet_at_the_desired_pose() {
    let mut pid = PidExpert::new(PidGains::default());
    let mut a = ActionCommand::default();
    for _ in 0..20 {
        a = pid.act(RHO_STAR, 0.0);
    }
    assert_eq!((a.v_norm, a.omega_norm), (0.0, 0.0));
}

#[test]
fn expert_turns_toward_the_target() {
    let mut pid = PidExpert::new(PidGains::default());
    assert!(pid.act(RHO_STAR, 0.3).omega_norm > 0.0);
    pid.reset();
    assert!(pid.act(RHO_STAR, -0.3).omega_norm < 0.0);
}

#[test]
fn expert_integrator_is_bounded() {
    let gains = PidGains::default();
    let mut pid = PidExpert::new(gains);
    for _ in 0..10_000 {
        pid.act(100.0, 3.0);
    }
    // after the error vanishes only the clamped integral remains
    let a = pid.act(RHO_STAR, 0.0);
    assert!(a.v_norm <= gains.ki_rho * gains.integral_limit + 1e-9);
}

/// Steps needed for the expert to close from 5 m to within 0.2 m of the
/// desired distance on a static target (h = 1.0, v_max = 1.0).
fn settle_steps() -> Option<usize> {
    let e = tracksim::EmbodimentConfig::default();
    let (mut s, _) = tracksim::reset(&e, &Scenario::stationary(0)).unwrap();
    s.target_x = 5.0;
    let mut pid = PidExpert::new(PidGains::default());
    for k in 1..=200 {
        let p = tracksim::privileged_state(&s);
        tracksim::step(&mut s, pid.act(p.rho, p.theta), &e).unwrap();
        if (s.polar().0 - RHO_STAR).abs() < 0.2 {
            return Some(k);
        }
    }
    None
}

#[test]
fn expert_step_response() {
    let k = settle_steps().expect("expert never settled");
    eprintln!("settle steps {k}");
    assert!(k <= 100);
}

#[test]
fn grid_sizes_and_labels() {
    let cfg = GenConfig {
        episodes_per_cell: 4,
        noise: 0.1,
        seed: 3,
        ..GenConfig::default()
    };
    let eps = generate_dataset(&cfg).unwrap();
    assert_eq!(eps.len(), 36);
    let cells = cfg.grid.cells();
    for (i, ep) in eps.iter().enumerate() {
        let cell = &cells[i / 4];
        assert_eq!(ep.embodiment.camera_height, cell.camera_height);
        assert_eq!(ep.embodiment.v_max, cell.v_max);
        ep.check().unwrap();
        assert!(ep.max_reward_error() < 1e-9);
    }
    let bytes = format::encode(&eps);
    let m = DatasetManifest::describe(&cfg, &eps, &bytes);
    assert_eq!(m.episode_count, 36);
    assert_eq!(m.total_steps, eps.iter().map(|e| e.len()).sum::<usize>());
    assert_eq!(DatasetManifest::from_toml(&m.to_toml()).unwrap(), m);
}

#[test]
fn noiseless_generation_is_byte_identical() {
    let a = format::encode(&generate_dataset(&small_config(0.0, 9)).unwrap());
    let b = format::encode(&generate_dataset(&small_config(0.0, 9)).unwrap());
    assert_eq!(a, b);
}

#[test]
fn round_trip_is_exact() {
    let eps = generate_dataset(&small_config(0.2, 1)).unwrap();
    assert_eq!(format::decode(&format::encode(&eps)).unwrap(), eps);
    assert!(format::decode(&format::encode(&[])).unwrap().is_empty());
}

#[test]
fn corrupt_files_give_distinct_errors() {
    let eps = generate_dataset(&small_config(0.2, 1)).unwrap();
    let bytes = format::encode(&eps);
    assert!(matches!(format::decode(&bytes[..bytes.len() / 2]), Err(DatasetError::Truncated(_))));
    assert!(matches!(format::decode(&bytes[..5]), Err(DatasetError::BadMagic)));
    let mut flipped = bytes.clone();
    flipped[100] ^= 1;
    assert!(matches!(format::decode(&flipped), Err(DatasetError::Checksum)));
    let mut versioned = bytes.clone();
    versioned[8] = 9;
    assert!(matches!(format::decode(&versioned), Err(DatasetError::Version { found: 9, .. })));
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(format::decode(&magic), Err(DatasetError::BadMagic)));
}

#[test]
fn empty_grid_is_rejected() {
    let mut cfg = small_config(0.0, 0);
    cfg.grid.heights.clear();
    assert!(matches!(generate_dataset(&cfg), Err(DatasetError::Invalid(_))));
}

#[test]
fn sampler_stays_inside_episodes() {
    let eps = generate_dataset(&small_config(0.3, 2)).unwrap();
    let sampler = SequenceSampler::new(&eps, 24).unwrap();
    let mut r = rng::seeded(0);
    for s in sampler.batch(&mut r, 500) {
        assert!(s.start + s.len <= eps[s.episode].len());
    }
    assert!(SequenceSampler::new(&eps, 100_000).is_err());
}

#[test]
fn stationary_episodes_keep_motion_label_free() {
    let cfg = GenConfig {
        motion: TargetMotion::Stationary,
        ..small_config(0.0, 4)
    };
    for ep in generate_dataset(&cfg).unwrap() {
        assert_eq!(ep.len(), 500);
    }
}
