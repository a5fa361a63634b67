use super::*;
use crate::choreography::DrumLayout;

fn quiet_physics() -> PhysicsConfig {
    PhysicsConfig {
        randomize: false,
        curriculum_active: false,
        ..PhysicsConfig::default()
    }
}

fn one_hand(physics: PhysicsConfig, head: Vec3, pitch: f64) -> WorldConfig {
    let init = HandInit::holding_head(head, std::f64::consts::FRAC_PI_2, pitch, &physics);
    WorldConfig {
        physics,
        layout: DrumLayout::single_snare(),
        hands: vec![init],
    }
}

fn hold(nominal: f64) -> Action {
    Action {
        hands: vec![HandAction {
            wrist_delta: Vec3::zeros(),
            closure_targets: [nominal; 5],
        }],
    }
}

#[test]
fn reset_is_deterministic() {
    let cfg = one_hand(PhysicsConfig::default(), Vec3::new(0.0, 0.4, 0.06), -0.15);
    let a = reset(&cfg, 7).unwrap();
    let b = reset(&cfg, 7).unwrap();
    assert_eq!(a, b);
    let c = reset(&cfg, 8).unwrap();
    assert_ne!(a.physics.gain_scale, c.physics.gain_scale);
}

#[test]
fn randomization_off_is_nominal() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.06), -0.15);
    let s = reset(&cfg, 3).unwrap();
    assert_eq!(s.physics, PhysicsParams::nominal());
}

#[test]
fn reset_holds_stick_at_requested_head() {
    let head = Vec3::new(0.0, 0.4, 0.06);
    let cfg = one_hand(quiet_physics(), head, -0.15);
    let s = reset(&cfg, 0).unwrap();
    let hw = &s.hands[0];
    assert!((hw.stick.head_pos - head).norm() < 1e-12);
    assert!(hw.hand.stick_held);
    assert_eq!(hw.hand.grip, 1.0);
}

#[test]
fn bad_config_rejected() {
    let mut cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.06), -0.15);
    cfg.physics.grasp_fraction = 1.5;
    assert!(matches!(reset(&cfg, 0), Err(WorldError::BadConfig(_))));
    cfg.physics.grasp_fraction = 0.5;
    cfg.hands.clear();
    assert!(matches!(reset(&cfg, 0), Err(WorldError::BadConfig(_))));
}

#[test]
fn action_shape_checked() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.06), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    let err = step(&mut s, &Action::zero(2), &cfg);
    assert_eq!(err, Err(WorldError::ActionShape { expected: 1, got: 2 }));
}

#[test]
fn open_hand_lets_head_fall() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.3), 0.0);
    let mut s = reset(&cfg, 0).unwrap();
    let z0 = s.hands[0].stick.head_pos.z;
    step(&mut s, &Action::zero(1), &cfg).unwrap();
    let w1 = s.hands[0].stick.pitch_vel;
    step(&mut s, &Action::zero(1), &cfg).unwrap();
    let w2 = s.hands[0].stick.pitch_vel;
    assert!(w1 < 0.0 && w2 < w1, "pitch should accelerate downward: {w1} {w2}");
    assert!(s.hands[0].stick.head_pos.z < z0);
}

#[test]
fn contact_disabled_by_curriculum() {
    let physics = PhysicsConfig {
        randomize: false,
        ..PhysicsConfig::default()
    };
    // head starts below the drumhead plane
    let cfg = one_hand(physics, Vec3::new(0.0, 0.4, -0.01), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    assert!(!s.curriculum_contact_enabled);
    for _ in 0..5 {
        let ev = step(&mut s, &hold(0.9), &cfg).unwrap();
        assert!(ev.drum_contacts.is_empty());
    }
    set_contact_curriculum(&mut s, 10_000, 10_000);
    let ev = step(&mut s, &hold(0.9), &cfg).unwrap();
    assert!(!ev.drum_contacts.is_empty());
}

#[test]
fn curriculum_boundary() {
    let cfg = one_hand(PhysicsConfig::default(), Vec3::new(0.0, 0.4, 0.06), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    set_contact_curriculum(&mut s, 9_999, 10_000);
    assert!(!s.curriculum_contact_enabled);
    set_contact_curriculum(&mut s, 10_000, 10_000);
    assert!(s.curriculum_contact_enabled);
    set_contact_curriculum(&mut s, 0, 0);
    assert!(s.curriculum_contact_enabled);
}

#[test]
fn squeezing_never_loses_grip_without_impacts() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.3), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    s.hands[0].hand.grip = 0.5;
    let mut last = 0.5;
    for _ in 0..20 {
        step(&mut s, &hold(1.0), &cfg).unwrap();
        assert!(s.hands[0].hand.grip >= last);
        last = s.hands[0].hand.grip;
    }
    assert!(last > 0.5);
}

#[test]
fn grip_loss_equals_k_slip_times_impulse() {
    let mut physics = quiet_physics();
    physics.k_slip = 0.5;
    let cfg = one_hand(physics, Vec3::new(0.0, 0.4, 0.01), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    s.hands[0].stick.pitch_vel = -4.0;
    let mut total = 0.0;
    let mut any = false;
    for _ in 0..4 {
        let ev = step(&mut s, &hold(0.9), &cfg).unwrap();
        for c in &ev.drum_contacts {
            assert!(c.normal_impulse >= 0.0);
            total += c.normal_impulse;
            any = true;
        }
    }
    assert!(any, "the stick should have struck the snare");
    let lost = 1.0 - s.hands[0].hand.grip;
    assert!((lost - 0.5 * total).abs() < 1e-12, "lost {lost} impulse {total}");
}

#[test]
fn hard_impacts_drop_the_stick() {
    let mut physics = quiet_physics();
    physics.k_slip = 100.0;
    let cfg = one_hand(physics, Vec3::new(0.0, 0.4, 0.02), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    s.hands[0].stick.pitch_vel = -6.0;
    for _ in 0..6 {
        let ev = step(&mut s, &hold(0.9), &cfg).unwrap();
        if !s.hands[0].hand.stick_held {
            assert_eq!(ev.fingertip_contacts[0], 0);
        }
    }
    assert!(!s.hands[0].hand.stick_held);
    let z = s.hands[0].stick.head_pos.z;
    for _ in 0..10 {
        step(&mut s, &hold(0.9), &cfg).unwrap();
    }
    assert!(s.hands[0].stick.head_pos.z < z);
}

#[test]
fn held_stick_energy_never_grows() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.3), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    s.hands[0].stick.pitch_vel = 3.0;
    let p = &cfg.physics;
    let mut e = s.hands[0].stick_energy(p);
    for _ in 0..40 {
        step(&mut s, &hold(0.9), &cfg).unwrap();
        let e1 = s.hands[0].stick_energy(p);
        assert!(e1 <= e + 1e-3, "{e} -> {e1}");
        e = e1;
    }
}

#[test]
fn open_hand_energy_never_grows() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.3), 0.3);
    let mut s = reset(&cfg, 0).unwrap();
    let p = &cfg.physics;
    let open = Action::zero(1);
    // let the fingers open fully first
    for _ in 0..3 {
        step(&mut s, &open, &cfg).unwrap();
    }
    let mut e = s.hands[0].stick_energy(p);
    let mut held = s.hands[0].hand.stick_held;
    for _ in 0..30 {
        step(&mut s, &open, &cfg).unwrap();
        let e1 = s.hands[0].stick_energy(p);
        // held and free energies have different references
        if s.hands[0].hand.stick_held == held {
            assert!(e1 <= e + 1e-3, "{e} -> {e1}");
        }
        held = s.hands[0].hand.stick_held;
        e = e1;
    }
}

#[test]
fn rigid_stick_while_held() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.1), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    for k in 0..40 {
        let t = k as f64 * 0.3;
        let a = Action {
            hands: vec![HandAction {
                wrist_delta: Vec3::new(0.03 * t.sin(), 0.02 * t.cos(), -0.04 * (2.0 * t).sin()),
                closure_targets: [0.9, 0.9, 0.5 + 0.5 * t.sin(), 0.6, 0.7],
            }],
        };
        step(&mut s, &a, &cfg).unwrap();
        let hw = &s.hands[0];
        if hw.hand.stick_held {
            let len = (hw.stick.head_pos - hw.stick.tail_pos).norm();
            assert!((len - cfg.physics.stick_length).abs() < 1e-6);
        }
    }
}

#[test]
fn resting_contact_is_a_single_hit() {
    let mut physics = quiet_physics();
    physics.k_slip = 0.0;
    let cfg = one_hand(physics, Vec3::new(0.0, 0.4, 0.01), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    s.hands[0].stick.pitch_vel = -3.0;
    // open the last three fingers so the spring presses the head down
    let press = Action {
        hands: vec![HandAction {
            wrist_delta: Vec3::zeros(),
            closure_targets: [0.9, 0.9, 1.0, 1.0, 1.0],
        }],
    };
    let mut hits = 0;
    for _ in 0..10 {
        let ev = step(&mut s, &press, &cfg).unwrap();
        hits += detect_hits(&ev, cfg.physics.hit_speed_threshold).len();
    }
    assert_eq!(hits, 1);
    assert!(s.hands[0].contact.is_some(), "head should be resting on the snare");
}

#[test]
fn detect_hits_thresholds() {
    let c = |speed: f64, onset: bool| DrumContact {
        hand: 0,
        drum: DrumId::Snare,
        normal_impulse: 0.01,
        tip_speed_at_impact: speed,
        onset,
        substep: 0,
    };
    let ev = ContactEvents {
        fingertip_contacts: vec![2],
        drum_contacts: vec![c(0.8, true), c(0.1, true), c(0.0, false)],
    };
    assert_eq!(detect_hits(&ev, 0.2), vec![(0, DrumId::Snare)]);
}

#[test]
fn fingertip_closure_is_linear() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.1), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    let p = &cfg.physics;
    let hw = &mut s.hands[0];
    hw.hand.closure = [1.0, 0.0, 0.5, 1.0, 0.0];
    let tips = fingertip_positions(hw, p);
    let st = fingers::stations(hw, p);
    let d: Vec<f64> = (0..5).map(|i| (tips[i] - st[i]).norm()).collect();
    assert!(d[Finger::Thumb as usize] < 1e-15);
    assert!((d[Finger::Index as usize] - p.fingertip_open_offset).abs() < 1e-12);
    assert!((d[Finger::Middle as usize] - 0.5 * p.fingertip_open_offset).abs() < 1e-12);
    assert!((st[0] - hw.fulcrum()).norm() < 1e-15);
}

#[test]
fn only_a_firm_squeeze_counts_fingertips() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.3), -0.15);
    let mut s = reset(&cfg, 0).unwrap();
    let ev = step(&mut s, &hold(0.9), &cfg).unwrap();
    assert_eq!(ev.fingertip_contacts, vec![0]);
    let ev = step(&mut s, &hold(1.0), &cfg).unwrap();
    assert_eq!(ev.fingertip_contacts, vec![5]);
    let ev = step(&mut s, &hold(0.0), &cfg).unwrap();
    assert!(ev.fingertip_contacts[0] < 5);
}

#[test]
fn observation_noise_statistics() {
    let p = PhysicsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut obs = vec![0.0; 100_000];
    apply_observation_noise(&mut obs, &[0..100_000], &p, &mut rng);
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let var = obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    assert!((0.049..=0.051).contains(&sd), "sd {sd}");
}

#[test]
fn observation_noise_respects_ranges_and_toggle() {
    let mut p = PhysicsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut obs = vec![1.0; 10];
    apply_observation_noise(&mut obs, &[2..4], &p, &mut rng);
    assert!(obs[..2].iter().chain(&obs[4..]).all(|&x| x == 1.0));
    assert!(obs[2] != 1.0 && obs[3] != 1.0);
    p.randomize = false;
    let mut clean = vec![1.0; 10];
    apply_observation_noise(&mut clean, &[0..10], &p, &mut rng);
    assert!(clean.iter().all(|&x| x == 1.0));
}

#[test]
fn episode_parameters_in_range() {
    let p = PhysicsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let e = sample_episode_physics(&p, &mut rng);
        assert!((0.9..=1.1).contains(&e.gain_scale));
        assert!((-0.2..=0.2).contains(&e.friction_offset()));
    }
}

#[test]
fn trace_line_has_one_field_group_per_hand() {
    let cfg = one_hand(quiet_physics(), Vec3::new(0.0, 0.4, 0.1), -0.15);
    let s = reset(&cfg, 0).unwrap();
    assert_eq!(s.trace_line().split('\t').count(), 6);
}

