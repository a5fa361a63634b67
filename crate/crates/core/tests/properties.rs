use dexdrum::choreography::{PlanConfig, Vec3};
use dexdrum::eval::{f1_score, EpisodeTrace, HandRecord, PlayedHit};
use dexdrum::learner::{compose_residual, compute_gae};
use dexdrum::scenario::exercise_task;
use dexdrum::score::smf::score_to_smf;
use dexdrum::score::{parse_smf, DrumEvent, DrumId, DrumScore, ScheduledHit, ScheduledScore};
use dexdrum::selftest::{gae_oracle, gradient_rel_error};
use dexdrum::world::{reset, step, Action, HandAction, PhysicsConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Maximum bipartite matching by augmenting paths.
fn brute_matches(played: &[PlayedHit], sched: &ScheduledScore, window: usize) -> usize {
    let slots: Vec<(usize, ScheduledHit)> = sched.merged();
    let edges: Vec<Vec<usize>> = played
        .iter()
        .map(|p| {
            slots
                .iter()
                .enumerate()
                .filter(|(_, (h, s))| *h == p.hand && s.drum == p.drum && s.step.abs_diff(p.step) <= window)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    fn augment(i: usize, edges: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &edges[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, edges, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; slots.len()];
    (0..played.len())
        .filter(|&i| augment(i, &edges, &mut vec![false; slots.len()], &mut owner))
        .count()
}

fn drum(k: u8) -> DrumId {
    [DrumId::Snare, DrumId::Tom][k as usize % 2]
}

fn schedule_strategy() -> impl Strategy<Value = ScheduledScore> {
    (prop::collection::vec((0usize..2, 0usize..60, 0u8..2), 0..14), 0usize..4).prop_map(|(hits, w)| {
        let mut hands = vec![Vec::new(), Vec::new()];
        for (h, step, d) in hits {
            hands[h].push(ScheduledHit { step, drum: drum(d) });
        }
        for lane in &mut hands {
            lane.sort_by_key(|s: &ScheduledHit| s.step);
        }
        ScheduledScore {
            hands,
            window_halfwidth_steps: w,
            control_rate_hz: 50.0,
        }
    })
}

fn played_strategy() -> impl Strategy<Value = Vec<PlayedHit>> {
    prop::collection::vec((0usize..2, 0usize..60, 0u8..2), 0..14).prop_map(|v| {
        v.into_iter()
            .map(|(hand, step, d)| PlayedHit { hand, drum: drum(d), step })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gae_matches_n_step_mixture(
        steps in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, prop::bool::weighted(0.2)), 1..8),
        bootstrap in -2.0f64..2.0,
        gamma in 0.0f64..1.0,
        lambda in 0.0f64..1.0,
    ) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let (adv, ret) = compute_gae(&r, &v, &d, bootstrap, gamma, lambda).unwrap();
        let oracle = gae_oracle(&r, &v, &d, bootstrap, gamma, lambda);
        for t in 0..r.len() {
            prop_assert!((adv[t] - oracle[t]).abs() < 1e-12);
            prop_assert!((ret[t] - adv[t] - v[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_f1_finds_a_maximum_matching(sched in schedule_strategy(), played in played_strategy()) {
        let w = sched.window_halfwidth_steps;
        let f = f1_score(&played, &sched, w);
        let best = brute_matches(&played, &sched, w);
        prop_assert_eq!(f.true_pos, best);
        prop_assert_eq!(f.false_pos, played.len() - best);
        prop_assert_eq!(f.false_neg, sched.total_hits() - best);
        prop_assert!((0.0..=1.0).contains(&f.f1));
    }

    #[test]
    fn residual_stays_in_bounds_and_near_nominal(
        comps in prop::collection::vec((-1.0f64..1.0, -50.0f64..50.0, 0.0f64..0.5), 1..16),
    ) {
        let nominal: Vec<f64> = comps.iter().map(|c| c.0).collect();
        let raw: Vec<f64> = comps.iter().map(|c| c.1).collect();
        let scale: Vec<f64> = comps.iter().map(|c| c.2).collect();
        let lo = vec![-0.8; comps.len()];
        let hi = vec![0.8; comps.len()];
        let out = compose_residual(&nominal, &raw, &scale, &lo, &hi);
        for i in 0..out.len() {
            prop_assert!(out[i] >= lo[i] && out[i] <= hi[i]);
            let n = nominal[i].clamp(lo[i], hi[i]);
            prop_assert!((out[i] - n).abs() <= scale[i] + 1e-12);
        }
    }

    #[test]
    fn trace_dump_round_trips(
        actions in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 8), 1..6),
        pts in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let p = Vec3::new(pts[0], pts[1], pts[2]);
        let rec = HandRecord { held: true, head: p, tail: -p, ref_head: p, ref_tail: p, arm_force: p, wrist_vel: p };
        let trace = EpisodeTrace {
            steps: vec![vec![rec]; actions.len()],
            hits: vec![PlayedHit { hand: 0, drum: DrumId::Ride, step: 0 }],
            actions: actions.clone(),
            rewards: vec![0.25; actions.len()],
            drum_contacts: 1,
        };
        let back = EpisodeTrace::load(&trace.dump()).unwrap();
        prop_assert_eq!(&back.actions, &actions);
        prop_assert_eq!(&back.hits, &trace.hits);
        prop_assert_eq!(back.steps.len(), trace.steps.len());
        prop_assert!((back.steps[0][0].head - p).norm() < 1e-8);
    }

    #[test]
    fn midi_round_trip_keeps_onsets(
        gaps in prop::collection::vec(1u32..40, 1..12),
        drums in prop::collection::vec(0usize..5, 12),
    ) {
        let mut t = 0.0;
        let events: Vec<DrumEvent> = gaps
            .iter()
            .enumerate()
            .map(|(i, g)| {
                t += *g as f64 * 0.025;
                DrumEvent { time_s: t, drum: DrumId::PLAYABLE[drums[i]], velocity: 90 }
            })
            .collect();
        let score = DrumScore::new(events, t + 1.0, 120.0);
        let back = parse_smf(&score_to_smf(&score, 480)).unwrap();
        prop_assert_eq!(back.events.len(), score.events.len());
        for (a, b) in back.events.iter().zip(&score.events) {
            prop_assert_eq!(a.drum, b.drum);
            prop_assert!((a.time_s - b.time_s).abs() < 1.1e-3);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ppo_gradient_matches_finite_differences(seed in any::<u64>()) {
        let err = gradient_rel_error(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn plan_touches_every_hit_with_a_rigid_stick(bpm in 40.0f64..240.0, hits in 1usize..12) {
        let p = PhysicsConfig::default();
        let task = exercise_task(bpm, hits, &p).unwrap();
        let reference = &task.reference;
        prop_assert_eq!(task.schedule.total_hits(), hits);
        for (h, lane) in task.schedule.hands.iter().enumerate() {
            for hit in lane {
                let (head, _) = reference.at(h, hit.step);
                let pad = task.world.layout.pad(hit.drum).unwrap();
                prop_assert!(pad.height_above(&head).abs() < 1e-9);
            }
        }
        for hand in &reference.hands {
            for (a, b) in hand.head.iter().zip(&hand.tail) {
                prop_assert!(((a - b).norm() - p.stick_length).abs() < 1e-9);
            }
        }
        prop_assert!(reference.is_continuous(PlanConfig::unimanual().v_max));
    }

    #[test]
    fn held_stick_stays_rigid(
        seed in any::<u64>(),
        moves in prop::collection::vec((prop::collection::vec(-0.05f64..0.05, 3), prop::collection::vec(0.0f64..1.0, 5)), 1..30),
    ) {
        let p = PhysicsConfig { curriculum_active: false, ..PhysicsConfig::default() };
        let task = exercise_task(120.0, 4, &p).unwrap();
        let cfg = &task.world;
        let mut s = reset(cfg, seed).unwrap();
        for (dw, cl) in &moves {
            let a = Action {
                hands: vec![HandAction {
                    wrist_delta: Vec3::new(dw[0], dw[1], dw[2]),
                    closure_targets: [cl[0], cl[1], cl[2], cl[3], cl[4]],
                }],
            };
            step(&mut s, &a, cfg).unwrap();
            let hw = &s.hands[0];
            if hw.hand.stick_held {
                let axis = hw.stick.head_pos - hw.stick.tail_pos;
                prop_assert!((axis.norm() - p.stick_length).abs() < 1e-6);
                let to_head = (hw.stick.head_pos - hw.fulcrum()).norm();
                prop_assert!((to_head - p.grasp_fraction * p.stick_length).abs() < 1e-6);
            }
        }
    }
}
