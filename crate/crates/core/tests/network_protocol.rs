use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use oamnet::network::{
    default_mirror_table, detect_preamble, sender_preamble, Delivery, InportMux, MirrorAngles, MuxEvent,
    NetworkConfig, NoiseModel, User,
};
use oamnet::polarization::{decode_bb84, measure, outcome_zero_probability, Basis, Bb84State, JonesVector};
use oamnet::protocol::{run_over_link, run_session, Eavesdropper, SessionConfig};
use oamnet::scenario::{parse_scenario_str, serialize_scenario, OutputTargets, Scenario};
use oamnet::sorter::PhotonRecord;
use oamnet::{PiAngle, SimRng};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn four_user_ids() -> Vec<String> {
    NetworkConfig::four_user().users().iter().map(|u| u.id.clone()).collect()
}

#[test]
fn noiseless_transmission_reaches_each_addressee() {
    let net = NetworkConfig::four_user();
    for seed in [0u64, 99, 123_456] {
        let mut rng = SimRng::seed_from_u64(seed);
        for id in four_user_ids() {
            let ell = net.encode_address(&id).unwrap();
            let depth = net.frame_depth(&id).unwrap();
            for seq in 0..10_000u64 {
                let photon = PhotonRecord::new(ell, oamnet::polarization::canonical_state(Bb84State::D45), "x", seq);
                match net.transmit(photon, &mut rng).unwrap() {
                    Delivery::Arrived { user, record, .. } => {
                        assert_eq!(user, id);
                        assert_eq!(record.qwp_depth, depth);
                    }
                    Delivery::Lost => panic!("noiseless photon lost"),
                }
            }
        }
    }
}

#[test]
fn preamble_round_trip_for_every_pair() {
    let net = NetworkConfig::four_user();
    let mut rng = SimRng::seed_from_u64(1);
    for sender in four_user_ids() {
        for receiver in four_user_ids() {
            let depth = net.frame_depth(&receiver).unwrap();
            let decoded: Vec<Bb84State> = sender_preamble(&sender, &receiver, &net)
                .unwrap()
                .into_iter()
                .map(|p| match net.transmit(p, &mut rng).unwrap() {
                    Delivery::Arrived { user, record, .. } => {
                        assert_eq!(user, receiver);
                        decode_bb84(&record.polarization, depth).unwrap()
                    }
                    Delivery::Lost => panic!("lost"),
                })
                .collect();
            assert!(detect_preamble(&decoded), "{sender} -> {receiver}: {decoded:?}");
            let swapped = [decoded[1], decoded[0]];
            assert!(!detect_preamble(&swapped));
        }
    }
}

#[test]
fn inport_lease_is_exclusive_under_contention() {
    let net = NetworkConfig::four_user();
    let mux = InportMux::new();
    let inside = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for (t, id) in four_user_ids().into_iter().enumerate() {
            let (net, mux, inside) = (&net, &mux, &inside);
            scope.spawn(move || {
                let mut rng = SimRng::seed_from_u64(t as u64);
                for _ in 0..300 {
                    let lease = if rng.random::<bool>() {
                        mux.acquire(&id, net).ok()
                    } else {
                        mux.try_acquire(&id, net).ok()
                    };
                    if let Some(lease) = lease {
                        assert_eq!(inside.fetch_add(1, Ordering::SeqCst), 0);
                        std::hint::spin_loop();
                        inside.fetch_sub(1, Ordering::SeqCst);
                        lease.release();
                    }
                }
            });
        }
    });
    // transcript audit: grants and releases strictly alternate
    let mut holder: Option<String> = None;
    let mut grants = 0;
    for event in mux.log() {
        match event {
            MuxEvent::Granted { sender, alpha1, alpha2 } => {
                assert!(holder.is_none(), "{sender} granted while {holder:?} holds the lease");
                assert_eq!(MirrorAngles::new(alpha1, alpha2), net.mirror_angles(&sender).unwrap());
                holder = Some(sender);
                grants += 1;
            }
            MuxEvent::Released { sender } => {
                assert_eq!(holder.take(), Some(sender));
            }
            MuxEvent::Busy { holder: h, .. } => assert!(!h.is_empty()),
        }
    }
    assert!(holder.is_none());
    assert!(grants > 0);
}

#[test]
fn every_ordered_pair_agrees_on_a_key() {
    let net = NetworkConfig::four_user();
    let mux = InportMux::new();
    let ids = four_user_ids();
    let mut seed = 0;
    for a in &ids {
        for b in ids.iter().filter(|b| *b != a) {
            seed += 1;
            let out = run_session(&SessionConfig::new("pair", a.as_str(), b.as_str(), 2_000, seed), &net, &mux).unwrap();
            assert_eq!(out.result.qber_estimate, 0.0);
            assert_eq!(out.result.key_bits_sender, out.result.key_bits_receiver);
            assert!(out.result.sender_identified);
        }
    }
}

#[test]
fn replay_is_bit_identical() {
    let net = NetworkConfig::four_user()
        .with_noise(NoiseModel { ell_crosstalk_prob: 0.05, pol_flip_prob: 0.02, loss_prob: 0.1 })
        .unwrap();
    let mut cfg = SessionConfig::new("r", "Bob", "David", 5_000, 77);
    cfg.eavesdropper = Eavesdropper::InterceptResend { fraction: 0.3 };
    let a = run_session(&cfg, &net, &InportMux::new()).unwrap();
    let b = run_session(&cfg, &net, &InportMux::new()).unwrap();
    assert_eq!(a, b);
    cfg.seed = 78;
    assert_ne!(run_session(&cfg, &net, &InportMux::new()).unwrap().result, a.result);
}

#[test]
fn noise_shows_up_in_the_error_rate() {
    let net = NetworkConfig::four_user()
        .with_noise(NoiseModel { pol_flip_prob: 0.05, ..NoiseModel::NOISELESS })
        .unwrap();
    let out = run_session(&SessionConfig::new("n", "Alice", "Bob", 40_000, 5), &net, &InportMux::new()).unwrap();
    assert!((out.result.sifted_error_rate - 0.05).abs() < 0.01, "{}", out.result.sifted_error_rate);

    let lossy = NetworkConfig::four_user()
        .with_noise(NoiseModel { loss_prob: 0.5, ..NoiseModel::NOISELESS })
        .unwrap();
    let out = run_session(&SessionConfig::new("l", "Alice", "Bob", 20_000, 5), &lossy, &InportMux::new()).unwrap();
    let detected = out.result.raw_count as f64 / 20_000.0;
    assert!((detected - 0.5).abs() < 0.02);
    assert_eq!(out.result.qber_estimate, 0.0);
}

#[test]
fn qber_grows_with_interception() {
    let link = oamnet::network::FixedDepthLink { receiver: "Bob".into(), ell: 1, depth: 3 };
    let mut last = -1.0f64;
    for (i, fraction) in [0.0, 0.25, 0.5, 0.75, 1.0].into_iter().enumerate() {
        let mut cfg = SessionConfig::new("m", "Alice", "Bob", 40_000, 1000 + i as u64);
        cfg.eavesdropper = Eavesdropper::InterceptResend { fraction };
        let r = run_over_link(&cfg, &link).unwrap().result;
        let q = r.sifted_error_rate;
        let sigma = (0.25 * fraction * (1.0 - 0.25 * fraction) / r.sifted_count as f64).sqrt();
        assert!(q + 3.0 * sigma >= last, "fraction {fraction}: {q} after {last}");
        assert!((q - 0.25 * fraction).abs() <= 3.0 * sigma.max(1e-4), "fraction {fraction}: {q}");
        last = q;
    }
}

fn angle() -> impl Strategy<Value = PiAngle> {
    (-8i64..=8, prop_oneof![Just(1i64), Just(2), Just(4), Just(3)]).prop_map(|(n, d)| PiAngle::new(n, d))
}

prop_compose! {
    fn arb_scenario()(
        ells in proptest::collection::btree_set(-8i64..=8, 2..=5),
        angles in proptest::collection::vec((angle(), angle()), 5),
        crosstalk in 0.0f64..0.5,
        flip in 0.0f64..1.0,
        loss in 0.0f64..0.5,
        use_qwp in any::<bool>(),
        sessions in proptest::collection::vec(
            (0usize..5, 1usize..5, 1usize..100_000, any::<u64>(), proptest::option::of(0.0f64..=1.0), any::<bool>(), 0.01f64..0.99, 0.0f64..=1.0),
            0..4,
        ),
    ) -> Scenario {
        let users: Vec<User> = ells.iter().enumerate().map(|(i, &ell)| User::new(format!("u{i}"), ell)).collect();
        let mirrors: BTreeMap<String, MirrorAngles> = users
            .iter()
            .zip(&angles)
            .map(|(u, (a, b))| (u.id.clone(), MirrorAngles::new(*a, *b)))
            .collect();
        let noise = NoiseModel { ell_crosstalk_prob: crosstalk, pol_flip_prob: flip, loss_prob: loss };
        let network = NetworkConfig::with_synthesized_sorter(users.clone(), mirrors, noise, 8, use_qwp).unwrap();
        let n = users.len();
        let sessions = sessions
            .into_iter()
            .enumerate()
            .map(|(i, (s, off, photons, seed, eve, comp, sample, abort))| {
                let sender = &users[s % n].id;
                let receiver = &users[(s % n + 1 + off % (n - 1)) % n].id;
                let mut cfg = SessionConfig::new(format!("s{i}"), sender.as_str(), receiver.as_str(), photons, seed);
                cfg.eavesdropper = eve.map_or(Eavesdropper::None, |fraction| Eavesdropper::InterceptResend { fraction });
                cfg.compensate_depth = comp;
                cfg.sample_fraction = sample;
                cfg.abort_threshold = abort;
                cfg
            })
            .collect();
        Scenario { network, sessions, output: OutputTargets::default() }
    }
}

proptest! {
    #[test]
    fn scenario_text_round_trips(scenario in arb_scenario()) {
        let text = serialize_scenario(&scenario);
        let parsed = parse_scenario_str(&text, "generated").unwrap();
        prop_assert_eq!(parsed, scenario);
    }

    #[test]
    fn measurement_outcomes_are_a_distribution(
        re0 in -1.0f64..1.0, im0 in -1.0f64..1.0, re1 in -1.0f64..1.0, im1 in -1.0f64..1.0,
        circular in any::<bool>(), seed in any::<u64>(),
    ) {
        prop_assume!(re0.abs() + im0.abs() + re1.abs() + im1.abs() > 1e-3);
        let j = JonesVector::new(Complex64::new(re0, im0), Complex64::new(re1, im1));
        let basis = if circular { Basis::Circular } else { Basis::Diagonal };
        let p0 = outcome_zero_probability(&j, basis);
        let other = Bb84State::new(basis, 1);
        let p1 = oamnet::polarization::canonical_state(other).inner(&j).norm_sqr();
        prop_assert!((p0 + p1 - 1.0).abs() < 1e-12);
        let (bit, after) = measure(&j, basis, &mut SimRng::seed_from_u64(seed));
        prop_assert_eq!(decode_bb84(&after, 0).unwrap(), Bb84State::new(basis, bit));
    }
}

#[test]
fn default_mirror_table_covers_four_users() {
    let table = default_mirror_table();
    assert_eq!(table.len(), 4);
    for id in four_user_ids() {
        assert!(table.contains_key(&id));
    }
}

#[test]
fn bundled_scenarios_run_cleanly() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for name in ["four_user.scenario", "one_to_any.scenario"] {
        let scenario = oamnet::scenario::parse_scenario(&dir.join(name)).unwrap();
        let run = oamnet::runner::run_scenario(
            &scenario,
            oamnet::runner::RunOptions { photons: Some(1_000), ..Default::default() },
        );
        assert!(!run.any_error(), "{name}");
        assert!(run.records.iter().all(|r| r.verdict == "ok"), "{name}");
    }
}
