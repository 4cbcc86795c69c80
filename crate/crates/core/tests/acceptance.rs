//! Acceptance gate. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion does.
//!
//! `cargo test -p oamnet-core --test acceptance -- --nocapture`

use std::f64::consts::FRAC_1_SQRT_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64;
use oamnet::mode_algebra::{admissible_ells, apply_rotation, lg_coefficients, lg_mode, rotation_matrix};
use oamnet::network::{detect_preamble, sender_preamble, Delivery, FixedDepthLink, InportMux, NetworkConfig};
use oamnet::polarization::{decode_bb84, qwp_power, state_equivalent_up_to_phase, Bb84State};
use oamnet::protocol::{run_over_link, run_session, Eavesdropper, SessionConfig, Verdict};
use oamnet::report::report_to_string;
use oamnet::runner::{run_scenario, sort_histogram, RunOptions};
use oamnet::scenario::{parse_scenario_str, FOUR_USER_SCENARIO};
use oamnet::sorter::{build_sorter_tree, SorterNode, SorterTree};
use oamnet::SimRng;
use rand::{Rng, SeedableRng};

type Criterion = fn() -> Result<String, String>;

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn lg_expansion_order_two() -> Result<String, String> {
    let got = lg_coefficients(2, 0).map_err(|e| e.to_string())?;
    let want = [c(0.5, 0.0), c(0.0, -FRAC_1_SQRT_2), c(-0.5, 0.0)];
    let err = got.amplitudes().iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    ensure(err < 1e-12, format!("max |a - a_ref| = {err:.2e} (tol 1e-12)"))
}

fn rotation_closed_form() -> Result<String, String> {
    let mut rng = SimRng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (c2, s2, k, cc) = (a.cos().powi(2), a.sin().powi(2), (2.0 * a).sin() / 2f64.sqrt(), (2.0 * a).cos());
        let want = [[c2, k, s2], [-k, cc, k], [s2, -k, c2]];
        let m = rotation_matrix(2, a).map_err(|e| e.to_string())?;
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                worst = worst.max((m.get(i, j) - c(*w, 0.0)).norm());
            }
        }
    }
    ensure(worst < 1e-12, format!("100 angles, max entry error {worst:.2e} (tol 1e-12)"))
}

fn eigenphase_law() -> Result<String, String> {
    let mut rng = SimRng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for order in 0..=6u32 {
        for ell in admissible_ells(order) {
            let p = (order - ell.unsigned_abs() as u32) / 2;
            let mode = lg_mode(ell, p).map_err(|e| e.to_string())?;
            for _ in 0..20 {
                let alpha: f64 = rng.random_range(-7.0..7.0);
                let got = apply_rotation(&mode, alpha).map_err(|e| e.to_string())?;
                let want = mode.scaled(Complex64::from_polar(1.0, -(ell as f64) * alpha));
                worst = worst.max(got.max_abs_diff(&want).unwrap_or(f64::INFINITY));
                cases += 1;
            }
        }
    }
    ensure(worst < 1e-10, format!("{cases} (mode, angle) cases, max error {worst:.2e} (tol 1e-10)"))
}

fn qwp_table() -> Result<String, String> {
    // Reference vectors written out independently of the library.
    let s = FRAC_1_SQRT_2;
    let vec_of = |b: Bb84State| match (b.basis.letter(), b.bit) {
        ('D', 0) => oamnet::polarization::JonesVector::new(c(s, 0.0), c(s, 0.0)),
        ('D', _) => oamnet::polarization::JonesVector::new(c(s, 0.0), c(-s, 0.0)),
        (_, 0) => oamnet::polarization::JonesVector::new(c(s, 0.0), c(0.0, s)),
        _ => oamnet::polarization::JonesVector::new(c(s, 0.0), c(0.0, -s)),
    };
    let table = [
        (Bb84State::D45, [Bb84State::L, Bb84State::D135, Bb84State::R]),
        (Bb84State::D135, [Bb84State::R, Bb84State::D45, Bb84State::L]),
        (Bb84State::L, [Bb84State::D135, Bb84State::R, Bb84State::D45]),
        (Bb84State::R, [Bb84State::D45, Bb84State::L, Bb84State::D135]),
    ];
    let mut ok = 0;
    let mut misses = Vec::new();
    for (col, images) in table {
        for (k, image) in images.iter().enumerate() {
            let got = qwp_power(&vec_of(col), k as u32 + 1);
            if state_equivalent_up_to_phase(&got, &vec_of(*image)) {
                ok += 1;
            } else {
                misses.push(format!("P^{} {col}", k + 1));
            }
        }
    }
    ensure(ok == 12, format!("{ok}/12 entries {misses:?}"))
}

fn leaf_probabilities(tree: &SorterTree, ell: i64) -> Vec<f64> {
    let mut out = vec![0.0; tree.leaves().len()];
    let mut stack = vec![(tree.root(), 1.0f64)];
    while let Some((node, w)) = stack.pop() {
        match node {
            SorterNode::Leaf(leaf) => out[leaf.id] += w,
            SorterNode::Stage { stage, ports } => {
                let p0 = ((ell as f64 * stage.alpha.radians() + stage.delta_phi_c.radians()) / 2.0).cos().powi(2);
                stack.push((&ports[0], w * p0));
                stack.push((&ports[1], w * (1.0 - p0)));
            }
        }
    }
    out
}

fn sorter_four_addresses() -> Result<String, String> {
    let ells = [1, 2, 3, 4];
    let tree = build_sorter_tree(&ells, true).map_err(|e| e.to_string())?;
    let hist = sort_histogram(&tree, &ells, 10_000, 5);
    let mut leaves = std::collections::BTreeSet::new();
    let mut worst = 0.0f64;
    for h in &hist {
        let leaf = tree.leaf_for(h.ell).ok_or(format!("no leaf for {}", h.ell))?.id;
        leaves.insert(leaf);
        if h.counts[leaf] != 10_000 || h.stray {
            return Err(format!("ell {} counts {:?}", h.ell, h.counts));
        }
        worst = worst.max((leaf_probabilities(&tree, h.ell)[leaf] - 1.0).abs());
        worst = worst.max((tree.leaf_distribution(h.ell)[leaf] - 1.0).abs());
    }
    ensure(
        leaves.len() == 4 && worst < 1e-12,
        format!("4 distinct leaves, 10^4/10^4 photons each, exhaustive |P-1| <= {worst:.2e} (tol 1e-12)"),
    )
}

fn four_user_noiseless() -> Result<String, String> {
    let scenario = parse_scenario_str(FOUR_USER_SCENARIO, "four_user").map_err(|e| e.to_string())?;
    if !scenario.network.noise().is_noiseless() || scenario.sessions.len() != 12 {
        return Err("bundled scenario is not the 12-pair noiseless network".into());
    }
    let mux = InportMux::new();
    let (mut lo, mut hi) = (1.0f64, 0.0f64);
    for s in &scenario.sessions {
        let mut s = s.clone();
        s.photon_count = 10_000;
        let r = run_session(&s, &scenario.network, &mux).map_err(|e| format!("{}: {e}", s.id))?.result;
        let f = r.sift_fraction();
        lo = lo.min(f);
        hi = hi.max(f);
        if (f - 0.5).abs() > 0.02 || r.qber_estimate != 0.0 || r.key_bits_sender != r.key_bits_receiver || r.verdict != Verdict::Ok {
            return Err(format!("{}: sift {f:.4}, qber {}, verdict {:?}", s.id, r.qber_estimate, r.verdict));
        }
    }
    Ok(format!("12 pairs x 10^4 photons, sift fraction in [{lo:.4}, {hi:.4}], QBER 0, keys identical"))
}

/// Exact sifted error rate of intercept-resend at `fraction`, enumerated
/// over every preparation, interception basis, and outcome with plain
/// two-component vectors.
fn intercept_oracle(fraction: f64, depth: u32) -> f64 {
    let s = FRAC_1_SQRT_2;
    let states = |circular: bool| -> [[Complex64; 2]; 2] {
        if circular {
            [[c(s, 0.0), c(0.0, s)], [c(s, 0.0), c(0.0, -s)]]
        } else {
            [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]]
        }
    };
    let plate = |v: [Complex64; 2], d: u32| [v[0], v[1] * Complex64::i().powu(d)];
    let overlap = |a: [Complex64; 2], b: [Complex64; 2]| (a[0].conj() * b[0] + a[1].conj() * b[1]).norm_sqr();

    let mut err = 0.0;
    for alice_circ in [false, true] {
        for bit in 0..2 {
            let sent = states(alice_circ)[bit];
            let wrong = states(alice_circ)[1 - bit];
            let mut intercepted = 0.0;
            for eve_circ in [false, true] {
                for resent in states(eve_circ) {
                    intercepted += 0.5 * overlap(resent, sent) * overlap(plate(wrong, depth), plate(resent, depth));
                }
            }
            let direct = overlap(plate(wrong, depth), plate(sent, depth));
            err += 0.25 * (fraction * intercepted + (1.0 - fraction) * direct);
        }
    }
    err
}

fn intercept_resend() -> Result<String, String> {
    let net = NetworkConfig::four_user();
    let depth = net.frame_depth("Bob").map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for (fraction, lo, hi, seed) in [(1.0, 0.24, 0.26, 71u64), (0.5, 0.115, 0.135, 72)] {
        let oracle = intercept_oracle(fraction, depth);
        let mut cfg = SessionConfig::new("eve", "Alice", "Bob", 100_000, seed);
        cfg.eavesdropper = Eavesdropper::InterceptResend { fraction };
        let r = run_session(&cfg, &net, &InportMux::new()).map_err(|e| e.to_string())?.result;
        let q = r.sifted_error_rate;
        let sigma = (oracle * (1.0 - oracle) / r.sifted_count as f64).sqrt();
        let fine = (lo..=hi).contains(&q) && r.sifted_count >= 40_000 && (q - oracle).abs() <= 3.0 * sigma;
        ok &= fine;
        lines.push(format!(
            "f={fraction}: QBER {q:.4} in [{lo}, {hi}], oracle {oracle:.4}, {} sifted bits",
            r.sifted_count
        ));
    }
    ensure(ok, lines.join("; "))
}

fn depth_compensation() -> Result<String, String> {
    let mut notes = Vec::new();
    for depth in 0..=8u32 {
        let link = FixedDepthLink { receiver: "Bob".into(), ell: 2, depth };
        let mut cfg = SessionConfig::new("depth", "Alice", "Bob", 40_000, 800 + depth as u64);
        let r = run_over_link(&cfg, &link).map_err(|e| e.to_string())?.result;
        if r.sifted_error_rate != 0.0 || r.qber_estimate != 0.0 {
            return Err(format!("compensated d={depth}: QBER {}", r.sifted_error_rate));
        }
        cfg.compensate_depth = false;
        let r = run_over_link(&cfg, &link).map_err(|e| e.to_string())?.result;
        let q = r.sifted_error_rate;
        match depth % 4 {
            1 | 3 if (q - 0.5).abs() > 0.02 => return Err(format!("uncompensated d={depth}: QBER {q:.4}")),
            2 if q != 1.0 => return Err(format!("uncompensated d={depth}: QBER {q}")),
            0 if q != 0.0 => return Err(format!("uncompensated d={depth}: QBER {q}")),
            _ => {}
        }
        if depth % 2 == 1 || depth == 2 {
            notes.push(format!("d{depth}={q:.3}"));
        }
    }
    Ok(format!("compensated d=0..8 QBER 0; uncompensated {}", notes.join(" ")))
}

fn preamble_identification() -> Result<String, String> {
    let net = NetworkConfig::four_user();
    let mut rng = SimRng::seed_from_u64(9);
    let ids: Vec<String> = net.users().iter().map(|u| u.id.clone()).collect();
    let mut pairs = 0;
    for sender in &ids {
        for receiver in ids.iter().filter(|r| *r != sender) {
            let depth = net.frame_depth(receiver).map_err(|e| e.to_string())?;
            let mut decoded = Vec::new();
            for pulse in sender_preamble(sender, receiver, &net).map_err(|e| e.to_string())? {
                match net.transmit(pulse, &mut rng).map_err(|e| e.to_string())? {
                    Delivery::Arrived { user, record, .. } if &user == receiver => {
                        decoded.push(decode_bb84(&record.polarization, depth).map_err(|e| e.to_string())?)
                    }
                    other => return Err(format!("{sender}->{receiver}: {other:?}")),
                }
            }
            if !detect_preamble(&decoded) || detect_preamble(&[decoded[1], decoded[0]]) {
                return Err(format!("{sender}->{receiver}: {decoded:?}"));
            }
            let session = SessionConfig::new("pre", sender.as_str(), receiver.as_str(), 200, pairs);
            if !run_session(&session, &net, &InportMux::new()).map_err(|e| e.to_string())?.result.sender_identified {
                return Err(format!("{sender}->{receiver}: session did not identify sender"));
            }
            pairs += 1;
        }
    }
    let swapped = [Bb84State::L, Bb84State::R];
    ensure(
        pairs == 12 && !detect_preamble(&swapped),
        format!("R,L decoded for {pairs} sender/receiver pairs; L,R rejected"),
    )
}

fn scenario_replay() -> Result<String, String> {
    let scenario = parse_scenario_str(FOUR_USER_SCENARIO, "four_user").map_err(|e| e.to_string())?;
    let first = report_to_string(&run_scenario(&scenario, RunOptions::default()).records);
    let second = report_to_string(&run_scenario(&scenario, RunOptions::default()).records);
    let parallel = report_to_string(&run_scenario(&scenario, RunOptions { parallel: true, ..Default::default() }).records);
    ensure(
        first == second && first == parallel && first.lines().count() == 13,
        format!("{} report bytes identical across 2 sequential runs and 1 parallel run", first.len()),
    )
}

#[test]
fn acceptance() {
    // (name, check, runtime budget in ms)
    let criteria: [(&str, Criterion, u128); 10] = [
        ("1 lg(2,0) expansion", lg_expansion_order_two, 1),
        ("2 order-2 rotation closed form", rotation_closed_form, 100),
        ("3 eigenphase law N<=6", eigenphase_law, 1_000),
        ("4 quarter-wave-plate table", qwp_table, 1),
        ("5 sorter {1,2,3,4}", sorter_four_addresses, 1_000),
        ("6 four-user noiseless BB84", four_user_noiseless, 5_000),
        ("7 intercept-resend QBER", intercept_resend, 10_000),
        ("8 depth compensation", depth_compensation, 5_000),
        ("9 sender preamble", preamble_identification, 1_000),
        ("10 scenario replay", scenario_replay, u128::MAX),
    ];
    let mut failed = Vec::new();
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        let ms = elapsed.round() as u128;
        let timing = if budget == u128::MAX { format!("{ms} ms") } else { format!("{ms} ms, budget < {budget} ms") };
        let outcome = match outcome {
            Ok(detail) if elapsed >= budget as f64 => {
                Err(format!("{detail}; over runtime budget"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name:<32} {detail} [{timing}]"),
            Err(detail) => {
                println!("FAIL  {name:<32} {detail} [{timing}]");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
