//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crosswatch::auth::{build_registry, deanonymize, mac_sign, mac_verify, AuthenticatedMessage, Identity, Verdict};
use crosswatch::codec::*;
use crosswatch::controller::{branch_weight, select_priority_branch, BranchState, ControlStrategy, FixedCycle};
use crosswatch::estimator::{generate_traces, stop_distance, train, ClassifierModel, Label, SpeedTrace, TrainConfig};
use crosswatch::server::{DeliveryPath, BLE_LATENCY, LTE_LATENCY, WIFI_DIRECT_LATENCY};
use crosswatch::sim::{
    build_paper_scenarios, compare_controllers, run, Behavior, BranchSpec, EventKind, Scenario, ScriptedVehicle,
    VehicleKind,
};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, started: Instant, result: Check) -> Check {
    let took = started.elapsed();
    match result {
        Ok(d) if took <= limit => Ok(format!("{d}; {:.2}s", took.as_secs_f64())),
        Ok(d) => Err(format!("{d}; took {:.2}s, limit {}s", took.as_secs_f64(), limit.as_secs())),
        Err(d) => Err(format!("{d}; {:.2}s", took.as_secs_f64())),
    }
}

/// Weight in half-units, written out longhand.
fn oracle_halves(n: u32, e: u32, p: bool, cap: u32) -> u64 {
    let doubled = 2.0 * f64::from(n) + 2.0 * f64::from(e) * f64::from(cap) + if p { f64::from(cap) } else { 0.0 };
    doubled as u64
}

fn weight_oracle() -> Check {
    let mut cases = 0;
    for cap in 1..=20u32 {
        for n in 0..=cap {
            for e in 0..=n {
                for p in [false, true] {
                    let got = branch_weight(&BranchState::new(0, n, e, p, cap).unwrap(), cap).total.halves();
                    let want = oracle_halves(n, e, p, cap);
                    if got != want {
                        return Err(format!("N={cap} n={n} e={e} p={p}: {got} != {want} halves"));
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} cases equal"))
}

fn emergency_preemption() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut trials = 0;
    while trials < 500 {
        let count = rng.gen_range(3..=4);
        let cap = 15;
        let states: Vec<BranchState> = (0..count)
            .map(|i| {
                let n = rng.gen_range(0..=cap);
                let e = if n > 0 && rng.gen_bool(0.3) { rng.gen_range(1..=n.min(2)) } else { 0 };
                BranchState::new(i, n, e, rng.gen_bool(0.5), cap).unwrap()
            })
            .collect();
        if !states.iter().any(|s| s.emergency > 0) {
            continue;
        }
        trials += 1;
        let weights: Vec<_> = states.iter().map(|s| branch_weight(s, cap)).collect();
        let pick = select_priority_branch(&weights, &states).unwrap();
        if states[pick].emergency == 0 {
            return Err(format!("picked branch {pick} without emergency in {states:?}"));
        }
    }
    Ok(format!("{trials}/{trials} weight sets pick an emergency branch"))
}

fn stop_distances() -> Check {
    let cases = [(0.0, 0.0), (50.0, 27.5), (100.0, 80.0)];
    for (v, want) in cases {
        let got = stop_distance(v).unwrap();
        if (got - want).abs() > 1e-9 {
            return Err(format!("stop_distance({v}) = {got}, want {want}"));
        }
    }
    Ok("0 / 27.5 / 80 m".into())
}

fn random_plate(rng: &mut ChaCha8Rng) -> Plate {
    Plate::from_bytes(std::array::from_fn(|_| rng.gen_range(0x20..0x7f))).unwrap()
}

fn random_event(rng: &mut ChaCha8Rng) -> EventPacket {
    EventPacket {
        pseudo_id: rng.gen(),
        timestamp: rng.gen(),
        lat_q: rng.gen(),
        lon_q: rng.gen(),
        speed: rng.gen(),
        direction: rng.gen_range(0..=36000),
        plate: random_plate(rng),
        mac: rng.gen(),
    }
}

fn wire_sizes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sizes = [
        encode_beacon(&canonical::beacon()).unwrap().len(),
        encode_event(&canonical::event()).unwrap().len(),
        encode_notification(&canonical::notification()).unwrap().len(),
    ];
    if sizes != [208, 248, 272] {
        return Err(format!("sizes {sizes:?}"));
    }
    for _ in 0..10_000 {
        let b = Beacon {
            light_id: rng.gen(),
            bearing: rng.gen_range(0..=360),
            state: LightState::from_code(rng.gen_range(0..4)).unwrap(),
            auth_tag: rng.gen(),
        };
        let bits = encode_beacon(&b).unwrap();
        if bits.len() != 208 || decode_beacon(&bits).as_ref() != Ok(&b) {
            return Err(format!("beacon {b:?}"));
        }
        let e = random_event(&mut rng);
        let bits = encode_event(&e).unwrap();
        if bits.len() != 248 || decode_event(&bits).as_ref() != Ok(&e) {
            return Err(format!("event {e:?}"));
        }
        let n = NotificationPacket {
            light_id: rng.gen(),
            event_type: if rng.gen() { EventType::Detection } else { EventType::Prediction },
            lat_q: rng.gen(),
            lon_q: rng.gen(),
            speed: rng.gen(),
            direction: rng.gen_range(0..=36000),
            plate: random_plate(&mut rng),
            timestamp: rng.gen(),
            server_sig: rng.gen(),
        };
        let bits = encode_notification(&n).unwrap();
        if bits.len() != 272 || decode_notification(&bits).as_ref() != Ok(&n) {
            return Err(format!("notification {n:?}"));
        }
    }
    Ok("208/248/272 bits, 3x10^4 round trips".into())
}

fn latency_ratio() -> Check {
    let ble = BLE_LATENCY.as_secs_f64() * 1e3;
    let wifi = WIFI_DIRECT_LATENCY.as_secs_f64() * 1e3;
    let ratio = wifi / ble;
    ensure(
        (ble - 232.7065).abs() < 1e-9
            && (wifi - 569.3793).abs() < 1e-9
            && (ratio - 2.447).abs() <= 0.001
            && ratio > 2.0,
        format!("{wifi:.4} ms / {ble:.4} ms = {ratio:.4}"),
    )
}

fn anonymity_structure() -> Check {
    let mut pairs = 0;
    for k in [2usize, 3, 4, 8] {
        let ids: Vec<Identity> = (0..k * k).map(|i| Identity(format!("v{i}"))).collect();
        let reg = build_registry(ids.clone(), k, k as u64).unwrap();
        let creds: Vec<_> = ids.iter().map(|id| reg.credentials(id).unwrap()).collect();
        for &pid in reg.pseudo_ids() {
            let covered = creds.iter().filter(|c| c.pseudo_id == pid).count();
            if covered != k {
                return Err(format!("k={k}: pseudo-ID {pid:08x} covers {covered}"));
            }
            for key in 0..k {
                let matching: Vec<_> =
                    ids.iter().zip(&creds).filter(|(_, c)| c.pseudo_id == pid && c.key_index == key).collect();
                let resolved = deanonymize(&reg, pid, key).map_err(|e| format!("k={k}: {e}"))?;
                if matching.len() != 1 || matching[0].0 != resolved {
                    return Err(format!("k={k}: ({pid:08x}, {key}) matches {}", matching.len()));
                }
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} pairs resolve to exactly one identity"))
}

fn mac_integrity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ids: Vec<Identity> = (0..16).map(|i| Identity(format!("v{i}"))).collect();
    let reg = build_registry(ids.clone(), 4, 1).unwrap();
    let window = Duration::from_secs(10);
    let as_message = |e: &EventPacket| AuthenticatedMessage {
        payload: e.payload().unwrap(),
        pseudo_id: e.pseudo_id,
        timestamp: e.timestamp,
        mac: e.mac,
    };

    let mut flips = 0;
    for i in 0..64 {
        let creds = reg.credentials(&ids[i % ids.len()]).unwrap();
        let mut event = random_event(&mut rng);
        event.pseudo_id = creds.pseudo_id;
        event.timestamp = 1_700_000_000 + rng.gen_range(0..1000);
        event.mac = mac_sign(&creds, &event.payload().unwrap(), event.timestamp).mac;
        if !mac_verify(reg.keys(), &as_message(&event), event.timestamp, window).is_valid() {
            return Err(format!("untouched packet {i} rejected"));
        }
        let bits = encode_event(&event).unwrap();
        for bit in 0..bits.len() {
            let mut bad = bits.clone();
            bad.flip(bit);
            flips += 1;
            // a flip the decoder rejects is also a failed verification
            if let Ok(decoded) = decode_event(&bad) {
                if mac_verify(reg.keys(), &as_message(&decoded), event.timestamp, window).is_valid() {
                    return Err(format!("packet {i} bit {bit} still verifies"));
                }
            }
        }
    }

    let creds = reg.credentials(&ids[0]).unwrap();
    let mut msg = mac_sign(&creds, b"forged payload", 1_700_000_000);
    let mut forgeries = 0;
    for _ in 0..1_000_000 {
        msg.mac = rng.gen();
        if let Verdict::Valid { .. } = mac_verify(reg.keys(), &msg, 1_700_000_000, window) {
            forgeries += 1;
        }
    }
    ensure(forgeries == 0, format!("{flips} bit flips rejected, {forgeries}/10^6 forgeries accepted"))
}

fn accuracy(model: &ClassifierModel, traces: &[SpeedTrace]) -> f64 {
    let correct = traces.iter().filter(|t| (model.margin(t).unwrap() > 0.0) == (t.label == Some(Label::Ran))).count();
    correct as f64 / traces.len() as f64
}

fn classifier() -> Check {
    let clean = train(&generate_traces(0, 20, 0.0).unwrap(), &TrainConfig::default()).unwrap();
    let clean_acc = accuracy(&clean, &generate_traces(1000, 100, 0.0).unwrap());
    let mut worst = 1.0f64;
    for seed in 0..5 {
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let data = generate_traces(seed, 200, 2.0).unwrap();
        let model = train(&data, &config).unwrap();
        if train(&data, &config).unwrap() != model {
            return Err(format!("seed {seed} trains differently twice"));
        }
        worst = worst.min(accuracy(&model, &generate_traces(seed + 1000, 200, 2.0).unwrap()));
    }
    ensure(
        clean_acc == 1.0 && worst >= 0.95,
        format!("noiseless {:.1}%, noisy worst seed {:.1}%", clean_acc * 100.0, worst * 100.0),
    )
}

fn static_vs_dynamic() -> Check {
    let seeds: Vec<u64> = (0..10).collect();
    let mut wins = 0.0;
    let mut summary = Vec::new();
    let mut all_reduce = true;
    let scenarios = build_paper_scenarios();
    for s in &scenarios {
        let c = compare_controllers(s, &seeds).map_err(|e| e.to_string())?;
        wins += c.emergency_win_rate * seeds.len() as f64;
        all_reduce &= c.emergency_reduction() > 0.0;
        summary.push(format!("{} {:.1}s->{:.1}s", s.name, c.static_emergency_wait, c.dynamic_emergency_wait));
    }
    let rate = wins / (scenarios.len() * seeds.len()) as f64;
    ensure(rate >= 0.95 && all_reduce, format!("win rate {:.0}%; {}", rate * 100.0, summary.join(", ")))
}

fn end_to_end() -> Check {
    let scripted = |time, branch, behavior, distance, speed| ScriptedVehicle {
        time,
        branch,
        kind: VehicleKind::Normal,
        behavior,
        distance,
        speed,
    };
    let s = Scenario {
        name: "pipeline".into(),
        branches: vec![BranchSpec { arrival_rate: 0.0, ..BranchSpec::default() }; 4],
        runner_probability: 0.0,
        duration: 120.0,
        controller: ControlStrategy::Fixed(FixedCycle { green: Duration::from_secs(30), ..FixedCycle::default() }),
        scripted: vec![
            scripted(0.0, 1, Behavior::Runner, 150.0, 50.0),
            scripted(0.0, 2, Behavior::Compliant, 40.0, 30.0),
            scripted(0.0, 0, Behavior::Compliant, 50.0, 40.0),
            scripted(10.5, 3, Behavior::Compliant, 250.0, 40.0),
        ],
        ..Scenario::default()
    };
    let out = run(&s, 3).map_err(|e| e.to_string())?;
    let detections = out.count(EventKind::Detection);
    let dispatches = out.count(EventKind::Dispatch);
    if detections != 1 || dispatches != 1 || !out.violations.is_empty() {
        return Err(format!("{detections} detections, {dispatches} dispatches, {} violations", out.violations.len()));
    }
    let lte: Vec<_> = out.deliveries.iter().filter(|d| d.path == DeliveryPath::Lte).collect();
    let recipients: Vec<u64> = lte.iter().map(|d| d.recipient).collect();
    let exact = out.deliveries.iter().all(|d| {
        let want = match d.path {
            DeliveryPath::Lte => LTE_LATENCY,
            DeliveryPath::WifiDirect => WIFI_DIRECT_LATENCY,
            DeliveryPath::Ble => BLE_LATENCY,
        };
        d.delivered - d.sent == want && d.recipient != d.offender
    });
    // vehicle 2 waits 40 m from the line; vehicle 3 is still out of range
    ensure(
        recipients == [2] && exact,
        format!("1 detection, 1 dispatch, LTE recipients {recipients:?}, latencies exact: {exact}"),
    )
}

fn invariants() -> Check {
    let mut ticks = 0;
    let mut runs = 0;
    for (i, s) in build_paper_scenarios().iter().cycle().enumerate() {
        if ticks >= 1_000_000 {
            break;
        }
        let out = run(s, 100 + i as u64).map_err(|e| e.to_string())?;
        if let Some(v) = out.violations.first() {
            return Err(format!("{}: {:?} at tick {}: {}", s.name, v.kind, v.tick, v.detail));
        }
        ticks += out.metrics.vehicle_ticks;
        runs += 1;
    }
    Ok(format!("{ticks} vehicle-ticks over {runs} runs, 0 violations"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("branch weight matches oracle", Duration::from_secs(1), weight_oracle),
        ("emergency branch always preempts", Duration::from_secs(1), emergency_preemption),
        ("stop distance values", Duration::from_secs(1), stop_distances),
        ("wire sizes and round trips", Duration::from_secs(5), wire_sizes),
        ("BLE vs Wi-Fi Direct latency ratio", Duration::from_secs(1), latency_ratio),
        ("k-anonymity structure", Duration::from_secs(2), anonymity_structure),
        ("MAC integrity", Duration::from_secs(30), mac_integrity),
        ("classifier accuracy", Duration::from_secs(30), classifier),
        ("dynamic beats static for emergencies", Duration::from_secs(120), static_vs_dynamic),
        ("end-to-end notification pipeline", Duration::from_secs(5), end_to_end),
        ("simulator invariants", Duration::from_secs(60), invariants),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        match within(*limit, started, check()) {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
