use std::time::Duration;

use crosswatch::controller::{ControlStrategy, ControllerConfig, FixedCycle};
use crosswatch::server::{LTE_LATENCY, WIFI_DIRECT_LATENCY};
use crosswatch::sim::{
    build_paper_scenarios, compare_controllers, run, Behavior, BranchSpec, EmergencySchedule, EventKind, Scenario,
    ScriptedVehicle, SimError, SimMetrics, VehicleKind,
};

fn empty_road(branches: usize) -> Scenario {
    Scenario {
        name: "empty".into(),
        branches: vec![BranchSpec { arrival_rate: 0.0, ..BranchSpec::default() }; branches],
        runner_probability: 0.0,
        duration: 120.0,
        ..Scenario::default()
    }
}

fn scripted(
    time: f64,
    branch: usize,
    kind: VehicleKind,
    behavior: Behavior,
    distance: f64,
    speed: f64,
) -> ScriptedVehicle {
    ScriptedVehicle { time, branch, kind, behavior, distance, speed }
}

#[test]
fn empty_road_has_zero_metrics() {
    let out = run(&empty_road(4), 1).unwrap();
    assert_eq!(out.metrics, SimMetrics::default());
    assert!(out.violations.is_empty());
}

#[test]
fn same_seed_same_log() {
    let s = Scenario { duration: 300.0, ..build_paper_scenarios().remove(3) };
    let a = run(&s, 9).unwrap();
    let b = run(&s, 9).unwrap();
    assert_eq!(a.events, b.events);
    assert_eq!(a.metrics, b.metrics);
    assert_ne!(a.events, run(&s, 10).unwrap().events);
}

#[test]
fn single_runner_is_detected_once() {
    let mut s = empty_road(4);
    s.controller = ControlStrategy::Fixed(FixedCycle { green: Duration::from_secs(30), ..FixedCycle::default() });
    s.scripted = vec![scripted(0.0, 1, VehicleKind::Normal, Behavior::Runner, 150.0, 50.0)];
    let out = run(&s, 0).unwrap();
    assert_eq!(out.count(EventKind::Detection), 1);
    assert_eq!(out.metrics.detections, 1);
    assert_eq!(out.metrics.runner_red_crossings, 1);
    assert_eq!(out.count(EventKind::Dispatch), 1);
    assert!(out.violations.is_empty(), "{:?}", out.violations);
}

#[test]
fn compliant_vehicle_waits_and_is_never_detected() {
    let mut s = empty_road(4);
    s.controller = ControlStrategy::Fixed(FixedCycle { green: Duration::from_secs(30), ..FixedCycle::default() });
    s.scripted = vec![scripted(0.0, 1, VehicleKind::Normal, Behavior::Compliant, 150.0, 50.0)];
    let out = run(&s, 0).unwrap();
    assert_eq!(out.metrics.detections, 0);
    // reaches the line around 11 s, green at 32 s plus the reaction delay
    assert!((19.0..23.0).contains(&out.metrics.normal.max_wait), "{}", out.metrics.normal.max_wait);
    assert_eq!(out.metrics.vehicles_exited, 1);
}

#[test]
fn end_to_end_notification_path() {
    let mut s = empty_road(4);
    s.controller = ControlStrategy::Fixed(FixedCycle { green: Duration::from_secs(30), ..FixedCycle::default() });
    s.scripted = vec![
        scripted(0.0, 1, VehicleKind::Normal, Behavior::Runner, 150.0, 50.0),
        scripted(0.0, 2, VehicleKind::Normal, Behavior::Compliant, 40.0, 30.0),
        scripted(0.0, 0, VehicleKind::Normal, Behavior::Compliant, 50.0, 40.0),
        scripted(10.5, 3, VehicleKind::Normal, Behavior::Compliant, 250.0, 40.0),
    ];
    let out = run(&s, 3).unwrap();
    assert!(out.violations.is_empty(), "{:?}", out.violations);
    let detection = out.events.iter().find(|e| e.kind == EventKind::Detection).unwrap();
    // ids follow (time, branch) order
    assert_eq!(detection.vehicle, Some(1));
    assert_eq!(out.count(EventKind::Detection), 1);
    assert_eq!(out.count(EventKind::Dispatch), 1);

    let notified: Vec<_> = out.deliveries.iter().filter(|d| d.path == crosswatch::server::DeliveryPath::Lte).collect();
    assert_eq!(notified.iter().map(|d| d.recipient).collect::<Vec<_>>(), vec![2]);
    for d in &notified {
        assert_eq!(d.offender, 1);
        assert_eq!(d.delivered - d.sent, LTE_LATENCY);
        assert_eq!(d.sent, Duration::from_millis(100) * detection.tick as u32);
    }
    for d in out.deliveries.iter().filter(|d| d.path == crosswatch::server::DeliveryPath::WifiDirect) {
        assert_eq!(d.delivered - d.sent, WIFI_DIRECT_LATENCY);
        assert_ne!(d.recipient, d.offender);
    }
}

#[test]
fn emergency_preempts_within_bound() {
    let mut s = empty_road(4);
    s.scripted = vec![scripted(20.0, 2, VehicleKind::Emergency, Behavior::Compliant, 100.0, 40.0)];
    let config = ControllerConfig::default();
    let out = run(&s, 0).unwrap();
    let green = out
        .events
        .iter()
        .find(|e| e.kind == EventKind::Green && e.branch == Some(2))
        .expect("emergency branch turns green");
    let waited = Duration::from_millis(100) * green.tick as u32 - Duration::from_secs(20);
    assert!(waited <= config.t_min + config.all_red + Duration::from_millis(100), "{waited:?}");
}

#[test]
fn metrics_agree_with_event_log() {
    let s = Scenario { duration: 900.0, runner_probability: 0.2, ..build_paper_scenarios().remove(0) };
    let out = run(&s, 4).unwrap();
    let m = &out.metrics;
    assert_eq!(m.vehicles_spawned as usize, out.count(EventKind::Spawn));
    assert_eq!(m.vehicles_exited as usize, out.count(EventKind::Exit));
    assert_eq!(m.vehicles_spawned, m.vehicles_exited + m.vehicles_present);
    assert_eq!(m.predictions as usize, out.count(EventKind::Prediction));
    assert_eq!(m.detections as usize, out.count(EventKind::Detection));
    assert_eq!(m.dispatches as usize, out.count(EventKind::Dispatch));
    assert_eq!(m.notifications.count as usize, out.count(EventKind::Notification));
    assert_eq!(m.warnings.count as usize, out.count(EventKind::Warning));
    assert_eq!(m.phase_switches as usize, out.count(EventKind::Switch));
    assert!(m.detections > 0, "expected some runners through red");
    assert!(out.violations.is_empty(), "{:?}", out.violations);
    assert!(out.metrics_json().contains("\"vehicles_spawned\""));
    assert_eq!(out.events_csv().lines().count(), out.events.len() + 1);
}

#[test]
fn invariants_hold_on_reference_scenarios() {
    for s in build_paper_scenarios() {
        let out = run(&s, 2).unwrap();
        assert!(out.violations.is_empty(), "{}: {:?}", s.name, &out.violations[..out.violations.len().min(3)]);
        assert_eq!(out.metrics.emergency.count, 15);
    }
}

#[test]
fn zero_traffic_comparison_is_a_tie() {
    let s = Scenario { emergencies: EmergencySchedule::default(), ..empty_road(3) };
    let seeds: Vec<u64> = (0..10).collect();
    let c = compare_controllers(&s, &seeds).unwrap();
    assert_eq!(c.static_mean_wait, 0.0);
    assert_eq!(c.dynamic_mean_wait, 0.0);
    assert_eq!(c.emergency_reduction(), 0.0);
    assert!(matches!(compare_controllers(&s, &seeds[..3]), Err(SimError::Config(_))));
}

#[test]
fn symmetric_load_dynamic_is_not_worse() {
    let s =
        Scenario { emergencies: EmergencySchedule::default(), duration: 900.0, ..build_paper_scenarios().remove(3) };
    let seeds: Vec<u64> = (0..10).collect();
    let c = compare_controllers(&s, &seeds).unwrap();
    assert!(c.dynamic_mean_wait <= c.static_mean_wait * 1.05, "{}", c.to_table());
    assert_eq!(c.violations, 0);
}
