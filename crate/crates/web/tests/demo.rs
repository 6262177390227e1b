use crosswatch_web::{simulate, stop_curve, weights};
use serde_json::Value;

#[test]
fn emergency_branch_is_selected() {
    let json =
        weights(r#"[{"vehicles":12},{"vehicles":1,"emergency":1},{"vehicles":15,"priority":true}]"#, 15).unwrap();
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["selected"], 1);
    assert_eq!(v["weights"][1]["total"], 16.0);
    assert_eq!(v["weights"][2]["total"], 22.5);
}

#[test]
fn weights_reject_bad_counts() {
    assert!(weights(r#"[{"vehicles":3,"emergency":4}]"#, 15).is_err());
    assert!(weights("not json", 15).is_err());
}

#[test]
fn stop_curve_hits_reference_points() {
    let v: Vec<[f64; 2]> = serde_json::from_str(&stop_curve(100.0, 10.0).unwrap()).unwrap();
    assert_eq!(v.len(), 11);
    assert_eq!(v[5], [50.0, 27.5]);
    assert_eq!(v[10], [100.0, 80.0]);
    assert!(stop_curve(10.0, 0.0).is_err());
}

#[test]
fn short_run_reports_phases() {
    let v: Value = serde_json::from_str(&simulate(3, 1, 300.0, true).unwrap()).unwrap();
    assert_eq!(v["branches"], 4);
    assert!(!v["greens"].as_array().unwrap().is_empty());
    assert!(v["metrics"]["vehicles_spawned"].as_u64().unwrap() > 0);
    assert_eq!(simulate(3, 1, 300.0, true).unwrap(), simulate(3, 1, 300.0, true).unwrap());
    assert!(simulate(5, 1, 300.0, true).is_err());
    assert!(simulate(1, 1, 5000.0, false).is_err());
}
