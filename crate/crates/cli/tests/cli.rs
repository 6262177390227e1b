use std::path::PathBuf;
use std::process::{Command, Output};

fn crosswatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crosswatch")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).to_string_lossy().into_owned()
}

#[test]
fn help_exits_zero_and_lists_flags() {
    let out = crosswatch(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for sub in ["simulate", "compare", "train", "classify", "gen-traces", "codec-fixtures", "registry"] {
        assert!(text.contains(sub), "{sub}");
    }
    let sim_help = stdout(&crosswatch(&["simulate", "--help"]));
    for flag in ["--seed", "--out", "--set", "--pretty"] {
        assert!(sim_help.contains(flag), "{flag}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let missing = crosswatch(&["simulate", "no-such-file.json", "--seed", "1"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());
    assert!(missing.stdout.is_empty());

    assert_eq!(crosswatch(&["simulate", &scenario("case1.json")]).status.code(), Some(1));
    assert_eq!(crosswatch(&["bogus"]).status.code(), Some(1));
    let unknown = crosswatch(&["simulate", &scenario("case1.json"), "--seed", "1", "--set", "colour=red"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown key"));
    assert_eq!(crosswatch(&["compare", &scenario("case1.json"), "--seeds", "3"]).status.code(), Some(1));
}

#[test]
fn codec_fixtures_match_sizes() {
    let out = crosswatch(&["codec-fixtures"]);
    assert_eq!(out.status.code(), Some(0));
    let sizes: Vec<usize> = stdout(&out).lines().map(|l| l.split_once(' ').unwrap().1.len() / 2).collect();
    assert_eq!(sizes, vec![26, 31, 34]);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |sub: &str| {
        vec![
            "simulate".to_string(),
            scenario("case2.json"),
            "--seed".into(),
            "5".into(),
            "--set".into(),
            "duration=300".into(),
            "--out".into(),
            dir.path().join(sub).to_string_lossy().into_owned(),
        ]
    };
    for sub in ["a", "b"] {
        let a: Vec<String> = args(sub);
        let out = crosswatch(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["metrics.json", "events.csv", "audit.ndjson"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/metrics.json")).unwrap()).unwrap();
    assert!(metrics["vehicles_spawned"].as_u64().unwrap() > 0);
}

#[test]
fn compare_favours_dynamic_for_emergencies() {
    let out = crosswatch(&["compare", &scenario("case3.json"), "--seeds", "10", "--set", "duration=900"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stat = report["static_emergency_wait"].as_f64().unwrap();
    let dynamic = report["dynamic_emergency_wait"].as_f64().unwrap();
    assert!(dynamic < stat, "{dynamic} >= {stat}");
    assert_eq!(report["runs"].as_array().unwrap().len(), 10);
}

#[test]
fn trace_train_classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.csv");
    let model = dir.path().join("model.txt");
    let path = |p: &PathBuf| p.to_string_lossy().into_owned();

    let gen = crosswatch(&["gen-traces", "--seed", "3", "--count", "30", "--noise", "1", "--out", &path(&traces)]);
    assert_eq!(gen.status.code(), Some(0));
    let again = crosswatch(&["gen-traces", "--seed", "3", "--count", "30", "--noise", "1"]);
    assert_eq!(std::fs::read(&traces).unwrap(), again.stdout);

    assert_eq!(crosswatch(&["train", &path(&traces), "--out", &path(&model)]).status.code(), Some(0));
    let out = crosswatch(&["classify", &path(&model), &path(&traces)]);
    assert_eq!(out.status.code(), Some(0));
    let csv = stdout(&out);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 60);
    assert!(csv.starts_with("index,label,kind,confidence,hard_rule\n"));

    let summary = stdout(&crosswatch(&["classify", &path(&model), &path(&traces), "--pretty"]));
    assert!(summary.ends_with("/60 labelled traces classified correctly\n"), "{summary}");
}

#[test]
fn registry_listing_is_seeded() {
    let a = crosswatch(&["registry", "--k", "3", "--seed", "9"]);
    let b = crosswatch(&["registry", "--k", "3", "--seed", "9"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("k 3\n"));
    assert_ne!(a.stdout, crosswatch(&["registry", "--k", "3", "--seed", "10"]).stdout);
    assert_eq!(crosswatch(&["registry", "--k", "0", "--seed", "1"]).status.code(), Some(1));
}
