use crosswatch::estimator::*;

fn accuracy(model: &ClassifierModel, traces: &[SpeedTrace]) -> f64 {
    let correct = traces
        .iter()
        .filter(|t| {
            let ran = model.margin(t).unwrap() > 0.0;
            ran == (t.label == Some(Label::Ran))
        })
        .count();
    correct as f64 / traces.len() as f64
}

#[test]
fn noiseless_data_is_separated_perfectly() {
    for seed in 0..5 {
        let train_set = generate_traces(seed, 20, 0.0).unwrap();
        let held_out = generate_traces(seed + 1000, 50, 0.0).unwrap();
        let model = train(&train_set, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        assert_eq!(accuracy(&model, &held_out), 1.0, "seed {seed}");
    }
}

#[test]
fn noisy_data_stays_accurate() {
    for seed in 0..5 {
        let train_set = generate_traces(seed, 200, 2.0).unwrap();
        let held_out = generate_traces(seed + 1000, 200, 2.0).unwrap();
        let model = train(&train_set, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        let acc = accuracy(&model, &held_out);
        assert!(acc >= 0.95, "seed {seed}: {acc}");
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = generate_traces(3, 50, 2.0).unwrap();
    let config = TrainConfig { seed: 11, ..TrainConfig::default() };
    let a = train(&data, &config).unwrap();
    let b = train(&data, &config).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let c = train(&data, &TrainConfig { seed: 12, ..config }).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}

#[test]
fn objective_never_increases() {
    let data = generate_traces(8, 100, 3.0).unwrap();
    let (_, history) = train_with_history(&data, &TrainConfig::default()).unwrap();
    assert!(!history.is_empty());
    for pair in history.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{} -> {}", pair[0], pair[1]);
    }
}

#[test]
fn traces_survive_csv() {
    let data = generate_traces(1, 10, 1.0).unwrap();
    let back = read_traces_csv(&write_traces_csv(&data)).unwrap();
    assert_eq!(back.len(), data.len());
    for (a, b) in data.iter().zip(&back) {
        assert_eq!(a.label, b.label);
        for (x, y) in a.speeds().iter().zip(b.speeds()) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn model_text_round_trip_preserves_decisions() {
    let data = generate_traces(2, 40, 2.0).unwrap();
    let model = train(&data, &TrainConfig::default()).unwrap();
    let back = ClassifierModel::from_text(&model.to_text()).unwrap();
    for t in &data {
        assert_eq!(model.margin(t).unwrap() > 0.0, back.margin(t).unwrap() > 0.0);
    }
}
