//! Linear soft-margin classifier trained by stochastic subgradient descent
//! on the regularised hinge loss
//!
//! ```text
//! J(w, b) = lambda/2 * |w|^2 + 1/n * sum_i max(0, 1 - y_i (w . x_i + b)),   lambda = 1 / (C n)
//! ```
//!
//! Each epoch takes one shuffled pass of per-example steps of size
//! `1 / (lambda t)`, then sets the bias to its exact minimiser for the new
//! weights. An epoch whose end point raises `J` is discarded, so the
//! objective never increases from one epoch to the next.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::{Label, SpeedTrace};
use super::{EstimatorError, SPEED_SCALE_KMH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 200, seed: 0, threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl ClassifierModel {
    pub fn new(weights: Vec<f64>, bias: f64, threshold: f64) -> Result<Self, EstimatorError> {
        if weights.is_empty() {
            return Err(EstimatorError::InvalidArgument("model needs at least one weight".into()));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(EstimatorError::InvalidArgument(format!("threshold must be in (0, 1], got {threshold}")));
        }
        Ok(Self { weights, bias, threshold })
    }

    pub fn bucket_count(&self) -> usize {
        self.weights.len()
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self, EstimatorError> {
        Self::new(self.weights.clone(), self.bias, threshold)
    }

    /// Signed distance-like score; positive means "ran the light".
    pub fn margin(&self, trace: &SpeedTrace) -> Result<f64, EstimatorError> {
        if trace.bucket_count() != self.weights.len() {
            return Err(EstimatorError::InvalidArgument(format!(
                "model expects {} buckets, trace has {}",
                self.weights.len(),
                trace.bucket_count()
            )));
        }
        Ok(score(&self.weights, self.bias, &features(trace)))
    }

    /// Logistic squashing of the margin.
    pub fn confidence(&self, trace: &SpeedTrace) -> Result<f64, EstimatorError> {
        Ok(logistic(self.margin(trace)?))
    }

    /// Bucket count, threshold, bias, then one weight per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.weights.len());
        let _ = writeln!(out, "{}", self.threshold);
        let _ = writeln!(out, "{}", self.bias);
        for w in &self.weights {
            let _ = writeln!(out, "{w}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, EstimatorError> {
        let lines: Vec<_> = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
        let number = |index: usize, what: &str| -> Result<f64, EstimatorError> {
            let (n, line) = lines.get(index).ok_or_else(|| EstimatorError::Parse {
                line: text.lines().count() + 1,
                reason: format!("missing {what}"),
            })?;
            line.trim()
                .parse::<f64>()
                .map_err(|_| EstimatorError::Parse { line: n + 1, reason: format!("bad {what}: {line:?}") })
        };
        let count = number(0, "bucket count")?;
        if count.fract() != 0.0 || count < 1.0 {
            return Err(EstimatorError::Parse { line: 1, reason: format!("bad bucket count {count}") });
        }
        let count = count as usize;
        let threshold = number(1, "threshold")?;
        let bias = number(2, "bias")?;
        let weights = (0..count).map(|i| number(3 + i, "weight")).collect::<Result<Vec<_>, _>>()?;
        if let Some((n, _)) = lines.get(3 + count) {
            return Err(EstimatorError::Parse { line: n + 1, reason: "more weights than the bucket count".into() });
        }
        Self::new(weights, bias, threshold)
    }
}

pub fn train(dataset: &[SpeedTrace], config: &TrainConfig) -> Result<ClassifierModel, EstimatorError> {
    train_with_history(dataset, config).map(|(model, _)| model)
}

/// Trains and also returns the objective after every epoch.
pub fn train_with_history(
    dataset: &[SpeedTrace],
    config: &TrainConfig,
) -> Result<(ClassifierModel, Vec<f64>), EstimatorError> {
    let examples = prepare(dataset)?;
    if !(config.c > 0.0) {
        return Err(EstimatorError::InvalidArgument(format!("C must be positive, got {}", config.c)));
    }
    let dim = examples[0].0.len();
    let n = examples.len();
    let lambda = 1.0 / (config.c * n as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut best = objective(&examples, &weights, bias, lambda);
    let mut history = Vec::with_capacity(config.epochs);
    let mut t = 0u64;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut w = weights.clone();
        let mut b = bias;
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = &examples[i];
            let violated = y * score(&w, b, x) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|wj| *wj *= shrink);
            if violated {
                let step = eta * y;
                w.iter_mut().zip(x).for_each(|(wj, xj)| *wj += step * xj);
                b += step;
            }
        }
        let b = optimal_bias(&examples, &w).unwrap_or(b);
        let candidate = objective(&examples, &w, b, lambda);
        if candidate <= best {
            weights = w;
            bias = b;
            best = candidate;
        }
        history.push(best);
    }

    let model = ClassifierModel::new(weights, bias, config.threshold)?;
    Ok((model, history))
}

pub(crate) fn logistic(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

fn features(trace: &SpeedTrace) -> Vec<f64> {
    trace.speeds().iter().map(|s| s / SPEED_SCALE_KMH).collect()
}

fn score(weights: &[f64], bias: f64, x: &[f64]) -> f64 {
    weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + bias
}

fn objective(examples: &[(Vec<f64>, f64)], weights: &[f64], bias: f64, lambda: f64) -> f64 {
    let norm = weights.iter().map(|w| w * w).sum::<f64>();
    let hinge = examples.iter().map(|(x, y)| (1.0 - y * score(weights, bias, x)).max(0.0)).sum::<f64>();
    0.5 * lambda * norm + hinge / examples.len() as f64
}

/// For fixed weights the hinge term is piecewise linear in the bias with a
/// kink at `y_i - w . x_i` for every example, and its slope rises by one at
/// each kink starting from `-positives`. Any bias between the `positives`-th
/// and next kink is optimal; the midpoint is returned.
fn optimal_bias(examples: &[(Vec<f64>, f64)], weights: &[f64]) -> Option<f64> {
    let mut kinks: Vec<f64> = examples.iter().map(|(x, y)| y - score(weights, 0.0, x)).collect();
    kinks.sort_by(f64::total_cmp);
    let positives = examples.iter().filter(|(_, y)| *y > 0.0).count();
    let low = kinks.get(positives.checked_sub(1)?)?;
    let high = kinks.get(positives)?;
    Some(0.5 * (low + high))
}

fn prepare(dataset: &[SpeedTrace]) -> Result<Vec<(Vec<f64>, f64)>, EstimatorError> {
    let first = dataset.first().ok_or_else(|| EstimatorError::Training("empty dataset".into()))?;
    if let Some(bad) = dataset.iter().find(|t| t.bucket_count() != first.bucket_count()) {
        return Err(EstimatorError::InvalidArgument(format!(
            "ragged dataset: {} and {} buckets",
            first.bucket_count(),
            bad.bucket_count()
        )));
    }
    let examples = dataset
        .iter()
        .map(|t| {
            t.label
                .map(|l| (features(t), l.sign()))
                .ok_or_else(|| EstimatorError::InvalidArgument("training traces must be labelled".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let has = |label: Label| examples.iter().any(|(_, y)| *y == label.sign());
    if !has(Label::Ran) || !has(Label::Complied) {
        return Err(EstimatorError::Training("dataset contains only one label".into()));
    }
    Ok(examples)
}
