use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EstimatorError, BUCKET_SPACING_M, DEFAULT_START_DISTANCE_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Stopped at the light.
    Complied = 0,
    /// Ran the light.
    Ran = 1,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Complied => -1.0,
            Label::Ran => 1.0,
        }
    }
}

/// Speeds (km/h) at every 5 m bucket from `start_distance` down to the line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedTrace {
    start_distance: u32,
    speeds: Vec<f64>,
    pub label: Option<Label>,
}

impl SpeedTrace {
    pub fn new(start_distance: u32, speeds: Vec<f64>, label: Option<Label>) -> Result<Self, EstimatorError> {
        if !start_distance.is_multiple_of(BUCKET_SPACING_M) || start_distance > DEFAULT_START_DISTANCE_M {
            return Err(EstimatorError::InvalidArgument(format!(
                "start distance must be a multiple of {BUCKET_SPACING_M} m up to {DEFAULT_START_DISTANCE_M} m, got {start_distance}"
            )));
        }
        let expected = bucket_count(start_distance);
        if speeds.len() != expected {
            return Err(EstimatorError::InvalidArgument(format!(
                "a trace from {start_distance} m needs {expected} speeds, got {}",
                speeds.len()
            )));
        }
        if let Some(bad) = speeds.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(EstimatorError::InvalidArgument(format!("speeds must be non-negative, got {bad}")));
        }
        Ok(Self { start_distance, speeds, label })
    }

    pub fn start_distance(&self) -> u32 {
        self.start_distance
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn bucket_count(&self) -> usize {
        self.speeds.len()
    }

    /// `(distance, speed)` pairs, farthest first.
    pub fn samples(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.speeds.iter().enumerate().map(|(i, &s)| (self.start_distance - i as u32 * BUCKET_SPACING_M, s))
    }

    /// Extends the trace to start at `start_distance`, repeating the first
    /// observed speed for the missing far buckets.
    pub fn front_padded(&self, start_distance: u32) -> Result<Self, EstimatorError> {
        if start_distance < self.start_distance {
            return Err(EstimatorError::InvalidArgument(format!(
                "cannot pad a {} m trace down to {start_distance} m",
                self.start_distance
            )));
        }
        let missing = bucket_count(start_distance) - self.speeds.len();
        let mut speeds = vec![self.speeds[0]; missing];
        speeds.extend_from_slice(&self.speeds);
        Self::new(start_distance, speeds, self.label)
    }
}

pub fn bucket_count(start_distance: u32) -> usize {
    (start_distance / BUCKET_SPACING_M) as usize + 1
}

/// Builds a trace from the positions a vehicle reports while approaching.
#[derive(Debug, Clone)]
pub struct TraceCollector {
    start_distance: u32,
    samples: Vec<Option<f64>>,
}

impl TraceCollector {
    pub fn new(start_distance: u32) -> Self {
        Self { start_distance, samples: vec![None; bucket_count(start_distance)] }
    }

    /// Records `speed` at every bucket boundary in `[distance, previous)`.
    pub fn observe(&mut self, previous_distance: f64, distance: f64, speed_kmh: f64) {
        let spacing = f64::from(BUCKET_SPACING_M);
        for (i, slot) in self.samples.iter_mut().enumerate() {
            let mark = f64::from(self.start_distance) - i as f64 * spacing;
            if slot.is_none() && distance <= mark && mark < previous_distance {
                *slot = Some(speed_kmh.max(0.0));
            }
        }
    }

    pub fn observed(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }

    /// Distance of the nearest bucket observed so far.
    pub fn nearest_observed(&self) -> Option<u32> {
        self.samples.iter().rposition(Option::is_some).map(|i| self.start_distance - i as u32 * BUCKET_SPACING_M)
    }

    /// Full-length trace: unseen far buckets take the first observed speed,
    /// unseen near buckets carry the latest observed speed forward.
    pub fn snapshot(&self) -> Option<SpeedTrace> {
        let first = self.samples.iter().flatten().next().copied()?;
        let mut last = first;
        let speeds = self
            .samples
            .iter()
            .map(|s| {
                if let Some(v) = s {
                    last = *v;
                }
                last
            })
            .collect();
        SpeedTrace::new(self.start_distance, speeds, None).ok()
    }
}

/// One row per trace: `label,start_distance,speed...`, farthest bucket first.
/// An empty label means unlabelled.
pub fn write_traces_csv(traces: &[SpeedTrace]) -> String {
    let width = traces.iter().map(SpeedTrace::bucket_count).max().unwrap_or(0);
    let mut out = String::from("label,start_distance");
    for i in 0..width {
        let _ = write!(out, ",speed_{i}");
    }
    out.push('\n');
    for trace in traces {
        if let Some(label) = trace.label {
            let _ = write!(out, "{}", label as u8);
        }
        let _ = write!(out, ",{}", trace.start_distance);
        for s in &trace.speeds {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
    }
    out
}

pub fn read_traces_csv(text: &str) -> Result<Vec<SpeedTrace>, EstimatorError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, reason: String| EstimatorError::Parse { line: line + 1, reason };
    match lines.next() {
        Some((_, header)) if header.trim_start().starts_with("label") => {}
        Some((n, _)) => return Err(parse_err(n, "missing header row".into())),
        None => return Err(parse_err(0, "empty input".into())),
    }
    lines
        .map(|(n, line)| {
            let fields: Vec<_> = line.split(',').map(str::trim).collect();
            if fields.len() < 3 {
                return Err(parse_err(
                    n,
                    format!("expected label, start distance and speeds, got {} fields", fields.len()),
                ));
            }
            let label = match fields[0] {
                "" => None,
                "0" => Some(Label::Complied),
                "1" => Some(Label::Ran),
                other => return Err(parse_err(n, format!("label must be 0, 1 or empty, got {other:?}"))),
            };
            let start: u32 =
                fields[1].parse().map_err(|_| parse_err(n, format!("bad start distance {:?}", fields[1])))?;
            let speeds = fields[2..]
                .iter()
                .filter(|f| !f.is_empty())
                .map(|f| f.parse::<f64>().map_err(|_| parse_err(n, format!("bad speed {f:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            SpeedTrace::new(start, speeds, label).map_err(|e| parse_err(n, e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_shape() {
        assert!(SpeedTrace::new(100, vec![10.0; 21], None).is_ok());
        assert!(SpeedTrace::new(100, vec![10.0; 20], None).is_err());
        assert!(SpeedTrace::new(102, vec![10.0; 21], None).is_err());
        assert!(SpeedTrace::new(105, vec![10.0; 22], None).is_err());
        assert!(SpeedTrace::new(10, vec![1.0, -1.0, 0.0], None).is_err());
        let t = SpeedTrace::new(10, vec![3.0, 2.0, 1.0], None).unwrap();
        assert_eq!(t.samples().collect::<Vec<_>>(), vec![(10, 3.0), (5, 2.0), (0, 1.0)]);
    }

    #[test]
    fn front_padding_repeats_first_speed() {
        let t = SpeedTrace::new(10, vec![30.0, 20.0, 0.0], Some(Label::Complied)).unwrap();
        let p = t.front_padded(20).unwrap();
        assert_eq!(p.speeds(), &[30.0, 30.0, 30.0, 20.0, 0.0]);
        assert_eq!(p.label, Some(Label::Complied));
        assert!(p.front_padded(10).is_err());
    }

    #[test]
    fn collector_fills_gaps() {
        let mut c = TraceCollector::new(20);
        assert!(c.snapshot().is_none());
        c.observe(13.0, 9.0, 40.0); // crosses the 10 m mark
        assert_eq!(c.nearest_observed(), Some(10));
        let snap = c.snapshot().unwrap();
        assert_eq!(snap.speeds(), &[40.0, 40.0, 40.0, 40.0, 40.0]);
        c.observe(9.0, 4.0, 30.0);
        c.observe(4.0, -0.5, 10.0);
        assert_eq!(c.snapshot().unwrap().speeds(), &[40.0, 40.0, 40.0, 30.0, 10.0]);
        assert_eq!(c.observed(), 3);
        // a mark is only recorded once
        c.observe(1.0, -2.0, 99.0);
        assert_eq!(c.snapshot().unwrap().speeds()[4], 10.0);
    }

    #[test]
    fn csv_round_trip() {
        let traces = vec![
            SpeedTrace::new(10, vec![30.0, 20.5, 0.0], Some(Label::Complied)).unwrap(),
            SpeedTrace::new(10, vec![50.0, 50.0, 50.25], Some(Label::Ran)).unwrap(),
            SpeedTrace::new(5, vec![1.0, 2.0], None).unwrap(),
        ];
        let text = write_traces_csv(&traces);
        assert!(text.starts_with("label,start_distance,speed_0,speed_1,speed_2\n"));
        assert_eq!(read_traces_csv(&text).unwrap(), traces);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        assert!(matches!(read_traces_csv("1,10,1,2,3\n"), Err(EstimatorError::Parse { line: 1, .. })));
        let err = read_traces_csv("label,start\n1,10,1,2\n").unwrap_err();
        assert!(matches!(err, EstimatorError::Parse { line: 2, .. }));
        assert!(read_traces_csv("label\n7,10,1,2,3\n").is_err());
    }
}
