use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use crosswatch::auth::{build_registry, Identity};
use crosswatch::codec::canonical;
use crosswatch::estimator::{
    classify, generate_traces, read_traces_csv, train, write_traces_csv, ClassifierModel, Label, Position, TrainConfig,
};
use crosswatch::sim::{compare_controllers, run, Scenario};

/// Intersection control and red-light warning toolkit.
#[derive(Parser, Debug)]
#[command(name = "crosswatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and write metrics (JSON) and the event log (CSV).
    Simulate {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Seed for arrivals, behaviours and jitter.
        #[arg(long)]
        seed: u64,
        /// Directory for metrics.json, events.csv and audit.ndjson; metrics go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a scenario field, e.g. `--set duration=600` or `--set controller.t_min=8`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print a human-readable summary instead of JSON.
        #[arg(long)]
        pretty: bool,
    },
    /// Run static and dynamic control on the same seeds and report both.
    Compare {
        scenario: PathBuf,
        /// Number of paired seeds (at least 10).
        #[arg(long)]
        seeds: usize,
        /// First seed of the range.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print a table instead of JSON.
        #[arg(long)]
        pretty: bool,
    },
    /// Train a classifier from labelled traces.
    Train {
        /// Trace CSV as written by `gen-traces`.
        traces: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Shuffle seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Soft-margin constant C.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
    },
    /// Classify traces as if each vehicle were at the stop line; writes CSV.
    Classify {
        model: PathBuf,
        traces: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print an accuracy summary for labelled traces.
        #[arg(long)]
        pretty: bool,
    },
    /// Generate synthetic labelled traces as CSV.
    GenTraces {
        #[arg(long)]
        seed: u64,
        /// Traces per class.
        #[arg(long)]
        count: usize,
        /// Gaussian speed noise, km/h.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the canonical beacon, event and notification encodings as hex.
    CodecFixtures {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include byte and bit sizes.
        #[arg(long)]
        pretty: bool,
    },
    /// Build a k x k anonymity registry for k*k generated identities.
    Registry {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Invariant(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant violated: {msg}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Outcome {
    match command {
        Command::Simulate { scenario, seed, out, overrides, pretty } => {
            let scenario = load_scenario(&scenario, &overrides)?;
            simulate(&scenario, seed, out.as_deref(), pretty)
        }
        Command::Compare { scenario, seeds, seed, out, overrides, pretty } => {
            let scenario = load_scenario(&scenario, &overrides)?;
            let seeds: Vec<u64> = (seed..seed + seeds as u64).collect();
            let c = compare_controllers(&scenario, &seeds)?;
            let text = if pretty { c.to_table() } else { serde_json::to_string_pretty(&c)? + "\n" };
            emit(out.as_deref(), &text)?;
            if c.violations > 0 {
                return Err(Failure::Invariant(format!("{} violations across paired runs", c.violations)));
            }
            Ok(())
        }
        Command::Train { traces, out, seed, c, epochs } => {
            let data = read_traces_csv(&read(&traces)?)?;
            let model = train(&data, &TrainConfig { c, epochs, seed, ..TrainConfig::default() })?;
            fs::write(&out, model.to_text()).map_err(|e| format!("{}: {e}", out.display()))?;
            Ok(())
        }
        Command::Classify { model, traces, out, pretty } => {
            let model = ClassifierModel::from_text(&read(&model)?)?;
            let data = read_traces_csv(&read(&traces)?)?;
            let mut csv = String::from("index,label,kind,confidence,hard_rule\n");
            let mut correct = 0;
            for (i, trace) in data.iter().enumerate() {
                let r = classify(&model, trace, Position::AtLight)?;
                let label = trace.label.map_or(String::new(), |l| (l as u8).to_string());
                let kind = serde_json::to_value(r.kind)?;
                let _ = writeln!(
                    csv,
                    "{i},{label},{},{:.6},{}",
                    kind.as_str().unwrap_or_default(),
                    r.confidence,
                    r.hard_rule
                );
                let flagged = model.margin(trace)? > 0.0;
                if trace.label.map(|l| l == Label::Ran) == Some(flagged) {
                    correct += 1;
                }
            }
            if pretty {
                let labelled = data.iter().filter(|t| t.label.is_some()).count();
                emit(out.as_deref(), &format!("{correct}/{labelled} labelled traces classified correctly\n"))
            } else {
                emit(out.as_deref(), &csv)
            }
        }
        Command::GenTraces { seed, count, noise, out } => {
            emit(out.as_deref(), &write_traces_csv(&generate_traces(seed, count, noise)?))
        }
        Command::CodecFixtures { out, pretty } => {
            let mut text = String::new();
            for (name, hex) in canonical::hex_dumps() {
                if pretty {
                    let _ = writeln!(text, "{name:<13} {:>3} bytes {:>4} bits  {hex}", hex.len() / 2, hex.len() * 4);
                } else {
                    let _ = writeln!(text, "{name} {hex}");
                }
            }
            emit(out.as_deref(), &text)
        }
        Command::Registry { k, seed, out } => {
            let ids = (0..k * k).map(|i| Identity(format!("vehicle-{i:04}"))).collect();
            emit(out.as_deref(), &build_registry(ids, k, seed)?.to_text())
        }
    }
}

fn simulate(scenario: &Scenario, seed: u64, out: Option<&Path>, pretty: bool) -> Outcome {
    let outcome = run(scenario, seed)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            fs::write(dir.join("metrics.json"), outcome.metrics_json() + "\n")?;
            fs::write(dir.join("events.csv"), outcome.events_csv())?;
            let audit: String =
                outcome.audit.iter().map(|r| serde_json::to_string(r).expect("audit record") + "\n").collect();
            fs::write(dir.join("audit.ndjson"), audit)?;
        }
        None if !pretty => println!("{}", outcome.metrics_json()),
        None => {}
    }
    if pretty {
        let m = &outcome.metrics;
        println!("scenario          {}", scenario.name);
        println!("vehicles          {} spawned, {} exited", m.vehicles_spawned, m.vehicles_exited);
        println!("mean wait         {:.2} s (emergency {:.2} s)", m.overall.mean_wait, m.emergency.mean_wait);
        println!("runners           {} spawned, {} crossed on red", m.runners_spawned, m.runner_red_crossings);
        println!("predictions       {} ({} false)", m.predictions, m.false_predictions);
        println!("detections        {} ({} dispatched)", m.detections, m.dispatches);
        println!("notifications     {} (mean {:.1} ms)", m.notifications.count, m.notifications.mean_ms);
        println!("warnings          {} (mean {:.1} ms)", m.warnings.count, m.warnings.mean_ms);
        println!("phase switches    {}", m.phase_switches);
    }
    if let Some(v) = outcome.violations.first() {
        return Err(Failure::Invariant(format!(
            "{} violations, first at tick {}: {:?} {}",
            outcome.violations.len(),
            v.tick,
            v.kind,
            v.detail
        )));
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario, Failure> {
    let text = read(path)?;
    let scenario = Scenario::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if overrides.is_empty() {
        return Ok(scenario);
    }
    let mut value = serde_json::to_value(&scenario)?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    Ok(Scenario::from_json(&value.to_string())?)
}

/// Sets a dotted path in the scenario. Only keys already present in the
/// fully expanded scenario are accepted.
fn apply_override(root: &mut Value, spec: &str) -> Result<(), String> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| format!("override `{spec}` is not KEY=VALUE"))?;
    let mut slot = root;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("unknown key `{key}`"))?;
    }
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}
