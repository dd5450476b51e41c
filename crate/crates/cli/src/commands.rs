use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use parkmpc::sim::{compute_metrics, Metrics};
use parkmpc::{run_closed_loop, Scenario, SimResult};

use crate::plot::{Chart, Series};
use crate::scenario_file::{self, Override};
use crate::{trace, CliError};

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// A scenario file, or a directory whose `*.json` files are all run.
    pub scenario_path: PathBuf,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
    pub overrides: Vec<Override>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scenario_path: PathBuf,
    pub output_dir: PathBuf,
    pub metrics: Metrics,
    pub result: SimResult,
}

fn load_scenario(path: &Path, overrides: &[Override]) -> Result<(scenario_file::LoadedScenario, Scenario), CliError> {
    let loaded = scenario_file::load(path, overrides)?;
    let scenario = scenario_file::resolve(&loaded).map_err(|p| CliError::Config(p.join("; ")))?;
    Ok((loaded, scenario))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Runs one scenario file and writes `trace.csv`, `metrics.json` and, when
/// asked, the three SVG plots into `output_dir`.
pub fn run_one(path: &Path, output_dir: &Path, emit_plots: bool, overrides: &[Override]) -> Result<RunSummary, CliError> {
    let (_, scenario) = load_scenario(path, overrides)?;
    let result = run_closed_loop(&scenario).map_err(|e| CliError::Config(e.to_string()))?;

    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let trace_path = output_dir.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(io_err(&trace_path))?;
    trace::write_trace(BufWriter::new(file), &result)
        .map_err(|e| CliError::Io(format!("{}: {e}", trace_path.display())))?;

    if let Some(reason) = &result.failure {
        return Err(CliError::Simulation(reason.clone()));
    }
    let metrics = compute_metrics(&result, &scenario.trajectory).map_err(|e| CliError::Simulation(e.to_string()))?;
    let metrics_path = output_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    fs::write(&metrics_path, json + "\n").map_err(io_err(&metrics_path))?;

    if emit_plots {
        for (name, svg) in plots(&scenario, &result) {
            let p = output_dir.join(name);
            fs::write(&p, svg).map_err(io_err(&p))?;
        }
    }
    Ok(RunSummary {
        scenario_path: path.to_path_buf(),
        output_dir: output_dir.to_path_buf(),
        metrics,
        result,
    })
}

/// Runs a scenario file, or every `*.json` in a directory in parallel (each
/// into `output_dir/<file stem>`). Results come back in file-name order.
pub fn run(config: &RunConfig) -> Vec<Result<RunSummary, CliError>> {
    if !config.scenario_path.is_dir() {
        return vec![run_one(
            &config.scenario_path,
            &config.output_dir,
            config.emit_plots,
            &config.overrides,
        )];
    }
    let mut files: Vec<PathBuf> = match fs::read_dir(&config.scenario_path) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => return vec![Err(io_err(&config.scenario_path)(e))],
    };
    files.sort();
    if files.is_empty() {
        return vec![Err(CliError::Config(format!(
            "scenario not found: no *.json files in {}",
            config.scenario_path.display()
        )))];
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| {
                let out = config.output_dir.join(f.file_stem().unwrap_or_default());
                scope.spawn(move || run_one(f, &out, config.emit_plots, &config.overrides))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Simulation("worker panicked".into()))))
            .collect()
    })
}

/// Checks every invariant without running; returns the normalized
/// configuration as pretty JSON.
pub fn validate(path: &Path, overrides: &[Override]) -> Result<String, CliError> {
    let loaded = scenario_file::load(path, overrides)?;
    match scenario_file::resolve(&loaded) {
        Ok(scenario) => {
            let echo = scenario_file::normalized(&loaded, &scenario);
            Ok(serde_json::to_string_pretty(&echo).expect("scenario serializes"))
        }
        Err(problems) => Err(CliError::Invalid(problems)),
    }
}

fn plots(scenario: &Scenario, result: &SimResult) -> Vec<(&'static str, String)> {
    let reference: Vec<(f64, f64)> = scenario.trajectory.waypoints().iter().map(|w| (w.x, w.y)).collect();
    let actual: Vec<(f64, f64)> = result.samples.iter().map(|s| (s.state.x, s.state.y)).collect();
    let path = Chart {
        title: "Vehicle path",
        x_label: "x [m]",
        y_label: "y [m]",
        equal_aspect: true,
        series: vec![
            Series { label: "reference", color: "#888888", dashed: true, points: reference },
            Series { label: "rear axle", color: "#1f77b4", dashed: false, points: actual },
        ],
    };

    let delay = scenario.actuation_delay_steps;
    let commanded: Vec<(f64, f64)> = result.samples.iter().map(|s| (s.t, s.command.delta_cmd)).collect();
    let applied: Vec<(f64, f64)> = result
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| (s.t, k.checked_sub(delay).map_or(0.0, |j| result.samples[j].command.delta_cmd)))
        .collect();
    let steering = Chart {
        title: "Road-wheel angle",
        x_label: "t [s]",
        y_label: "delta [rad]",
        equal_aspect: false,
        series: vec![
            Series { label: "commanded", color: "#d62728", dashed: true, points: commanded },
            Series { label: "applied", color: "#1f77b4", dashed: false, points: applied },
        ],
    };

    let v_ref: Vec<(f64, f64)> = result.samples.iter().map(|s| (s.t, s.state.v - s.v_error)).collect();
    let v: Vec<(f64, f64)> = result.samples.iter().map(|s| (s.t, s.state.v)).collect();
    let speed = Chart {
        title: "Longitudinal speed",
        x_label: "t [s]",
        y_label: "v [m/s]",
        equal_aspect: false,
        series: vec![
            Series { label: "reference", color: "#888888", dashed: true, points: v_ref },
            Series { label: "actual", color: "#1f77b4", dashed: false, points: v },
        ],
    };
    vec![
        ("path.svg", path.render()),
        ("steering.svg", steering.render()),
        ("speed.svg", speed.render()),
    ]
}
