//! Scenario file format.
//!
//! A scenario is one JSON document:
//!
//! ```json
//! {
//!   "trajectory": { "s_curve": { "lateral_offset": 3.0, "transition_length": 15.0, "cruise_speed": 2.0 } },
//!   "vehicle": { "wheelbase": 2.7, "delta_max": 0.6 },
//!   "mpc": { "n_p": 20, "n_c": 5, "r_w": 0.5 },
//!   "sim": { "duration": 40.0, "actuation_delay_steps": 1 }
//! }
//! ```
//!
//! `trajectory` is either an inline waypoint array, an `s_curve` generator
//! spec, or `{"file": "path.json"}` naming a waypoint array file (relative
//! paths resolve against the scenario's directory). Missing `vehicle`, `mpc`
//! and `sim` fields take their defaults. Overrides are `dotted.path=value`
//! pairs applied to the parsed JSON before it is interpreted.

use std::fs;
use std::path::{Path, PathBuf};

use parkmpc::sim::{s_curve_waypoints, SCurveSpec};
use parkmpc::{MpcConfig, Scenario, Trajectory, VehicleParams, VehicleState, Waypoint};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrajectorySource {
    Waypoints(Vec<Waypoint>),
    SCurve { s_curve: SCurveSpec },
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Required unless the trajectory comes from the S-curve generator.
    pub duration: Option<f64>,
    pub actuation_delay_steps: usize,
    pub plant_substeps: usize,
    pub speed_loop_gain: f64,
    /// Defaults to rest on the first waypoint.
    pub initial_state: Option<VehicleState>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            duration: None,
            actuation_delay_steps: Scenario::DEFAULT_DELAY_STEPS,
            plant_substeps: Scenario::DEFAULT_PLANT_SUBSTEPS,
            speed_loop_gain: Scenario::DEFAULT_SPEED_LOOP_GAIN,
            initial_state: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub trajectory: TrajectorySource,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub sim: SimSection,
}

/// A parsed override `dotted.path=value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl std::str::FromStr for Override {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{s}` is not of the form key=value")))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("override key `{key}` has an empty segment")));
        }
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Self { path, value })
    }
}

/// Sets `path` inside `doc`, creating intermediate objects as needed.
pub fn apply_override(doc: &mut Value, ov: &Override) -> Result<(), CliError> {
    let mut node = doc;
    for (depth, key) in ov.path.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!(
                "override `{}`: `{}` is not an object",
                ov.path.join("."),
                ov.path[..depth].join(".")
            ))
        })?;
        if depth + 1 == ov.path.len() {
            obj.insert(key.clone(), ov.value.clone());
            return Ok(());
        }
        node = obj
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Scenario file after overrides, with the directory used to resolve
/// relative trajectory paths.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path, overrides: &[Override]) -> Result<LoadedScenario, CliError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::Config(format!("scenario not found: {}", path.display())))
        }
        Err(e) => return Err(CliError::Io(format!("cannot read {}: {e}", path.display()))),
    };
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, overrides, base_dir)
}

pub fn parse(text: &str, overrides: &[Override], base_dir: PathBuf) -> Result<LoadedScenario, CliError> {
    let mut doc: Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid scenario JSON: {e}")))?;
    for ov in overrides {
        apply_override(&mut doc, ov)?;
    }
    let file: ScenarioFile =
        serde_json::from_value(doc).map_err(|e| CliError::Config(format!("invalid scenario: {e}")))?;
    Ok(LoadedScenario { file, base_dir })
}

fn read_trajectory_file(path: &Path) -> Result<Vec<Waypoint>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("trajectory file {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("trajectory file {}: {e}", path.display())))
}

/// Resolves the scenario, returning every violated invariant on failure.
pub fn resolve(loaded: &LoadedScenario) -> Result<Scenario, Vec<String>> {
    let f = &loaded.file;
    let mut problems = Vec::new();

    let (trajectory, generated) = match &f.trajectory {
        TrajectorySource::SCurve { s_curve } => {
            problems.extend(s_curve.violations());
            (s_curve_waypoints(s_curve).ok(), Some(*s_curve))
        }
        TrajectorySource::Waypoints(w) => (checked_trajectory(w.clone(), &mut problems), None),
        TrajectorySource::File { file } => {
            let path = loaded.base_dir.join(file);
            match read_trajectory_file(&path) {
                Ok(w) => (checked_trajectory(w, &mut problems), None),
                Err(e) => {
                    problems.push(e.to_string());
                    (None, None)
                }
            }
        }
    };

    let duration = match (f.sim.duration, generated, &trajectory) {
        (Some(d), _, _) => d,
        (None, Some(spec), Some(t)) => {
            (1.5 * spec.nominal_duration(t.total_length()) + 10.0).ceil()
        }
        // an invalid generator spec is already reported
        (None, Some(_), None) => f64::NAN,
        (None, None, _) => {
            problems.push("sim.duration is required for explicit trajectories".to_string());
            f64::NAN
        }
    };

    let Some(trajectory) = trajectory else {
        problems.extend(f.vehicle.violations());
        problems.extend(f.mpc.violations());
        return Err(problems);
    };
    let mut scenario = Scenario::new(trajectory, duration);
    scenario.vehicle = f.vehicle;
    scenario.mpc = f.mpc;
    scenario.actuation_delay_steps = f.sim.actuation_delay_steps;
    scenario.plant_substeps = f.sim.plant_substeps;
    scenario.speed_loop_gain = f.sim.speed_loop_gain;
    if let Some(s) = f.sim.initial_state {
        scenario.initial_state = VehicleState::new(s.x, s.y, s.v, s.theta);
    }
    problems.extend(
        scenario
            .violations()
            .into_iter()
            .filter(|p| !p.starts_with("sim.duration") || f.sim.duration.is_some()),
    );
    if problems.is_empty() {
        Ok(scenario)
    } else {
        Err(problems)
    }
}

fn checked_trajectory(waypoints: Vec<Waypoint>, problems: &mut Vec<String>) -> Option<Trajectory> {
    match Trajectory::new(waypoints) {
        Ok(t) => {
            if let Err(e) = t.check_input_spacing() {
                problems.push(e.to_string());
            }
            Some(t)
        }
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    }
}

/// Effective configuration with every default filled in.
pub fn normalized(loaded: &LoadedScenario, scenario: &Scenario) -> ScenarioFile {
    ScenarioFile {
        trajectory: loaded.file.trajectory.clone(),
        vehicle: scenario.vehicle,
        mpc: scenario.mpc,
        sim: SimSection {
            duration: Some(scenario.duration),
            actuation_delay_steps: scenario.actuation_delay_steps,
            plant_substeps: scenario.plant_substeps,
            speed_loop_gain: scenario.speed_loop_gain,
            initial_state: Some(scenario.initial_state),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S_CURVE: &str = r#"{"trajectory": {"s_curve": {"lateral_offset": 3.0, "transition_length": 15.0, "cruise_speed": 2.0}}}"#;

    fn ov(s: &str) -> Override {
        s.parse().unwrap()
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let l = parse(S_CURVE, &[], PathBuf::new()).unwrap();
        let sc = resolve(&l).unwrap();
        assert_eq!(sc.mpc, MpcConfig::default());
        assert_eq!(sc.vehicle, VehicleParams::default());
        assert_eq!(sc.actuation_delay_steps, 1);
        assert!(sc.duration > 20.0);
    }

    #[test]
    fn overrides_use_dotted_paths() {
        let l = parse(S_CURVE, &[ov("mpc.r_w=5.0"), ov("sim.actuation_delay_steps=3")], PathBuf::new()).unwrap();
        let sc = resolve(&l).unwrap();
        assert_eq!(sc.mpc.r_w, 5.0);
        assert_eq!(sc.actuation_delay_steps, 3);
        let l = parse(S_CURVE, &[ov("mpc.preview_mode=hold")], PathBuf::new()).unwrap();
        assert_eq!(resolve(&l).unwrap().mpc.preview_mode, parkmpc::PreviewMode::Hold);
    }

    #[test]
    fn bad_overrides() {
        assert!("novalue".parse::<Override>().is_err());
        assert!("a..b=1".parse::<Override>().is_err());
        assert!(parse(S_CURVE, &[ov("mpc.bogus=1")], PathBuf::new()).is_err());
        assert!(parse(S_CURVE, &[ov("mpc.r_w.deeper=1")], PathBuf::new()).is_err());
    }

    #[test]
    fn violations_are_collected() {
        let l = parse(
            S_CURVE,
            &[ov("mpc.n_c=30"), ov("vehicle.delta_max=1.6"), ov("trajectory.s_curve.cruise_speed=12")],
            PathBuf::new(),
        )
        .unwrap();
        let problems = resolve(&l).unwrap_err();
        assert_eq!(problems.len(), 3, "{problems:?}");
        assert!(problems.iter().any(|p| p.contains("n_c")));
        assert!(problems.iter().any(|p| p.contains("delta_max")));
        assert!(problems.iter().any(|p| p.contains("cruise_speed")));
    }

    #[test]
    fn explicit_waypoints_need_duration_and_spacing() {
        let pts: Vec<String> = (0..6).map(|i| format!(r#"{{"x": {}, "y": 0, "theta": 0, "v": 1}}"#, i as f64 * 0.5)).collect();
        let text = format!(r#"{{"trajectory": [{}]}}"#, pts.join(","));
        let problems = resolve(&parse(&text, &[], PathBuf::new()).unwrap()).unwrap_err();
        assert_eq!(problems.len(), 1);
        assert!(problems[0].contains("duration"));
        let ok = parse(&text, &[ov("sim.duration=2")], PathBuf::new()).unwrap();
        assert!(resolve(&ok).is_ok());

        let pts: Vec<String> = (0..6).map(|i| format!(r#"{{"x": {}, "y": 0, "theta": 0, "v": 1}}"#, i as f64 * 3.0)).collect();
        let text = format!(r#"{{"trajectory": [{}], "sim": {{"duration": 2}}}}"#, pts.join(","));
        let problems = resolve(&parse(&text, &[], PathBuf::new()).unwrap()).unwrap_err();
        assert!(problems[0].contains("apart"), "{problems:?}");
    }
}
