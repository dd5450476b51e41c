//! Closed-loop simulation of the controller against the nonlinear kinematic
//! plant, with an optional actuation delay line.

mod metrics;
mod s_curve;

use std::collections::VecDeque;

pub use metrics::{compute_metrics, path_errors, PathErrors, Metrics};
pub use s_curve::{make_s_curve_scenario, s_curve_waypoints, SCurveSpec, MAX_KINEMATIC_SPEED};

use crate::error::{Error, Result};
use crate::mpc::{self, ControlCommand, ControllerState, MpcConfig};
use crate::trajectory::Trajectory;
use crate::vehicle_model::{self, ControlInput, VehicleParams, VehicleState};

/// Arrival tolerance on the distance to the final waypoint, meters.
pub const ARRIVAL_DISTANCE: f64 = 0.05;
/// Arrival tolerance on the speed, m/s.
pub const ARRIVAL_SPEED: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub trajectory: Trajectory,
    pub initial_state: VehicleState,
    pub vehicle: VehicleParams,
    pub mpc: MpcConfig,
    /// Simulated time limit, seconds.
    pub duration: f64,
    /// Controller ticks between computing a command and applying it.
    pub actuation_delay_steps: usize,
    /// Plant Euler substeps per controller period.
    pub plant_substeps: usize,
    /// Gain of the subordinate speed loop used in passthrough mode, 1/s.
    pub speed_loop_gain: f64,
}

impl Scenario {
    pub const DEFAULT_DELAY_STEPS: usize = 1;
    pub const DEFAULT_PLANT_SUBSTEPS: usize = 10;
    pub const DEFAULT_SPEED_LOOP_GAIN: f64 = 5.0;

    /// Scenario with default tuning, starting at rest on the first waypoint.
    pub fn new(trajectory: Trajectory, duration: f64) -> Self {
        let w = *trajectory.first();
        Self {
            initial_state: VehicleState::new(w.x, w.y, 0.0, w.theta),
            trajectory,
            vehicle: VehicleParams::default(),
            mpc: MpcConfig::default(),
            duration,
            actuation_delay_steps: Self::DEFAULT_DELAY_STEPS,
            plant_substeps: Self::DEFAULT_PLANT_SUBSTEPS,
            speed_loop_gain: Self::DEFAULT_SPEED_LOOP_GAIN,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = self.vehicle.violations();
        out.extend(self.mpc.violations());
        if !(self.duration.is_finite() && self.duration > 0.0) {
            out.push(format!("sim.duration must be > 0, got {}", self.duration));
        }
        if !self.initial_state.is_finite() {
            out.push("sim.initial_state must be finite".to_string());
        }
        if self.plant_substeps < 1 {
            out.push("sim.plant_substeps must be >= 1".to_string());
        }
        if !(self.speed_loop_gain.is_finite() && self.speed_loop_gain > 0.0) {
            out.push(format!("sim.speed_loop_gain must be > 0, got {}", self.speed_loop_gain));
        }
        if self.trajectory.len() < 4 {
            out.push(format!(
                "trajectory needs at least 4 waypoints for cubic resampling, got {}",
                self.trajectory.len()
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSample {
    pub t: f64,
    /// Plant state measured at `t`, before the command is applied.
    pub state: VehicleState,
    /// Command computed at `t` (applied `actuation_delay_steps` ticks later).
    pub command: ControlCommand,
    pub cross_track_error: f64,
    pub heading_error: f64,
    pub v_error: f64,
    pub qp_iterations: usize,
    pub constraint_active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Reached the final waypoint and stopped.
    Arrived,
    /// Ran out of simulated time.
    Duration,
    /// The controller or plant returned an error.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub samples: Vec<SimSample>,
    pub termination: Termination,
    pub failure: Option<String>,
}

impl SimResult {
    pub fn failed(&self) -> bool {
        self.termination == Termination::Failed
    }

    pub fn final_state(&self) -> Option<&VehicleState> {
        self.samples.last().map(|s| &s.state)
    }
}

fn arrived(state: &VehicleState, traj: &Trajectory) -> bool {
    let end = traj.last();
    let d = ((state.x - end.x).powi(2) + (state.y - end.y).powi(2)).sqrt();
    d <= ARRIVAL_DISTANCE && state.v.abs() < ARRIVAL_SPEED
}

/// Plant-side input for a (possibly delayed) command.
fn plant_input(cmd: &ControlCommand, state: &VehicleState, scenario: &Scenario) -> ControlInput {
    let accel = match cmd.v_cmd {
        Some(v_cmd) => (scenario.speed_loop_gain * (v_cmd - state.v))
            .clamp(scenario.vehicle.a_min, scenario.vehicle.a_max),
        None => cmd.a_cmd,
    };
    ControlInput::new(accel, cmd.input.tan_delta)
}

/// Runs the scenario until arrival or the time limit. A controller failure
/// stops the run and is reported in the result rather than as an error.
pub fn run_closed_loop(scenario: &Scenario) -> Result<SimResult> {
    scenario.validate()?;
    let ts = scenario.vehicle.sample_time;
    let dt = ts / scenario.plant_substeps as f64;
    let traj = &scenario.trajectory;
    let ticks = (scenario.duration / ts + 1e-9).floor() as usize;

    let mut ctrl = ControllerState::default();
    let mut delay: VecDeque<ControlCommand> = (0..scenario.actuation_delay_steps)
        .map(|_| ControlCommand::idle())
        .collect();
    let mut state = scenario.initial_state;
    let mut samples = Vec::with_capacity(ticks + 1);
    let mut termination = Termination::Duration;
    let mut failure = None;

    for k in 0..=ticks {
        let t = k as f64 * ts;
        let command = match mpc::control_step(&mut ctrl, &state, traj, &scenario.mpc, &scenario.vehicle) {
            Ok(c) => c,
            Err(e) => {
                termination = Termination::Failed;
                failure = Some(format!("controller failed at t = {t:.3} s: {e}"));
                break;
            }
        };
        let errors = path_errors(traj, &state);
        samples.push(SimSample {
            t,
            state,
            qp_iterations: command.diagnostics.qp_iterations,
            constraint_active: command.diagnostics.constraint_active,
            cross_track_error: errors.cross_track,
            heading_error: errors.heading,
            v_error: errors.speed,
            command: command.clone(),
        });
        if arrived(&state, traj) {
            termination = Termination::Arrived;
            break;
        }
        if k == ticks {
            break;
        }

        delay.push_back(command);
        let applied = delay.pop_front().expect("delay line holds the new command");
        for _ in 0..scenario.plant_substeps {
            let input = plant_input(&applied, &state, scenario);
            state = match vehicle_model::nonlinear_step(&state, &input, dt, &scenario.vehicle) {
                Ok(s) => s,
                Err(e) => {
                    termination = Termination::Failed;
                    failure = Some(format!("plant failed at t = {t:.3} s: {e}"));
                    break;
                }
            };
        }
        if failure.is_some() {
            break;
        }
    }
    Ok(SimResult {
        samples,
        termination,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Waypoint;

    fn straight(v: f64, n: usize) -> Trajectory {
        Trajectory::new(
            (0..n)
                .map(|i| Waypoint::new(i as f64 * 0.5, 0.0, 0.0, v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_duration_is_rejected() {
        let sc = Scenario::new(straight(1.0, 10), 0.0);
        assert!(matches!(run_closed_loop(&sc), Err(Error::Config(_))));
    }

    #[test]
    fn samples_are_evenly_spaced_from_zero() {
        let mut sc = Scenario::new(straight(1.0, 40), 1.0);
        sc.initial_state = VehicleState::new(0.0, 0.0, 1.0, 0.0);
        let r = run_closed_loop(&sc).unwrap();
        assert_eq!(r.samples.len(), 21);
        for (k, s) in r.samples.iter().enumerate() {
            assert_eq!(s.t, k as f64 * 0.05);
        }
        assert_eq!(r.termination, Termination::Duration);
    }

    #[test]
    fn delay_line_holds_back_commands() {
        let mut sc = Scenario::new(straight(1.0, 40), 0.5);
        sc.actuation_delay_steps = 3;
        let r = run_closed_loop(&sc).unwrap();
        // nothing is applied for three ticks: the vehicle stays put
        for s in &r.samples[..4] {
            assert_eq!(s.state.x, 0.0);
            assert_eq!(s.state.v, 0.0);
        }
        assert!(r.samples[0].command.a_cmd > 0.0);
        assert!(r.samples[4].state.v > 0.0);
    }

    #[test]
    fn passthrough_drives_towards_reference_speed() {
        let mut sc = Scenario::new(straight(1.0, 60), 6.0);
        sc.mpc.output_mode = mpc::OutputMode::VelocityPassthrough;
        let r = run_closed_loop(&sc).unwrap();
        let last = r.final_state().unwrap();
        assert!((last.v - 1.0).abs() < 0.05, "{}", last.v);
    }

    #[test]
    fn controller_error_returns_partial_result() {
        let mut sc = Scenario::new(straight(1.0, 10), 1.0);
        sc.initial_state.v = 1e300;
        let r = run_closed_loop(&sc).unwrap();
        assert!(r.failed());
        assert!(r.failure.is_some());
    }
}
